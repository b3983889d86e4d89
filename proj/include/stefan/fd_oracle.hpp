#pragma once

#include <optional>

#include "stefan/kernels.hpp"
#include "stefan/mild_solver.hpp"

namespace stefan {

struct FdOptions {
  bool reflect = false;
  bool drift = true;
  ExecPolicy policy = ExecPolicy::parallel;
};

struct FdResult {
  PathState path;
  std::optional<ReflectionMeasure> eta;  // present when reflect is set
};

// Explicit scheme for the strong form:
//   u^{j+1}_i = u^j_i + dt [alpha D2 u - g_j D u]_i + sigma_i dW_ij / dx,
// g_j = boundary_gradient(u^j), D upwinded on the sign of g_j. No cut-off.
// Throws UsageError when alpha dt / dx^2 > 1/2.
FdResult fd_solve(const NoiseField& noise, const Problem& problem, const FdOptions& options = {});

}  // namespace stefan
