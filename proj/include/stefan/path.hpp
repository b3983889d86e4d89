#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "stefan/cutoff.hpp"
#include "stefan/grid.hpp"
#include "stefan/heat_kernel.hpp"

namespace stefan {

// u on every node (walls included) at every grid time, stored time-major:
// values[j*(nx+2) + k] = u(x_k, t_j).
struct PathState {
  GridSpec grid;
  std::vector<double> values;
  std::vector<double> boundary_grad;  // u_x(0+, t_j), j = 0..nt
  std::uint64_t seed = 0;
  std::string solver;
  CutoffParams cutoff;
  KernelParams kernel;

  int stride() const { return grid.nx + 2; }
  double u(int k, int j) const { return values[static_cast<size_t>(j) * stride() + k]; }
  std::span<const double> row(int j) const {
    return {values.data() + static_cast<size_t>(j) * stride(), static_cast<size_t>(stride())};
  }
  std::span<double> row(int j) { return {values.data() + static_cast<size_t>(j) * stride(), static_cast<size_t>(stride())}; }

  static PathState zeros(const GridSpec& grid);
};

// eta-mass on cells (interior node i, step j), mass[i*nt + j], credited to the
// step that produced the clamp at t_{j+1}.
struct ReflectionMeasure {
  GridSpec grid;
  std::vector<double> mass;

  double at(int i, int j) const { return mass[static_cast<size_t>(i) * grid.nt + j]; }
  double total() const;
  // sum u(x_i, t_{j+1}) * mass_ij: zero when mass sits only on clamped nodes.
  double complementarity(const PathState& path) const;
};

}  // namespace stefan
