#include "stefan/fd_oracle.hpp"

#include <cmath>

#include <fmt/format.h>

#include "stefan/errors.hpp"

namespace stefan {

FdResult fd_solve(const NoiseField& noise, const Problem& problem, const FdOptions& options) {
  const auto& g = noise.grid;
  g.validate();
  problem.kernel.validate();
  if (!g.explicit_stable(problem.kernel.alpha))
    throw UsageError(fmt::format("fd_solve: alpha*dt/dx^2 = {:.4f} exceeds 1/2; refusing to run",
                                 g.diffusion_number(problem.kernel.alpha)));
  if (g.nx < 2) throw UsageError("fd_solve: need nx >= 2");
  if (std::abs(problem.sigma(0.0)) > 1e-12 || std::abs(problem.sigma(g.lambda)) > 1e-12)
    throw PreconditionError("fd_solve: sigma must vanish at both walls");

  const int n = g.nx;
  const double dx = g.dx();
  FdResult result;
  PathState& path = result.path;
  path = PathState::zeros(g);
  path.seed = noise.seed;
  path.solver = options.reflect ? "fd_reflected" : "fd";
  path.cutoff = problem.cutoff;
  path.kernel = problem.kernel;
  if (options.reflect) {
    result.eta.emplace();
    result.eta->grid = g;
    result.eta->mass.assign(static_cast<size_t>(n) * g.nt, 0.0);
  }

  for (int k = 1; k <= n; ++k) path.row(0)[k] = problem.u0(g.x(k));
  const auto sigma = sample_interior(problem.sigma, g);
  std::vector<double> forcing(n);
  kernels::FdStep step{problem.kernel.alpha, g.dt(), dx, 0.0};
  for (int j = 0; j < g.nt; ++j) {
    auto cur = path.row(j);
    step.transport = options.drift ? boundary_gradient(cur, dx) : 0.0;
    for (int i = 0; i < n; ++i) forcing[i] = sigma[i] * noise.at(i, j) / dx;
    auto out = path.row(j + 1);
    kernels::fd_step(step, cur, forcing, out, options.policy);
    for (int k = 1; k <= n; ++k) {
      if (!std::isfinite(out[k])) throw DomainError("fd_solve: non-finite value at step " + std::to_string(j + 1));
      if (options.reflect && out[k] < 0.0) {
        result.eta->mass[static_cast<size_t>(k - 1) * g.nt + j] = -out[k] * dx;
        out[k] = 0.0;
      }
    }
  }
  for (int j = 0; j <= g.nt; ++j) path.boundary_grad[j] = boundary_gradient(path.row(j), dx);
  return result;
}

}  // namespace stefan
