#include "stefan/grid_kernel.hpp"

#include <cmath>
#include <numbers>

#include "stefan/errors.hpp"

namespace stefan {

GridKernel::GridKernel(const GridSpec& grid, const KernelParams& params)
    : grid_(grid), params_(params), n_(grid.nx) {
  grid.validate();
  params.validate();
  if (std::abs(grid.lambda - params.lambda) > 1e-14 * params.lambda)
    throw UsageError("GridKernel: grid and kernel disagree on lambda");
  const int n = n_;
  const double pi = std::numbers::pi;
  sin_.resize(static_cast<size_t>(n) * n);
  cos_.resize(static_cast<size_t>(n) * n);
  rate_.resize(n);
  for (int k = 0; k < n; ++k) {
    const double wave = (k + 1) * pi / params.lambda;
    rate_[k] = params.alpha * wave * wave;
    for (int i = 0; i < n; ++i) {
      // Integer phase keeps the tables exactly symmetric under i <-> k.
      const double phase = pi * static_cast<double>((k + 1) * (i + 1)) / (n + 1);
      sin_[static_cast<size_t>(k) * n + i] = std::sin(phase);
      cos_[static_cast<size_t>(k) * n + i] = std::cos(phase);
    }
  }

  const double dx = grid.dx();
  const double dt = grid.dt();
  p_.assign(static_cast<size_t>(n) * n, 0.0);
  b_.assign(static_cast<size_t>(n) * n, 0.0);
  std::vector<double> decay(n);
  for (int k = 0; k < n; ++k) decay[k] = 2.0 / params.lambda * std::exp(-rate_[k] * dt) * dx;
  for (int i = 0; i < n; ++i) {
    for (int l = 0; l < n; ++l) {
      double pv = 0.0, bv = 0.0;
      for (int k = 0; k < n; ++k) {
        const double si = sin_[static_cast<size_t>(k) * n + i];
        pv += decay[k] * si * sin_[static_cast<size_t>(k) * n + l];
        bv += decay[k] * ((k + 1) * pi / params.lambda) * si * cos_[static_cast<size_t>(k) * n + l];
      }
      p_[static_cast<size_t>(i) * n + l] = pv;
      b_[static_cast<size_t>(i) * n + l] = bv;
    }
  }
}

double GridKernel::value(int i, int l, double tau) const {
  if (i < 0 || i >= n_ || l < 0 || l >= n_) throw UsageError("GridKernel::value: index out of range");
  if (tau < 0) throw DomainError("GridKernel::value: negative lag");
  double v = 0.0;
  for (int k = 0; k < n_; ++k)
    v += sin_[static_cast<size_t>(k) * n_ + i] * sin_[static_cast<size_t>(k) * n_ + l] *
         std::exp(-rate_[k] * tau);
  return 2.0 / params_.lambda * v;
}

double GridKernel::dy_value(int i, int l, double tau) const {
  if (i < 0 || i >= n_ || l < 0 || l >= n_) throw UsageError("GridKernel::dy_value: index out of range");
  if (tau < 0) throw DomainError("GridKernel::dy_value: negative lag");
  const double pi = std::numbers::pi;
  double v = 0.0;
  for (int k = 0; k < n_; ++k)
    v += ((k + 1) * pi / params_.lambda) * sin_[static_cast<size_t>(k) * n_ + i] *
         cos_[static_cast<size_t>(k) * n_ + l] * std::exp(-rate_[k] * tau);
  return 2.0 / params_.lambda * v;
}

}  // namespace stefan
