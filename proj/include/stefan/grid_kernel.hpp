#pragma once

#include <span>
#include <vector>

#include "stefan/grid.hpp"
#include "stefan/heat_kernel.hpp"

namespace stefan {

// Band-limited Dirichlet kernel on the interior nodes of a grid:
//   G^h(x_i, y_l, tau) = sum_{k=1}^{nx} (2/lambda) sin(k pi x_i/lambda) sin(k pi y_l/lambda) e^{-mu_k tau}
// with mu_k = alpha (k pi/lambda)^2. The one-step operators
//   P = G^h(., ., dt) dx,  B = d_y G^h(., ., dt) dx
// compose exactly under repeated application, which the pointwise image
// series sampled on a grid does not.
class GridKernel {
 public:
  GridKernel(const GridSpec& grid, const KernelParams& params);

  int size() const { return n_; }
  const GridSpec& grid() const { return grid_; }
  const KernelParams& params() const { return params_; }

  // Row-major n x n.
  std::span<const double> propagator() const { return p_; }
  std::span<const double> gradient_propagator() const { return b_; }

  // Direct evaluation at interior indices (0-based) and lag tau >= 0.
  double value(int i, int l, double tau) const;
  double dy_value(int i, int l, double tau) const;

 private:
  GridSpec grid_;
  KernelParams params_;
  int n_;
  std::vector<double> sin_;  // sin_[k*n + i] = sin((k+1) pi x_i / lambda)
  std::vector<double> cos_;
  std::vector<double> rate_;
  std::vector<double> p_;
  std::vector<double> b_;
};

}  // namespace stefan
