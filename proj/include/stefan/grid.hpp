#pragma once

#include <cstdint>

namespace stefan {

// Uniform space-time grid on [0, lambda] x [0, horizon].
// Nodes x_k = k*dx for k = 0..nx+1 (k = 0 and nx+1 are the Dirichlet walls),
// times t_j = j*dt for j = 0..nt.
struct GridSpec {
  int nx = 32;
  int nt = 256;
  double lambda = 1.0;
  double horizon = 1.0;

  double dx() const { return lambda / (nx + 1); }
  double dt() const { return horizon / nt; }
  double x(int k) const { return k == nx + 1 ? lambda : k * dx(); }
  double t(int j) const { return j == nt ? horizon : j * dt(); }
  // Coordinate of interior node i (0-based), i.e. x(i + 1).
  double interior_x(int i) const { return x(i + 1); }

  // Explicit finite-difference stability ratio alpha*dt/dx^2.
  double diffusion_number(double alpha) const { return alpha * dt() / (dx() * dx()); }
  bool explicit_stable(double alpha) const { return diffusion_number(alpha) <= 0.5; }

  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

}  // namespace stefan
