#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stefan {

using Profile = std::function<double(double)>;

struct KernelParams {
  double alpha = 1.0;
  double lambda = 1.0;
  int image_count = 8;
  double series_tol = 1e-12;

  void validate() const;
  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

// Dirichlet heat kernel on (0, lambda) by the method of images with
// 2K+1 image pairs. Exactly 0 when x or y sits on a wall.
double kernel_value(double x, double y, double t, const KernelParams& params);

// dG/dy by term-wise differentiation of the image series.
double kernel_dy(double x, double y, double t, const KernelParams& params);

// Total mass int_0^lambda G(x, y, t) dy.
double kernel_mass(double x, double t, const KernelParams& params);

// v(x,t) = int u0(y) G(x,y,t) dy. Returns u0(x) at t = 0.
double smooth_source(const Profile& u0, double x, double t, const KernelParams& params);

// Largest |v(x,t2) - v(x,t1)| / |t2 - t1| over a (probe_x x probe_t) lattice
// on [0, horizon]; the measured time-Lipschitz constant of smooth_source.
double smooth_source_lipschitz(const Profile& u0, double horizon, const KernelParams& params,
                               int probe_x = 17, int probe_t = 64);

struct KernelBoundsRow {
  double t = 0.0;
  double sup_kernel = 0.0;      // sup_{x,y} G(x,y,t) * t^{1/2}
  double gaussian_mass = 0.0;   // sup_x int exp(-c|x-y|^2/t) dy / t^{1/2}
  double dy_mass = 0.0;         // sup_x int |G_y(x,y,t)| dy * t^{1/2}
  double quadrature_step = 0.0;
};

struct KernelBoundsReport {
  std::vector<KernelBoundsRow> rows;  // sorted by decreasing t
  double gaussian_rate = 0.0;         // the c in exp(-c|x-y|^2/t)
  double growth_limit = 1.1;          // allowed ratio between the two smallest-t constants
  bool pass = false;
  std::vector<std::string> notes;
};

KernelBoundsReport verify_kernel_bounds(std::span<const double> t_grid, const KernelParams& params);

// int_0^T int_0^lambda G(x,y,s)^p |sigma(y)|^p dy ds on a log-spaced time grid
// with an analytic power-law tail below the first node. +inf for p >= 3.
double singular_moment_integral(double p, double x, double horizon, const Profile& sigma,
                                const KernelParams& params);

}  // namespace stefan
