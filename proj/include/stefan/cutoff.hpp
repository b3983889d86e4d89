#pragma once

#include <limits>
#include <optional>
#include <span>
#include <string>

#include "stefan/grid.hpp"

namespace stefan {

struct PathState;
struct MalliavinField;

// Which boundary-gradient excursion stops the clock: |u_x(0+)| >= M for the
// unreflected equation, u_x(0+) >= M for the reflected one.
enum class GradientConvention { absolute, one_sided };

struct CutoffParams {
  int n = 100;
  double p = 2.5;
  double M = 10.0;
  double M_d = 1.0e3;
  double T = 1.0;
  GradientConvention convention = GradientConvention::absolute;

  // n^{1/p}: Hn = 1 below, Hn = 0 above band_start() + 1.
  double band_start() const;
  // Analytic bound 2 n^{1/p} + 3 on |Tn'|.
  double lipschitz_bound() const;
  void validate() const;
  friend bool operator==(const CutoffParams&, const CutoffParams&) = default;
};

double Hn(double v, const CutoffParams& params);
double Hn_prime(double v, const CutoffParams& params);
double Tn(double v, const CutoffParams& params);
double Tn_prime(double v, const CutoffParams& params);

// max_i |f(x_i)/x_i| over interior nodes; `field` holds all nx+2 nodes.
double h_norm(std::span<const double> field, double dx);

// (4 f(x_1) - f(x_2)) / (2 dx), exact on quadratics vanishing at 0.
double boundary_gradient(std::span<const double> field, double dx);

inline constexpr double kNever = std::numeric_limits<double>::infinity();

struct PathClassification {
  double tau_M = kNever;
  double tau_tilde_n = kNever;
  std::optional<double> tau_Md;  // empty when no Malliavin field was supplied
  bool in_Omega_M = false;
  bool in_Omega_M_n = false;
  int n = 0;
  double sup_h_norm = 0.0;        // over grid times in [0, min(T, tau_M))
  double sup_abs_gradient = 0.0;  // same window
  int valid_steps = 0;            // number of grid times in that window
  GradientConvention convention = GradientConvention::absolute;
};

// Stopping times are read on grid times t_j <= T only; the continuous-time
// sup is approximated by the grid sup.
PathClassification classify_path(const PathState& path, const MalliavinField* dpath, const CutoffParams& params);

std::string to_string(GradientConvention c);
GradientConvention gradient_convention_from_string(const std::string& s);

}  // namespace stefan
