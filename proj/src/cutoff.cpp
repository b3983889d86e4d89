#include "stefan/cutoff.hpp"

#include <algorithm>
#include <cmath>

#include "stefan/errors.hpp"
#include "stefan/malliavin_field.hpp"
#include "stefan/path.hpp"

namespace stefan {

namespace {
// Smoothstep on [0,1] and its derivative.
double smoothstep(double r) {
  if (r <= 0) return 0.0;
  if (r >= 1) return 1.0;
  return r * r * (3.0 - 2.0 * r);
}
double smoothstep_prime(double r) {
  if (r <= 0 || r >= 1) return 0.0;
  return 6.0 * r * (1.0 - r);
}
}  // namespace

double CutoffParams::band_start() const { return std::pow(static_cast<double>(n), 1.0 / p); }
double CutoffParams::lipschitz_bound() const { return 2.0 * band_start() + 3.0; }

void CutoffParams::validate() const {
  if (n < 1) throw UsageError("cutoff: n must be a positive integer");
  if (!(p > 2.0 && p < 3.0)) throw UsageError("cutoff: p must lie in (2, 3)");
  if (!(M > 0)) throw UsageError("cutoff: M must be positive");
  if (!(M_d > 0)) throw UsageError("cutoff: M_d must be positive");
  if (!(T > 0)) throw UsageError("cutoff: T must be positive");
}

double Hn(double v, const CutoffParams& params) { return 1.0 - smoothstep(std::abs(v) - params.band_start()); }

double Hn_prime(double v, const CutoffParams& params) {
  const double d = -smoothstep_prime(std::abs(v) - params.band_start());
  return v < 0 ? -d : d;
}

double Tn(double v, const CutoffParams& params) { return Hn(v, params) * v; }

double Tn_prime(double v, const CutoffParams& params) { return Hn(v, params) + v * Hn_prime(v, params); }

double h_norm(std::span<const double> field, double dx) {
  if (field.size() < 3) throw UsageError("h_norm: field needs at least one interior node");
  if (field.front() != 0.0 || field.back() != 0.0)
    throw ContractViolation("h_norm: field must vanish at both walls");
  double m = 0.0;
  for (size_t k = 1; k + 1 < field.size(); ++k) m = std::max(m, std::abs(field[k] / (static_cast<double>(k) * dx)));
  return m;
}

double boundary_gradient(std::span<const double> field, double dx) {
  if (field.size() < 4) throw UsageError("boundary_gradient: need nx >= 2");
  if (field[0] != 0.0) throw ContractViolation("boundary_gradient: field must vanish at 0");
  return (4.0 * field[1] - field[2]) / (2.0 * dx);
}

PathClassification classify_path(const PathState& path, const MalliavinField* dpath, const CutoffParams& params) {
  params.validate();
  const auto& g = path.grid;
  PathClassification c;
  c.n = params.n;
  c.convention = params.convention;
  const double t_end = std::min(params.T, g.horizon);
  const double slack = 1e-9 * g.dt();
  int last = 0;
  while (last < g.nt && g.t(last + 1) <= t_end + slack) ++last;

  double sup_h_all = 0.0;
  for (int j = 0; j <= last; ++j) {
    const double grad = path.boundary_grad[j];
    const double h = h_norm(path.row(j), g.dx());
    const bool trip = params.convention == GradientConvention::absolute ? std::abs(grad) >= params.M
                                                                        : grad >= params.M;
    if (trip && c.tau_M == kNever) c.tau_M = g.t(j);
    if (h >= params.n && c.tau_tilde_n == kNever) c.tau_tilde_n = g.t(j);
    if (c.tau_M == kNever) {
      c.sup_h_norm = std::max(c.sup_h_norm, h);
      c.sup_abs_gradient = std::max(c.sup_abs_gradient, std::abs(grad));
      ++c.valid_steps;
    }
    sup_h_all = std::max(sup_h_all, h);
  }
  c.in_Omega_M = c.tau_M == kNever;
  c.in_Omega_M_n = c.in_Omega_M && std::pow(sup_h_all, params.p) < params.n;

  if (dpath) {
    c.tau_Md = kNever;
    const auto sup = dpath->trace_sup();
    for (int j = 0; j <= last && j < static_cast<int>(sup.size()); ++j)
      if (sup[j] >= params.M_d) {
        c.tau_Md = g.t(j);
        break;
      }
    if (dpath->tau_Md != kNever) c.tau_Md = std::min(*c.tau_Md, dpath->tau_Md);
  }
  return c;
}

std::string to_string(GradientConvention c) { return c == GradientConvention::absolute ? "absolute" : "one_sided"; }

GradientConvention gradient_convention_from_string(const std::string& s) {
  if (s == "absolute") return GradientConvention::absolute;
  if (s == "one_sided") return GradientConvention::one_sided;
  throw UsageError("unknown gradient convention '" + s + "' (expected absolute | one_sided)");
}

}  // namespace stefan
