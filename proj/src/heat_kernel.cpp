#include "stefan/heat_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "stefan/errors.hpp"
#include "stefan/quadrature.hpp"
#include "stefan/summation.hpp"

namespace stefan {

namespace {

constexpr double kPi = std::numbers::pi;

// Half-width, in units of sqrt(alpha t), beyond which exp(-z^2/(4 alpha t)) < 3e-16.
constexpr double kWindow = 12.0;

void check_point(double x, double y, double t, const KernelParams& params) {
  if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(t))
    throw DomainError("heat kernel: non-finite argument");
  if (t <= 0) throw DomainError("heat kernel: t must be positive, got " + std::to_string(t));
  if (x < 0 || x > params.lambda || y < 0 || y > params.lambda)
    throw DomainError("heat kernel: point outside [0, lambda]");
}

double gauss(double z, double four_at) { return std::exp(-z * z / four_at) / std::sqrt(kPi * four_at); }

// Integration window around x for an integrand carrying G(x, ., t).
std::pair<double, double> window(double x, double t, const KernelParams& params) {
  const double w = kWindow * std::sqrt(params.alpha * t);
  return {std::max(0.0, x - w), std::min(params.lambda, x + w)};
}

int intervals_for(double a, double b, double t, const KernelParams& params) {
  const double h = 0.05 * std::sqrt(params.alpha * t);
  const double n = std::ceil((b - a) / h);
  return static_cast<int>(std::clamp(n, 200.0, 2.0e6));
}

}  // namespace

void KernelParams::validate() const {
  if (!(std::isfinite(alpha) && alpha > 0)) throw UsageError("kernel: alpha must be positive");
  if (!(std::isfinite(lambda) && lambda > 0)) throw UsageError("kernel: lambda must be positive");
  if (image_count < 1) throw UsageError("kernel: image_count must be >= 1");
  if (!(series_tol > 0)) throw UsageError("kernel: series_tol must be positive");
}

double kernel_value(double x, double y, double t, const KernelParams& params) {
  check_point(x, y, t, params);
  if (x == 0 || y == 0 || x == params.lambda || y == params.lambda) return 0.0;
  const double four_at = 4.0 * params.alpha * t;
  const double d = x - y;
  const double s = x + y;
  // Images paired as (k, -k) so that swapping x and y permutes summands
  // within each pair only; the result is then bitwise symmetric.
  double v = gauss(d, four_at) - gauss(s, four_at);
  for (int k = 1; k <= params.image_count; ++k) {
    const double shift = 2.0 * k * params.lambda;
    v += (gauss(d + shift, four_at) + gauss(d - shift, four_at)) -
         (gauss(s + shift, four_at) + gauss(s - shift, four_at));
  }
  return std::max(v, 0.0);
}

double kernel_dy(double x, double y, double t, const KernelParams& params) {
  check_point(x, y, t, params);
  const double four_at = 4.0 * params.alpha * t;
  const double two_at = 2.0 * params.alpha * t;
  auto term = [&](double z) { return z * gauss(z, four_at); };
  const double d = x - y;
  const double s = x + y;
  double v = term(d) + term(s);
  for (int k = 1; k <= params.image_count; ++k) {
    const double shift = 2.0 * k * params.lambda;
    v += (term(d + shift) + term(d - shift)) + (term(s + shift) + term(s - shift));
  }
  return v / two_at;
}

double kernel_mass(double x, double t, const KernelParams& params) {
  check_point(x, x, t, params);
  auto [a, b] = window(x, t, params);
  return simpson([&](double y) { return kernel_value(x, y, t, params); }, a, b,
                 intervals_for(a, b, t, params));
}

double smooth_source(const Profile& u0, double x, double t, const KernelParams& params) {
  if (!std::isfinite(t)) throw DomainError("smooth_source: non-finite time");
  if (t < 0) throw DomainError("smooth_source: negative time");
  if (t == 0) return u0(x);
  check_point(x, x, t, params);
  auto [a, b] = window(x, t, params);
  return simpson([&](double y) { return u0(y) * kernel_value(x, y, t, params); }, a, b,
                 intervals_for(a, b, t, params));
}

double smooth_source_lipschitz(const Profile& u0, double horizon, const KernelParams& params,
                               int probe_x, int probe_t) {
  if (probe_x < 1 || probe_t < 1 || !(horizon > 0))
    throw UsageError("smooth_source_lipschitz: need positive probes and horizon");
  double c = 0.0;
  const double dt = horizon / probe_t;
  for (int m = 1; m <= probe_x; ++m) {
    const double x = params.lambda * m / (probe_x + 1);
    double prev = smooth_source(u0, x, 0.0, params);
    for (int j = 1; j <= probe_t; ++j) {
      const double cur = smooth_source(u0, x, j * dt, params);
      c = std::max(c, std::abs(cur - prev) / dt);
      prev = cur;
    }
  }
  return c;
}

KernelBoundsReport verify_kernel_bounds(std::span<const double> t_grid, const KernelParams& params) {
  if (t_grid.empty()) throw UsageError("verify_kernel_bounds: empty time grid");
  params.validate();
  KernelBoundsReport report;
  report.gaussian_rate = 1.0 / (4.0 * params.alpha);
  const int probe_x = 65;

  for (double t : t_grid) {
    if (!(std::isfinite(t) && t > 0)) throw UsageError("verify_kernel_bounds: times must be positive");
    KernelBoundsRow row;
    row.t = t;
    const double h = std::min(std::sqrt(params.alpha * t) / 20.0, params.lambda / 200.0);
    int n = static_cast<int>(std::ceil(params.lambda / h));
    if (n % 2) ++n;
    row.quadrature_step = params.lambda / n;
    const double rt = std::sqrt(t);
    for (int m = 1; m <= probe_x; ++m) {
      const double x = params.lambda * m / (probe_x + 1);
      double peak = 0.0;
      CompensatedSum gsum, dsum;
      for (int k = 0; k <= n; ++k) {
        const double y = k == n ? params.lambda : k * row.quadrature_step;
        const double w = (k == 0 || k == n) ? 1.0 : (k % 2 ? 4.0 : 2.0);
        peak = std::max(peak, kernel_value(x, y, t, params));
        gsum += w * std::exp(-report.gaussian_rate * (x - y) * (x - y) / t);
        dsum += w * std::abs(kernel_dy(x, y, t, params));
      }
      const double scale = row.quadrature_step / 3.0;
      row.sup_kernel = std::max(row.sup_kernel, peak * rt);
      row.gaussian_mass = std::max(row.gaussian_mass, gsum.value() * scale / rt);
      row.dy_mass = std::max(row.dy_mass, dsum.value() * scale * rt);
    }
    report.rows.push_back(row);
  }
  std::sort(report.rows.begin(), report.rows.end(),
            [](const KernelBoundsRow& a, const KernelBoundsRow& b) { return a.t > b.t; });

  bool ok = true;
  for (const auto& r : report.rows)
    ok = ok && std::isfinite(r.sup_kernel) && std::isfinite(r.gaussian_mass) && std::isfinite(r.dy_mass);
  if (!ok) report.notes.push_back("non-finite constant");
  if (report.rows.size() >= 2) {
    const auto& fine = report.rows[report.rows.size() - 1];
    const auto& coarse = report.rows[report.rows.size() - 2];
    auto check = [&](double a, double b, const char* name) {
      if (a > report.growth_limit * b) {
        ok = false;
        report.notes.push_back(std::string(name) + " grows at the smallest times");
      }
    };
    check(fine.sup_kernel, coarse.sup_kernel, "sup_kernel");
    check(fine.gaussian_mass, coarse.gaussian_mass, "gaussian_mass");
    check(fine.dy_mass, coarse.dy_mass, "dy_mass");
  }
  report.pass = ok;
  return report;
}

double singular_moment_integral(double p, double x, double horizon, const Profile& sigma,
                                const KernelParams& params) {
  if (!(p > 0) || !(horizon > 0)) throw UsageError("singular_moment_integral: need p > 0 and horizon > 0");
  if (p >= 3.0) return std::numeric_limits<double>::infinity();
  auto inner = [&](double tau) {
    auto [a, b] = window(x, tau, params);
    return simpson(
        [&](double y) {
          const double g = kernel_value(x, y, tau, params);
          return std::pow(g * std::abs(sigma(y)), p);
        },
        a, b, 400);
  };
  const double tau_min = horizon * 1e-12;
  const double s0 = std::log(tau_min);
  const double s1 = std::log(horizon);
  const double body = simpson(
      [&](double s) {
        const double tau = std::exp(s);
        return inner(tau) * tau;
      },
      s0, s1, 600);
  // Below tau_min the integrand behaves like C tau^{(1-p)/2}.
  const double tail = inner(tau_min) * tau_min * 2.0 / (3.0 - p);
  return body + tail;
}

}  // namespace stefan
