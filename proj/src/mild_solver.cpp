#include "stefan/mild_solver.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "stefan/binary_io.hpp"
#include "stefan/errors.hpp"

namespace stefan {

namespace {

constexpr std::uint16_t kPathVersion = 1;

struct Sampled {
  std::vector<double> u0;     // nx+2 nodes, walls exactly 0
  std::vector<double> sigma;  // nx interior nodes
  std::vector<double> y;      // interior coordinates
};

Sampled sample_problem(const NoiseField& noise, const Problem& problem) {
  const auto& g = noise.grid;
  g.validate();
  problem.kernel.validate();
  problem.cutoff.validate();
  if (std::abs(g.lambda - problem.kernel.lambda) > 1e-14 * g.lambda)
    throw UsageError("solver: noise grid and kernel disagree on lambda");
  if (g.nx < 2) throw UsageError("solver: need nx >= 2 for the boundary gradient");
  if (!problem.u0 || !problem.sigma) throw UsageError("solver: u0 and sigma must be set");
  const double s0 = problem.sigma(0.0), s1 = problem.sigma(g.lambda);
  if (std::abs(s0) > 1e-12 || std::abs(s1) > 1e-12)
    throw PreconditionError("solver: sigma must vanish at both walls");
  const double a0 = problem.u0(0.0), a1 = problem.u0(g.lambda);
  if (std::abs(a0) > 1e-12 || std::abs(a1) > 1e-12)
    throw PreconditionError("solver: u0 must vanish at both walls");
  Sampled s;
  s.u0 = sample_nodes(problem.u0, g);
  s.u0.front() = 0.0;
  s.u0.back() = 0.0;
  s.sigma = sample_interior(problem.sigma, g);
  s.y.resize(g.nx);
  for (int i = 0; i < g.nx; ++i) s.y[i] = g.interior_x(i);
  return s;
}

// F(u)_l = y_l Tn(u_l / y_l) on the interior nodes of a full row.
void drift_profile(std::span<const double> row, const Sampled& s, const CutoffParams& cp, bool cutoff,
                   std::span<double> out) {
  const size_t n = out.size();
  for (size_t l = 0; l < n; ++l) {
    const double v = row[l + 1] / s.y[l];
    out[l] = s.y[l] * (cutoff ? Tn(v, cp) : v);
  }
}

void finish_gradients(PathState& path) {
  const double dx = path.grid.dx();
  for (int j = 0; j <= path.grid.nt; ++j) path.boundary_grad[j] = boundary_gradient(path.row(j), dx);
}

PathState make_path(const NoiseField& noise, const Problem& problem, const char* tag) {
  PathState p = PathState::zeros(noise.grid);
  p.seed = noise.seed;
  p.solver = tag;
  p.cutoff = problem.cutoff;
  p.kernel = problem.kernel;
  return p;
}

bool is_zero(const std::vector<double>& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

// Forward march, optionally projecting onto u >= 0.
PathState march(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                const SolverOptions& options, ReflectionMeasure* eta, const char* tag) {
  const Sampled s = sample_problem(noise, problem);
  const auto& g = noise.grid;
  const int n = g.nx;
  const double dx = g.dx(), dt = g.dt();
  PathState path = make_path(noise, problem, tag);
  std::copy(s.u0.begin(), s.u0.end(), path.row(0).begin());
  if (eta) {
    eta->grid = g;
    eta->mass.assign(static_cast<size_t>(n) * g.nt, 0.0);
  }
  std::vector<double> forced(n), next(n), f(n);
  for (int j = 0; j < g.nt; ++j) {
    auto cur = path.row(j);
    for (int l = 0; l < n; ++l) forced[l] = cur[l + 1] + s.sigma[l] * noise.at(l, j) / dx;
    kernels::matvec(kernel.propagator(), forced, next, options.policy, options.order);
    if (options.drift) {
      const double tr = boundary_gradient(cur, dx);
      drift_profile(cur, s, problem.cutoff, options.cutoff, f);
      kernels::matvec_add(kernel.gradient_propagator(), f, next, dt * tr, options.policy, options.order);
    }
    auto out = path.row(j + 1);
    for (int l = 0; l < n; ++l) {
      double v = next[l];
      if (!std::isfinite(v)) throw PicardDivergence("march: non-finite value at step " + std::to_string(j + 1), {});
      if (eta && v < 0.0) {
        eta->mass[static_cast<size_t>(l) * g.nt + j] = -v * dx;
        v = 0.0;
      }
      out[l + 1] = v;
    }
  }
  finish_gradients(path);
  return path;
}

}  // namespace

double PicardReport::max_ratio(int burn_in) const {
  double r = 0.0;
  for (size_t k = static_cast<size_t>(std::max(burn_in, 0)); k + 1 < differences.size(); ++k)
    if (differences[k] > 0) r = std::max(r, differences[k + 1] / differences[k]);
  return r;
}

PicardResult picard_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options) {
  const GridKernel kernel(noise.grid, problem.kernel);
  return picard_solve(noise, problem, kernel, options);
}

PicardResult picard_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                          const SolverOptions& options) {
  if (!(options.tol >= 0) || options.k_max < 1) throw UsageError("picard_solve: need tol >= 0 and k_max >= 1");
  const Sampled s = sample_problem(noise, problem);
  const auto& g = noise.grid;
  if (!(kernel.grid() == g)) throw UsageError("picard_solve: kernel built for a different grid");
  const int n = g.nx, nt = g.nt, w = n + 2;
  const double dx = g.dx(), dt = g.dt();

  PicardResult result;
  result.report.initial = options.initial;
  result.path = make_path(noise, problem, "mild");

  if (is_zero(s.u0) && is_zero(s.sigma)) {
    result.report.short_circuit = true;
    result.report.converged = true;
    result.report.iterations = 1;
    result.report.differences = {0.0};
    return result;
  }

  // Iterate-independent part: heat flow of u0 plus stochastic convolution.
  std::vector<double> base(static_cast<size_t>(nt + 1) * w, 0.0);
  std::vector<double> heat(s.u0.begin() + 1, s.u0.end() - 1), noise_part(n, 0.0), tmp(n);
  std::copy(s.u0.begin(), s.u0.end(), base.begin());
  for (int j = 0; j < nt; ++j) {
    kernels::matvec(kernel.propagator(), heat, tmp, options.policy, options.order);
    heat.swap(tmp);
    for (int l = 0; l < n; ++l) tmp[l] = noise_part[l] + s.sigma[l] * noise.at(l, j) / dx;
    kernels::matvec(kernel.propagator(), tmp, noise_part, options.policy, options.order);
    double* row = base.data() + static_cast<size_t>(j + 1) * w;
    for (int l = 0; l < n; ++l) row[l + 1] = heat[l] + noise_part[l];
  }

  std::vector<double> cur(static_cast<size_t>(nt + 1) * w, 0.0);
  if (options.initial == InitialIterate::smooth_source) {
    // Heat flow alone (no noise): base minus the stochastic convolution.
    std::vector<double> h(s.u0.begin() + 1, s.u0.end() - 1);
    std::copy(s.u0.begin(), s.u0.end(), cur.begin());
    for (int j = 0; j < nt; ++j) {
      kernels::matvec(kernel.propagator(), h, tmp, options.policy, options.order);
      h.swap(tmp);
      std::copy(h.begin(), h.end(), cur.begin() + static_cast<size_t>(j + 1) * w + 1);
    }
  }

  std::vector<double> next(cur.size(), 0.0), drift(n), f(n), adv(n);
  auto& report = result.report;
  for (int k = 0; k < options.k_max; ++k) {
    std::fill(drift.begin(), drift.end(), 0.0);
    std::copy(base.begin(), base.begin() + w, next.begin());
    for (int j = 0; j < nt; ++j) {
      std::span<const double> row(cur.data() + static_cast<size_t>(j) * w, w);
      if (options.drift) {
        kernels::matvec(kernel.propagator(), drift, adv, options.policy, options.order);
        const double tr = boundary_gradient(row, dx);
        drift_profile(row, s, problem.cutoff, options.cutoff, f);
        kernels::matvec_add(kernel.gradient_propagator(), f, adv, dt * tr, options.policy, options.order);
        drift.swap(adv);
      }
      const double* b = base.data() + static_cast<size_t>(j + 1) * w;
      double* o = next.data() + static_cast<size_t>(j + 1) * w;
      for (int l = 0; l < n; ++l) o[l + 1] = b[l + 1] + drift[l];
    }
    double d = 0.0;
    for (int j = 0; j <= nt; ++j) {
      const double* a = next.data() + static_cast<size_t>(j) * w;
      const double* c = cur.data() + static_cast<size_t>(j) * w;
      for (int l = 1; l <= n; ++l) d = std::max(d, std::abs((a[l] - c[l]) / (l * dx)));
    }
    cur.swap(next);
    report.differences.push_back(d);
    report.iterations = k + 1;
    if (!std::isfinite(d))
      throw PicardDivergence("picard_solve: non-finite iterate difference at iteration " + std::to_string(k + 1),
                             report);
    if (d <= options.tol) {
      report.converged = true;
      break;
    }
  }
  if (!report.converged)
    throw PicardDivergence(fmt::format("picard_solve: no convergence in {} iterations (last d_k = {:.3e}, tol = {:.3e})",
                                       options.k_max, report.differences.back(), options.tol),
                           report);
  result.path.values = std::move(cur);
  finish_gradients(result.path);
  return result;
}

PathState march_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options) {
  const GridKernel kernel(noise.grid, problem.kernel);
  return march_solve(noise, problem, kernel, options);
}

PathState march_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                      const SolverOptions& options) {
  return march(noise, problem, kernel, options, nullptr, "march");
}

ReflectedResult reflected_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options) {
  const GridKernel kernel(noise.grid, problem.kernel);
  return reflected_solve(noise, problem, kernel, options);
}

ReflectedResult reflected_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                                const SolverOptions& options) {
  ReflectedResult r;
  r.path = march(noise, problem, kernel, options, &r.eta, "reflected");
  return r;
}

namespace {

HolderFit fit_log_log(std::vector<double> lags, std::vector<double> incs, double confidence) {
  HolderFit fit;
  fit.lags = lags;
  fit.increments = incs;
  std::vector<double> lx, ly;
  for (size_t k = 0; k < lags.size(); ++k)
    if (incs[k] > 0) {
      lx.push_back(std::log(lags[k]));
      ly.push_back(std::log(incs[k]));
    }
  const size_t m = lx.size();
  if (m < 3) throw UsageError("holder_report: fewer than 3 usable lags");
  double mx = 0, my = 0;
  for (size_t k = 0; k < m; ++k) {
    mx += lx[k];
    my += ly[k];
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0;
  for (size_t k = 0; k < m; ++k) {
    sxx += (lx[k] - mx) * (lx[k] - mx);
    sxy += (lx[k] - mx) * (ly[k] - my);
  }
  fit.slope = sxy / sxx;
  const double icept = my - fit.slope * mx;
  double rss = 0;
  for (size_t k = 0; k < m; ++k) {
    const double e = ly[k] - icept - fit.slope * lx[k];
    rss += e * e;
  }
  const double se = std::sqrt(rss / (m - 2) / sxx);
  const boost::math::students_t dist(static_cast<double>(m - 2));
  const double q = boost::math::quantile(dist, 0.5 + confidence / 2.0);
  fit.ci_low = fit.slope - q * se;
  fit.ci_high = fit.slope + q * se;
  return fit;
}

}  // namespace

HolderReport holder_report(const PathState& path, int valid_steps, const HolderOptions& options) {
  const auto& g = path.grid;
  const int rows = valid_steps < 0 ? g.nt + 1 : std::min(valid_steps, g.nt + 1);
  if (rows - 1 < 8) throw UsageError("holder_report: path shorter than 8 time steps");
  HolderReport report;
  report.valid_steps = rows;

  std::vector<double> lags, incs;
  const int max_t = std::max(1, static_cast<int>(options.max_time_lag_fraction * (rows - 1)));
  for (int lag = std::max(1, options.min_time_lag); lag <= max_t; lag *= 2) {
    double m = 0.0;
    for (int j = 0; j + lag < rows; ++j)
      for (int k = 1; k <= g.nx; ++k) m = std::max(m, std::abs(path.u(k, j + lag) - path.u(k, j)));
    lags.push_back(lag * g.dt());
    incs.push_back(m);
  }
  report.time = fit_log_log(lags, incs, options.confidence);

  lags.clear();
  incs.clear();
  const int max_x = std::max(1, static_cast<int>(options.max_space_lag_fraction * (g.nx + 1)));
  for (int lag = std::max(1, options.min_space_lag); lag <= max_x; lag *= 2) {
    double m = 0.0;
    for (int j = 0; j < rows; ++j)
      for (int k = 0; k + lag <= g.nx + 1; ++k) m = std::max(m, std::abs(path.u(k + lag, j) - path.u(k, j)));
    lags.push_back(lag * g.dx());
    incs.push_back(m);
  }
  report.space = fit_log_log(lags, incs, options.confidence);
  return report;
}

void write_path_csv(std::ostream& out, const PathState& path) {
  const auto& g = path.grid;
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "t,x,u\n");
  for (int j = 0; j <= g.nt; ++j) {
    for (int k = 0; k <= g.nx + 1; ++k)
      fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g}\n", g.t(j), g.x(k), path.u(k, j));
    if (buf.size() > (1u << 20)) {
      out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
      buf.clear();
    }
  }
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_path_binary(std::ostream& out, const NoiseField& noise, const PathState& path) {
  if (!(noise.grid == path.grid)) throw UsageError("write_path_binary: noise and path grids differ");
  write_noise(out, noise);
  binio::put_magic(out, "STPU");
  binio::put<std::uint16_t>(out, kPathVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(path.grid.nt + 1));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(path.grid.nx + 2));
  for (double v : path.values) binio::put<double>(out, v);
  for (double v : path.boundary_grad) binio::put<double>(out, v);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(path.solver.size()));
  out.write(path.solver.data(), static_cast<std::streamsize>(path.solver.size()));
}

std::pair<NoiseField, PathState> read_path_binary(std::istream& in) {
  NoiseField noise = read_noise(in);
  binio::expect_magic(in, "STPU");
  if (binio::get<std::uint16_t>(in) != kPathVersion) throw UsageError("path dump: unsupported version");
  const auto rows = binio::get<std::uint32_t>(in);
  const auto cols = binio::get<std::uint32_t>(in);
  if (rows != static_cast<std::uint32_t>(noise.grid.nt + 1) || cols != static_cast<std::uint32_t>(noise.grid.nx + 2))
    throw UsageError("path dump: dimensions disagree with the noise block");
  PathState path = PathState::zeros(noise.grid);
  path.seed = noise.seed;
  for (double& v : path.values) v = binio::get<double>(in);
  for (double& v : path.boundary_grad) v = binio::get<double>(in);
  const auto len = binio::get<std::uint32_t>(in);
  path.solver.resize(len);
  in.read(path.solver.data(), len);
  if (!in) throw UsageError("path dump: truncated solver tag");
  return {std::move(noise), std::move(path)};
}

std::string to_string(InitialIterate init) {
  return init == InitialIterate::smooth_source ? "smooth_source" : "zero";
}

}  // namespace stefan
