#include "stefan/malliavin.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <cmath>
#include <istream>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <zlib.h>

#include "stefan/binary_io.hpp"
#include "stefan/errors.hpp"
#include "stefan/grid_kernel.hpp"
#include "stefan/summation.hpp"

namespace stefan {

int MalliavinField::find_source(int y, int s) const {
  for (size_t k = 0; k < sources.size(); ++k)
    if (sources[k].y == y && sources[k].s == s) return static_cast<int>(k);
  return -1;
}

int MalliavinField::find_x(int k) const {
  for (size_t m = 0; m < stored_x.size(); ++m)
    if (stored_x[m] == k) return static_cast<int>(m);
  return -1;
}

GnProcess gn_process(const PathState& path, const CutoffParams& params, bool cutoff) {
  const auto& g = path.grid;
  GnProcess gn;
  gn.grid = g;
  gn.band_bound = params.lipschitz_bound();
  gn.values.resize(static_cast<size_t>(g.nt + 1) * g.nx);
  for (int j = 0; j <= g.nt; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double v = path.u(i + 1, j) / g.interior_x(i);
      const double d = cutoff ? Tn_prime(v, params) : 1.0;
      gn.values[static_cast<size_t>(j) * g.nx + i] = d;
      gn.c_L = std::max(gn.c_L, std::abs(d));
    }
  return gn;
}

SourceSelection SourceSelection::all(const GridSpec& grid) { return window(grid, 0, grid.nt); }

SourceSelection SourceSelection::window(const GridSpec& grid, int s_begin, int s_end) {
  if (s_begin < 0 || s_end > grid.nt || s_begin > s_end) throw UsageError("SourceSelection: bad s range");
  SourceSelection sel;
  for (int s = s_begin; s < s_end; ++s)
    for (int y = 0; y < grid.nx; ++y) sel.cells.push_back({y, s, 1.0});
  return sel;
}

SourceSelection SourceSelection::stratified(const GridSpec& grid, int stride, int s_begin, int s_end,
                                            std::uint64_t seed) {
  if (stride < 1) throw UsageError("SourceSelection: stride must be >= 1");
  if (s_begin < 0 || s_end > grid.nt || s_begin > s_end) throw UsageError("SourceSelection: bad s range");
  std::mt19937_64 rng(seed);
  SourceSelection sel;
  for (int s = s_begin; s < s_end; ++s)
    for (int y0 = 0; y0 < grid.nx; y0 += stride) {
      const int width = std::min(stride, grid.nx - y0);
      std::uniform_int_distribution<int> pick(0, width - 1);
      sel.cells.push_back({y0 + pick(rng), s, static_cast<double>(width)});
    }
  return sel;
}

MalliavinField malliavin_solve(const PathState& path, const GnProcess& gn, const Profile& sigma,
                               const SourceSelection& selection, const MalliavinOptions& options) {
  const auto& g = path.grid;
  const auto& cp = path.cutoff;
  cp.validate();
  if (!(gn.grid == g)) throw UsageError("malliavin_solve: G_n built on a different grid");
  if (g.nx < 2) throw UsageError("malliavin_solve: need nx >= 2");
  const int n = g.nx, nt = g.nt, times = nt + 1;
  const double dx = g.dx(), dt = g.dt();

  MalliavinField field;
  field.grid = g;
  field.params = cp;
  field.sources = selection.cells;
  for (const auto& c : field.sources)
    if (c.y < 0 || c.y >= n || c.s < 0 || c.s >= nt) throw UsageError("malliavin_solve: source cell out of range");
  std::stable_sort(field.sources.begin(), field.sources.end(),
                   [](const SourceCell& a, const SourceCell& b) { return a.s != b.s ? a.s < b.s : a.y < b.y; });
  if (options.stored_x.empty()) {
    for (int k = 0; k <= n + 1; ++k) field.stored_x.push_back(k);
  } else {
    field.stored_x = options.stored_x;
    for (int k : field.stored_x)
      if (k < 0 || k > n + 1) throw UsageError("malliavin_solve: stored node out of range");
  }
  const size_t count = field.sources.size();
  const size_t nxs = field.stored_x.size();
  field.values.assign(count * nxs * times, 0.0);
  field.drift_part.assign(count * nxs * times, 0.0);
  field.trace.assign(count * times, 0.0);
  field.trace_max.assign(times, 0.0);

  // tau_M from the path: coefficients at t_j are only used while t_j < tau_M.
  int stop = nt;
  for (int j = 0; j <= nt; ++j) {
    const double grad = path.boundary_grad[j];
    const bool trip = cp.convention == GradientConvention::absolute ? std::abs(grad) >= cp.M : grad >= cp.M;
    if (trip) {
      stop = j;
      break;
    }
  }

  const GridKernel kernel(g, path.kernel);
  const auto sig = sample_interior(sigma, g);
  const auto P = kernel.propagator();
  std::vector<double> S(count * n, 0.0), A(count * n, 0.0), tr(count, 0.0), profile(n);
  kernels::TangentStep step;
  step.propagator = P;
  step.gradient_propagator = kernel.gradient_propagator();
  step.dt = dt;
  step.dx = dx;
  step.drift = options.drift;

  size_t active = 0;
  field.valid_until = 1;
  CompensatedSum l2;
  for (int j = 0; j < stop; ++j) {
    auto row = path.row(j);
    for (int l = 0; l < n; ++l) {
      const double v = row[l + 1] / g.interior_x(l);
      profile[l] = g.interior_x(l) * (options.cutoff ? Tn(v, cp) : v);
    }
    step.drift_profile = profile;
    step.gn = std::span<const double>(gn.values.data() + static_cast<size_t>(j) * n, n);
    step.trace_coeff = path.boundary_grad[j];
    if (active > 0)
      kernels::advance_tangents(step, S, A, std::span<double>(tr.data(), active), n, options.policy, options.order);
    while (active < count && field.sources[active].s == j) {
      const auto& c = field.sources[active];
      double* s = S.data() + active * n;
      for (int i = 0; i < n; ++i) s[i] = P[static_cast<size_t>(i) * n + c.y] * sig[c.y] / dx;
      tr[active] = (4.0 * s[0] - s[1]) / (2.0 * dx);
      ++active;
    }
    double tmax = 0.0;
    for (size_t c = 0; c < active; ++c) {
      const double* s = S.data() + c * n;
      const double* a = A.data() + c * n;
      for (size_t m = 0; m < nxs; ++m) {
        const int k = field.stored_x[m];
        if (k == 0 || k == n + 1) continue;
        const size_t at = (c * nxs + m) * times + (j + 1);
        field.values[at] = s[k - 1] + a[k - 1];
        field.drift_part[at] = a[k - 1];
      }
      double sq = 0.0;
      for (int i = 0; i < n; ++i) sq += (s[i] + a[i]) * (s[i] + a[i]);
      l2 += field.sources[c].weight * sq * dx * dt * dx * dt;
      field.trace[c * times + (j + 1)] = tr[c];
      tmax = std::max(tmax, std::abs(tr[c]));
      if (!std::isfinite(tr[c])) throw DomainError("malliavin_solve: non-finite trace at step " + std::to_string(j + 1));
    }
    field.trace_max[j + 1] = tmax;
    field.valid_until = j + 2;
    if (tmax >= cp.M_d) {
      field.tripped = true;
      field.tau_Md = g.t(j + 1);
      field.valid_until = j + 1;
      break;
    }
  }
  field.l2_mass = l2.value();
  return field;
}

Probe probe_at(const GridSpec& grid, double x) {
  if (!(x >= 0 && x <= grid.lambda)) throw UsageError("probe_at: x outside [0, lambda]");
  const double r = x / grid.dx();
  Probe p;
  p.k0 = std::min(static_cast<int>(std::floor(r)), grid.nx);
  p.k1 = p.k0 + 1;
  p.w1 = r - p.k0;
  if (p.w1 < 1e-12) {
    p.w1 = 0.0;
    p.k1 = p.k0;
  } else if (p.w1 > 1.0 - 1e-12) {
    p.k0 = p.k1;
    p.w1 = 0.0;
  }
  return p;
}

namespace {

struct ProbeSlots {
  int m0 = -1, m1 = -1;
  double w1 = 0.0;
};

ProbeSlots probe_slots(const MalliavinField& field, double x) {
  const Probe p = probe_at(field.grid, x);
  ProbeSlots s;
  s.m0 = field.find_x(p.k0);
  s.m1 = field.find_x(p.k1);
  s.w1 = p.w1;
  if (s.m0 < 0 || (s.w1 > 0 && s.m1 < 0))
    throw UsageError(fmt::format("malliavin: probe x = {} needs nodes {} and {} stored", x, p.k0, p.k1));
  return s;
}

double interp(const MalliavinField& f, const ProbeSlots& ps, int src, int j, bool drift_only) {
  auto v = [&](int m) { return drift_only ? f.drift_value(src, m, j) : f.value(src, m, j); };
  const double a = v(ps.m0);
  return ps.w1 > 0 ? (1.0 - ps.w1) * a + ps.w1 * v(ps.m1) : a;
}

double windowed_mass(const MalliavinField& f, const ProbeSlots& ps, int j, int s_begin, double p, bool drift_only) {
  CompensatedSum sum;
  for (size_t c = 0; c < f.sources.size(); ++c) {
    const auto& src = f.sources[c];
    if (src.s < s_begin || src.s >= j) continue;
    sum += src.weight * std::pow(std::abs(interp(f, ps, static_cast<int>(c), j, drift_only)), p);
  }
  return sum.value() * f.grid.dx() * f.grid.dt();
}

double slope(std::span<const double> xs, std::span<const double> ys) {
  const size_t m = xs.size();
  double mx = 0, my = 0;
  for (size_t k = 0; k < m; ++k) {
    mx += std::log(xs[k]);
    my += std::log(ys[k]);
  }
  mx /= m;
  my /= m;
  double sxx = 0, sxy = 0;
  for (size_t k = 0; k < m; ++k) {
    const double dx = std::log(xs[k]) - mx;
    sxx += dx * dx;
    sxy += dx * (std::log(ys[k]) - my);
  }
  return sxy / sxx;
}

}  // namespace

double malliavin_mass(const MalliavinField& field, double x, int j, double p, bool drift_only) {
  if (j < 0 || j >= field.valid_until) throw UsageError("malliavin_mass: time index outside the computed range");
  return windowed_mass(field, probe_slots(field, x), j, 0, p, drift_only);
}

ScalingSample scaling_sample(const MalliavinField& field, double x, std::span<const int> eps_steps, int b_step,
                             double p) {
  ScalingSample out;
  if (b_step >= field.valid_until) {
    out.usable = false;
    return out;
  }
  const ProbeSlots ps = probe_slots(field, x);
  for (int e : eps_steps) {
    double m1 = 0.0, m2 = 0.0;
    for (int j = b_step - e; j <= b_step; ++j) {
      m1 = std::max(m1, windowed_mass(field, ps, j, b_step - e, p, false));
      m2 = std::max(m2, windowed_mass(field, ps, j, b_step - e, p, true));
    }
    out.e1.push_back(m1);
    out.e2.push_back(m2);
  }
  return out;
}

ScalingReport reduce_scaling(std::span<const ScalingSample> samples, const GridSpec& grid,
                             std::span<const int> eps_steps, double p) {
  if (eps_steps.size() < 4) throw UsageError("estimate_scaling: need at least 4 window lengths");
  if (!(p > 2 && p < 3)) throw UsageError("estimate_scaling: p must lie in (2, 3)");
  ScalingReport r;
  r.p = p;
  r.q = p / (p - 1.0);
  r.target1 = (3.0 - p) / 2.0;
  r.target2 = 1.0 + (3.0 - p) / 2.0 + (1.0 - r.q / 2.0) * p / r.q;
  const size_t m = eps_steps.size();
  std::vector<CompensatedSum> s1(m), s2(m), q1(m), q2(m);
  for (const auto& smp : samples) {
    if (!smp.usable) {
      ++r.paths_excluded;
      continue;
    }
    ++r.paths_used;
    for (size_t k = 0; k < m; ++k) {
      s1[k] += smp.e1[k];
      s2[k] += smp.e2[k];
      q1[k] += smp.e1[k] * smp.e1[k];
      q2[k] += smp.e2[k] * smp.e2[k];
    }
  }
  if (r.paths_used == 0) throw UsageError("estimate_scaling: no field covers the window end b");
  const double np = r.paths_used;
  for (size_t k = 0; k < m; ++k) {
    r.eps.push_back(eps_steps[k] * grid.dt());
    const double m1 = s1[k].value() / np, m2 = s2[k].value() / np;
    r.e1.push_back(m1);
    r.e2.push_back(m2);
    const double v1 = np > 1 ? std::max(0.0, (q1[k].value() - np * m1 * m1) / (np - 1)) : 0.0;
    const double v2 = np > 1 ? std::max(0.0, (q2[k].value() - np * m2 * m2) / (np - 1)) : 0.0;
    r.e1_se.push_back(std::sqrt(v1 / np));
    r.e2_se.push_back(std::sqrt(v2 / np));
  }
  const bool e1_pos = std::all_of(r.e1.begin(), r.e1.end(), [](double v) { return v > 0; });
  const bool e2_pos = std::all_of(r.e2.begin(), r.e2.end(), [](double v) { return v > 0; });
  r.slope1 = e1_pos ? slope(r.eps, r.e1) : std::nan("");
  r.slope2 = e2_pos ? slope(r.eps, r.e2) : std::nan("");
  r.pass = e1_pos && e2_pos && r.slope1 >= r.target1 - 0.15 && r.slope2 >= r.target2 - 0.25;
  return r;
}

ScalingReport estimate_scaling(std::span<const MalliavinField> ensemble, double x, std::span<const int> eps_steps,
                               int b_step, double p) {
  if (eps_steps.size() < 4) throw UsageError("estimate_scaling: need at least 4 window lengths");
  if (ensemble.empty()) throw UsageError("estimate_scaling: empty ensemble");
  for (int e : eps_steps)
    if (e < 1 || e > b_step) throw UsageError("estimate_scaling: window lengths must lie in [1, b]");
  std::vector<ScalingSample> samples;
  for (const auto& f : ensemble) samples.push_back(scaling_sample(f, x, eps_steps, b_step, p));
  return reduce_scaling(samples, ensemble.front().grid, eps_steps, p);
}

void check_positivity_precondition(PositivityReport& report, double x, double t, const Profile& sigma,
                                   const KernelParams& kernel, const PositivityOptions& options) {
  const int probes = 32;
  double lo = std::abs(smooth_source(sigma, x, 0.0, kernel));
  for (int k = 1; k <= probes; ++k) lo = std::min(lo, std::abs(smooth_source(sigma, x, t * k / probes, kernel)));
  report.min_heat_flow = lo;
  report.precondition_ok = lo >= options.floor;
  if (!report.precondition_ok) {
    report.diagnostic = fmt::format("heat flow of sigma at x = {} drops to {:.4g} < c(x) = {:.4g} on [0, {}]", x, lo,
                                    options.floor, t);
    if (!options.override_precondition) throw PreconditionError("positivity_check: " + report.diagnostic);
  }
}

PositivityReport positivity_from_masses(std::vector<double> masses, double scale, double threshold) {
  PositivityReport r;
  r.scale = scale;
  r.masses = std::move(masses);
  if (r.masses.empty()) return r;
  const double cut = threshold * scale;
  const auto hits = std::count_if(r.masses.begin(), r.masses.end(), [&](double m) { return m > cut; });
  r.fraction = static_cast<double>(hits) / static_cast<double>(r.masses.size());
  return r;
}

double malliavin_kernel_mass(const MalliavinField& f, double x, int j, double p) {
  if (j < 0 || j >= f.valid_until) throw UsageError("malliavin_kernel_mass: time index outside the computed range");
  const ProbeSlots ps = probe_slots(f, x);
  CompensatedSum k;
  for (size_t c = 0; c < f.sources.size(); ++c) {
    if (f.sources[c].s >= j) continue;
    const double d = interp(f, ps, static_cast<int>(c), j, false) - interp(f, ps, static_cast<int>(c), j, true);
    k += f.sources[c].weight * std::pow(std::abs(d), p);
  }
  return k.value() * f.grid.dx() * f.grid.dt();
}

PositivityReport positivity_check(std::span<const MalliavinField> ensemble, double x, int j, double p,
                                  const Profile& sigma, const KernelParams& kernel, const PositivityOptions& options) {
  if (ensemble.empty()) throw UsageError("positivity_check: empty ensemble");
  PositivityReport pre;
  check_positivity_precondition(pre, x, ensemble.front().grid.t(j), sigma, kernel, options);
  std::vector<double> masses;
  CompensatedSum scale;
  for (const auto& f : ensemble) {
    masses.push_back(malliavin_mass(f, x, j, p, false));
    scale += malliavin_kernel_mass(f, x, j, p);
  }
  PositivityReport r = positivity_from_masses(std::move(masses), scale.value() / ensemble.size(), options.threshold);
  r.min_heat_flow = pre.min_heat_flow;
  r.precondition_ok = pre.precondition_ok;
  r.diagnostic = pre.diagnostic;
  return r;
}

namespace {
constexpr std::uint16_t kFieldVersion = 1;
}

void write_malliavin_binary(std::ostream& out, const MalliavinField& f) {
  binio::put_magic(out, "STMD");
  binio::put<std::uint16_t>(out, kFieldVersion);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.nx));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.grid.nt));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.sources.size()));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.stored_x.size()));
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(f.valid_until));
  binio::put<double>(out, f.grid.lambda);
  binio::put<double>(out, f.grid.horizon);
  for (const auto& c : f.sources) {
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.y));
    binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(c.s));
    binio::put<float>(out, static_cast<float>(c.weight));
  }
  for (int k : f.stored_x) binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(k));

  std::vector<unsigned char> raw;
  raw.reserve((f.values.size() + f.trace.size()) * 4);
  auto push = [&](double v) {
    const float x = static_cast<float>(v);
    unsigned char b[4];
    std::memcpy(b, &x, 4);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
    raw.insert(raw.end(), b, b + 4);
  };
  for (double v : f.values) push(v);
  for (double v : f.trace) push(v);
  uLongf len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> packed(len);
  if (compress2(packed.data(), &len, raw.data(), static_cast<uLong>(raw.size()), Z_BEST_SPEED) != Z_OK)
    throw std::runtime_error("write_malliavin_binary: zlib compression failed");
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(len));
  out.write(reinterpret_cast<const char*>(packed.data()), static_cast<std::streamsize>(len));
}

MalliavinField read_malliavin_binary(std::istream& in) {
  binio::expect_magic(in, "STMD");
  if (binio::get<std::uint16_t>(in) != kFieldVersion) throw UsageError("field dump: unsupported version");
  MalliavinField f;
  f.grid.nx = static_cast<int>(binio::get<std::uint32_t>(in));
  f.grid.nt = static_cast<int>(binio::get<std::uint32_t>(in));
  const auto count = binio::get<std::uint32_t>(in);
  const auto nxs = binio::get<std::uint32_t>(in);
  f.valid_until = static_cast<int>(binio::get<std::uint32_t>(in));
  f.grid.lambda = binio::get<double>(in);
  f.grid.horizon = binio::get<double>(in);
  f.grid.validate();
  for (std::uint32_t c = 0; c < count; ++c) {
    SourceCell cell;
    cell.y = static_cast<int>(binio::get<std::uint32_t>(in));
    cell.s = static_cast<int>(binio::get<std::uint32_t>(in));
    cell.weight = binio::get<float>(in);
    f.sources.push_back(cell);
  }
  for (std::uint32_t m = 0; m < nxs; ++m) f.stored_x.push_back(static_cast<int>(binio::get<std::uint32_t>(in)));
  const auto len = binio::get<std::uint64_t>(in);
  std::vector<unsigned char> packed(len);
  in.read(reinterpret_cast<char*>(packed.data()), static_cast<std::streamsize>(len));
  if (!in) throw UsageError("field dump: truncated payload");
  const size_t times = f.grid.nt + 1;
  const size_t nvals = static_cast<size_t>(count) * nxs * times, ntr = static_cast<size_t>(count) * times;
  std::vector<unsigned char> raw((nvals + ntr) * 4);
  uLongf rlen = static_cast<uLongf>(raw.size());
  if (uncompress(raw.data(), &rlen, packed.data(), static_cast<uLong>(len)) != Z_OK || rlen != raw.size())
    throw UsageError("field dump: corrupt payload");
  auto take = [&](size_t idx) {
    unsigned char b[4];
    std::memcpy(b, raw.data() + 4 * idx, 4);
    if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + 4);
    float x;
    std::memcpy(&x, b, 4);
    return static_cast<double>(x);
  };
  f.values.resize(nvals);
  f.trace.resize(ntr);
  for (size_t k = 0; k < nvals; ++k) f.values[k] = take(k);
  for (size_t k = 0; k < ntr; ++k) f.trace[k] = take(nvals + k);
  f.drift_part.assign(nvals, 0.0);
  f.trace_max.assign(times, 0.0);
  for (size_t c = 0; c < count; ++c)
    for (size_t j = 0; j < times; ++j) f.trace_max[j] = std::max(f.trace_max[j], std::abs(f.trace[c * times + j]));
  return f;
}

}  // namespace stefan
