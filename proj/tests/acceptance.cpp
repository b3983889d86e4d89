// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"
#include "stefan/config.hpp"
#include "stefan/fd_oracle.hpp"
#include "stefan/harness.hpp"
#include "stefan/heat_kernel.hpp"
#include "stefan/malliavin.hpp"
#include "stefan/mild_solver.hpp"
#include "stefan/quadrature.hpp"
#include "stefan/stefan_front.hpp"
#include "stefan/summation.hpp"

using namespace stefan;
namespace fs = std::filesystem;

namespace {

const double pi = std::numbers::pi;

struct Verdict {
  bool pass = false;
  std::string detail;
};

Profile zero() {
  return [](double) { return 0.0; };
}
Profile sine(double a, double lambda = 1.0) {
  return [=](double x) { return a * std::sin(pi * x / lambda); };
}
Profile parabola(double a) {
  return [a](double x) { return a * x * (1 - x); };
}
Profile bump(double a) {
  return [a](double x) {
    const double r = (x - 0.5) / 0.3;
    return std::abs(r) < 1 ? a * std::exp(1 - 1 / (1 - r * r)) : 0.0;
  };
}

Problem make(Profile u0, Profile sigma) {
  Problem p;
  p.u0 = std::move(u0);
  p.sigma = std::move(sigma);
  return p;
}

double sup_diff(const PathState& a, const PathState& b) {
  double d = 0.0;
  for (size_t k = 0; k < a.values.size(); ++k) d = std::max(d, std::abs(a.values[k] - b.values[k]));
  return d;
}

double rel_sup(const PathState& a, const PathState& ref) {
  double s = 0.0;
  for (double v : ref.values) s = std::max(s, std::abs(v));
  return sup_diff(a, ref) / s;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stefan_lab_acceptance_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Verdict kernel_correctness() {
  double worst = 0.0;
  for (double alpha : {1.0, 0.3})
    for (double lambda : {1.0, 2.0}) {
      const KernelParams kp{alpha, lambda};
      const double t0 = 0.01 * lambda * lambda / alpha;
      for (double tf : {1.0, 2.0, 5.0, 10.0, 100.0})
        for (int a = 1; a <= 17; ++a)
          for (int b = 1; b <= 17; ++b) {
            const double x = lambda * a / 18, y = lambda * b / 18, t = t0 * tf;
            const double ref = oracle::sine_series_kernel(x, y, t, alpha, lambda);
            worst = std::max(worst, std::abs(kernel_value(x, y, t, kp) - ref) / std::abs(ref));
          }
    }
  const KernelParams unit{};
  double ck = 0.0;
  for (auto [x, y, t1, t2] : std::vector<std::array<double, 4>>{{0.3, 0.6, 0.02, 0.03}, {0.5, 0.5, 0.01, 0.01},
                                                                 {0.1, 0.85, 0.05, 0.2}, {0.7, 0.2, 0.1, 0.01}}) {
    const double lhs = simpson(
        [&](double z) { return kernel_value(x, z, t1, unit) * kernel_value(z, y, t2, unit); }, 0.0, 1.0, 4000);
    ck = std::max(ck, std::abs(lhs - kernel_value(x, y, t1 + t2, unit)));
  }
  return {worst < 1e-8 && ck < 1e-6, fmt::format("lattice max rel err {:.2e} (< 1e-8), CK {:.2e} (< 1e-6)", worst, ck)};
}

Verdict ito_isometry() {
  const GridSpec g{32, 64, 1.0, 0.1};
  const KernelParams kp{};
  const double x = 0.5;
  std::vector<double> sig(g.nx);
  for (int i = 0; i < g.nx; ++i) sig[i] = std::sin(pi * g.interior_x(i));
  // Left-endpoint kernel weights G(x, y_l, t - s_m), so every weight is finite.
  std::vector<double> w(static_cast<size_t>(g.nx) * g.nt);
  for (int l = 0; l < g.nx; ++l)
    for (int m = 0; m < g.nt; ++m) w[static_cast<size_t>(l) * g.nt + m] = kernel_value(x, g.interior_x(l), g.t(g.nt) - g.t(m), kp);
  auto K = [&](int l, int m) { return w[static_cast<size_t>(l) * g.nt + m]; };
  CompensatedSum target;
  for (int l = 0; l < g.nx; ++l)
    for (int m = 0; m < g.nt; ++m) target += K(l, m) * K(l, m) * sig[l] * sig[l] * g.dx() * g.dt();
  const int seeds = 10000;
  std::vector<double> v(seeds);
  for (int s = 0; s < seeds; ++s) v[s] = walsh_integral(K, sig, sample_sheet(g, 90000 + s, ExecPolicy::serial), g.nt);
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= seeds;
  std::vector<double> sq(seeds);
  for (int s = 0; s < seeds; ++s) sq[s] = (v[s] - mean) * (v[s] - mean);
  double var = 0.0;
  for (double a : sq) var += a;
  var /= seeds - 1;
  double m4 = 0.0;
  for (double a : sq) m4 += (a - var) * (a - var);
  const double se = std::sqrt(m4 / (seeds - 1) / seeds);
  const double z = std::abs(var - target.value()) / se;
  return {z < 3.0, fmt::format("variance {:.5g} vs quadrature {:.5g}: {:.2f} SE (< 3)", var, target.value(), z)};
}

Verdict picard_contraction() {
  const GridSpec g{32, 256, 1.0, 0.25};
  const auto prob = make(parabola(1.0), sine(1.0));
  int good = 0, agree = 0;
  double worst_ratio = 0.0, worst_gap = 0.0;
  SolverOptions a, b;
  b.initial = InitialIterate::zero;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto noise = sample_sheet(g, seed);
    try {
      const auto ra = picard_solve(noise, prob, a);
      const auto rb = picard_solve(noise, prob, b);
      const double r = std::max(ra.report.max_ratio(), rb.report.max_ratio());
      worst_ratio = std::max(worst_ratio, r);
      good += r < 1.0;
      const double gap = sup_diff(ra.path, rb.path);
      worst_gap = std::max(worst_gap, gap);
      agree += gap < 10 * a.tol;
    } catch (const PicardDivergence&) {
    }
  }
  return {good == 100 && agree == 100,
          fmt::format("{}/100 contracting (worst ratio {:.3f}), {}/100 two-start agree (worst {:.1e} < {:.0e})", good,
                      worst_ratio, agree, worst_gap, 10 * a.tol)};
}

Verdict localization() {
  const GridSpec g{32, 256, 1.0, 0.25};
  const auto prob = make(parabola(4.0), sine(2.0));
  SolverOptions cut, plain;
  plain.cutoff = false;
  int qualifying = 0, agree = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto noise = sample_sheet(g, seed);
    const auto a = picard_solve(noise, prob, cut).path;
    double h = 0.0;
    for (int j = 0; j <= g.nt; ++j) h = std::max(h, h_norm(a.row(j), g.dx()));
    if (h >= prob.cutoff.band_start()) continue;
    ++qualifying;
    const double d = sup_diff(a, picard_solve(noise, prob, plain).path);
    worst = std::max(worst, d);
    agree += d <= cut.tol;
  }
  return {qualifying > 0 && agree == qualifying,
          fmt::format("{}/{} qualifying paths agree to tol (worst {:.1e}); {} paths above n^(1/p)", agree, qualifying,
                      worst, 100 - qualifying)};
}

Verdict solver_cross_validation() {
  const GridSpec g{64, 4096, 1.0, 0.1};
  const auto det = make(bump(1.0), zero());
  const auto noise0 = sample_sheet(g, 1);
  const double e_det = rel_sup(fd_solve(noise0, det).path, picard_solve(noise0, det).path);

  FdOptions fo;
  fo.drift = false;
  SolverOptions so;
  so.drift = false;
  so.cutoff = false;
  const auto lin = make(zero(), sine(1.0));
  double e_lin = 0.0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto noise = sample_sheet(g, seed);
    e_lin = std::max(e_lin, rel_sup(fd_solve(noise, lin, fo).path, picard_solve(noise, lin, so).path));
  }

  // Full noisy equation, coarse noise split conservatively onto the finer grid.
  const GridSpec coarse{32, 256, 1.0, 0.1};
  const auto full = make(parabola(1.0), sine(1.0));
  int better = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto n = sample_sheet(coarse, seed);
    const auto fine = refine_sheet(n, 7000 + seed);
    const double dc = rel_sup(fd_solve(n, full).path, picard_solve(n, full).path);
    const double df = rel_sup(fd_solve(fine, full).path, picard_solve(fine, full).path);
    better += df < dc;
  }
  return {e_det < 0.05 && e_lin < 0.10 && better >= 45,
          fmt::format("deterministic {:.2e} (< 5%), noisy linear {:.2e} (< 10%), refinement improves {}/50 (>= 45)",
                      e_det, e_lin, better)};
}

Verdict reflection() {
  const GridSpec g{24, 96, 1.0, 0.1};
  const auto prob = make(bump(0.2), sine(3.0));
  bool ok = true;
  int charged = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto r = reflected_solve(sample_sheet(g, seed), prob);
    double sup_u = 0.0, min_u = 0.0;
    for (double v : r.path.values) {
      sup_u = std::max(sup_u, v);
      min_u = std::min(min_u, v);
    }
    const double min_eta = *std::min_element(r.eta.mass.begin(), r.eta.mass.end());
    const double total = r.eta.total();
    const double resid = std::abs(r.eta.complementarity(r.path));
    const double scale = total * sup_u;
    if (total > 0) {
      ++charged;
      worst = std::max(worst, resid / scale);
    }
    ok &= min_u >= 0.0 && min_eta >= 0.0 && resid <= 1e-8 * scale;
  }
  FdOptions fo;
  fo.reflect = true;
  const GridSpec gf{24, 256, 1.0, 0.1};
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto r = fd_solve(sample_sheet(gf, seed), prob, fo);
    ok &= *std::min_element(r.path.values.begin(), r.path.values.end()) >= 0.0;
    ok &= std::abs(r.eta->complementarity(r.path)) <= 1e-8 * std::max(r.eta->total(), 1e-300);
  }
  return {ok && charged > 0, fmt::format("u >= 0, eta >= 0 on all paths; {} paths charge eta, worst residual/scale "
                                         "{:.1e} (< 1e-8)",
                                         charged, worst)};
}

Verdict continuity() {
  const GridSpec g{128, 4096, 1.0, 0.25};
  HolderOptions ho;
  ho.min_time_lag = std::max(1, static_cast<int>(std::ceil(g.dx() * g.dx() / g.dt())));
  SolverOptions o;
  o.drift = false;
  const auto conv = make(zero(), sine(1.0));
  double mt = 0.0, ms = 0.0;
  const int paths = 10;
  for (std::uint64_t seed = 1; seed <= paths; ++seed) {
    const auto h = holder_report(picard_solve(sample_sheet(g, seed), conv, o).path, -1, ho);
    mt += h.time.slope / paths;
    ms += h.space.slope / paths;
  }
  const GridSpec gd{32, 512, 1.0, 0.1};
  const auto dh = holder_report(picard_solve(sample_sheet(gd, 1), make(sine(1.0), zero())).path);
  return {mt >= 0.15 && mt <= 0.35 && ms >= 0.35 && ms <= 0.65 && dh.time.slope >= 0.9,
          fmt::format("stochastic convolution time {:.3f} in [0.15, 0.35], space {:.3f} in [0.35, 0.65]; "
                      "deterministic time {:.3f} (>= 0.9)",
                      mt, ms, dh.time.slope)};
}

Verdict bump_test() {
  const GridSpec g{24, 96, 1.0, 0.1};
  const auto prob = make(bump(1.0), sine(1.0));
  SolverOptions exact;
  exact.tol = 0.0;
  exact.k_max = g.nt + 2;
  const double delta = 1e-4 * std::sqrt(g.dx() * g.dt());
  std::mt19937_64 rng(31337);
  long probed = 0, good = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto noise = sample_sheet(g, seed);
    const auto base = picard_solve(noise, prob, exact).path;
    SourceSelection sel;
    while (sel.cells.size() < 20) {
      const SourceCell c{static_cast<int>(rng() % g.nx), static_cast<int>(rng() % (g.nt - 1)), 1.0};
      if (std::find(sel.cells.begin(), sel.cells.end(), c) == sel.cells.end()) sel.cells.push_back(c);
    }
    const auto f = malliavin_solve(base, gn_process(base, prob.cutoff), prob.sigma, sel);
    for (const auto& cell : sel.cells) {
      auto bumped = noise;
      bumped.increments[static_cast<size_t>(cell.y) * g.nt + cell.s] += delta;
      const auto up = picard_solve(bumped, prob, exact).path;
      const int src = f.find_source(cell.y, cell.s);
      for (int k = 1; k <= g.nx; ++k)
        for (int j = cell.s + 1; j < f.valid_until; ++j) {
          const double d = f.value(src, f.find_x(k), j);
          if (std::abs(d) <= 1e-6) continue;
          ++probed;
          good += std::abs((up.u(k, j) - base.u(k, j)) / delta - d) < 0.01 * std::abs(d);
        }
    }
  }
  const double frac = probed ? static_cast<double>(good) / probed : 0.0;
  return {probed > 0 && frac >= 0.95,
          fmt::format("{:.4f} of {} probes within 1% (>= 0.95), 20 cells x 5 paths", frac, probed)};
}

// Shared 200-path Malliavin ensemble for the scaling and positivity criteria.
struct MalliavinEnsemble {
  std::vector<ScalingSample> scaling;
  std::vector<double> masses;
  double scale = 0.0;
  GridSpec grid;
  std::vector<int> eps;
};

MalliavinEnsemble malliavin_ensemble() {
  MalliavinEnsemble e;
  e.grid = GridSpec{24, 96, 1.0, 0.1};
  e.eps = {6, 12, 24, 48};
  const auto prob = make(parabola(1.0), sine(1.0));
  const auto& g = e.grid;
  const double x = 0.5;
  const Probe pr = probe_at(g, x);
  MalliavinOptions mo;
  mo.stored_x = {pr.k0};
  if (pr.k1 != pr.k0) mo.stored_x.push_back(pr.k1);
  std::vector<ScalingSample> smp(200);
  std::vector<double> mass(200), kmass(200);
#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < 200; ++k) {
    const std::uint64_t seed = 5000 + k;
    SolverOptions so;
    so.policy = ExecPolicy::serial;
    const auto path = picard_solve(sample_sheet(g, seed, ExecPolicy::serial), prob, so).path;
    MalliavinOptions m = mo;
    m.policy = ExecPolicy::serial;
    const auto f = malliavin_solve(path, gn_process(path, prob.cutoff), prob.sigma,
                                   SourceSelection::stratified(g, 2, 0, g.nt, seed), m);
    smp[k] = scaling_sample(f, x, e.eps, g.nt, 2.5);
    if (g.nt < f.valid_until) {
      mass[k] = malliavin_mass(f, x, g.nt, 2.5);
      kmass[k] = malliavin_kernel_mass(f, x, g.nt, 2.5);
    }
  }
  e.scaling = std::move(smp);
  e.masses = std::move(mass);
  CompensatedSum s;
  for (double v : kmass) s += v;
  e.scale = s.value() / 200;
  return e;
}

Verdict scaling(const MalliavinEnsemble& e) {
  const auto r = reduce_scaling(e.scaling, e.grid, e.eps, 2.5);
  return {r.pass && r.paths_used == 200,
          fmt::format("slope1 {:.3f} (>= {:.2f}), slope2 {:.3f} (>= {:.2f}), {} paths", r.slope1, r.target1 - 0.15,
                      r.slope2, r.target2 - 0.25, r.paths_used)};
}

Verdict positivity(const MalliavinEnsemble& e) {
  const auto lo = positivity_from_masses(e.masses, e.scale, 1e-12);
  const auto hi = positivity_from_masses(e.masses, e.scale, 1e-10);
  PositivityReport pre;
  PositivityOptions po;
  po.override_precondition = true;
  check_positivity_precondition(pre, 0.5, e.grid.horizon, sine(1.0), KernelParams{}, po);
  return {pre.precondition_ok && lo.fraction == 1.0 && hi.fraction == 1.0,
          fmt::format("fraction {} at 1e-12, {} at 1e-10 x scale over {} paths; heat flow of sigma >= {:.3f}",
                      lo.fraction, hi.fraction, e.masses.size(), pre.min_heat_flow)};
}

RunConfig ensemble_config() {
  RunConfig c;
  c.grid = GridSpec{32, 128, 1.0, 0.25};
  c.kernel.lambda = 1.0;
  c.cutoff.T = 0.25;
  c.u0.kind = ProfileKind::parabola;
  c.sigma.kind = ProfileKind::sine;
  c.ensemble_size = 200;
  c.base_seed = 1;
  c.outputs = {"report_json", "report_text"};
  c.checks = {"no_failures", "moment_finite", "moment_stable", "omega_nesting"};
  return c;
}

Verdict moment_bound() {
  const auto r = run_ensemble(ensemble_config(), scratch("moment"));
  const auto& m = r.report["summary"]["moment"];
  return {r.all_pass(), fmt::format("E = {:.5g} +- {:.2g} over {} paths, change from 100 paths {:.2f}% (< 10%)",
                                    m["estimate"].get<double>(), m["standard_error"].get<double>(),
                                    m["paths"].get<int>(), 100 * m["relative_change_on_doubling"].get<double>())};
}

double velocity_defect(int nt) {
  const GridSpec g{32, nt, 1.0, 0.05};
  SolverOptions o;
  o.drift = false;
  const auto p = picard_solve(sample_sheet(g, 1), make(sine(1.0), zero()), o).path;
  const auto f = reconstruct_front(p, p, -0.1, 0.1, FrontDomain{});
  double worst = 0.0;
  for (int j = 0; j < g.nt; ++j)
    worst = std::max(worst, std::abs((f.s_plus[j + 1] - f.s_plus[j]) / g.dt() + p.boundary_grad[j]));
  return worst;
}

Verdict front() {
  // Symmetric deterministic scenario through the harness: both halves see the
  // same data and no noise.
  RunConfig c;
  c.grid = GridSpec{32, 256, 1.0, 0.1};
  c.cutoff.T = 0.1;
  c.u0.kind = ProfileKind::parabola;
  c.front = FrontSettings{-0.3, 0.2, -2.0, 2.0, 32, 201};
  c.outputs = {"front_csv", "density_csv"};
  c.checks = {"front_symmetry", "solid_phase_zero"};
  const auto det = run_front(c, scratch("front_det"));
  const double sym = det.report["summary"]["front"]["symmetry_error"].get<double>();

  RunConfig noisy = c;
  noisy.sigma.kind = ProfileKind::sine;
  noisy.checks = {"solid_phase_zero"};
  const auto rn = run_front(noisy, scratch("front_noisy"));

  const double d1 = velocity_defect(200), d2 = velocity_defect(400), d3 = velocity_defect(800);
  const bool first_order = d2 < 0.6 * d1 && d3 < 0.6 * d2;
  return {det.all_pass() && rn.all_pass() && first_order,
          fmt::format("mirror error {:.1e} (<= 1e-10), solid phase zero {}, velocity defect {:.2e} -> {:.2e} -> "
                      "{:.2e} halving dt",
                      sym, rn.all_pass() ? "yes" : "no", d1, d2, d3)};
}

Verdict determinism() {
  RunConfig single;
  single.grid = GridSpec{24, 96, 1.0, 0.1};
  single.cutoff.T = 0.1;
  single.u0.kind = ProfileKind::parabola;
  single.sigma.kind = ProfileKind::sine;
  single.malliavin.enabled = true;
  single.malliavin.stride = 3;
  single.outputs = {"path_csv", "path_bin", "noise_bin", "report_json", "report_text", "malliavin_bin", "front_csv",
                    "density_csv"};
  RunConfig ens = single;
  ens.ensemble_size = 8;
  ens.outputs = {"report_json", "report_text", "malliavin_bin"};
  int files = 0, same = 0;
  auto compare = [&](const fs::path& a, const fs::path& b) {
    for (const auto& entry : fs::directory_iterator(a)) {
      ++files;
      same += slurp(entry.path()) == slurp(b / entry.path().filename());
    }
  };
  const fs::path a = scratch("det_a"), b = scratch("det_b"), c = scratch("det_c"), d = scratch("det_d");
  run_single(single, a);
  run_single(single, b);
  run_ensemble(ens, c);
  run_ensemble(ens, d);
  compare(a, b);
  compare(c, d);
  return {files > 0 && same == files, fmt::format("{}/{} artifacts byte-identical across reruns", same, files)};
}

}  // namespace

int main() {
  using clock = std::chrono::steady_clock;
  int failed = 0;
  auto report = [&](int id, const char* name, double budget_s, const std::function<Verdict()>& fn) {
    const auto t0 = clock::now();
    Verdict v;
    try {
      v = fn();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(clock::now() - t0).count();
    std::string timing = fmt::format("{:.2f}s", secs);
    if (budget_s > 0) {
      timing += fmt::format(" (< {:g}s)", budget_s);
      if (secs >= budget_s) v.pass = false;
    }
    failed += !v.pass;
    std::printf("%s %2d %-26s %s [%s]\n", v.pass ? "PASS" : "FAIL", id, name, v.detail.c_str(), timing.c_str());
    std::fflush(stdout);
  };

  report(1, "kernel correctness", 1.0, kernel_correctness);
  report(2, "Ito isometry", 60.0, ito_isometry);
  report(3, "Picard contraction", 600.0, picard_contraction);
  report(4, "localization identity", 0, localization);
  report(5, "solver cross-validation", 0, solver_cross_validation);
  report(6, "reflection", 0, reflection);
  report(7, "space-time continuity", 0, continuity);
  report(8, "Malliavin bump test", 900.0, bump_test);
  MalliavinEnsemble ens;
  bool have_ens = false;
  auto ensure = [&] {
    if (!have_ens) ens = malliavin_ensemble();
    have_ens = true;
  };
  report(9, "scaling estimates", 0, [&] {
    ensure();
    return scaling(ens);
  });
  report(10, "positivity", 0, [&] {
    ensure();
    return positivity(ens);
  });
  report(11, "moment bound", 0, moment_bound);
  report(12, "front reconstruction", 0, front);
  report(13, "determinism", 0, determinism);
  std::printf("%d of 13 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
