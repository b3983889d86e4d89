#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "stefan/cutoff.hpp"
#include "stefan/errors.hpp"
#include "stefan/malliavin.hpp"
#include "stefan/mild_solver.hpp"

using namespace stefan;

namespace {

const double pi = std::numbers::pi;

Problem make(Profile u0, Profile sigma) {
  Problem p;
  p.u0 = std::move(u0);
  p.sigma = std::move(sigma);
  return p;
}

Profile zero() {
  return [](double) { return 0.0; };
}
Profile sine(double a) {
  return [a](double x) { return a * std::sin(pi * x); };
}
Profile bump(double a) {
  return [a](double x) {
    const double r = (x - 0.5) / 0.3;
    return std::abs(r) < 1 ? a * std::exp(1 - 1 / (1 - r * r)) : 0.0;
  };
}

struct Run {
  NoiseField noise;
  Problem prob;
  PathState path;
  GnProcess gn;
};

Run solve(const GridSpec& g, std::uint64_t seed, Problem prob) {
  Run r{sample_sheet(g, seed), std::move(prob), {}, {}};
  r.path = picard_solve(r.noise, r.prob).path;
  r.gn = gn_process(r.path, r.prob.cutoff);
  return r;
}

const GridSpec small{12, 40, 1.0, 0.1};

}  // namespace

TEST_CASE("zero sigma gives a zero field") {
  const auto r = solve(small, 1, make(bump(1.0), zero()));
  const auto f = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small));
  for (double v : f.values) CHECK(v == 0.0);
  for (double v : f.trace) CHECK(v == 0.0);
  CHECK(f.valid_until == small.nt + 1);
  CHECK_FALSE(f.tripped);
}

TEST_CASE("without drift the field is the grid kernel times sigma") {
  const auto r = solve(small, 2, make(bump(1.0), sine(0.7)));
  MalliavinOptions o;
  o.drift = false;
  const auto f = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), o);
  for (double v : f.drift_part) CHECK(v == 0.0);
  double worst = 0.0;
  for (size_t c = 0; c < f.sources.size(); c += 7) {
    const auto& src = f.sources[c];
    const double sig = 0.7 * std::sin(pi * small.interior_x(src.y));
    for (int k = 1; k <= small.nx; ++k)
      for (int j = src.s + 1; j <= small.nt; ++j) {
        const double ref = oracle::grid_kernel(small.nx, k - 1, src.y, (j - src.s) * small.dt()) * sig;
        worst = std::max(worst, std::abs(f.value(static_cast<int>(c), f.find_x(k), j) - ref));
      }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("field vanishes before the source time and the trace is the boundary gradient of the field") {
  const auto r = solve(small, 3, make(bump(1.0), sine(0.5)));
  const auto f = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small));
  std::vector<double> row(small.nx + 2);
  for (size_t c = 0; c < f.sources.size(); ++c) {
    const int s = f.sources[c].s;
    for (int j = 0; j <= small.nt; ++j) {
      for (size_t m = 0; m < f.stored_x.size(); ++m) row[f.stored_x[m]] = f.value(static_cast<int>(c), static_cast<int>(m), j);
      if (j <= s) {
        for (double v : row) REQUIRE(v == 0.0);
        REQUIRE(f.trace_at(static_cast<int>(c), j) == 0.0);
      } else {
        REQUIRE(f.trace_at(static_cast<int>(c), j) == doctest::Approx(boundary_gradient(row, small.dx())).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("doubling sigma with the path frozen doubles the field exactly") {
  const auto r = solve(small, 4, make(bump(1.0), sine(0.5)));
  const auto f1 = malliavin_solve(r.path, r.gn, sine(0.5), SourceSelection::all(small));
  const auto f2 = malliavin_solve(r.path, r.gn, sine(1.0), SourceSelection::all(small));
  for (size_t k = 0; k < f1.values.size(); ++k) REQUIRE(f2.values[k] == 2 * f1.values[k]);
}

TEST_CASE("forward and reverse sweeps agree") {
  const auto r = solve(small, 5, make(bump(1.0), sine(0.5)));
  MalliavinOptions fw, rv;
  rv.order = SweepOrder::reverse;
  const auto a = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), fw);
  const auto b = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), rv);
  double scale = 0.0, diff = 0.0;
  for (size_t k = 0; k < a.values.size(); ++k) {
    scale = std::max(scale, std::abs(a.values[k]));
    diff = std::max(diff, std::abs(a.values[k] - b.values[k]));
  }
  CHECK(diff <= 1e-12 * scale);
}

TEST_CASE("serial and parallel tangent marches agree bitwise") {
  const auto r = solve(small, 6, make(bump(1.0), sine(0.5)));
  MalliavinOptions s, p;
  s.policy = ExecPolicy::serial;
  p.policy = ExecPolicy::parallel;
  CHECK(malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), s).values ==
        malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), p).values);
}

TEST_CASE("noise-bump quotients match the field") {
  const GridSpec g{24, 96, 1.0, 0.1};
  const auto prob = make(bump(1.0), sine(1.0));
  SolverOptions exact;
  exact.tol = 0.0;
  exact.k_max = g.nt + 2;
  const double delta = 1e-4 * std::sqrt(g.dx() * g.dt());
  std::mt19937_64 rng(2024);
  int probed = 0, good = 0;
  for (std::uint64_t seed = 1; seed <= 2; ++seed) {
    const auto noise = sample_sheet(g, seed);
    const auto base = picard_solve(noise, prob, exact).path;
    SourceSelection sel;
    for (int c = 0; c < 4; ++c)
      sel.cells.push_back({static_cast<int>(rng() % g.nx), static_cast<int>(rng() % (g.nt - 1)), 1.0});
    const auto f = malliavin_solve(base, gn_process(base, prob.cutoff), prob.sigma, sel);
    REQUIRE(f.valid_until == g.nt + 1);
    for (const auto& cell : sel.cells) {
      auto bumped = noise;
      bumped.increments[static_cast<size_t>(cell.y) * g.nt + cell.s] += delta;
      const auto up = picard_solve(bumped, prob, exact).path;
      const int src = f.find_source(cell.y, cell.s);
      for (int k = 1; k <= g.nx; k += 3)
        for (int j = cell.s + 1; j <= g.nt; j += 5) {
          const double d = f.value(src, f.find_x(k), j);
          if (std::abs(d) <= 1e-6) continue;
          ++probed;
          good += std::abs((up.u(k, j) - base.u(k, j)) / delta - d) < 0.01 * std::abs(d);
        }
    }
  }
  REQUIRE(probed > 100);
  CHECK(good >= 0.95 * probed);
}

TEST_CASE("G_n is identically one while the cut-off is inactive") {
  const auto r = solve(small, 7, make(bump(0.5), sine(0.3)));
  for (double v : r.gn.values) CHECK(v == 1.0);
  CHECK(r.gn.c_L == 1.0);
  CHECK(r.gn.band_bound == doctest::Approx(2 * std::pow(100.0, 0.4) + 3));
}

TEST_CASE("G_n vanishes on the outer plateau and respects the band bound") {
  const GridSpec g{24, 96, 1.0, 0.2};
  auto prob = make(bump(5.0), sine(2.0));
  prob.cutoff.n = 3;
  const auto r = solve(g, 8, prob);
  bool some_zero = false;
  for (int j = 0; j <= g.nt; ++j)
    for (int i = 0; i < g.nx; ++i) {
      const double v = r.path.u(i + 1, j) / g.interior_x(i);
      if (std::abs(v) > prob.cutoff.band_start() + 1) {
        CHECK(r.gn.at(i, j) == 0.0);
        some_zero = true;
      }
    }
  CHECK(some_zero);
  CHECK(r.gn.c_L <= r.gn.band_bound);
  CHECK(r.gn.c_L > 1.0);
}

TEST_CASE("scaling windows: full window, drift-free E2 and argument checks") {
  const auto r = solve(small, 9, make(bump(1.0), sine(1.0)));
  const auto f = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small));
  const std::vector<int> eps = {5, 10, 20, 40};
  const auto smp = scaling_sample(f, 0.5, eps, small.nt, 2.5);
  double direct = 0.0;
  for (int j = 0; j <= small.nt; ++j) direct = std::max(direct, malliavin_mass(f, 0.5, j, 2.5));
  CHECK(smp.e1.back() == doctest::Approx(direct).epsilon(1e-14));
  for (size_t k = 1; k < eps.size(); ++k) CHECK(smp.e1[k] >= smp.e1[k - 1]);

  MalliavinOptions off;
  off.drift = false;
  const auto g = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(small), off);
  const std::vector<MalliavinField> ens = {g};
  const auto rep = estimate_scaling(ens, 0.5, eps, small.nt, 2.5);
  for (double v : rep.e2) CHECK(v == 0.0);
  CHECK_FALSE(rep.pass);
  CHECK(rep.target1 == doctest::Approx(0.25));
  CHECK(rep.target2 == doctest::Approx(1.5));

  const std::vector<int> three = {10, 20, 40};
  CHECK_THROWS_AS(estimate_scaling(ens, 0.5, three, small.nt, 2.5), UsageError);
}

TEST_CASE("stratified selection weights cover the grid") {
  const auto sel = SourceSelection::stratified(small, 5, 0, small.nt, 11);
  double w = 0.0;
  for (const auto& c : sel.cells) w += c.weight;
  CHECK(w == doctest::Approx(small.nx * small.nt));
  CHECK(sel.cells.size() == 3u * small.nt);
  CHECK(SourceSelection::stratified(small, 5, 0, small.nt, 11).cells == sel.cells);
}

TEST_CASE("positivity with a sine sigma and with zero sigma") {
  const GridSpec g{16, 32, 1.0, 0.02};
  std::vector<MalliavinField> pos, nil;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto r = solve(g, seed, make(bump(1.0), sine(1.0)));
    pos.push_back(malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::all(g)));
    const auto z = solve(g, seed, make(bump(1.0), zero()));
    nil.push_back(malliavin_solve(z.path, z.gn, z.prob.sigma, SourceSelection::all(g)));
  }
  const auto rep = positivity_check(pos, 0.5, g.nt, 2.5, sine(1.0), KernelParams{});
  CHECK(rep.precondition_ok);
  CHECK(rep.fraction == 1.0);
  CHECK(rep.scale > 0.0);
  PositivityOptions strict;
  strict.threshold = 1e-10;
  CHECK(positivity_check(pos, 0.5, g.nt, 2.5, sine(1.0), KernelParams{}, strict).fraction == 1.0);

  CHECK_THROWS_AS(positivity_check(nil, 0.5, g.nt, 2.5, zero(), KernelParams{}), PreconditionError);
  PositivityOptions over;
  over.override_precondition = true;
  const auto z = positivity_check(nil, 0.5, g.nt, 2.5, zero(), KernelParams{}, over);
  CHECK(z.fraction == 0.0);
  CHECK_FALSE(z.precondition_ok);
  CHECK_FALSE(z.diagnostic.empty());
}

TEST_CASE("STMD dump round trip") {
  const auto r = solve(small, 10, make(bump(1.0), sine(0.5)));
  MalliavinOptions o;
  o.stored_x = {3, 6, 9};
  const auto f = malliavin_solve(r.path, r.gn, r.prob.sigma, SourceSelection::window(small, 5, 15), o);
  std::stringstream buf;
  write_malliavin_binary(buf, f);
  CHECK(buf.str().substr(0, 4) == "STMD");
  const auto back = read_malliavin_binary(buf);
  CHECK(back.grid == f.grid);
  CHECK(back.sources == f.sources);
  CHECK(back.stored_x == f.stored_x);
  CHECK(back.valid_until == f.valid_until);
  REQUIRE(back.values.size() == f.values.size());
  for (size_t k = 0; k < f.values.size(); ++k)
    REQUIRE(back.values[k] == static_cast<double>(static_cast<float>(f.values[k])));
  REQUIRE(back.trace.size() == f.trace.size());
}
