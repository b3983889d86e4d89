#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "oracles.hpp"
#include "stefan/errors.hpp"
#include "stefan/grid_kernel.hpp"
#include "stefan/noise_field.hpp"
#include "stefan/philox.hpp"

using namespace stefan;

namespace {

struct Stats {
  double mean = 0.0, var = 0.0;
};

Stats stats(const std::vector<double>& v) {
  Stats s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  for (double x : v) s.var += (x - s.mean) * (x - s.mean);
  s.var /= v.size() - 1;
  return s;
}

}  // namespace

TEST_CASE("Philox4x32-10 known-answer vectors") {
  using C = Philox4x32::Counter;
  using K = Philox4x32::Key;
  CHECK(Philox4x32::block(C{0, 0, 0, 0}, K{0, 0}) == C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  CHECK(Philox4x32::block(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}) ==
        C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  CHECK(Philox4x32::block(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}) ==
        C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("uniforms lie strictly inside (0, 1) and normals are symmetric in law") {
  std::vector<double> z;
  for (std::uint64_t k = 0; k < 200000; ++k) {
    const double u = philox_uniform(7, 0, k);
    REQUIRE(u > 0.0);
    REQUIRE(u < 1.0);
    z.push_back(philox_normal(7, 0, k));
  }
  const Stats s = stats(z);
  CHECK(std::abs(s.mean) < 4.0 / std::sqrt(z.size()));
  CHECK(std::abs(s.var - 1.0) < 0.02);
}

TEST_CASE("sample_sheet is deterministic and seeds give distinct streams") {
  const GridSpec g{16, 32, 1.0, 1.0};
  const auto a = sample_sheet(g, 1), b = sample_sheet(g, 1), c = sample_sheet(g, 2);
  CHECK(a.increments == b.increments);
  int differ = 0;
  for (size_t k = 0; k < a.increments.size(); ++k) differ += a.increments[k] != c.increments[k];
  CHECK(differ >= 0.99 * a.increments.size());
  CHECK(sample_sheet(g, 1, ExecPolicy::serial).increments == a.increments);
}

TEST_CASE("increment moments at nx=64, nt=256") {
  const GridSpec g{64, 256, 1.0, 1.0};
  const auto noise = sample_sheet(g, 11);
  const Stats s = stats(noise.increments);
  const double cell = g.dx() * g.dt();
  CHECK(std::abs(s.mean) < 4.0 * std::sqrt(cell / noise.increments.size()));
  CHECK(s.var / cell >= 0.98);
  CHECK(s.var / cell <= 1.02);
}

TEST_CASE("walsh integral of zero sigma and range checks") {
  const GridSpec g{8, 16, 1.0, 1.0};
  const auto noise = sample_sheet(g, 3);
  const std::vector<double> zero(g.nx, 0.0);
  CHECK(walsh_integral([](int, int) { return 1.0; }, zero, noise, g.nt) == 0.0);
  const std::vector<double> one(g.nx, 1.0);
  CHECK_THROWS_AS(walsh_integral([](int, int) { return 1.0; }, one, noise, g.nt + 1), UsageError);
  CHECK_THROWS_AS(walsh_integral([](int, int) { return 1.0; }, one, noise, -1), UsageError);
  double direct = 0.0;
  for (int i = 0; i < g.nx; ++i)
    for (int j = 0; j < 5; ++j) direct += noise.at(i, j);
  CHECK(walsh_integral([](int, int) { return 1.0; }, one, noise, 5) == doctest::Approx(direct).epsilon(1e-14));
}

TEST_CASE("constant integrand: variance nx dx t over 10^4 seeds") {
  const GridSpec g{32, 64, 1.0, 0.5};
  const std::vector<double> one(g.nx, 1.0);
  std::vector<double> v;
  for (std::uint64_t s = 0; s < 10000; ++s)
    v.push_back(walsh_integral([](int, int) { return 1.0; }, one, sample_sheet(g, 1000 + s, ExecPolicy::serial), g.nt));
  const Stats st = stats(v);
  // Cells tile [dx/2, lambda - dx/2], so the exact discrete variance is nx dx t.
  const double target = g.nx * g.dx() * g.horizon;
  CHECK(std::abs(st.var / target - 1.0) < 0.05);
  CHECK(std::abs(st.var / (g.lambda * g.horizon) - 1.0) < 0.08);
}

TEST_CASE("disjoint time blocks are uncorrelated") {
  const GridSpec g{16, 32, 1.0, 1.0};
  std::vector<double> sigma(g.nx);
  for (int i = 0; i < g.nx; ++i) sigma[i] = std::sin(std::numbers::pi * g.interior_x(i));
  const int seeds = 10000;
  std::vector<double> a(seeds), b(seeds);
  for (int s = 0; s < seeds; ++s) {
    const auto noise = sample_sheet(g, 500000 + s, ExecPolicy::serial);
    a[s] = walsh_integral([](int, int) { return 1.0; }, sigma, noise, g.nt / 2);
    b[s] = walsh_integral([](int, int) { return 1.0; }, sigma, noise, g.nt) - a[s];
  }
  const Stats sa = stats(a), sb = stats(b);
  double cov = 0.0;
  std::vector<double> prod(seeds);
  for (int s = 0; s < seeds; ++s) prod[s] = (a[s] - sa.mean) * (b[s] - sb.mean);
  const Stats sp = stats(prod);
  cov = sp.mean;
  CHECK(std::abs(cov) < 3.0 * std::sqrt(sp.var / seeds));
}

TEST_CASE("refined sheet keeps the cell law and the coarse sums") {
  const GridSpec g{8, 16, 1.0, 1.0};
  const auto coarse = sample_sheet(g, 5);
  const auto fine = refine_sheet(coarse, 77);
  CHECK(fine.grid.nx == 17);
  CHECK(fine.grid.nt == 64);
  CHECK(fine.grid.dx() == doctest::Approx(g.dx() / 2));
  CHECK(refine_sheet(coarse, 77).increments == fine.increments);

  // Column totals differ from the coarse ones only by the two wall strips.
  std::vector<double> diff;
  for (int j = 0; j < g.nt; ++j) {
    double f = 0.0, c = 0.0;
    for (int k = 0; k < fine.grid.nx; ++k)
      for (int b = 0; b < 4; ++b) f += fine.at(k, 4 * j + b);
    for (int i = 0; i < g.nx; ++i) c += coarse.at(i, j);
    diff.push_back(f - c);
  }
  const Stats sd = stats(diff);
  const double wall_var = 8.0 * g.dx() * g.dt() / 16.0;
  CHECK(sd.var < 3.0 * wall_var);

  // Marginal law of the fine cells over many coarse draws.
  const GridSpec g2{32, 64, 1.0, 1.0};
  const auto fine2 = refine_sheet(sample_sheet(g2, 9), 10);
  const Stats s2 = stats(fine2.increments);
  const double cell = fine2.grid.dx() * fine2.grid.dt();
  CHECK(std::abs(s2.var / cell - 1.0) < 0.02);
}

TEST_CASE("STWN round trip and header layout") {
  const GridSpec g{5, 7, 1.5, 0.25};
  const auto noise = sample_sheet(g, 0xDEADBEEFull);
  std::stringstream buf;
  write_noise(buf, noise);
  const std::string bytes = buf.str();
  CHECK(bytes.substr(0, 4) == "STWN");
  CHECK(bytes.size() == 4 + 2 + 4 + 4 + 8 + 8 + 8 + 8 * 35);
  CHECK(static_cast<unsigned char>(bytes[6]) == 5);  // nx, little-endian
  const auto back = read_noise(buf);
  CHECK(back.grid == g);
  CHECK(back.seed == noise.seed);
  CHECK(back.increments == noise.increments);
  std::stringstream bad("XXXX");
  CHECK_THROWS(read_noise(bad));
}
