#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <random>
#include <vector>

#include "stefan/kernels.hpp"

using namespace stefan;

namespace {

std::vector<double> random_vector(size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

// Oversubscribe so the parallel paths split rows even on a single core.
struct Threads {
  int saved = omp_get_max_threads();
  explicit Threads(int n) { omp_set_num_threads(n); }
  ~Threads() { omp_set_num_threads(saved); }
};

}  // namespace

TEST_CASE("matvec and matvec_add: serial and OpenMP agree bitwise in both sweep orders") {
  Threads t(4);
  for (int n : {1, 7, 64, 130}) {
    const auto a = random_vector(static_cast<size_t>(n) * n, 1);
    const auto x = random_vector(n, 2);
    for (auto order : {SweepOrder::forward, SweepOrder::reverse}) {
      std::vector<double> s(n), p(n);
      kernels::serial::matvec(a, x, s, order);
      kernels::omp::matvec(a, x, p, order);
      CHECK(s == p);
      std::vector<double> s2 = x, p2 = x;
      kernels::serial::matvec_add(a, x, s2, 0.37, order);
      kernels::omp::matvec_add(a, x, p2, 0.37, order);
      CHECK(s2 == p2);
    }
  }
}

TEST_CASE("matvec is a matrix-vector product") {
  const std::vector<double> a = {1, 2, 3, 4};
  const std::vector<double> x = {1, -1};
  std::vector<double> y(2);
  kernels::matvec(a, x, y, ExecPolicy::parallel);
  CHECK(y == std::vector<double>{-1, -1});
  kernels::matvec_add(a, x, y, 2.0, ExecPolicy::serial);
  CHECK(y == std::vector<double>{-3, -3});
}

TEST_CASE("fill_normals: serial and OpenMP agree bitwise") {
  Threads t(3);
  std::vector<double> s(10007), p(10007);
  kernels::serial::fill_normals(42, 3, s, 0.5);
  kernels::omp::fill_normals(42, 3, p, 0.5);
  CHECK(s == p);
  for (double v : s) CHECK(std::isfinite(v));
}

TEST_CASE("advance_tangents: serial and OpenMP agree bitwise") {
  Threads t(4);
  const int n = 20, count = 37;
  const auto P = random_vector(n * n, 3), B = random_vector(n * n, 4);
  const auto prof = random_vector(n, 5), gn = random_vector(n, 6);
  kernels::TangentStep step;
  step.propagator = P;
  step.gradient_propagator = B;
  step.drift_profile = prof;
  step.gn = gn;
  step.trace_coeff = 1.3;
  step.dt = 0.01;
  step.dx = 1.0 / (n + 1);
  for (bool drift : {true, false})
    for (auto order : {SweepOrder::forward, SweepOrder::reverse}) {
      step.drift = drift;
      auto s1 = random_vector(count * n, 7), a1 = random_vector(count * n, 8);
      auto s2 = s1, a2 = a1;
      std::vector<double> t1(count), t2(count);
      kernels::serial::advance_tangents(step, s1, a1, t1, n, order);
      kernels::omp::advance_tangents(step, s2, a2, t2, n, order);
      CHECK(s1 == s2);
      CHECK(a1 == a2);
      CHECK(t1 == t2);
    }
}

TEST_CASE("fd_step: serial and OpenMP agree bitwise and keep the walls") {
  Threads t(4);
  const int n = 50;
  auto u = random_vector(n + 2, 9);
  u.front() = u.back() = 0.0;
  const auto f = random_vector(n, 10);
  for (double g : {-2.0, 0.0, 3.0}) {
    const kernels::FdStep step{1.0, 1e-4, 1.0 / (n + 1), g};
    std::vector<double> s(n + 2), p(n + 2);
    kernels::serial::fd_step(step, u, f, s);
    kernels::omp::fd_step(step, u, f, p);
    CHECK(s == p);
    CHECK(s.front() == 0.0);
    CHECK(s.back() == 0.0);
  }
}
