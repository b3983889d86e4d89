#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "stefan/kernels.hpp"

using namespace stefan;

namespace {

std::vector<double> noise(size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <ExecPolicy P>
void bm_matvec(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const auto a = noise(static_cast<size_t>(n) * n, 1), x = noise(n, 2);
  std::vector<double> y(n);
  for (auto _ : state) {
    kernels::matvec(a, x, y, P);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * n * n);
}

template <ExecPolicy P>
void bm_fill_normals(benchmark::State& state) {
  std::vector<double> out(state.range(0));
  std::uint64_t seed = 0;
  for (auto _ : state) {
    kernels::fill_normals(++seed, 0, out, 1.0, P);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

// One tangent step for a block of Malliavin sources, the inner loop of the
// density estimator.
template <ExecPolicy P>
void bm_advance_tangents(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0)), count = 64;
  const auto prop = noise(static_cast<size_t>(n) * n, 3), grad = noise(static_cast<size_t>(n) * n, 4);
  const auto prof = noise(n, 5), gn = noise(n, 6);
  kernels::TangentStep step;
  step.propagator = prop;
  step.gradient_propagator = grad;
  step.drift_profile = prof;
  step.gn = gn;
  step.trace_coeff = 1.0;
  step.dt = 1e-4;
  step.dx = 1.0 / (n + 1);
  auto s = noise(static_cast<size_t>(count) * n, 7), a = noise(static_cast<size_t>(count) * n, 8);
  std::vector<double> trace(count);
  for (auto _ : state) {
    kernels::advance_tangents(step, s, a, trace, n, P);
    benchmark::DoNotOptimize(trace.data());
  }
}

template <ExecPolicy P>
void bm_fd_step(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  auto u = noise(n + 2, 9);
  u.front() = u.back() = 0.0;
  const auto f = noise(n, 10);
  std::vector<double> out(n + 2);
  const double dx = 1.0 / (n + 1);
  const kernels::FdStep step{1.0, 0.4 * dx * dx, dx, 0.5};
  for (auto _ : state) {
    kernels::fd_step(step, u, f, out, P);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(bm_matvec<ExecPolicy::serial>)->RangeMultiplier(4)->Range(32, 512);
BENCHMARK(bm_matvec<ExecPolicy::parallel>)->RangeMultiplier(4)->Range(32, 512);
BENCHMARK(bm_fill_normals<ExecPolicy::serial>)->Arg(1 << 16);
BENCHMARK(bm_fill_normals<ExecPolicy::parallel>)->Arg(1 << 16);
BENCHMARK(bm_advance_tangents<ExecPolicy::serial>)->Arg(32)->Arg(128);
BENCHMARK(bm_advance_tangents<ExecPolicy::parallel>)->Arg(32)->Arg(128);
BENCHMARK(bm_fd_step<ExecPolicy::serial>)->Arg(64)->Arg(1024);
BENCHMARK(bm_fd_step<ExecPolicy::parallel>)->Arg(64)->Arg(1024);

BENCHMARK_MAIN();
