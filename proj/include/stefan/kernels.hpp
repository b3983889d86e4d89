#pragma once

#include <cstdint>
#include <span>

namespace stefan {

enum class ExecPolicy { serial, parallel };

// Summation order over the inner (source) index of an operator row.
enum class SweepOrder { forward, reverse };

namespace kernels {

// out = A * in, A row-major n x n.
void matvec(std::span<const double> a, std::span<const double> in, std::span<double> out,
            ExecPolicy policy, SweepOrder order = SweepOrder::forward);

// out += scale * A * in.
void matvec_add(std::span<const double> a, std::span<const double> in, std::span<double> out,
                double scale, ExecPolicy policy, SweepOrder order = SweepOrder::forward);

// out[c] = scale * N(seed, stream, c) for every c.
void fill_normals(std::uint64_t seed, std::uint32_t stream, std::span<double> out, double scale,
                  ExecPolicy policy);

// Coefficients of one step of the linearized (tangent) march.
struct TangentStep {
  std::span<const double> propagator;           // P, n x n
  std::span<const double> gradient_propagator;  // B, n x n
  std::span<const double> drift_profile;        // y * Tn(u/y) at t_j, length n
  std::span<const double> gn;                   // Tn'(u/y) at t_j, length n
  double trace_coeff = 0.0;                     // boundary gradient of u at t_j
  double dt = 0.0;
  double dx = 0.0;
  bool drift = true;
};

// Advances `count` independent tangent vectors one step. Each vector is split
// as S (pure kernel propagation) + A (drift response); both are updated in
// place, and trace_out[s] receives the boundary gradient of S+A after the step.
void advance_tangents(const TangentStep& step, std::span<double> s, std::span<double> a,
                      std::span<double> trace_out, int n, ExecPolicy policy,
                      SweepOrder order = SweepOrder::forward);

// One explicit finite-difference step on nodes 0..n+1 (walls included).
struct FdStep {
  double alpha = 1.0;
  double dt = 0.0;
  double dx = 0.0;
  double transport = 0.0;  // boundary gradient g; the PDE carries -g u_x
};
void fd_step(const FdStep& step, std::span<const double> u, std::span<const double> forcing,
             std::span<double> out, ExecPolicy policy);

namespace serial {
void matvec(std::span<const double>, std::span<const double>, std::span<double>, SweepOrder);
void matvec_add(std::span<const double>, std::span<const double>, std::span<double>, double, SweepOrder);
void fill_normals(std::uint64_t, std::uint32_t, std::span<double>, double);
void advance_tangents(const TangentStep&, std::span<double>, std::span<double>, std::span<double>, int,
                      SweepOrder);
void fd_step(const FdStep&, std::span<const double>, std::span<const double>, std::span<double>);
}  // namespace serial

namespace omp {
void matvec(std::span<const double>, std::span<const double>, std::span<double>, SweepOrder);
void matvec_add(std::span<const double>, std::span<const double>, std::span<double>, double, SweepOrder);
void fill_normals(std::uint64_t, std::uint32_t, std::span<double>, double);
void advance_tangents(const TangentStep&, std::span<double>, std::span<double>, std::span<double>, int,
                      SweepOrder);
void fd_step(const FdStep&, std::span<const double>, std::span<const double>, std::span<double>);
}  // namespace omp

}  // namespace kernels
}  // namespace stefan
