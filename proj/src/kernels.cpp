#include "stefan/kernels.hpp"

#include "stefan/errors.hpp"

namespace stefan::kernels {

namespace {
void check_square(std::span<const double> a, size_t n, const char* what) {
  if (a.size() != n * n) throw UsageError(std::string(what) + ": operator is not n x n");
}
}  // namespace

void matvec(std::span<const double> a, std::span<const double> in, std::span<double> out, ExecPolicy policy,
            SweepOrder order) {
  check_square(a, in.size(), "matvec");
  if (out.size() != in.size()) throw UsageError("matvec: size mismatch");
  policy == ExecPolicy::serial ? serial::matvec(a, in, out, order) : omp::matvec(a, in, out, order);
}

void matvec_add(std::span<const double> a, std::span<const double> in, std::span<double> out, double scale,
                ExecPolicy policy, SweepOrder order) {
  check_square(a, in.size(), "matvec_add");
  if (out.size() != in.size()) throw UsageError("matvec_add: size mismatch");
  policy == ExecPolicy::serial ? serial::matvec_add(a, in, out, scale, order)
                               : omp::matvec_add(a, in, out, scale, order);
}

void fill_normals(std::uint64_t seed, std::uint32_t stream, std::span<double> out, double scale,
                  ExecPolicy policy) {
  policy == ExecPolicy::serial ? serial::fill_normals(seed, stream, out, scale)
                               : omp::fill_normals(seed, stream, out, scale);
}

void advance_tangents(const TangentStep& step, std::span<double> s, std::span<double> a,
                      std::span<double> trace_out, int n, ExecPolicy policy, SweepOrder order) {
  if (n < 2) throw UsageError("advance_tangents: need n >= 2");
  check_square(step.propagator, n, "advance_tangents");
  check_square(step.gradient_propagator, n, "advance_tangents");
  const size_t need = trace_out.size() * static_cast<size_t>(n);
  if (s.size() < need || a.size() < need) throw UsageError("advance_tangents: state too small");
  if (step.drift && (step.drift_profile.size() != static_cast<size_t>(n) || step.gn.size() != static_cast<size_t>(n)))
    throw UsageError("advance_tangents: coefficient size mismatch");
  policy == ExecPolicy::serial ? serial::advance_tangents(step, s, a, trace_out, n, order)
                               : omp::advance_tangents(step, s, a, trace_out, n, order);
}

void fd_step(const FdStep& step, std::span<const double> u, std::span<const double> forcing, std::span<double> out,
             ExecPolicy policy) {
  if (u.size() < 3 || out.size() != u.size() || forcing.size() + 2 != u.size())
    throw UsageError("fd_step: size mismatch");
  policy == ExecPolicy::serial ? serial::fd_step(step, u, forcing, out) : omp::fd_step(step, u, forcing, out);
}

}  // namespace stefan::kernels
