#include <vector>

#include "kernels_detail.hpp"
#include "stefan/philox.hpp"

namespace stefan::kernels::omp {

void matvec(std::span<const double> a, std::span<const double> in, std::span<double> out, SweepOrder order) {
  const int n = static_cast<int>(in.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i) out[i] = detail::row_dot(a.data() + static_cast<size_t>(i) * n, in.data(), n, order);
}

void matvec_add(std::span<const double> a, std::span<const double> in, std::span<double> out, double scale,
                SweepOrder order) {
  const int n = static_cast<int>(in.size());
#pragma omp parallel for schedule(static)
  for (int i = 0; i < n; ++i)
    out[i] += scale * detail::row_dot(a.data() + static_cast<size_t>(i) * n, in.data(), n, order);
}

void fill_normals(std::uint64_t seed, std::uint32_t stream, std::span<double> out, double scale) {
  const long long count = static_cast<long long>(out.size());
#pragma omp parallel for schedule(static)
  for (long long c = 0; c < count; ++c) out[c] = scale * philox_normal(seed, stream, static_cast<std::uint64_t>(c));
}

void advance_tangents(const TangentStep& step, std::span<double> s, std::span<double> a,
                      std::span<double> trace_out, int n, SweepOrder order) {
  const int count = static_cast<int>(trace_out.size());
#pragma omp parallel
  {
    std::vector<double> scratch(3 * static_cast<size_t>(n));
#pragma omp for schedule(static)
    for (int c = 0; c < count; ++c)
      trace_out[c] = detail::advance_one(step, s.data() + static_cast<size_t>(c) * n,
                                         a.data() + static_cast<size_t>(c) * n, scratch.data(), n, order);
  }
}

void fd_step(const FdStep& step, std::span<const double> u, std::span<const double> forcing,
             std::span<double> out) {
  const int n = static_cast<int>(u.size()) - 2;
  out[0] = 0.0;
  out[n + 1] = 0.0;
#pragma omp parallel for schedule(static)
  for (int k = 1; k <= n; ++k) out[k] = detail::fd_node(step, u.data(), forcing.data(), k);
}

}  // namespace stefan::kernels::omp
