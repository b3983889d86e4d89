#pragma once

#include <span>

#include "stefan/kernels.hpp"

namespace stefan::kernels::detail {

inline double row_dot(const double* row, const double* in, int n, SweepOrder order) {
  double acc = 0.0;
  if (order == SweepOrder::forward) {
    for (int l = 0; l < n; ++l) acc += row[l] * in[l];
  } else {
    for (int l = n - 1; l >= 0; --l) acc += row[l] * in[l];
  }
  return acc;
}


// One tangent vector; scratch holds 3n doubles.
inline double advance_one(const TangentStep& st, double* s, double* a, double* scratch, int n, SweepOrder order) {
  double* d = scratch;
  double* q = scratch + n;
  double* tmp = scratch + 2 * n;
  for (int l = 0; l < n; ++l) d[l] = s[l] + a[l];
  const double* p = st.propagator.data();
  const double* b = st.gradient_propagator.data();
  if (st.drift) {
    const double tr = (4.0 * d[0] - d[1]) / (2.0 * st.dx);
    for (int l = 0; l < n; ++l) q[l] = tr * st.drift_profile[l] + st.trace_coeff * st.gn[l] * d[l];
  }
  for (int i = 0; i < n; ++i) tmp[i] = row_dot(p + static_cast<size_t>(i) * n, s, n, order);
  for (int i = 0; i < n; ++i) s[i] = tmp[i];
  for (int i = 0; i < n; ++i) {
    double v = row_dot(p + static_cast<size_t>(i) * n, a, n, order);
    if (st.drift) v += st.dt * row_dot(b + static_cast<size_t>(i) * n, q, n, order);
    tmp[i] = v;
  }
  for (int i = 0; i < n; ++i) a[i] = tmp[i];
  return (4.0 * (s[0] + a[0]) - (s[1] + a[1])) / (2.0 * st.dx);
}

inline double fd_node(const FdStep& st, const double* u, const double* forcing, int k) {
  const double lap = (u[k + 1] - 2.0 * u[k] + u[k - 1]) / (st.dx * st.dx);
  const double grad = st.transport > 0 ? (u[k] - u[k - 1]) / st.dx : (u[k + 1] - u[k]) / st.dx;
  return u[k] + st.dt * (st.alpha * lap - st.transport * grad) + forcing[k - 1];
}

}  // namespace stefan::kernels::detail
