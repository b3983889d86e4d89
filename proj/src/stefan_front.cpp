#include "stefan/stefan_front.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "stefan/errors.hpp"
#include "stefan/summation.hpp"

namespace stefan {

std::string to_string(HitKind k) {
  switch (k) {
    case HitKind::none:
      return "none";
    case HitKind::spread_zero:
      return "spread_zero";
    case HitKind::wall_contact:
      return "wall_contact";
  }
  return "none";
}

FrontTrajectory reconstruct_front_from_traces(const GridSpec& grid, std::span<const double> grad_plus,
                                              std::span<const double> grad_minus, double s0_minus, double s0_plus,
                                              const FrontDomain& domain) {
  const size_t len = static_cast<size_t>(grid.nt) + 1;
  if (grad_plus.size() != len || grad_minus.size() != len)
    throw UsageError("reconstruct_front: traces must have nt+1 entries");
  if (!(s0_minus < s0_plus)) throw UsageError("reconstruct_front: need s0_minus < s0_plus");
  if (!(domain.a < s0_minus && s0_plus < domain.b)) throw UsageError("reconstruct_front: initial front outside (a, b)");
  FrontTrajectory f;
  f.grid = grid;
  f.domain = domain;
  f.s_minus.resize(len);
  f.s_plus.resize(len);
  f.spread.resize(len);
  const double half_dt = 0.5 * grid.dt();
  CompensatedSum ip, im;
  for (size_t j = 0; j < len; ++j) {
    if (j > 0) {
      ip += half_dt * (grad_plus[j - 1] + grad_plus[j]);
      im += half_dt * (grad_minus[j - 1] + grad_minus[j]);
    }
    f.s_plus[j] = s0_plus - ip.value();
    f.s_minus[j] = s0_minus + im.value();
    f.spread[j] = f.s_plus[j] - f.s_minus[j];
  }
  auto [t, kind] = detect_hit(f, grid);
  f.hit_time = t;
  f.hit_kind = kind;
  if (kind != HitKind::none) f.hit_index = static_cast<int>(std::lround(t / grid.dt()));
  return f;
}

FrontTrajectory reconstruct_front(const PathState& path_plus, const PathState& path_minus, double s0_minus,
                                  double s0_plus, const FrontDomain& domain) {
  if (!(path_plus.grid == path_minus.grid)) throw UsageError("reconstruct_front: half-problem grids differ");
  return reconstruct_front_from_traces(path_plus.grid, path_plus.boundary_grad, path_minus.boundary_grad, s0_minus,
                                       s0_plus, domain);
}

std::pair<double, HitKind> detect_hit(const FrontTrajectory& front, const GridSpec& grid) {
  for (size_t j = 0; j < front.spread.size(); ++j) {
    if (front.spread[j] <= 0) return {grid.t(static_cast<int>(j)), HitKind::spread_zero};
    if (front.s_minus[j] <= front.domain.a || front.s_plus[j] >= front.domain.b)
      return {grid.t(static_cast<int>(j)), HitKind::wall_contact};
  }
  return {kNever, HitKind::none};
}

namespace {

double sample_half(const PathState& path, double x, int j) {
  const auto& g = path.grid;
  if (x <= 0 || x >= g.lambda) return 0.0;
  const double r = x / g.dx();
  const int k = static_cast<int>(std::floor(r));
  const double w = r - k;
  if (w == 0.0) return path.u(k, j);
  return (1.0 - w) * path.u(k, j) + w * path.u(k + 1, j);
}

}  // namespace

double density_at(const PathState& path_plus, const PathState& path_minus, const FrontTrajectory& front, double y,
                  int j) {
  if (j < 0 || j > front.grid.nt) throw UsageError("inverse_transform: time index out of range");
  if (front.hit_index >= 0 && j > front.hit_index)
    throw UsageError("inverse_transform: query past the hit time");
  const double sp = front.s_plus[j], sm = front.s_minus[j];
  if (y >= sp) return sample_half(path_plus, y - sp, j);
  if (y <= sm) return sample_half(path_minus, sm - y, j);
  return 0.0;
}

std::vector<DensitySnapshot> inverse_transform(const PathState& path_plus, const PathState& path_minus,
                                               const FrontTrajectory& front, std::span<const int> time_indices,
                                               int ny) {
  if (ny < 2) throw UsageError("inverse_transform: need ny >= 2");
  std::vector<DensitySnapshot> out;
  const double a = front.domain.a, b = front.domain.b;
  for (int j : time_indices) {
    DensitySnapshot snap;
    snap.t = front.grid.t(j);
    for (int m = 0; m < ny; ++m) {
      const double y = a + (b - a) * m / (ny - 1);
      snap.y.push_back(y);
      snap.w.push_back(density_at(path_plus, path_minus, front, y, j));
    }
    out.push_back(std::move(snap));
  }
  return out;
}

void write_front_csv(std::ostream& out, const FrontTrajectory& front) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "t,s_minus,s_plus,spread\n");
  for (size_t j = 0; j < front.spread.size(); ++j)
    fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g},{:.17g}\n", front.grid.t(static_cast<int>(j)),
                   front.s_minus[j], front.s_plus[j], front.spread[j]);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void write_density_csv(std::ostream& out, std::span<const DensitySnapshot> snapshots) {
  fmt::memory_buffer buf;
  fmt::format_to(std::back_inserter(buf), "t,y,w\n");
  for (const auto& s : snapshots)
    for (size_t m = 0; m < s.y.size(); ++m)
      fmt::format_to(std::back_inserter(buf), "{:.17g},{:.17g},{:.17g}\n", s.t, s.y[m], s.w[m]);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

}  // namespace stefan
