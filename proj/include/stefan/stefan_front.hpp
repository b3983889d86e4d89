#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stefan/cutoff.hpp"
#include "stefan/path.hpp"

namespace stefan {

enum class HitKind { none, spread_zero, wall_contact };
std::string to_string(HitKind k);

// Physical domain Omega = (a, b) holding the solid region [s-, s+].
struct FrontDomain {
  double a = -1.0;
  double b = 1.0;
};

// Sign conventions: the + half uses x = y - s+(t), so the chain rule on the
// transport term -u_x(0+,t) u_x gives d/dt s+ = -u+_x(0+, t); the - half uses
// x = s-(t) - y, giving d/dt s- = +u-_x(0+, t).
struct FrontTrajectory {
  GridSpec grid;
  FrontDomain domain;
  std::vector<double> s_minus;
  std::vector<double> s_plus;
  std::vector<double> spread;
  double hit_time = kNever;
  int hit_index = -1;
  HitKind hit_kind = HitKind::none;
};

// Trapezoidal integration of the two boundary-gradient traces.
FrontTrajectory reconstruct_front(const PathState& path_plus, const PathState& path_minus, double s0_minus,
                                  double s0_plus, const FrontDomain& domain);
FrontTrajectory reconstruct_front_from_traces(const GridSpec& grid, std::span<const double> grad_plus,
                                              std::span<const double> grad_minus, double s0_minus, double s0_plus,
                                              const FrontDomain& domain);

// First grid time with spread <= 0 (spread_zero) or s- <= a or s+ >= b
// (wall_contact); spread_zero wins a tie.
std::pair<double, HitKind> detect_hit(const FrontTrajectory& front, const GridSpec& grid);

// w(y, t_j) on the physical line: u+(y - s+) right of s+, u-(s- - y) left of
// s-, zero on the solid phase; linear interpolation between transformed nodes
// and zero beyond x = lambda. Throws for t_j past the hit time.
double density_at(const PathState& path_plus, const PathState& path_minus, const FrontTrajectory& front, double y,
                  int j);

struct DensitySnapshot {
  double t = 0.0;
  std::vector<double> y;
  std::vector<double> w;
};

// Snapshots on `ny` equally spaced points of [a, b] at the given time indices.
std::vector<DensitySnapshot> inverse_transform(const PathState& path_plus, const PathState& path_minus,
                                               const FrontTrajectory& front, std::span<const int> time_indices,
                                               int ny);

// Columns t,s_minus,s_plus,spread.
void write_front_csv(std::ostream& out, const FrontTrajectory& front);
// Columns t,y,w.
void write_density_csv(std::ostream& out, std::span<const DensitySnapshot> snapshots);

}  // namespace stefan
