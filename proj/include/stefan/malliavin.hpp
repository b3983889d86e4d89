#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "stefan/kernels.hpp"
#include "stefan/malliavin_field.hpp"
#include "stefan/mild_solver.hpp"

namespace stefan {

// Tn'(u(x_i, t_j)/x_i) along a path; values[j*nx + i] for j = 0..nt.
struct GnProcess {
  GridSpec grid;
  std::vector<double> values;
  double c_L = 0.0;          // measured sup |values|
  double band_bound = 0.0;   // 2 n^{1/p} + 3

  double at(int i, int j) const { return values[static_cast<size_t>(j) * grid.nx + i]; }
};

GnProcess gn_process(const PathState& path, const CutoffParams& params, bool cutoff = true);

struct SourceSelection {
  std::vector<SourceCell> cells;

  static SourceSelection all(const GridSpec& grid);
  // Every cell with s in [s_begin, s_end).
  static SourceSelection window(const GridSpec& grid, int s_begin, int s_end);
  // One y per block of `stride` nodes (random offset per (block, s)), weight
  // `stride` (the last block weighted by its actual size), s in [s_begin, s_end).
  static SourceSelection stratified(const GridSpec& grid, int stride, int s_begin, int s_end, std::uint64_t seed);
};

struct MalliavinOptions {
  std::vector<int> stored_x;  // node indices; empty stores every node
  bool drift = true;          // false forces the transport coefficient to 0
  bool cutoff = true;
  ExecPolicy policy = ExecPolicy::parallel;
  SweepOrder order = SweepOrder::forward;
};

// Forward march of the tangent-linear scheme: for each source cell (l, m),
// D_{m+1} = G^h(., y_l, dt) sigma_l and, for j > m,
//   D_{j+1} = P D_j + dt B [ trace(D_j) y Tn(u_j/y) + u_x(0+, t_j) G_n(., t_j) D_j ].
// The march stops at the first of tau_M (from the path) and the first time
// the sup over sources of |trace| reaches M_d; the latter sets `tripped`.
MalliavinField malliavin_solve(const PathState& path, const GnProcess& gn, const Profile& sigma,
                               const SourceSelection& selection, const MalliavinOptions& options = {});

// Linear interpolation weights of a probe coordinate between two nodes.
struct Probe {
  int k0 = 0;
  int k1 = 0;
  double w1 = 0.0;  // weight on k1
};
Probe probe_at(const GridSpec& grid, double x);

// sum over sources with s < t_j of weight |D(y, s, x, t_j)|^p dx dt, D
// interpolated at x; `drift_only` uses D - G sigma instead of D.
double malliavin_mass(const MalliavinField& field, double x, int j, double p, bool drift_only = false);
// The same mass for the pure kernel term G^h sigma alone.
double malliavin_kernel_mass(const MalliavinField& field, double x, int j, double p);

struct ScalingReport {
  std::vector<double> eps;       // window lengths (time units)
  std::vector<double> e1, e2;    // ensemble means
  std::vector<double> e1_se, e2_se;
  double slope1 = 0.0, slope2 = 0.0;
  double target1 = 0.0, target2 = 0.0;
  double p = 0.0, q = 0.0;
  int paths_used = 0;
  int paths_excluded = 0;  // fields that stopped before b
  bool pass = false;
};

// Windowed integrals per field: for each eps (in steps) the sup over
// t_j in [b-eps, b] of the mass over sources with s in [b-eps, b).
struct ScalingSample {
  std::vector<double> e1, e2;
  bool usable = true;
};
ScalingSample scaling_sample(const MalliavinField& field, double x, std::span<const int> eps_steps, int b_step,
                             double p);
ScalingReport estimate_scaling(std::span<const MalliavinField> ensemble, double x, std::span<const int> eps_steps,
                               int b_step, double p);
ScalingReport reduce_scaling(std::span<const ScalingSample> samples, const GridSpec& grid,
                             std::span<const int> eps_steps, double p);

struct PositivityOptions {
  double threshold = 1e-12;  // relative to the pure-kernel mass at (x, t)
  double floor = 0.05;       // c(x): required lower bound on the heat flow of sigma
  bool override_precondition = false;
};

struct PositivityReport {
  double fraction = 0.0;
  std::vector<double> masses;
  double scale = 0.0;
  double min_heat_flow = 0.0;
  bool precondition_ok = false;
  std::string diagnostic;
};

// Checks min_{t <= t_j} of the heat flow of sigma at x against options.floor
// (throws PreconditionError unless overridden), then reports the fraction of
// fields whose mass at (x, t_j) exceeds threshold * scale.
PositivityReport positivity_check(std::span<const MalliavinField> ensemble, double x, int j, double p,
                                  const Profile& sigma, const KernelParams& kernel,
                                  const PositivityOptions& options = {});
// The same, from precomputed per-path masses and scales.
PositivityReport positivity_from_masses(std::vector<double> masses, double scale, double threshold);
void check_positivity_precondition(PositivityReport& report, double x, double t, const Profile& sigma,
                                   const KernelParams& kernel, const PositivityOptions& options);

// Compressed dump: "STMD", u16 version, u32 nx, u32 nt, u32 sources,
// u32 stored nodes, u32 valid_until, then per source (u32 y, u32 s, f32 weight),
// stored node indices (u32), u64 compressed size, and a zlib stream of f32
// values followed by f32 traces.
void write_malliavin_binary(std::ostream& out, const MalliavinField& field);
MalliavinField read_malliavin_binary(std::istream& in);

}  // namespace stefan
