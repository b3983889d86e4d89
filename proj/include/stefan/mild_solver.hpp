#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "stefan/cutoff.hpp"
#include "stefan/grid_kernel.hpp"
#include "stefan/heat_kernel.hpp"
#include "stefan/kernels.hpp"
#include "stefan/noise_field.hpp"
#include "stefan/path.hpp"

namespace stefan {

// Data of one transformed half-problem u_t = alpha u_xx - u_x(0+,t) u_x + sigma W_dot.
struct Problem {
  KernelParams kernel;
  Profile u0;
  Profile sigma;
  CutoffParams cutoff;
};

enum class InitialIterate { smooth_source, zero };

struct SolverOptions {
  double tol = 1e-8;
  int k_max = 50;
  InitialIterate initial = InitialIterate::smooth_source;
  bool drift = true;   // false forces the transport coefficient to 0
  bool cutoff = true;  // false replaces Tn by the identity
  ExecPolicy policy = ExecPolicy::parallel;
  SweepOrder order = SweepOrder::forward;
};

struct PicardReport {
  std::vector<double> differences;  // d_k = sup_t h_norm(u_{k+1} - u_k)
  int iterations = 0;
  bool converged = false;
  bool short_circuit = false;  // zero data, zero path
  InitialIterate initial = InitialIterate::smooth_source;
  // The nonlocal trace u_y(0, s) in the drift integrand comes from the
  // previous iterate.
  std::string drift_trace_source = "previous_iterate";

  // Largest d_{k+1}/d_k after `burn_in` iterations, over nonzero d_k.
  double max_ratio(int burn_in = 2) const;
};

class PicardDivergence : public std::runtime_error {
 public:
  PicardDivergence(const std::string& what, PicardReport report)
      : std::runtime_error(what), report_(std::move(report)) {}
  const PicardReport& report() const { return report_; }

 private:
  PicardReport report_;
};

struct PicardResult {
  PathState path;
  PicardReport report;
};

// Discrete scheme (left-endpoint rule in s, band-limited kernel):
//   u_{j+1} = P (u_j + sigma dW_j / dx) + dt B [u_x(0+, t_j) y Tn(u_j / y)].
// Picard iterates the whole-window map with the trace taken from the previous
// iterate; because the map is causal, the fixed point is reached exactly after
// at most nt iterations.
PicardResult picard_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options = {});
PicardResult picard_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                          const SolverOptions& options);

// Forward substitution of the same scheme, step by step.
PathState march_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options = {});
PathState march_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                      const SolverOptions& options);

struct ReflectedResult {
  PathState path;
  ReflectionMeasure eta;
};

// March plus projection u <- max(u, 0) after each step; the clamped deficit
// times dx becomes eta-mass on the cell.
ReflectedResult reflected_solve(const NoiseField& noise, const Problem& problem, const SolverOptions& options = {});
ReflectedResult reflected_solve(const NoiseField& noise, const Problem& problem, const GridKernel& kernel,
                                const SolverOptions& options);

struct HolderFit {
  double slope = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> lags;
  std::vector<double> increments;  // max |increment| per lag
};

struct HolderOptions {
  int min_time_lag = 1;  // in steps
  double max_time_lag_fraction = 0.25;
  int min_space_lag = 1;  // in nodes
  double max_space_lag_fraction = 0.25;
  double confidence = 0.95;
};

struct HolderReport {
  HolderFit time;
  HolderFit space;
  int valid_steps = 0;
};

// Dyadic-lag log-log fits of the sup increments. `valid_steps` restricts to
// grid times t_0..t_{valid_steps-1} (e.g. before tau_M); -1 uses all.
HolderReport holder_report(const PathState& path, int valid_steps = -1, const HolderOptions& options = {});

// CSV with header t,x,u.
void write_path_csv(std::ostream& out, const PathState& path);

// STWN block of the driving noise followed by an "STPU" section:
// u16 version, u32 rows (nt+1), u32 cols (nx+2), rows*cols f64 values
// (time-major), nt+1 f64 boundary gradients, u32 tag length, tag bytes.
void write_path_binary(std::ostream& out, const NoiseField& noise, const PathState& path);
std::pair<NoiseField, PathState> read_path_binary(std::istream& in);

std::string to_string(InitialIterate init);

}  // namespace stefan
