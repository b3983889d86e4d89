#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "stefan/cutoff.hpp"
#include "stefan/grid.hpp"
#include "stefan/heat_kernel.hpp"
#include "stefan/mild_solver.hpp"

namespace stefan {

enum class ProfileKind { zero, sine, parabola, bump, table };

// zero: 0; sine: A sin(pi x/lambda); parabola: A x (lambda - x);
// bump: A exp(1 - 1/(1 - r^2)) with r = (x - center*lambda)/(width*lambda);
// table: piecewise-linear through (x, value) rows of a two-column CSV, 0 outside.
struct ProfileSpec {
  ProfileKind kind = ProfileKind::zero;
  double amplitude = 1.0;
  double center = 0.5;  // fractions of lambda
  double width = 0.25;
  std::string table;    // CSV path for kind == table
  friend bool operator==(const ProfileSpec&, const ProfileSpec&) = default;
};

Profile make_profile(const ProfileSpec& spec, double lambda);

enum class SolverKind { mild, fd, reflected };

struct SolverSettings {
  SolverKind kind = SolverKind::mild;
  double tol = 1e-8;
  int k_max = 50;
  bool drift = true;
  bool cutoff = true;
  InitialIterate initial = InitialIterate::smooth_source;
  friend bool operator==(const SolverSettings&, const SolverSettings&) = default;
};

struct MalliavinSettings {
  bool enabled = false;
  double probe_x = 0.5;     // fraction of lambda
  int stride = 1;           // y-stratification stride for the scaling windows
  std::vector<int> eps_steps;  // window lengths in steps; empty = b/16..b/2
  int b_step = -1;          // window end; -1 = nt
  double threshold = 1e-12;
  double floor = 0.05;
  bool override_precondition = false;
  bool drift = true;
  friend bool operator==(const MalliavinSettings&, const MalliavinSettings&) = default;
};

struct FrontSettings {
  double s0_minus = -0.1;
  double s0_plus = 0.1;
  double a = -2.0;
  double b = 2.0;
  int snapshot_every = 0;  // 0 = first and last computed times only
  int ny = 201;
  friend bool operator==(const FrontSettings&, const FrontSettings&) = default;
};

struct RunConfig {
  GridSpec grid;
  KernelParams kernel;
  CutoffParams cutoff;
  ProfileSpec u0;
  ProfileSpec sigma;
  SolverSettings solver;
  int ensemble_size = 1;
  std::uint64_t base_seed = 1;
  std::vector<int> n_sweep = {1, 2, 4, 8};  // multiples of cutoff.n
  std::vector<double> m_sweep = {1, 2, 4, 8};  // multiples of cutoff.M
  MalliavinSettings malliavin;
  FrontSettings front;
  std::vector<double> verify_times = {0.1, 0.01, 0.001};
  std::vector<std::string> outputs;
  std::vector<std::string> checks;
  std::map<std::string, double> tolerances;

  double tolerance(const std::string& key, double fallback) const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Flat INI: [section] headers and key = value lines.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::filesystem::path& path);
// Canonical text; parse_config(to_ini(c)) == c.
std::string to_ini(const RunConfig& config);

// Every violation, in one pass; empty when the config is usable.
std::vector<std::string> validate_config(const RunConfig& config);

Problem make_problem(const RunConfig& config);

std::string to_string(ProfileKind k);
std::string to_string(SolverKind k);

}  // namespace stefan
