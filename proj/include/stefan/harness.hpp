#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "stefan/config.hpp"
#include "stefan/fd_oracle.hpp"
#include "stefan/mild_solver.hpp"

namespace stefan {

struct CheckOutcome {
  std::string name;
  bool evaluated = false;
  bool pass = false;
  std::string detail;
};

struct RunOutcome {
  nlohmann::json report;
  std::vector<CheckOutcome> checks;

  // True when every configured check was evaluated and passed.
  bool all_pass() const;
};

// Seed of the minus half-problem for a path seeded `seed` (splitmix64 finalizer).
std::uint64_t minus_half_seed(std::uint64_t seed);

// Hex SHA-256 of the canonical INI text.
std::string config_hash(const RunConfig& config);

// Solves one half-problem with the configured solver.
struct SolvedPath {
  PathState path;
  std::optional<ReflectionMeasure> eta;
  std::optional<PicardReport> picard;
};
SolvedPath solve_configured(const RunConfig& config, const NoiseField& noise, const Problem& problem,
                            const GridKernel* kernel, ExecPolicy policy);

// E[sup h_norm^p] integrand for one path: sup of h_norm^p over grid times
// before min(T, tau_M, tau_tilde_n).
double localized_moment(const PathState& path, const PathClassification& cls, const CutoffParams& params);

// Every subcommand validates the config first and throws UsageError listing
// all problems before any compute. Artifacts land in `out_dir`; the only
// nondeterministic file is run_meta.json.
RunOutcome run_single(const RunConfig& config, const std::filesystem::path& out_dir);
RunOutcome run_ensemble(const RunConfig& config, const std::filesystem::path& out_dir);
RunOutcome run_malliavin(const RunConfig& config, const std::filesystem::path& out_dir);
RunOutcome run_front(const RunConfig& config, const std::filesystem::path& out_dir);
RunOutcome run_verify_kernel(const RunConfig& config, const std::filesystem::path& out_dir);

// Writes run_meta.json (timestamp, thread count, command) into out_dir.
void write_run_meta(const std::filesystem::path& out_dir, const std::string& command);

}  // namespace stefan
