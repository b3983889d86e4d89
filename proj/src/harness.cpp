#include "stefan/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

#include <fmt/chrono.h>
#include <fmt/format.h>
#include <omp.h>
#include <openssl/evp.h>

#include "stefan/errors.hpp"
#include "stefan/grid_kernel.hpp"
#include "stefan/malliavin.hpp"
#include "stefan/philox.hpp"
#include "stefan/stefan_front.hpp"
#include "stefan/summation.hpp"
#include "stefan/version.hpp"

namespace stefan {

using nlohmann::json;
namespace fs = std::filesystem;

bool RunOutcome::all_pass() const {
  return std::all_of(checks.begin(), checks.end(), [](const CheckOutcome& c) { return c.evaluated && c.pass; });
}

std::uint64_t minus_half_seed(std::uint64_t seed) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_ini(config);
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("config_hash: SHA-256 failed");
  std::string hex;
  for (unsigned int k = 0; k < len; ++k) hex += fmt::format("{:02x}", md[k]);
  return hex;
}

namespace {

json jtime(double t) { return std::isfinite(t) ? json(t) : json(nullptr); }

bool wants(const RunConfig& c, const char* kind) {
  return std::find(c.outputs.begin(), c.outputs.end(), kind) != c.outputs.end();
}

void require_valid(const RunConfig& c) {
  const auto errors = validate_config(c);
  if (errors.empty()) return;
  std::string msg = "invalid config:";
  for (const auto& e : errors) msg += "\n  - " + e;
  throw UsageError(msg);
}

SolverOptions solver_options(const RunConfig& c, ExecPolicy policy) {
  SolverOptions o;
  o.tol = c.solver.tol;
  o.k_max = c.solver.k_max;
  o.initial = c.solver.initial;
  o.drift = c.solver.drift;
  o.cutoff = c.solver.cutoff;
  o.policy = policy;
  return o;
}

std::ofstream open_out(const fs::path& p, bool binary = false) {
  std::ofstream out(p, binary ? std::ios::binary : std::ios::out);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  return out;
}

json provenance(const RunConfig& c, const std::string& command, const std::vector<std::uint64_t>& seeds) {
  json p;
  p["command"] = command;
  p["config_ini"] = to_ini(c);
  p["config_sha256"] = config_hash(c);
  p["base_seed"] = c.base_seed;
  p["seeds"] = seeds;
  p["minus_seed_rule"] = "splitmix64(seed)";
  p["version"] = kVersion;
  p["generator"] = kGeneratorTag;
  return p;
}

// Named check results gathered during a run.
class CheckBook {
 public:
  void set(const std::string& name, bool pass, std::string detail) { results_[name] = {name, true, pass, std::move(detail)}; }

  std::vector<CheckOutcome> resolve(const RunConfig& c, const std::string& command) const {
    std::vector<CheckOutcome> out;
    for (const auto& name : c.checks) {
      const auto it = results_.find(name);
      if (it != results_.end())
        out.push_back(it->second);
      else
        out.push_back({name, false, false, "not evaluated by '" + command + "'"});
    }
    return out;
  }

 private:
  std::map<std::string, CheckOutcome> results_;
};

void flatten(const json& j, const std::string& prefix, std::vector<std::pair<std::string, std::string>>& rows) {
  if (j.is_object()) {
    for (const auto& [k, v] : j.items()) flatten(v, prefix.empty() ? k : prefix + "." + k, rows);
  } else if (j.is_array()) {
    if (j.size() <= 8 && std::all_of(j.begin(), j.end(), [](const json& e) { return e.is_primitive(); }))
      rows.emplace_back(prefix, j.dump());
    else
      rows.emplace_back(prefix, fmt::format("[{} entries]", j.size()));
  } else if (j.is_number_float()) {
    rows.emplace_back(prefix, fmt::format("{:.6g}", j.get<double>()));
  } else if (j.is_string()) {
    rows.emplace_back(prefix, j.get<std::string>());
  } else {
    rows.emplace_back(prefix, j.dump());
  }
}

std::string text_report(const json& report, const std::vector<CheckOutcome>& checks) {
  std::string s = fmt::format("{} run, config {}\n\n", report["provenance"]["command"].get<std::string>(),
                              report["provenance"]["config_sha256"].get<std::string>().substr(0, 16));
  std::vector<std::pair<std::string, std::string>> rows;
  flatten(report["summary"], "", rows);
  size_t w = 0;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  for (const auto& [k, v] : rows) s += fmt::format("{:<{}}  {}\n", k, w, v);
  if (!checks.empty()) {
    s += "\nchecks\n";
    for (const auto& c : checks)
      s += fmt::format("  {:<20} {:<5} {}\n", c.name, c.evaluated ? (c.pass ? "PASS" : "FAIL") : "SKIP", c.detail);
  }
  return s;
}

RunOutcome finish(json report, const CheckBook& book, const RunConfig& c, const std::string& command,
                  const fs::path& out_dir) {
  RunOutcome out;
  out.checks = book.resolve(c, command);
  json checks = json::array();
  for (const auto& k : out.checks)
    checks.push_back({{"name", k.name}, {"evaluated", k.evaluated}, {"pass", k.pass}, {"detail", k.detail}});
  report["checks"] = checks;
  report["all_checks_pass"] = out.all_pass();
  {
    auto f = open_out(out_dir / "config.ini");
    f << to_ini(c);
  }
  if (wants(c, "report_json")) {
    auto f = open_out(out_dir / "report.json");
    f << report.dump(2) << "\n";
  }
  if (wants(c, "report_text")) {
    auto f = open_out(out_dir / "report.txt");
    f << text_report(report, out.checks);
  }
  out.report = std::move(report);
  return out;
}

json classification_json(const PathClassification& k) {
  json j;
  j["tau_M"] = jtime(k.tau_M);
  j["tau_tilde_n"] = jtime(k.tau_tilde_n);
  if (k.tau_Md)
    j["tau_Md"] = jtime(*k.tau_Md);
  else
    j["tau_Md"] = "undefined (no Malliavin field)";
  j["in_Omega_M"] = k.in_Omega_M;
  j["in_Omega_M_n"] = k.in_Omega_M_n;
  j["n"] = k.n;
  j["sup_h_norm"] = k.sup_h_norm;
  j["sup_abs_gradient"] = k.sup_abs_gradient;
  j["valid_steps"] = k.valid_steps;
  j["convention"] = to_string(k.convention);
  j["grid_time_sup"] = true;
  return j;
}

double max_row_h_norm(const PathState& path) {
  double h = 0.0;
  for (int j = 0; j <= path.grid.nt; ++j) h = std::max(h, h_norm(path.row(j), path.grid.dx()));
  return h;
}

HolderOptions holder_options(const GridSpec& g) {
  HolderOptions o;
  // Time lags below dx^2 only see the spatial resolution.
  o.min_time_lag = std::max(1, static_cast<int>(std::ceil(g.dx() * g.dx() / g.dt())));
  return o;
}

std::vector<int> default_eps(const RunConfig& c, int b) {
  if (!c.malliavin.eps_steps.empty()) return c.malliavin.eps_steps;
  return {b / 16, b / 8, b / 4, b / 2};
}

int window_end(const RunConfig& c) { return c.malliavin.b_step < 0 ? c.grid.nt : c.malliavin.b_step; }

std::vector<int> probe_nodes(const GridSpec& g, double x) {
  const Probe p = probe_at(g, x);
  std::vector<int> k = {p.k0};
  if (p.k1 != p.k0) k.push_back(p.k1);
  return k;
}

std::uint64_t source_seed(std::uint64_t seed) { return minus_half_seed(seed ^ 0x6D616C6C69617669ull); }

struct FrontOutcome {
  FrontTrajectory front;
  PathState minus;
  json summary;
  double symmetry_error = 0.0;
  bool solid_zero = true;
  std::vector<DensitySnapshot> snapshots;
};

FrontOutcome front_for(const RunConfig& c, const Problem& prob, const GridKernel* gk, const PathState& plus,
                       ExecPolicy policy) {
  FrontOutcome o;
  const NoiseField noise_m = sample_sheet(c.grid, minus_half_seed(plus.seed), policy);
  o.minus = solve_configured(c, noise_m, prob, gk, policy).path;
  const FrontDomain dom{c.front.a, c.front.b};
  o.front = reconstruct_front(plus, o.minus, c.front.s0_minus, c.front.s0_plus, dom);
  const int last = o.front.hit_index >= 0 ? o.front.hit_index : c.grid.nt;
  const double mid = c.front.s0_minus + c.front.s0_plus;
  double vel_err = 0.0;
  for (int j = 0; j <= last; ++j) {
    o.symmetry_error = std::max(o.symmetry_error, std::abs(o.front.s_plus[j] + o.front.s_minus[j] - mid));
    if (j < last)
      vel_err = std::max(vel_err, std::abs((o.front.s_plus[j + 1] - o.front.s_plus[j]) / c.grid.dt() +
                                           plus.boundary_grad[j]));
  }
  std::vector<int> idx;
  if (c.front.snapshot_every > 0) {
    for (int j = 0; j <= last; j += c.front.snapshot_every) idx.push_back(j);
    if (idx.back() != last) idx.push_back(last);
  } else {
    idx = last > 0 ? std::vector<int>{0, last} : std::vector<int>{0};
  }
  o.snapshots = inverse_transform(plus, o.minus, o.front, idx, c.front.ny);
  for (size_t s = 0; s < o.snapshots.size(); ++s) {
    const int j = idx[s];
    for (size_t k = 0; k < o.snapshots[s].y.size(); ++k) {
      const double y = o.snapshots[s].y[k];
      if (y >= o.front.s_minus[j] && y <= o.front.s_plus[j] && o.snapshots[s].w[k] != 0.0) o.solid_zero = false;
    }
  }
  json& j = o.summary;
  j["minus_seed"] = minus_half_seed(plus.seed);
  j["hit_time"] = jtime(o.front.hit_time);
  j["hit_index"] = o.front.hit_index;
  j["hit_kind"] = to_string(o.front.hit_kind);
  j["final_spread"] = o.front.spread[last];
  j["symmetry_error"] = o.symmetry_error;
  j["velocity_error_forward_difference"] = vel_err;
  j["solid_phase_zero"] = o.solid_zero;
  j["snapshots"] = idx;
  return o;
}

void write_front_outputs(const RunConfig& c, const FrontOutcome& f, const fs::path& out_dir) {
  if (wants(c, "front_csv")) {
    auto out = open_out(out_dir / "front.csv");
    write_front_csv(out, f.front);
  }
  if (wants(c, "density_csv")) {
    auto out = open_out(out_dir / "density.csv");
    write_density_csv(out, f.snapshots);
  }
}

void front_checks(const RunConfig& c, const FrontOutcome& f, CheckBook& book) {
  const double tol = c.tolerance("front_symmetry", 1e-10);
  book.set("front_symmetry", f.symmetry_error <= tol,
           fmt::format("max |s+ + s- - (s0+ + s0-)| = {:.3e} (tol {:.1e})", f.symmetry_error, tol));
  book.set("solid_phase_zero", f.solid_zero, f.solid_zero ? "w == 0 on [s-, s+]" : "nonzero density on the solid phase");
}

}  // namespace

SolvedPath solve_configured(const RunConfig& c, const NoiseField& noise, const Problem& prob, const GridKernel* gk,
                            ExecPolicy policy) {
  SolvedPath out;
  const SolverOptions opt = solver_options(c, policy);
  switch (c.solver.kind) {
    case SolverKind::mild: {
      auto r = gk ? picard_solve(noise, prob, *gk, opt) : picard_solve(noise, prob, opt);
      out.path = std::move(r.path);
      out.picard = std::move(r.report);
      break;
    }
    case SolverKind::reflected: {
      auto r = gk ? reflected_solve(noise, prob, *gk, opt) : reflected_solve(noise, prob, opt);
      out.path = std::move(r.path);
      out.eta = std::move(r.eta);
      break;
    }
    case SolverKind::fd: {
      FdOptions fo;
      fo.drift = c.solver.drift;
      fo.policy = policy;
      auto r = fd_solve(noise, prob, fo);
      out.path = std::move(r.path);
      out.eta = std::move(r.eta);
      break;
    }
  }
  return out;
}

double localized_moment(const PathState& path, const PathClassification& cls, const CutoffParams& params) {
  const auto& g = path.grid;
  const double stop = std::min({params.T, cls.tau_M, cls.tau_tilde_n});
  const double slack = 1e-9 * g.dt();
  double m = 0.0;
  for (int j = 0; j <= g.nt; ++j) {
    const double t = g.t(j);
    if (t > params.T + slack || t >= stop - (stop == params.T ? -slack : slack)) break;
    m = std::max(m, std::pow(h_norm(path.row(j), g.dx()), params.p));
  }
  return m;
}

void write_run_meta(const fs::path& out_dir, const std::string& command) {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm utc{};
  gmtime_r(&tt, &utc);
  json meta;
  meta["timestamp_utc"] = fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", utc);
  meta["threads"] = omp_get_max_threads();
  meta["command"] = command;
  auto out = open_out(out_dir / "run_meta.json");
  out << meta.dump(2) << "\n";
}

RunOutcome run_single(const RunConfig& c, const fs::path& out_dir) {
  require_valid(c);
  fs::create_directories(out_dir);
  const Problem prob = make_problem(c);
  std::optional<GridKernel> gk;
  if (c.solver.kind != SolverKind::fd) gk.emplace(c.grid, prob.kernel);
  const GridKernel* gkp = gk ? &*gk : nullptr;

  json report;
  report["provenance"] = provenance(c, "single", {c.base_seed});
  json& sum = report["summary"];
  json events = json::array();
  CheckBook book;

  const NoiseField noise = sample_sheet(c.grid, c.base_seed);
  SolvedPath solved;
  try {
    solved = solve_configured(c, noise, prob, gkp, ExecPolicy::parallel);
  } catch (const PicardDivergence& e) {
    sum["status"] = "failed";
    sum["failure"] = e.what();
    sum["picard_differences"] = e.report().differences;
    events.push_back({{"seed", c.base_seed}, {"event", "picard_failure"}, {"detail", e.what()}});
    report["events"] = events;
    book.set("picard_converged", false, e.what());
    return finish(std::move(report), book, c, "single", out_dir);
  }
  const PathState& path = solved.path;
  sum["solver"] = path.solver;

  std::optional<MalliavinField> field;
  if (c.malliavin.enabled) {
    const auto gn = gn_process(path, c.cutoff, c.solver.cutoff);
    const int b = window_end(c);
    const auto sel = SourceSelection::stratified(c.grid, c.malliavin.stride, 0, b, source_seed(c.base_seed));
    MalliavinOptions mo;
    const double x = c.malliavin.probe_x * c.grid.lambda;
    mo.stored_x = probe_nodes(c.grid, x);
    mo.drift = c.malliavin.drift;
    mo.cutoff = c.solver.cutoff;
    field = malliavin_solve(path, gn, prob.sigma, sel, mo);
    json m;
    m["sources"] = field->sources.size();
    m["valid_until"] = field->valid_until;
    m["tripped"] = field->tripped;
    m["c_L_measured"] = gn.c_L;
    m["c_L_bound"] = gn.band_bound;
    if (b < field->valid_until) {
      m["mass"] = malliavin_mass(*field, x, b, c.cutoff.p);
      m["kernel_mass"] = malliavin_kernel_mass(*field, x, b, c.cutoff.p);
    }
    sum["malliavin"] = m;
    if (wants(c, "malliavin_bin")) {
      auto out = open_out(out_dir / "malliavin.bin", true);
      write_malliavin_binary(out, *field);
    }
  }

  const PathClassification cls = classify_path(path, field ? &*field : nullptr, c.cutoff);
  sum["classification"] = classification_json(cls);
  sum["localized_moment"] = localized_moment(path, cls, c.cutoff);
  if (cls.tau_M != kNever) events.push_back({{"seed", c.base_seed}, {"event", "tau_M"}, {"time", cls.tau_M}});
  if (cls.tau_tilde_n != kNever)
    events.push_back({{"seed", c.base_seed}, {"event", "tau_tilde_n"}, {"time", cls.tau_tilde_n}});
  if (cls.tau_Md && *cls.tau_Md != kNever)
    events.push_back({{"seed", c.base_seed}, {"event", "tau_Md"}, {"time", *cls.tau_Md}});

  if (solved.picard) {
    const auto& pr = *solved.picard;
    sum["picard"] = {{"iterations", pr.iterations}, {"converged", pr.converged}, {"short_circuit", pr.short_circuit},
                     {"initial", to_string(pr.initial)}, {"differences", pr.differences},
                     {"max_ratio_after_burn_in", pr.max_ratio()}, {"drift_trace_source", pr.drift_trace_source}};
    book.set("picard_converged", pr.converged, fmt::format("{} iterations", pr.iterations));
    const double r = pr.max_ratio();
    book.set("picard_contraction", pr.short_circuit || r < 1.0, fmt::format("max d_(k+1)/d_k = {:.3g}", r));
  }
  if (solved.eta) {
    const double resid = std::abs(solved.eta->complementarity(path));
    const double scale = std::max(1.0, solved.eta->total());
    const double min_u = *std::min_element(path.values.begin(), path.values.end());
    const double min_eta = *std::min_element(solved.eta->mass.begin(), solved.eta->mass.end());
    sum["reflection"] = {{"eta_total", solved.eta->total()}, {"complementarity", resid}, {"min_u", min_u},
                         {"min_eta", min_eta}};
    const double tol = c.tolerance("complementarity", 1e-8);
    book.set("complementarity", min_u >= 0 && min_eta >= 0 && resid < tol * scale,
             fmt::format("residual {:.3e}, min u {:.3e}, min eta {:.3e}", resid, min_u, min_eta));
  }
  if (cls.valid_steps - 1 >= 8) {
    try {
      const auto h = holder_report(path, cls.valid_steps, holder_options(c.grid));
      sum["holder"] = {{"time", h.time.slope}, {"time_ci", {h.time.ci_low, h.time.ci_high}},
                       {"space", h.space.slope}, {"space_ci", {h.space.ci_low, h.space.ci_high}}};
      const double tl = c.tolerance("holder_time_lo", 0.15), th = c.tolerance("holder_time_hi", 0.35);
      const double sl = c.tolerance("holder_space_lo", 0.35), sh = c.tolerance("holder_space_hi", 0.65);
      book.set("holder", h.time.slope >= tl && h.time.slope <= th && h.space.slope >= sl && h.space.slope <= sh,
               fmt::format("time {:.3f} in [{}, {}], space {:.3f} in [{}, {}]", h.time.slope, tl, th, h.space.slope,
                           sl, sh));
    } catch (const std::exception& e) {
      sum["holder"] = e.what();
    }
  }

  if (wants(c, "front_csv") || wants(c, "density_csv")) {
    const FrontOutcome f = front_for(c, prob, gkp, path, ExecPolicy::parallel);
    sum["front"] = f.summary;
    if (f.front.hit_kind != HitKind::none)
      events.push_back({{"seed", c.base_seed}, {"event", "front_hit"}, {"kind", to_string(f.front.hit_kind)},
                        {"time", f.front.hit_time}});
    write_front_outputs(c, f, out_dir);
    front_checks(c, f, book);
  }
  report["events"] = events;

  if (wants(c, "path_csv")) {
    auto out = open_out(out_dir / "path.csv");
    write_path_csv(out, path);
  }
  if (wants(c, "path_bin")) {
    auto out = open_out(out_dir / "path.bin", true);
    write_path_binary(out, noise, path);
  }
  if (wants(c, "noise_bin")) write_noise_file(out_dir / "noise.bin", noise);
  return finish(std::move(report), book, c, "single", out_dir);
}

namespace {

struct PathRecord {
  std::uint64_t seed = 0;
  std::string status = "ok";  // ok | stopped_early | failed
  std::string failure;
  PathClassification cls;
  std::vector<char> omega_n;  // per n-sweep entry
  std::vector<char> omega_m;  // per M-sweep entry
  double moment = 0.0;
  int iterations = 0;
  double picard_ratio = 0.0;
  bool picard_short = false;
  std::optional<double> holder_time, holder_space;
  std::optional<bool> localization_ok;
  double localization_diff = 0.0;
  std::optional<ScalingSample> scaling;
  std::optional<double> pos_mass, pos_scale;
  double c_L = 0.0;
  bool md_tripped = false;
  double md_tau = kNever;
  std::optional<double> complementarity, eta_scale;
  bool reflect_ok = true;
  std::optional<HitKind> hit_kind;
  double hit_time = kNever;
};

struct Moments {
  double mean = 0.0, se = 0.0;
  int count = 0;
};

Moments moments(const std::vector<PathRecord>& rec, size_t upto) {
  CompensatedSum s, s2;
  Moments m;
  for (size_t k = 0; k < upto; ++k) {
    if (rec[k].status == "failed") continue;
    s += rec[k].moment;
    ++m.count;
  }
  if (m.count == 0) return m;
  m.mean = s.value() / m.count;
  for (size_t k = 0; k < upto; ++k) {
    if (rec[k].status == "failed") continue;
    const double d = rec[k].moment - m.mean;
    s2 += d * d;
  }
  m.se = m.count > 1 ? std::sqrt(s2.value() / (m.count - 1) / m.count) : 0.0;
  return m;
}

RunOutcome ensemble_impl(const RunConfig& c, const fs::path& out_dir, const std::string& command) {
  require_valid(c);
  if (c.ensemble_size < 2) throw UsageError(command + ": ensemble.size must be >= 2");
  fs::create_directories(out_dir);
  const Problem prob = make_problem(c);
  std::optional<GridKernel> gk;
  if (c.solver.kind != SolverKind::fd) gk.emplace(c.grid, prob.kernel);
  const GridKernel* gkp = gk ? &*gk : nullptr;
  const bool do_front = wants(c, "front_csv") || wants(c, "density_csv");
  const bool do_local = std::find(c.checks.begin(), c.checks.end(), "localization") != c.checks.end();
  const int b = window_end(c);
  const std::vector<int> eps = default_eps(c, b);
  const double xprobe = c.malliavin.probe_x * c.grid.lambda;

  const int N = c.ensemble_size;
  std::vector<PathRecord> rec(N);
  std::vector<std::uint64_t> seeds(N);
  for (int k = 0; k < N; ++k) seeds[k] = c.base_seed + static_cast<std::uint64_t>(k);
  std::optional<MalliavinField> first_field;

#pragma omp parallel for schedule(dynamic, 1)
  for (int k = 0; k < N; ++k) {
    PathRecord& r = rec[k];
    r.seed = seeds[k];
    try {
      const NoiseField noise = sample_sheet(c.grid, r.seed, ExecPolicy::serial);
      SolvedPath solved = solve_configured(c, noise, prob, gkp, ExecPolicy::serial);
      const PathState& path = solved.path;
      if (solved.picard) {
        r.iterations = solved.picard->iterations;
        r.picard_ratio = solved.picard->max_ratio();
        r.picard_short = solved.picard->short_circuit;
      }
      std::optional<MalliavinField> field;
      if (c.malliavin.enabled) {
        const auto gn = gn_process(path, c.cutoff, c.solver.cutoff);
        r.c_L = gn.c_L;
        const auto sel = SourceSelection::stratified(c.grid, c.malliavin.stride, 0, b, source_seed(r.seed));
        MalliavinOptions mo;
        mo.stored_x = probe_nodes(c.grid, xprobe);
        mo.drift = c.malliavin.drift;
        mo.cutoff = c.solver.cutoff;
        mo.policy = ExecPolicy::serial;
        field = malliavin_solve(path, gn, prob.sigma, sel, mo);
        r.md_tripped = field->tripped;
        r.md_tau = field->tau_Md;
        r.scaling = scaling_sample(*field, xprobe, eps, b, c.cutoff.p);
        if (b < field->valid_until) {
          r.pos_mass = malliavin_mass(*field, xprobe, b, c.cutoff.p);
          r.pos_scale = malliavin_kernel_mass(*field, xprobe, b, c.cutoff.p);
        }
      }
      r.cls = classify_path(path, field ? &*field : nullptr, c.cutoff);
      r.moment = localized_moment(path, r.cls, c.cutoff);
      for (int m : c.n_sweep) {
        CutoffParams cp = c.cutoff;
        cp.n = c.cutoff.n * m;
        r.omega_n.push_back(classify_path(path, nullptr, cp).in_Omega_M_n);
      }
      for (double m : c.m_sweep) {
        CutoffParams cp = c.cutoff;
        cp.M = c.cutoff.M * m;
        r.omega_m.push_back(classify_path(path, nullptr, cp).in_Omega_M);
      }
      if (r.cls.tau_M != kNever || r.cls.tau_tilde_n != kNever || r.md_tripped) r.status = "stopped_early";
      if (r.cls.valid_steps - 1 >= 8) {
        try {
          const auto h = holder_report(path, r.cls.valid_steps, holder_options(c.grid));
          r.holder_time = h.time.slope;
          r.holder_space = h.space.slope;
        } catch (const UsageError&) {
        }
      }
      if (solved.eta) {
        r.complementarity = std::abs(solved.eta->complementarity(path));
        r.eta_scale = std::max(1.0, solved.eta->total());
        r.reflect_ok = *std::min_element(path.values.begin(), path.values.end()) >= 0 &&
                       *std::min_element(solved.eta->mass.begin(), solved.eta->mass.end()) >= 0;
      }
      if (do_local && c.solver.kind == SolverKind::mild && c.solver.cutoff &&
          max_row_h_norm(path) < c.cutoff.band_start()) {
        RunConfig plain = c;
        plain.solver.cutoff = false;
        const SolvedPath other = solve_configured(plain, noise, prob, gkp, ExecPolicy::serial);
        double d = 0.0;
        for (size_t q = 0; q < path.values.size(); ++q)
          d = std::max(d, std::abs(path.values[q] - other.path.values[q]));
        r.localization_diff = d;
        r.localization_ok = d <= c.solver.tol;
      }
      if (do_front) {
        const FrontOutcome f = front_for(c, prob, gkp, path, ExecPolicy::serial);
        r.hit_kind = f.front.hit_kind;
        r.hit_time = f.front.hit_time;
      }
      if (k == 0 && field) first_field = std::move(field);
    } catch (const std::exception& e) {
      r.status = "failed";
      r.failure = e.what();
    }
  }

  json report;
  report["provenance"] = provenance(c, command, seeds);
  json& sum = report["summary"];
  CheckBook book;

  int failed = 0, stopped = 0;
  for (const auto& r : rec) {
    failed += r.status == "failed";
    stopped += r.status == "stopped_early";
  }
  const int live = N - failed;
  sum["paths"] = {{"total", N}, {"ok", N - failed - stopped}, {"stopped_early", stopped}, {"failed", failed}};
  book.set("no_failures", failed == 0, fmt::format("{} of {} paths failed", failed, N));

  // Event nesting.
  json on = json::array(), om = json::array();
  std::vector<double> fn, fm;
  for (size_t q = 0; q < c.n_sweep.size(); ++q) {
    int hits = 0;
    for (const auto& r : rec)
      if (r.status != "failed" && r.omega_n[q]) ++hits;
    fn.push_back(live ? static_cast<double>(hits) / live : 0.0);
    const int n = c.cutoff.n * c.n_sweep[q];
    on.push_back({{"n", n}, {"fraction", fn.back()}, {"c_L_bound", 2 * std::pow(n, 1.0 / c.cutoff.p) + 3}});
  }
  for (size_t q = 0; q < c.m_sweep.size(); ++q) {
    int hits = 0;
    for (const auto& r : rec)
      if (r.status != "failed" && r.omega_m[q]) ++hits;
    fm.push_back(live ? static_cast<double>(hits) / live : 0.0);
    om.push_back({{"M", c.cutoff.M * c.m_sweep[q]}, {"fraction", fm.back()}});
  }
  sum["omega_M_n_by_n"] = on;
  sum["omega_M_by_M"] = om;
  {
    // Per-path nesting, checked on sorted sweep levels.
    bool nested = true;
    auto order_of = [](const auto& v) {
      std::vector<size_t> idx(v.size());
      for (size_t q = 0; q < idx.size(); ++q) idx[q] = q;
      std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
      return idx;
    };
    const auto ion = order_of(c.n_sweep), iom = order_of(c.m_sweep);
    for (const auto& r : rec) {
      if (r.status == "failed") continue;
      for (size_t q = 1; q < ion.size(); ++q) nested &= !(r.omega_n[ion[q - 1]] && !r.omega_n[ion[q]]);
      for (size_t q = 1; q < iom.size(); ++q) nested &= !(r.omega_m[iom[q - 1]] && !r.omega_m[iom[q]]);
      for (size_t q = 0; q < r.omega_n.size(); ++q) nested &= !(r.omega_n[q] && !r.cls.in_Omega_M);
    }
    book.set("omega_nesting", nested, nested ? "per-path nesting holds in n and M" : "nesting violated");
  }

  const Moments full = moments(rec, rec.size());
  const Moments half = moments(rec, rec.size() / 2);
  const double drift = full.mean != 0 ? std::abs(full.mean - half.mean) / std::abs(full.mean) : 0.0;
  sum["moment"] = {{"estimate", full.mean}, {"standard_error", full.se}, {"paths", full.count},
                   {"half_ensemble_estimate", half.mean}, {"half_ensemble_paths", half.count},
                   {"relative_change_on_doubling", drift}, {"p", c.cutoff.p}};
  book.set("moment_finite", std::isfinite(full.mean) && std::isfinite(full.se) && full.count > 0,
           fmt::format("E = {:.6g} +- {:.2g}", full.mean, full.se));
  {
    const double tol = c.tolerance("moment_drift", 0.10);
    book.set("moment_stable", drift < tol, fmt::format("relative change {:.4f} (tol {})", drift, tol));
  }

  if (c.solver.kind == SolverKind::mild) {
    double worst = 0.0, iters = 0.0;
    bool contract = true;
    for (const auto& r : rec) {
      if (r.status == "failed") continue;
      worst = std::max(worst, r.picard_ratio);
      iters += r.iterations;
      contract &= r.picard_short || r.picard_ratio < 1.0;
    }
    sum["picard"] = {{"worst_ratio_after_burn_in", worst}, {"mean_iterations", live ? iters / live : 0.0}};
    book.set("picard_converged", failed == 0, fmt::format("{} failures", failed));
    book.set("picard_contraction", contract && failed == 0, fmt::format("worst ratio {:.3g}", worst));
  }

  {
    CompensatedSum ht, hs;
    int cnt = 0;
    bool ok = true;
    const double tl = c.tolerance("holder_time_lo", 0.15), th = c.tolerance("holder_time_hi", 0.35);
    const double sl = c.tolerance("holder_space_lo", 0.35), sh = c.tolerance("holder_space_hi", 0.65);
    for (const auto& r : rec)
      if (r.holder_time) {
        ht += *r.holder_time;
        hs += *r.holder_space;
        ++cnt;
      }
    if (cnt > 0) {
      const double mt = ht.value() / cnt, ms = hs.value() / cnt;
      sum["holder"] = {{"mean_time", mt}, {"mean_space", ms}, {"paths", cnt}};
      ok = mt >= tl && mt <= th && ms >= sl && ms <= sh;
      book.set("holder", ok, fmt::format("mean time {:.3f}, mean space {:.3f}", mt, ms));
    }
  }

  if (std::any_of(rec.begin(), rec.end(), [](const PathRecord& r) { return r.complementarity.has_value(); })) {
    double worst = 0.0;
    bool ok = true;
    const double tol = c.tolerance("complementarity", 1e-8);
    for (const auto& r : rec) {
      if (!r.complementarity) continue;
      worst = std::max(worst, *r.complementarity / *r.eta_scale);
      ok &= r.reflect_ok && *r.complementarity < tol * *r.eta_scale;
    }
    sum["reflection"] = {{"worst_relative_complementarity", worst}};
    book.set("complementarity", ok && failed == 0, fmt::format("worst residual/scale {:.3e}", worst));
  }

  if (do_local) {
    int qual = 0, agree = 0;
    double worst = 0.0;
    for (const auto& r : rec)
      if (r.localization_ok) {
        ++qual;
        agree += *r.localization_ok;
        worst = std::max(worst, r.localization_diff);
      }
    sum["localization"] = {{"qualifying_paths", qual}, {"agreeing", agree}, {"worst_sup_difference", worst}};
    book.set("localization", qual > 0 && agree == qual,
             fmt::format("{}/{} qualifying paths agree (worst {:.2e})", agree, qual, worst));
  }

  if (c.malliavin.enabled) {
    std::vector<ScalingSample> samples;
    std::vector<double> masses;
    CompensatedSum scale;
    double cl = 0.0;
    int tripped = 0;
    for (const auto& r : rec) {
      if (r.status == "failed") continue;
      cl = std::max(cl, r.c_L);
      tripped += r.md_tripped;
      if (r.scaling) samples.push_back(*r.scaling);
      if (r.pos_mass) {
        masses.push_back(*r.pos_mass);
        scale += *r.pos_scale;
      }
    }
    json m;
    m["c_L_measured_max"] = cl;
    m["c_L_bound"] = c.cutoff.lipschitz_bound();
    m["tau_Md_trips"] = tripped;
    if (!samples.empty()) {
      const ScalingReport s = reduce_scaling(samples, c.grid, eps, c.cutoff.p);
      const double t1 = s.target1 - c.tolerance("scaling_slack1", 0.15);
      const double t2 = s.target2 - c.tolerance("scaling_slack2", 0.25);
      m["scaling"] = {{"eps", s.eps}, {"e1", s.e1}, {"e2", s.e2}, {"e1_se", s.e1_se}, {"e2_se", s.e2_se},
                      {"slope1", s.slope1}, {"slope2", s.slope2}, {"target1", s.target1}, {"target2", s.target2},
                      {"q", s.q}, {"paths_used", s.paths_used}, {"paths_excluded", s.paths_excluded}};
      book.set("scaling", s.paths_used > 0 && s.slope1 >= t1 && s.slope2 >= t2,
               fmt::format("slope1 {:.3f} (>= {:.3f}), slope2 {:.3f} (>= {:.3f})", s.slope1, t1, s.slope2, t2));
    }
    if (!masses.empty()) {
      PositivityOptions po;
      po.threshold = c.malliavin.threshold;
      po.floor = c.malliavin.floor;
      po.override_precondition = true;
      const double sc = scale.value() / masses.size();
      PositivityReport p = positivity_from_masses(masses, sc, po.threshold);
      const PositivityReport p100 = positivity_from_masses(masses, sc, po.threshold * 100);
      check_positivity_precondition(p, xprobe, c.grid.t(b), prob.sigma, prob.kernel, po);
      m["positivity"] = {{"x", xprobe}, {"t", c.grid.t(b)}, {"fraction", p.fraction},
                         {"fraction_at_100x_threshold", p100.fraction}, {"scale", p.scale},
                         {"min_heat_flow", p.min_heat_flow}, {"precondition_ok", p.precondition_ok},
                         {"diagnostic", p.diagnostic}, {"paths", masses.size()}};
      const bool pre = p.precondition_ok || c.malliavin.override_precondition;
      book.set("positivity", pre && p.fraction == 1.0 && p100.fraction == 1.0,
               fmt::format("fraction {} ({} at 100x threshold){}", p.fraction, p100.fraction,
                           p.precondition_ok ? "" : ", precondition fails: " + p.diagnostic));
    }
    sum["malliavin"] = m;
    if (first_field && wants(c, "malliavin_bin")) {
      auto out = open_out(out_dir / "malliavin.bin", true);
      write_malliavin_binary(out, *first_field);
    }
  }

  if (do_front) {
    int hits = 0;
    for (const auto& r : rec) hits += r.hit_kind && *r.hit_kind != HitKind::none;
    sum["front"] = {{"paths_with_hit", hits}};
  }

  json events = json::array();
  json paths = json::array();
  for (const auto& r : rec) {
    json p = {{"seed", r.seed}, {"status", r.status}};
    if (r.status == "failed") {
      p["failure"] = r.failure;
      events.push_back({{"seed", r.seed}, {"event", "failure"}, {"detail", r.failure}});
    } else {
      p["classification"] = classification_json(r.cls);
      p["localized_moment"] = r.moment;
      if (r.cls.tau_M != kNever) events.push_back({{"seed", r.seed}, {"event", "tau_M"}, {"time", r.cls.tau_M}});
      if (r.cls.tau_tilde_n != kNever)
        events.push_back({{"seed", r.seed}, {"event", "tau_tilde_n"}, {"time", r.cls.tau_tilde_n}});
      if (r.md_tripped) events.push_back({{"seed", r.seed}, {"event", "tau_Md"}, {"time", r.md_tau}});
      if (r.hit_kind && *r.hit_kind != HitKind::none)
        events.push_back(
            {{"seed", r.seed}, {"event", "front_hit"}, {"kind", to_string(*r.hit_kind)}, {"time", r.hit_time}});
    }
    paths.push_back(p);
  }
  report["paths"] = paths;
  report["events"] = events;

  {
    auto out = open_out(out_dir / "paths.csv");
    out << "seed,status,tau_M,tau_tilde_n,in_Omega_M,in_Omega_M_n,sup_h_norm,localized_moment,picard_iterations\n";
    for (const auto& r : rec)
      out << fmt::format("{},{},{:.17g},{:.17g},{},{},{:.17g},{:.17g},{}\n", r.seed, r.status, r.cls.tau_M,
                         r.cls.tau_tilde_n, int(r.cls.in_Omega_M), int(r.cls.in_Omega_M_n), r.cls.sup_h_norm,
                         r.moment, r.iterations);
  }
  return finish(std::move(report), book, c, command, out_dir);
}

}  // namespace

RunOutcome run_ensemble(const RunConfig& c, const fs::path& out_dir) { return ensemble_impl(c, out_dir, "ensemble"); }

RunOutcome run_malliavin(const RunConfig& config, const fs::path& out_dir) {
  RunConfig c = config;
  c.malliavin.enabled = true;
  return ensemble_impl(c, out_dir, "malliavin");
}

RunOutcome run_front(const RunConfig& c, const fs::path& out_dir) {
  require_valid(c);
  fs::create_directories(out_dir);
  const Problem prob = make_problem(c);
  std::optional<GridKernel> gk;
  if (c.solver.kind != SolverKind::fd) gk.emplace(c.grid, prob.kernel);
  const GridKernel* gkp = gk ? &*gk : nullptr;
  json report;
  report["provenance"] = provenance(c, "front", {c.base_seed, minus_half_seed(c.base_seed)});
  CheckBook book;
  const NoiseField noise = sample_sheet(c.grid, c.base_seed);
  const SolvedPath plus = solve_configured(c, noise, prob, gkp, ExecPolicy::parallel);
  const FrontOutcome f = front_for(c, prob, gkp, plus.path, ExecPolicy::parallel);
  report["summary"]["front"] = f.summary;
  json events = json::array();
  if (f.front.hit_kind != HitKind::none)
    events.push_back({{"seed", c.base_seed}, {"event", "front_hit"}, {"kind", to_string(f.front.hit_kind)},
                      {"time", f.front.hit_time}});
  report["events"] = events;
  write_front_outputs(c, f, out_dir);
  front_checks(c, f, book);
  return finish(std::move(report), book, c, "front", out_dir);
}

RunOutcome run_verify_kernel(const RunConfig& c, const fs::path& out_dir) {
  require_valid(c);
  fs::create_directories(out_dir);
  KernelParams kp = c.kernel;
  kp.lambda = c.grid.lambda;
  json report;
  report["provenance"] = provenance(c, "verify-kernel", {});
  CheckBook book;
  const KernelBoundsReport r = verify_kernel_bounds(c.verify_times, kp);
  json rows = json::array();
  for (const auto& row : r.rows)
    rows.push_back({{"t", row.t}, {"sup_kernel_sqrt_t", row.sup_kernel}, {"gaussian_mass", row.gaussian_mass},
                    {"dy_mass_sqrt_t", row.dy_mass}, {"quadrature_step", row.quadrature_step}});
  json& sum = report["summary"];
  sum["kernel_bounds"] = {{"rows", rows}, {"gaussian_rate", r.gaussian_rate}, {"growth_limit", r.growth_limit},
                          {"pass", r.pass}, {"notes", r.notes}};
  book.set("kernel_bounds", r.pass,
           r.pass ? "constants finite and bounded as t decreases" : fmt::format("{} notes", r.notes.size()));

  // Image series against the Fourier sine series on a 17 x 17 lattice.
  const double lam = kp.lambda, t_min = 0.01 * lam * lam / kp.alpha;
  double worst = 0.0;
  for (double t : c.verify_times) {
    if (t < t_min) continue;
    for (int a = 1; a < 18; ++a)
      for (int q = 1; q < 18; ++q) {
        const double x = lam * a / 18.0, y = lam * q / 18.0;
        // Extended precision: the sine series cancels down to ~1e-9 at far pairs.
        long double s = 0.0L;
        for (int k = 1; k <= 4000; ++k) {
          const long double w = k * std::numbers::pi_v<long double> / lam;
          const long double term = std::exp(-kp.alpha * w * w * t);
          if (term < 1e-300L) break;
          s += (2.0L / lam) * std::sin(w * x) * std::sin(w * y) * term;
        }
        const double ref = static_cast<double>(s), img = kernel_value(x, y, t, kp);
        worst = std::max(worst, std::abs(img - ref) / std::max(std::abs(ref), 1e-300));
      }
  }
  sum["series_agreement"] = {{"max_relative_error", worst}, {"t_min", t_min}};
  const double tol = c.tolerance("kernel_series", 1e-8);
  book.set("kernel_series", worst < tol, fmt::format("max relative error {:.2e} (tol {:.0e})", worst, tol));
  return finish(std::move(report), book, c, "verify-kernel", out_dir);
}

}  // namespace stefan
