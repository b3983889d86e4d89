#include "stefan/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <numbers>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>

#include "stefan/errors.hpp"
#include "stefan/noise_field.hpp"

namespace stefan {

namespace pt = boost::property_tree;

std::string to_string(ProfileKind k) {
  switch (k) {
    case ProfileKind::zero:
      return "zero";
    case ProfileKind::sine:
      return "sine";
    case ProfileKind::parabola:
      return "parabola";
    case ProfileKind::bump:
      return "bump";
    case ProfileKind::table:
      return "table";
  }
  return "zero";
}

std::string to_string(SolverKind k) {
  switch (k) {
    case SolverKind::mild:
      return "mild";
    case SolverKind::fd:
      return "fd";
    case SolverKind::reflected:
      return "reflected";
  }
  return "mild";
}

namespace {

ProfileKind profile_kind(const std::string& s) {
  for (auto k : {ProfileKind::zero, ProfileKind::sine, ProfileKind::parabola, ProfileKind::bump, ProfileKind::table})
    if (to_string(k) == s) return k;
  throw UsageError("unknown profile '" + s + "' (expected zero | sine | parabola | bump | table)");
}

SolverKind solver_kind(const std::string& s) {
  for (auto k : {SolverKind::mild, SolverKind::fd, SolverKind::reflected})
    if (to_string(k) == s) return k;
  throw UsageError("unknown solver '" + s + "' (expected mild | fd | reflected)");
}

InitialIterate initial_iterate(const std::string& s) {
  if (s == "smooth_source") return InitialIterate::smooth_source;
  if (s == "zero") return InitialIterate::zero;
  throw UsageError("unknown initial iterate '" + s + "' (expected smooth_source | zero)");
}

std::vector<std::pair<double, double>> load_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("table profile: cannot open " + path);
  std::vector<std::pair<double, double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double x, v;
    if (!(ls >> x >> v)) {
      if (rows.empty()) continue;  // header
      throw UsageError("table profile: malformed row '" + line + "' in " + path);
    }
    rows.emplace_back(x, v);
  }
  if (rows.size() < 2) throw UsageError("table profile: need at least two rows in " + path);
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (size_t k = 0; k < v.size(); ++k) {
    if (k) s += ", ";
    if constexpr (std::is_floating_point_v<T>)
      s += fmt_double(v[k]);
    else if constexpr (std::is_integral_v<T>)
      s += std::to_string(v[k]);
    else
      s += v[k];
  }
  return s;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw UsageError("expected a boolean, got '" + s + "'");
}

double parse_double(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects a number, got '" + s + "'");
  }
}

long long parse_int(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects an integer, got '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& s) {
  try {
    size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size() || s.find('-') != std::string::npos) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw UsageError("config: " + key + " expects an unsigned integer, got '" + s + "'");
  }
}

void read_profile(const pt::ptree& sec, ProfileSpec& p, const std::string& name) {
  for (const auto& [key, node] : sec) {
    const std::string v = node.data();
    const std::string full = name + "." + key;
    if (key == "profile")
      p.kind = profile_kind(v);
    else if (key == "amplitude")
      p.amplitude = parse_double(full, v);
    else if (key == "center")
      p.center = parse_double(full, v);
    else if (key == "width")
      p.width = parse_double(full, v);
    else if (key == "table")
      p.table = v;
    else
      throw UsageError("config: unknown key " + full);
  }
}

void write_profile(std::ostream& out, const char* name, const ProfileSpec& p) {
  out << "[" << name << "]\n";
  out << "profile = " << to_string(p.kind) << "\n";
  out << "amplitude = " << fmt_double(p.amplitude) << "\n";
  out << "center = " << fmt_double(p.center) << "\n";
  out << "width = " << fmt_double(p.width) << "\n";
  out << "table = " << p.table << "\n\n";
}

}  // namespace

Profile make_profile(const ProfileSpec& spec, double lambda) {
  const double a = spec.amplitude;
  switch (spec.kind) {
    case ProfileKind::zero:
      return [](double) { return 0.0; };
    case ProfileKind::sine:
      return [a, lambda](double x) { return a * std::sin(std::numbers::pi * x / lambda); };
    case ProfileKind::parabola:
      return [a, lambda](double x) { return a * x * (lambda - x); };
    case ProfileKind::bump: {
      const double c = spec.center * lambda, w = spec.width * lambda;
      return [a, c, w](double x) {
        const double r = (x - c) / w;
        return std::abs(r) < 1.0 ? a * std::exp(1.0 - 1.0 / (1.0 - r * r)) : 0.0;
      };
    }
    case ProfileKind::table: {
      auto rows = std::make_shared<const std::vector<std::pair<double, double>>>(load_table(spec.table));
      return [rows, a](double x) {
        const auto& r = *rows;
        if (x < r.front().first || x > r.back().first) return 0.0;
        auto it = std::upper_bound(r.begin(), r.end(), std::make_pair(x, std::numeric_limits<double>::infinity()));
        if (it == r.end()) return a * r.back().second;
        if (it == r.begin()) return a * r.front().second;
        const auto& [x1, v1] = *it;
        const auto& [x0, v0] = *(it - 1);
        const double w = (x - x0) / (x1 - x0);
        return a * ((1.0 - w) * v0 + w * v1);
      };
    }
  }
  throw UsageError("make_profile: unknown kind");
}

double RunConfig::tolerance(const std::string& key, double fallback) const {
  const auto it = tolerances.find(key);
  return it == tolerances.end() ? fallback : it->second;
}

RunConfig parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  RunConfig c;
  for (const auto& [section, sec] : tree) {
    if (sec.empty() && !sec.data().empty()) throw UsageError("config: key '" + section + "' outside a section");
    if (section == "u0") {
      read_profile(sec, c.u0, section);
      continue;
    }
    if (section == "sigma") {
      read_profile(sec, c.sigma, section);
      continue;
    }
    for (const auto& [key, node] : sec) {
      const std::string v = node.data();
      const std::string full = section + "." + key;
      auto unknown = [&] { throw UsageError("config: unknown key " + full); };
      if (section == "grid") {
        if (key == "nx") c.grid.nx = static_cast<int>(parse_int(full, v));
        else if (key == "nt") c.grid.nt = static_cast<int>(parse_int(full, v));
        else if (key == "lambda") c.grid.lambda = parse_double(full, v);
        else if (key == "horizon") c.grid.horizon = parse_double(full, v);
        else unknown();
      } else if (section == "kernel") {
        if (key == "alpha") c.kernel.alpha = parse_double(full, v);
        else if (key == "image_count") c.kernel.image_count = static_cast<int>(parse_int(full, v));
        else if (key == "series_tol") c.kernel.series_tol = parse_double(full, v);
        else unknown();
      } else if (section == "cutoff") {
        if (key == "n") c.cutoff.n = static_cast<int>(parse_int(full, v));
        else if (key == "p") c.cutoff.p = parse_double(full, v);
        else if (key == "M") c.cutoff.M = parse_double(full, v);
        else if (key == "M_d") c.cutoff.M_d = parse_double(full, v);
        else if (key == "T") c.cutoff.T = parse_double(full, v);
        else if (key == "convention") c.cutoff.convention = gradient_convention_from_string(v);
        else unknown();
      } else if (section == "solver") {
        if (key == "kind") c.solver.kind = solver_kind(v);
        else if (key == "tol") c.solver.tol = parse_double(full, v);
        else if (key == "k_max") c.solver.k_max = static_cast<int>(parse_int(full, v));
        else if (key == "drift") c.solver.drift = parse_bool(v);
        else if (key == "cutoff") c.solver.cutoff = parse_bool(v);
        else if (key == "initial") c.solver.initial = initial_iterate(v);
        else unknown();
      } else if (section == "ensemble") {
        if (key == "size") c.ensemble_size = static_cast<int>(parse_int(full, v));
        else if (key == "base_seed") c.base_seed = parse_u64(full, v);
        else if (key == "n_sweep") {
          c.n_sweep.clear();
          for (const auto& s : split_list(v)) c.n_sweep.push_back(static_cast<int>(parse_int(full, s)));
        } else if (key == "m_sweep") {
          c.m_sweep.clear();
          for (const auto& s : split_list(v)) c.m_sweep.push_back(parse_double(full, s));
        } else unknown();
      } else if (section == "malliavin") {
        auto& m = c.malliavin;
        if (key == "enabled") m.enabled = parse_bool(v);
        else if (key == "probe_x") m.probe_x = parse_double(full, v);
        else if (key == "stride") m.stride = static_cast<int>(parse_int(full, v));
        else if (key == "eps_steps") {
          m.eps_steps.clear();
          for (const auto& s : split_list(v)) m.eps_steps.push_back(static_cast<int>(parse_int(full, s)));
        } else if (key == "b_step") m.b_step = static_cast<int>(parse_int(full, v));
        else if (key == "threshold") m.threshold = parse_double(full, v);
        else if (key == "floor") m.floor = parse_double(full, v);
        else if (key == "override_precondition") m.override_precondition = parse_bool(v);
        else if (key == "drift") m.drift = parse_bool(v);
        else unknown();
      } else if (section == "front") {
        auto& f = c.front;
        if (key == "s0_minus") f.s0_minus = parse_double(full, v);
        else if (key == "s0_plus") f.s0_plus = parse_double(full, v);
        else if (key == "a") f.a = parse_double(full, v);
        else if (key == "b") f.b = parse_double(full, v);
        else if (key == "snapshot_every") f.snapshot_every = static_cast<int>(parse_int(full, v));
        else if (key == "ny") f.ny = static_cast<int>(parse_int(full, v));
        else unknown();
      } else if (section == "verify") {
        if (key == "times") {
          c.verify_times.clear();
          for (const auto& s : split_list(v)) c.verify_times.push_back(parse_double(full, s));
        } else unknown();
      } else if (section == "output") {
        if (key == "kinds") c.outputs = split_list(v);
        else unknown();
      } else if (section == "checks") {
        if (key == "enabled") c.checks = split_list(v);
        else unknown();
      } else if (section == "tolerances") {
        c.tolerances[key] = parse_double(full, v);
      } else {
        throw UsageError("config: unknown section [" + section + "]");
      }
    }
  }
  c.kernel.lambda = c.grid.lambda;
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  return parse_config(in);
}

std::string to_ini(const RunConfig& c) {
  std::ostringstream out;
  out << "[grid]\nnx = " << c.grid.nx << "\nnt = " << c.grid.nt << "\nlambda = " << fmt_double(c.grid.lambda)
      << "\nhorizon = " << fmt_double(c.grid.horizon) << "\n\n";
  out << "[kernel]\nalpha = " << fmt_double(c.kernel.alpha) << "\nimage_count = " << c.kernel.image_count
      << "\nseries_tol = " << fmt_double(c.kernel.series_tol) << "\n\n";
  out << "[cutoff]\nn = " << c.cutoff.n << "\np = " << fmt_double(c.cutoff.p) << "\nM = " << fmt_double(c.cutoff.M)
      << "\nM_d = " << fmt_double(c.cutoff.M_d) << "\nT = " << fmt_double(c.cutoff.T)
      << "\nconvention = " << to_string(c.cutoff.convention) << "\n\n";
  write_profile(out, "u0", c.u0);
  write_profile(out, "sigma", c.sigma);
  out << "[solver]\nkind = " << to_string(c.solver.kind) << "\ntol = " << fmt_double(c.solver.tol)
      << "\nk_max = " << c.solver.k_max << "\ndrift = " << (c.solver.drift ? "true" : "false")
      << "\ncutoff = " << (c.solver.cutoff ? "true" : "false") << "\ninitial = " << to_string(c.solver.initial)
      << "\n\n";
  out << "[ensemble]\nsize = " << c.ensemble_size << "\nbase_seed = " << c.base_seed
      << "\nn_sweep = " << join(c.n_sweep) << "\nm_sweep = " << join(c.m_sweep) << "\n\n";
  const auto& m = c.malliavin;
  out << "[malliavin]\nenabled = " << (m.enabled ? "true" : "false") << "\nprobe_x = " << fmt_double(m.probe_x)
      << "\nstride = " << m.stride << "\neps_steps = " << join(m.eps_steps) << "\nb_step = " << m.b_step
      << "\nthreshold = " << fmt_double(m.threshold) << "\nfloor = " << fmt_double(m.floor)
      << "\noverride_precondition = " << (m.override_precondition ? "true" : "false")
      << "\ndrift = " << (m.drift ? "true" : "false") << "\n\n";
  const auto& f = c.front;
  out << "[front]\ns0_minus = " << fmt_double(f.s0_minus) << "\ns0_plus = " << fmt_double(f.s0_plus)
      << "\na = " << fmt_double(f.a) << "\nb = " << fmt_double(f.b) << "\nsnapshot_every = " << f.snapshot_every
      << "\nny = " << f.ny << "\n\n";
  out << "[verify]\ntimes = " << join(c.verify_times) << "\n\n";
  out << "[output]\nkinds = " << join(c.outputs) << "\n\n";
  out << "[checks]\nenabled = " << join(c.checks) << "\n\n";
  out << "[tolerances]\n";
  for (const auto& [k, v] : c.tolerances) out << k << " = " << fmt_double(v) << "\n";
  return out.str();
}

std::vector<std::string> validate_config(const RunConfig& c) {
  std::vector<std::string> errors;
  auto guard = [&](auto&& fn) {
    try {
      fn();
    } catch (const std::exception& e) {
      errors.emplace_back(e.what());
    }
  };
  guard([&] { c.grid.validate(); });
  guard([&] { c.kernel.validate(); });
  guard([&] { c.cutoff.validate(); });
  if (std::abs(c.grid.lambda - c.kernel.lambda) > 1e-14 * c.grid.lambda)
    errors.push_back("grid.lambda and the kernel domain length differ");
  if (c.grid.nx < 2) errors.push_back("grid.nx must be >= 2 for the boundary gradient");
  if (c.ensemble_size < 1) errors.push_back("ensemble.size must be >= 1");
  if (c.solver.tol < 0) errors.push_back("solver.tol must be >= 0");
  if (c.solver.k_max < 1) errors.push_back("solver.k_max must be >= 1");
  if (c.cutoff.T > c.grid.horizon * (1 + 1e-12)) errors.push_back("cutoff.T exceeds grid.horizon");
  if (c.solver.kind == SolverKind::fd && c.grid.nx >= 1 && c.grid.nt >= 1 && c.grid.lambda > 0 && c.grid.horizon > 0 &&
      !c.grid.explicit_stable(c.kernel.alpha))
    errors.push_back(fmt::format("solver.kind = fd needs alpha*dt/dx^2 <= 1/2, got {:.4f}",
                                 c.grid.diffusion_number(c.kernel.alpha)));
  for (int k : c.n_sweep)
    if (k < 1) errors.push_back("ensemble.n_sweep entries must be >= 1");
  for (double k : c.m_sweep)
    if (!(k > 0)) errors.push_back("ensemble.m_sweep entries must be positive");

  auto check_profile = [&](const ProfileSpec& p, const char* name, bool nonneg) {
    for (const auto& [val, what] : {std::pair{p.width, "width"}, std::pair{p.center, "center"}})
      if (p.kind == ProfileKind::bump && !(val > 0 && val < 1))
        errors.push_back(fmt::format("{}.{} must lie in (0, 1) for the bump profile", name, what));
    if (!std::isfinite(p.amplitude)) errors.push_back(std::string(name) + ".amplitude must be finite");
    Profile f;
    try {
      f = make_profile(p, c.grid.lambda);
    } catch (const std::exception& e) {
      errors.push_back(std::string(name) + ": " + e.what());
      return;
    }
    if (!(c.grid.lambda > 0)) return;
    const double scale = std::max(1.0, std::abs(p.amplitude));
    if (std::abs(f(0.0)) > 1e-12 * scale || std::abs(f(c.grid.lambda)) > 1e-12 * scale)
      errors.push_back(std::string(name) + " must vanish at 0 and lambda");
    if (nonneg) {
      const int probes = 2001;
      for (int k = 0; k < probes; ++k) {
        const double v = f(c.grid.lambda * k / (probes - 1));
        if (v < 0) {
          errors.push_back(std::string(name) + " must be nonnegative");
          break;
        }
      }
    }
  };
  check_profile(c.sigma, "sigma", false);
  check_profile(c.u0, "u0", true);

  if (errors.empty()) {
    const Profile u0 = make_profile(c.u0, c.grid.lambda);
    auto nodes = sample_nodes(u0, c.grid);
    nodes.front() = 0.0;
    nodes.back() = 0.0;
    const double grad = boundary_gradient(nodes, c.grid.dx());
    if (!(std::abs(grad) < c.cutoff.M))
      errors.push_back(fmt::format("cutoff.M = {} must exceed the initial boundary gradient {:.6g}", c.cutoff.M, grad));
    const double h = h_norm(nodes, c.grid.dx());
    if (!(std::pow(h, c.cutoff.p) < c.cutoff.n))
      errors.push_back(fmt::format("cutoff.n = {} must exceed ||u0||_H^p = {:.6g}", c.cutoff.n, std::pow(h, c.cutoff.p)));
  }
  const auto& m = c.malliavin;
  if (m.enabled) {
    if (!(m.probe_x > 0 && m.probe_x < 1)) errors.push_back("malliavin.probe_x must lie in (0, 1)");
    if (m.stride < 1) errors.push_back("malliavin.stride must be >= 1");
    const int b = m.b_step < 0 ? c.grid.nt : m.b_step;
    if (b < 1 || b > c.grid.nt) errors.push_back("malliavin.b_step must lie in [1, nt]");
    for (int e : m.eps_steps)
      if (e < 1 || e > b) errors.push_back("malliavin.eps_steps entries must lie in [1, b_step]");
    if (!m.eps_steps.empty() && m.eps_steps.size() < 4) errors.push_back("malliavin.eps_steps needs at least 4 entries");
    if (m.eps_steps.empty() && b % 16 != 0) errors.push_back("malliavin.b_step must be divisible by 16 for default windows");
  }
  const auto& f = c.front;
  if (!(f.a < f.s0_minus && f.s0_minus < f.s0_plus && f.s0_plus < f.b))
    errors.push_back("front: need a < s0_minus < s0_plus < b");
  if (f.ny < 2) errors.push_back("front.ny must be >= 2");
  if (f.snapshot_every < 0) errors.push_back("front.snapshot_every must be >= 0");
  if (c.verify_times.empty()) errors.push_back("verify.times must be nonempty");
  for (double t : c.verify_times)
    if (!(t > 0)) errors.push_back("verify.times entries must be positive");
  static const std::set<std::string> kinds = {"path_csv",  "path_bin",  "noise_bin",  "report_json",
                                              "report_text", "malliavin_bin", "front_csv", "density_csv"};
  for (const auto& o : c.outputs)
    if (!kinds.count(o)) errors.push_back("output.kinds: unknown kind '" + o + "'");
  static const std::set<std::string> checks = {
      "no_failures", "picard_converged", "picard_contraction", "omega_nesting", "moment_finite",
      "moment_stable", "holder",          "complementarity",    "localization",  "scaling",
      "positivity",  "front_symmetry",   "solid_phase_zero",   "kernel_bounds", "kernel_series"};
  for (const auto& k : c.checks)
    if (!checks.count(k)) errors.push_back("checks.enabled: unknown check '" + k + "'");
  return errors;
}

Problem make_problem(const RunConfig& c) {
  Problem p;
  p.kernel = c.kernel;
  p.kernel.lambda = c.grid.lambda;
  p.u0 = make_profile(c.u0, c.grid.lambda);
  p.sigma = make_profile(c.sigma, c.grid.lambda);
  p.cutoff = c.cutoff;
  return p;
}

}  // namespace stefan
