#pragma once

// Declarative scenarios: JSON in, canonical JSON report and delimited trajectories out.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "qbm/checks.hpp"
#include "qbm/errors.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/liouvillian.hpp"
#include "qbm/models.hpp"

namespace qbm {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kExitPass = 0, kExitVerdictFailed = 1, kExitConfig = 2, kExitNumerical = 3 };

struct ModelSpec {
  std::string name;   // catalog name
  std::string label;  // report label; defaults to name
  Potential potential = Potential::Harmonic;
  std::optional<CoefficientForm> coefficients;  // "custom" only
  ModelParams params;
  std::optional<double> basis_omega;

  MasterEquationModel build() const {
    MasterEquationModel m = name == "custom"
                                ? custom_coefficients(*coefficients, params, potential, label)
                                : make_model(name, params);
    m.label = label;
    if (basis_omega) m.basis_omega = *basis_omega;
    return m;
  }
};

struct InitialState {
  std::string kind = "vacuum";  // vacuum | gibbs | coherent | gaussian
  cplx alpha{0.0, 0.0};
  GaussianMoments moments;  // gaussian only
};

struct CheckSpec {
  std::string name;
  CheckConfig config;
  std::string candidate = "auto";   // stationarity
  std::vector<double> temperatures;  // high-temperature
  std::optional<std::string> model;  // evolution
  std::string backend = "fock";      // evolution: fock | moments
  InitialState initial;              // evolution
  std::vector<double> times;         // evolution
};

struct Scenario {
  ModelParams params;
  int dim = 40;
  int guard = 12;
  int resource_cap = kDefaultResourceCap;
  std::vector<ModelSpec> models;
  std::vector<CheckSpec> checks;
  std::optional<std::string> report_path;
  std::optional<std::string> trajectory_path;
  bool timing = false;
};

inline constexpr std::string_view kCheckNames[] = {
    "cp",           "translation-covariance", "rotation-covariance", "stationarity", "equipartition",
    "canonicality", "trilemma",               "high-temperature",    "evolution",
};

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

/// Closest candidate: the first one that extends `input`, else the smallest edit distance.
template <typename Range>
std::string nearest_match(std::string_view input, const Range& candidates) {
  for (const auto& c : candidates)
    if (!input.empty() && std::string_view(c).substr(0, input.size()) == input) return std::string(c);
  std::string best;
  std::size_t best_d = std::numeric_limits<std::size_t>::max();
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(input, c);
    if (d < best_d) {
      best_d = d;
      best = std::string(c);
    }
  }
  return best;
}

namespace detail {

[[noreturn]] inline void config_error(const std::string& msg) { throw Error(ErrorKind::Config, msg); }

inline void reject_unknown(const nlohmann::json& obj, std::initializer_list<std::string_view> allowed,
                           const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      config_error("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_as(const nlohmann::json& obj, const char* key, const std::string& where) {
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    config_error("key '" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

template <typename T>
void read_opt(const nlohmann::json& obj, const char* key, T& out, const std::string& where) {
  if (obj.contains(key)) out = get_as<T>(obj, key, where);
}

inline ModelParams parse_params(const nlohmann::json& j, ModelParams base, const std::string& where) {
  if (!j.is_object()) config_error(where + " must be an object");
  reject_unknown(j, {"M", "T", "eta", "omega", "gamma", "m_gas"}, where);
  read_opt(j, "M", base.mass, where);
  read_opt(j, "T", base.temperature, where);
  read_opt(j, "eta", base.eta, where);
  read_opt(j, "omega", base.omega, where);
  read_opt(j, "gamma", base.gamma, where);
  if (j.contains("m_gas")) {
    if (j["m_gas"].is_null())
      base.m_gas.reset();
    else
      base.m_gas = get_as<double>(j, "m_gas", where);
  }
  try {
    base.validate();
  } catch (const Error& e) {
    config_error(where + ": " + e.what());
  }
  return base;
}

inline ordered_json params_json(const ModelParams& p) {
  ordered_json j;
  j["M"] = p.mass;
  j["T"] = p.temperature;
  j["eta"] = p.eta;
  j["omega"] = p.omega;
  j["gamma"] = p.gamma;
  j["m_gas"] = p.m_gas ? ordered_json(*p.m_gas) : ordered_json(nullptr);
  return j;
}

inline void check_model_name(const std::string& name) {
  if (is_catalog_name(name)) return;
  std::vector<std::string> names;
  for (const auto& e : kCatalog) names.emplace_back(e.name);
  config_error("unknown model '" + name + "'; did you mean '" + nearest_match(name, names) + "'?");
}

inline ModelSpec parse_model(const nlohmann::json& j, const ModelParams& defaults) {
  ModelSpec spec;
  spec.params = defaults;
  if (j.is_string()) {
    spec.name = j.get<std::string>();
    check_model_name(spec.name);
    if (spec.name == "custom") config_error("model 'custom' needs a coefficient block");
  } else if (j.is_object()) {
    const std::string where = "model entry";
    reject_unknown(j, {"name", "label", "potential", "coefficients", "params", "basis_omega"}, where);
    if (!j.contains("name")) config_error("model entry without 'name'");
    spec.name = get_as<std::string>(j, "name", where);
    check_model_name(spec.name);
    if (j.contains("params")) spec.params = parse_params(j["params"], defaults, "model '" + spec.name + "' params");
    if (j.contains("label")) spec.label = get_as<std::string>(j, "label", where);
    if (j.contains("basis_omega")) {
      spec.basis_omega = get_as<double>(j, "basis_omega", where);
      if (!(*spec.basis_omega > 0.0)) config_error("basis_omega must be positive");
    }
    if (spec.name == "custom") {
      if (!j.contains("coefficients")) config_error("model 'custom' needs a coefficient block");
      const auto& c = j["coefficients"];
      if (!c.is_object()) config_error("coefficients must be an object");
      reject_unknown(c, {"eta", "Dpp", "Dxx", "Dxp"}, "coefficients");
      CoefficientForm f;
      read_opt(c, "eta", f.eta, "coefficients");
      read_opt(c, "Dpp", f.dpp, "coefficients");
      read_opt(c, "Dxx", f.dxx, "coefficients");
      read_opt(c, "Dxp", f.dxp, "coefficients");
      if (f.dpp < 0.0 || f.dxx < 0.0) config_error("Dpp and Dxx must be nonnegative");
      spec.coefficients = f;
      const std::string pot = j.value("potential", std::string("harmonic"));
      if (pot != "free" && pot != "harmonic") config_error("potential must be 'free' or 'harmonic'");
      spec.potential = pot == "free" ? Potential::Free : Potential::Harmonic;
    } else if (j.contains("coefficients") || j.contains("potential")) {
      config_error("only model 'custom' takes coefficients or a potential");
    }
  } else {
    config_error("model entries must be names or objects");
  }
  if (spec.label.empty()) spec.label = spec.name;
  if (spec.name != "custom") spec.potential = spec.name == "vme-free" ? Potential::Free : Potential::Harmonic;
  try {
    (void)spec.build();
  } catch (const Error& e) {
    config_error("model '" + spec.label + "': " + e.what());
  }
  return spec;
}

inline ordered_json model_json(const ModelSpec& s) {
  ordered_json j;
  j["name"] = s.name;
  j["label"] = s.label;
  if (s.name == "custom") {
    j["potential"] = s.potential == Potential::Free ? "free" : "harmonic";
    j["coefficients"] = {{"eta", s.coefficients->eta},
                         {"Dpp", s.coefficients->dpp},
                         {"Dxx", s.coefficients->dxx},
                         {"Dxp", s.coefficients->dxp}};
  }
  j["params"] = params_json(s.params);
  if (s.basis_omega) j["basis_omega"] = *s.basis_omega;
  return j;
}

inline void check_dims(int dim, int guard, int cap, const std::string& where) {
  if (dim < 2) config_error(where + ": dim must be >= 2");
  if (guard < 1) config_error(where + ": guard must be >= 1");
  const long n = static_cast<long>(dim) + guard;
  if (n * n > cap)
    config_error(where + ": (dim + guard)^2 = " + std::to_string(n * n) + " exceeds resource cap " +
                 std::to_string(cap));
}

inline std::vector<double> read_list(const nlohmann::json& j, const char* key, const std::string& where) {
  auto v = get_as<std::vector<double>>(j, key, where);
  for (double x : v)
    if (!std::isfinite(x)) config_error(std::string(key) + " in " + where + " must be finite");
  return v;
}

inline bool ascending(const std::vector<double>& v, bool strict) {
  for (std::size_t i = 1; i < v.size(); ++i)
    if (strict ? !(v[i] > v[i - 1]) : !(v[i] >= v[i - 1])) return false;
  return true;
}

inline void read_choi(const nlohmann::json& obj, CheckConfig& c, int cap, const std::string& where) {
  read_opt(obj, "choi_dim", c.choi_dim, where);
  read_opt(obj, "choi_guard", c.choi_guard, where);
  check_dims(c.choi_dim, c.choi_guard, cap, where + " choi");
  for (double t : c.cp_times)
    if (t < 0.0) config_error(where + ": times must be nonnegative");
}

inline CheckSpec parse_check(const nlohmann::json& j, const Scenario& sc) {
  CheckSpec spec;
  nlohmann::json obj = j.is_string() ? nlohmann::json{{"name", j.get<std::string>()}} : j;
  if (!obj.is_object() || !obj.contains("name")) config_error("check entries must be names or objects with 'name'");
  spec.name = get_as<std::string>(obj, "name", "check entry");
  if (std::find(std::begin(kCheckNames), std::end(kCheckNames), spec.name) == std::end(kCheckNames))
    config_error("unknown check '" + spec.name + "'; did you mean '" + nearest_match(spec.name, kCheckNames) + "'?");
  const std::string where = "check '" + spec.name + "'";
  CheckConfig& c = spec.config;
  c.dim = sc.dim;
  c.guard = sc.guard;
  read_opt(obj, "dim", c.dim, where);
  read_opt(obj, "guard", c.guard, where);
  check_dims(c.dim, c.guard, sc.resource_cap, where);
  if (obj.contains("basis_omega")) {
    c.basis_omega = get_as<double>(obj, "basis_omega", where);
    if (!(*c.basis_omega > 0.0)) config_error(where + ": basis_omega must be positive");
  }
  const std::string& n = spec.name;
  if (n == "cp") {
    reject_unknown(obj, {"name", "tolerance", "kossakowski_tolerance", "times", "choi_dim", "choi_guard", "basis_omega", "dim", "guard"}, where);
    read_opt(obj, "tolerance", c.choi_tolerance, where);
    read_opt(obj, "kossakowski_tolerance", c.kossakowski_tolerance, where);
    if (obj.contains("times")) c.cp_times = read_list(obj, "times", where);
    read_choi(obj, c, sc.resource_cap, where);
  } else if (n == "translation-covariance") {
    reject_unknown(obj, {"name", "tolerance", "shifts", "dim", "guard", "basis_omega"}, where);
    read_opt(obj, "tolerance", c.translation_tolerance, where);
    if (obj.contains("shifts")) c.shifts = read_list(obj, "shifts", where);
  } else if (n == "rotation-covariance") {
    reject_unknown(obj, {"name", "tolerance", "thetas", "dim", "guard", "basis_omega"}, where);
    read_opt(obj, "tolerance", c.rotation_tolerance, where);
    if (obj.contains("thetas")) c.thetas = read_list(obj, "thetas", where);
  } else if (n == "stationarity") {
    reject_unknown(obj, {"name", "tolerance", "maxwell_tolerance", "candidate", "dim", "guard", "basis_omega"}, where);
    read_opt(obj, "tolerance", c.stationarity_tolerance, where);
    read_opt(obj, "maxwell_tolerance", c.maxwell_tolerance, where);
    read_opt(obj, "candidate", spec.candidate, where);
    if (spec.candidate != "auto" && spec.candidate != "gibbs" && spec.candidate != "maxwell-momentum")
      config_error(where + ": candidate must be auto, gibbs or maxwell-momentum");
  } else if (n == "equipartition") {
    reject_unknown(obj, {"name", "tolerance", "dim", "guard", "basis_omega"}, where);
    read_opt(obj, "tolerance", c.equipartition_tolerance, where);
  } else if (n == "canonicality") {
    reject_unknown(obj, {"name", "tolerance", "dim", "guard", "basis_omega"}, where);
    read_opt(obj, "tolerance", c.canonicality_tolerance, where);
  } else if (n == "trilemma") {
    reject_unknown(obj, {"name", "dim", "guard", "choi_dim", "choi_guard", "shifts", "times", "basis_omega"}, where);
    if (obj.contains("shifts")) c.shifts = read_list(obj, "shifts", where);
    if (obj.contains("times")) c.cp_times = read_list(obj, "times", where);
    read_choi(obj, c, sc.resource_cap, where);
  } else if (n == "high-temperature") {
    reject_unknown(obj, {"name", "temperatures", "dim", "guard", "basis_omega"}, where);
    spec.temperatures = {1.0, 10.0, 100.0};
    if (obj.contains("temperatures")) spec.temperatures = read_list(obj, "temperatures", where);
    if (spec.temperatures.empty() || !ascending(spec.temperatures, true) || spec.temperatures.front() <= 0.0)
      config_error(where + ": temperatures must be positive and strictly ascending");
  } else if (n == "evolution") {
    reject_unknown(obj, {"name", "model", "backend", "initial", "times", "dim", "guard", "basis_omega"}, where);
    if (obj.contains("model")) spec.model = get_as<std::string>(obj, "model", where);
    read_opt(obj, "backend", spec.backend, where);
    if (spec.backend != "fock" && spec.backend != "moments") config_error(where + ": backend must be fock or moments");
    if (!obj.contains("times")) config_error(where + ": needs 'times'");
    spec.times = read_list(obj, "times", where);
    if (!ascending(spec.times, false) || (!spec.times.empty() && spec.times.front() < 0.0))
      config_error(where + ": times must be nonnegative and ascending");
    if (obj.contains("initial")) {
      const auto& ini = obj["initial"];
      nlohmann::json io = ini.is_string() ? nlohmann::json{{"kind", ini.get<std::string>()}} : ini;
      if (!io.is_object() || !io.contains("kind")) config_error(where + ": initial needs a 'kind'");
      reject_unknown(io, {"kind", "alpha_re", "alpha_im", "x", "p", "xx", "xp", "pp"}, where + " initial");
      spec.initial.kind = get_as<std::string>(io, "kind", where);
      if (spec.initial.kind == "coherent") {
        double re = 0.0, im = 0.0;
        read_opt(io, "alpha_re", re, where);
        read_opt(io, "alpha_im", im, where);
        spec.initial.alpha = {re, im};
      } else if (spec.initial.kind == "gaussian") {
        if (spec.backend != "moments") config_error(where + ": gaussian initial state needs the moments backend");
        auto& m = spec.initial.moments;
        for (const char* k : {"x", "p", "xx", "xp", "pp"})
          if (!io.contains(k)) config_error(where + ": gaussian initial state needs '" + std::string(k) + "'");
        m.x = get_as<double>(io, "x", where);
        m.p = get_as<double>(io, "p", where);
        m.cov = {get_as<double>(io, "xx", where), get_as<double>(io, "xp", where), get_as<double>(io, "pp", where)};
        if (!m.quantum_valid()) config_error(where + ": gaussian initial state violates the uncertainty bound");
      } else if (spec.initial.kind != "vacuum" && spec.initial.kind != "gibbs") {
        config_error(where + ": initial kind must be vacuum, gibbs, coherent or gaussian");
      }
    }
  }
  return spec;
}

inline ordered_json config_echo(const CheckSpec& s) {
  const CheckConfig& c = s.config;
  ordered_json j;
  j["name"] = s.name;
  j["dim"] = c.dim;
  j["guard"] = c.guard;
  if (c.basis_omega) j["basis_omega"] = *c.basis_omega;
  const std::string& n = s.name;
  if (n == "cp") {
    j["tolerance"] = c.choi_tolerance;
    j["kossakowski_tolerance"] = c.kossakowski_tolerance;
    j["times"] = c.cp_times;
    j["choi_dim"] = c.choi_dim;
    j["choi_guard"] = c.choi_guard;
  } else if (n == "translation-covariance") {
    j["tolerance"] = c.translation_tolerance;
    j["shifts"] = c.shifts;
  } else if (n == "rotation-covariance") {
    j["tolerance"] = c.rotation_tolerance;
    j["thetas"] = c.thetas;
  } else if (n == "stationarity") {
    j["tolerance"] = c.stationarity_tolerance;
    j["maxwell_tolerance"] = c.maxwell_tolerance;
    j["candidate"] = s.candidate;
  } else if (n == "equipartition") {
    j["tolerance"] = c.equipartition_tolerance;
  } else if (n == "canonicality") {
    j["tolerance"] = c.canonicality_tolerance;
  } else if (n == "trilemma") {
    j["choi_dim"] = c.choi_dim;
    j["choi_guard"] = c.choi_guard;
    j["shifts"] = c.shifts;
    j["times"] = c.cp_times;
  } else if (n == "high-temperature") {
    j["temperatures"] = s.temperatures;
  } else if (n == "evolution") {
    if (s.model) j["model"] = *s.model;
    j["backend"] = s.backend;
    ordered_json ini;
    ini["kind"] = s.initial.kind;
    if (s.initial.kind == "coherent") {
      ini["alpha_re"] = s.initial.alpha.real();
      ini["alpha_im"] = s.initial.alpha.imag();
    } else if (s.initial.kind == "gaussian") {
      ini["x"] = s.initial.moments.x;
      ini["p"] = s.initial.moments.p;
      ini["xx"] = s.initial.moments.cov.xx;
      ini["xp"] = s.initial.moments.cov.xp;
      ini["pp"] = s.initial.moments.cov.pp;
    }
    j["initial"] = std::move(ini);
    j["times"] = s.times;
  }
  return j;
}

}  // namespace detail

/// Parse and fully resolve a JSON scenario. Unknown keys, names and over-cap sizes are config errors.
inline Scenario parse_scenario(std::string_view text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text.begin(), text.end());
  } catch (const nlohmann::json::parse_error& e) {
    detail::config_error(std::string("syntax error: ") + e.what());
  }
  if (!root.is_object()) detail::config_error("scenario must be a JSON object");
  detail::reject_unknown(root, {"params", "dim", "guard", "resource_cap", "models", "checks", "outputs", "timing"},
                         "scenario");
  Scenario sc;
  const std::string where = "scenario";
  detail::read_opt(root, "resource_cap", sc.resource_cap, where);
  detail::read_opt(root, "dim", sc.dim, where);
  detail::read_opt(root, "guard", sc.guard, where);
  detail::read_opt(root, "timing", sc.timing, where);
  detail::check_dims(sc.dim, sc.guard, sc.resource_cap, where);
  if (root.contains("params")) sc.params = detail::parse_params(root["params"], sc.params, "params");
  if (!root.contains("models") || !root["models"].is_array() || root["models"].empty())
    detail::config_error("scenario needs a nonempty 'models' list");
  for (const auto& m : root["models"]) sc.models.push_back(detail::parse_model(m, sc.params));
  std::set<std::string> labels;
  for (const auto& m : sc.models)
    if (!labels.insert(m.label).second) detail::config_error("duplicate model label '" + m.label + "'");
  if (!root.contains("checks") || !root["checks"].is_array() || root["checks"].empty())
    detail::config_error("scenario needs a nonempty 'checks' list");
  for (const auto& c : root["checks"]) {
    CheckSpec spec = detail::parse_check(c, sc);
    if (spec.model && !labels.count(*spec.model))
      detail::config_error("evolution model '" + *spec.model + "' is not among the scenario models");
    sc.checks.push_back(std::move(spec));
  }
  if (root.contains("outputs")) {
    const auto& o = root["outputs"];
    if (!o.is_object()) detail::config_error("outputs must be an object");
    detail::reject_unknown(o, {"report", "trajectory"}, "outputs");
    if (o.contains("report") && !o["report"].is_null()) sc.report_path = detail::get_as<std::string>(o, "report", "outputs");
    if (o.contains("trajectory") && !o["trajectory"].is_null())
      sc.trajectory_path = detail::get_as<std::string>(o, "trajectory", "outputs");
  }
  return sc;
}

/// Resolved scenario; parse_scenario(echo.dump()) reproduces it.
inline ordered_json scenario_echo(const Scenario& sc) {
  ordered_json j;
  j["params"] = detail::params_json(sc.params);
  j["dim"] = sc.dim;
  j["guard"] = sc.guard;
  j["resource_cap"] = sc.resource_cap;
  j["models"] = ordered_json::array();
  for (const auto& m : sc.models) j["models"].push_back(detail::model_json(m));
  j["checks"] = ordered_json::array();
  for (const auto& c : sc.checks) j["checks"].push_back(detail::config_echo(c));
  j["outputs"] = {{"report", sc.report_path ? ordered_json(*sc.report_path) : ordered_json(nullptr)},
                  {"trajectory", sc.trajectory_path ? ordered_json(*sc.trajectory_path) : ordered_json(nullptr)}};
  j["timing"] = sc.timing;
  return j;
}

/// Shortest round-trip decimal form (at most 17 significant digits).
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

struct TrajectoryRow {
  double time = 0.0;
  GaussianMoments moments;
  double trace = 1.0;
  double min_eigenvalue = std::numeric_limits<double>::quiet_NaN();
  double truncation_residual = 0.0;
};

inline constexpr const char* kTrajectoryHeader =
    "time\tx_mean\tp_mean\tsigma_xx\tsigma_xp\tsigma_pp\ttrace\tmin_eigenvalue\ttruncation_residual";

inline std::vector<TrajectoryRow> trajectory_rows(const EvolutionResult& res, const FockBasis& basis) {
  const auto [x, p] = build_quadratures(basis);
  std::vector<TrajectoryRow> rows;
  for (std::size_t i = 0; i < res.states.size(); ++i) {
    const CMatrix& rho = res.states[i].matrix();
    TrajectoryRow r;
    r.time = res.times[i];
    r.moments = fock_moments(rho, x.matrix(), p.matrix());
    r.trace = rho.trace().real();
    r.min_eigenvalue = min_hermitian_eigenvalue(rho);
    r.truncation_residual = basis.guard > 0 ? truncation_residual(rho, basis.guard) : 0.0;
    rows.push_back(r);
  }
  return rows;
}

inline std::vector<TrajectoryRow> trajectory_rows(const std::vector<GaussianMoments>& moments,
                                                  const std::vector<double>& times) {
  std::vector<TrajectoryRow> rows;
  for (std::size_t i = 0; i < moments.size(); ++i) {
    TrajectoryRow r;
    r.time = times[i];
    r.moments = moments[i];
    rows.push_back(r);
  }
  return rows;
}

inline std::string format_trajectories(const std::vector<TrajectoryRow>& rows) {
  std::string out = kTrajectoryHeader;
  out += '\n';
  for (const auto& r : rows) {
    const double cols[] = {r.time,          r.moments.x,      r.moments.p,          r.moments.cov.xx, r.moments.cov.xp,
                           r.moments.cov.pp, r.trace, r.min_eigenvalue, r.truncation_residual};
    for (std::size_t k = 0; k < std::size(cols); ++k) {
      if (k) out += '\t';
      out += format_double(cols[k]);
    }
    out += '\n';
  }
  return out;
}

inline void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot open '" + path + "' for writing");
  f << content;
  if (!f) throw Error(ErrorKind::Io, "failed writing '" + path + "'");
}

inline void emit_trajectories(const std::vector<TrajectoryRow>& rows, const std::string& path) {
  write_file(path, format_trajectories(rows));
}

struct Report {
  ordered_json json;
  int exit_code = kExitPass;
  std::vector<TrajectoryRow> trajectory;  // rows of the last evolution check

  /// Canonical text: fixed key order, shortest round-trip floats, trailing newline.
  std::string serialize() const { return json.dump(2) + "\n"; }
};

inline ordered_json verdict_json(const std::string& check, const PropertyVerdict& v) {
  ordered_json j;
  j["check"] = check;
  j["model"] = v.model;
  j["property"] = to_string(v.property);
  j["status"] = !v.applicable ? "not-applicable" : (v.pass ? "pass" : "fail");
  j["residual"] = v.residual;
  j["tolerance"] = v.tolerance;
  j["details"] = v.details;
  return j;
}

inline ordered_json trilemma_json(const TrilemmaReport& t) {
  ordered_json j;
  j["columns"] = {"CP", "TI", "canonical-equilibrium"};
  j["rows"] = ordered_json::array();
  auto cell = [](const TrilemmaCell& c) {
    ordered_json cj;
    cj["status"] = c.error ? "error" : (c.pass ? "pass" : "fail");
    cj["verdicts"] = ordered_json::array();
    for (const auto& v : c.verdicts) cj["verdicts"].push_back(verdict_json("trilemma", v));
    if (c.error) cj["error"] = *c.error;
    return cj;
  };
  for (const auto& r : t.rows) {
    ordered_json rj;
    rj["model"] = r.model;
    rj["potential"] = r.harmonic ? "harmonic" : "free";
    rj["pattern"] = std::string(r.cp.pass ? "pass" : "fail") + "/" + (r.ti.pass ? "pass" : "fail") + "/" +
                    (r.canonical.pass ? "pass" : "fail");
    rj["CP"] = cell(r.cp);
    rj["TI"] = cell(r.ti);
    rj["canonical-equilibrium"] = cell(r.canonical);
    rj["free_particle_exception"] = r.free_particle_exception;
    j["rows"].push_back(std::move(rj));
  }
  j["no_triple_pass_for_harmonic_rows"] = t.no_triple_pass_holds;
  j["metadata"] = t.metadata;
  return j;
}

namespace detail {

inline DensityMatrix initial_fock_state(const InitialState& ini, const MasterEquationModel& model,
                                        const FockBasis& basis) {
  const int n = basis.size();
  if (ini.kind == "vacuum") return ground_state(n);
  if (ini.kind == "coherent") return coherent_state(n, ini.alpha, basis.dim);
  if (ini.kind == "gibbs") {
    if (model.is_free()) throw Error(ErrorKind::Config, "gibbs initial state needs a harmonic model");
    return gibbs_state(n, model.hamiltonian.mass, model.hamiltonian.omega, model.params.temperature);
  }
  throw Error(ErrorKind::Config, "initial state '" + ini.kind + "' needs the moments backend");
}

inline ordered_json run_evolution(const CheckSpec& spec, const MasterEquationModel& model,
                                  std::vector<TrajectoryRow>& rows, std::vector<std::string>& warnings) {
  ordered_json j;
  j["model"] = model.label;
  j["backend"] = spec.backend;
  const FockBasis basis = check_basis(model, spec.config.dim, spec.config.guard, spec.config);
  if (spec.backend == "moments") {
    GaussianMoments m0 = spec.initial.moments;
    if (spec.initial.kind != "gaussian") m0 = fock_moments(initial_fock_state(spec.initial, model, basis), basis);
    const auto traj = evolve_moments(generator_matrices(model), m0, spec.times);
    rows = trajectory_rows(traj, spec.times);
    j["rows"] = rows.size();
    return j;
  }
  const Superoperator sop = assemble(model, basis);
  const DensityMatrix rho0 = initial_fock_state(spec.initial, model, basis);
  const EvolutionResult res = evolve(sop, rho0, spec.times);
  rows = trajectory_rows(res, basis);
  j["method"] = res.method;
  j["rows"] = rows.size();
  j["trace_drift"] = res.trace_drift;
  j["min_eigenvalue"] = res.min_eigenvalue;
  j["truncation_residual"] = res.truncation_residual;
  j["reliable"] = res.reliable;
  if (!res.reliable) warnings.push_back("evolution of '" + model.label + "' flagged unreliable (trace drift or truncation)");
  if (!model.is_free()) {
    const DensityMatrix g = gibbs_state(basis.size(), model.hamiltonian.mass, model.hamiltonian.omega,
                                        model.params.temperature);
    ordered_json dist = ordered_json::array();
    for (const auto& s : res.states) dist.push_back(trace_distance(s, g));
    j["trace_distance_to_gibbs"] = std::move(dist);
  }
  return j;
}

}  // namespace detail

/// Execute every check in declaration order. Failed verdicts are data; only configuration
/// and numerical errors escape as exceptions.
inline Report run(const Scenario& sc) {
  std::vector<MasterEquationModel> models;
  for (const auto& spec : sc.models) models.push_back(spec.build());

  Report report;
  ordered_json& out = report.json;
  out["tool"] = "qbm";
  out["version"] = kToolVersion;
  out["scenario"] = scenario_echo(sc);
  out["verdicts"] = ordered_json::array();
  std::vector<std::string> warnings;
  for (const auto& m : models) {
    for (const auto& w : m.warnings) warnings.push_back(m.label + ": " + w);
  }
  ordered_json assumptions = ordered_json::array();
  for (const auto& m : models)
    for (const auto& a : m.assumptions) assumptions.push_back(m.label + ": " + a);

  ordered_json trilemmas = ordered_json::array();
  ordered_json high_t = ordered_json::array();
  ordered_json evolutions = ordered_json::array();
  std::size_t failed = 0, total = 0;
  auto record = [&](const std::string& check, const PropertyVerdict& v) {
    ++total;
    if (v.failed()) ++failed;
    out["verdicts"].push_back(verdict_json(check, v));
  };

  for (const auto& spec : sc.checks) {
    const CheckConfig& cfg = spec.config;
    const std::string& name = spec.name;
    if (name == "trilemma") {
      const TrilemmaReport t = trilemma(models, cfg);
      for (const auto& r : t.rows)
        for (const TrilemmaCell* c : {&r.cp, &r.ti, &r.canonical}) {
          ++total;
          if (!c->pass) ++failed;
          if (c->error) warnings.push_back(r.model + ": " + *c->error);
        }
      trilemmas.push_back(trilemma_json(t));
      continue;
    }
    if (name == "high-temperature") {
      const auto rows = high_temperature_comparison(sc.params, spec.temperatures, cfg);
      ordered_json hj;
      hj["reference"] = "cl";
      hj["role"] = "standard high-temperature contrast";
      hj["dim"] = cfg.dim;
      hj["guard"] = cfg.guard;
      hj["rows"] = ordered_json::array();
      for (const auto& r : rows)
        hj["rows"].push_back({{"T", r.temperature},
                              {"relative_distance", r.relative_distance ? ordered_json(*r.relative_distance)
                                                                        : ordered_json("not-applicable")},
                              {"coefficient_ratio", r.coefficient_ratio}});
      high_t.push_back(std::move(hj));
      continue;
    }
    if (name == "evolution") {
      std::size_t idx = 0;
      if (spec.model)
        while (models[idx].label != *spec.model) ++idx;
      evolutions.push_back(detail::run_evolution(spec, models[idx], report.trajectory, warnings));
      continue;
    }
    using Batch = std::vector<PropertyVerdict>;
    const auto batches = parallel_map<Batch>(models.size(), [&](std::size_t i) -> Batch {
      const MasterEquationModel& m = models[i];
      if (name == "cp") {
        const CpVerdicts cp = check_cp(m, cfg);
        return {cp.structural, cp.dynamical};
      }
      if (name == "translation-covariance") return {check_translation_covariance(m, cfg)};
      if (name == "rotation-covariance") return {check_rotation_covariance(m, cfg)};
      if (name == "equipartition") return {check_equipartition(m, cfg)};
      if (name == "canonicality") return {check_canonicality(m, cfg)};
      // stationarity
      std::string cand = spec.candidate;
      if (cand == "auto") cand = m.is_free() ? "maxwell-momentum" : "gibbs";
      if (cand == "gibbs" && m.is_free())
        return {not_applicable(Property::Stationarity, m.label, "gibbs candidate needs a harmonic model")};
      if (cand == "maxwell-momentum" && !m.is_free())
        return {not_applicable(Property::Stationarity, m.label, "maxwell-momentum candidate needs a free model")};
      return {check_stationarity(m, cand == "gibbs" ? StationarityCandidate::gibbs()
                                                     : StationarityCandidate::maxwell_momentum(),
                                 cfg)};
    });
    for (const auto& b : batches)
      for (const auto& v : b) record(name, v);
  }
  if (!trilemmas.empty()) out["trilemma"] = trilemmas.size() == 1 ? trilemmas[0] : trilemmas;
  if (!high_t.empty()) out["high_temperature"] = high_t.size() == 1 ? high_t[0] : high_t;
  if (!evolutions.empty()) out["evolution"] = evolutions.size() == 1 ? evolutions[0] : evolutions;
  out["warnings"] = warnings;
  out["assumptions"] = assumptions;
  report.exit_code = failed > 0 ? kExitVerdictFailed : kExitPass;
  out["summary"] = {{"verdicts", total}, {"failed", failed}, {"exit_code", report.exit_code}};
  return report;
}

/// Stationary-state summary for one model: Fock kernel plus the Gaussian prediction.
inline ordered_json stationary_summary(const MasterEquationModel& model, int dim, int guard) {
  ordered_json j;
  j["model"] = model.label;
  const FockBasis basis = model.fock_basis(dim, guard);
  j["dim"] = dim;
  j["guard"] = guard;
  j["basis_omega"] = basis.omega_ref;
  const Superoperator sop = assemble(model, basis);
  const StationaryResult st = stationary_state(sop);
  j["method"] = st.method;
  j["unique"] = st.unique;
  j["degenerate"] = st.degenerate;
  j["kernel_dimension"] = st.kernel.size();
  j["eigenvalue_modulus"] = std::abs(st.eigenvalue);
  j["spectral_gap"] = st.second_modulus;
  if (st.state) {
    const GaussianMoments m = fock_moments(*st.state, basis);
    j["fock_covariance"] = {{"xx", m.cov.xx}, {"xp", m.cov.xp}, {"pp", m.cov.pp}};
    j["min_eigenvalue"] = min_hermitian_eigenvalue(st.state->matrix());
    j["truncation_residual"] = truncation_residual(*st.state, guard);
    j["generator_residual"] = generator_residual(sop, *st.state);
    if (!model.is_free()) {
      const DensityMatrix g =
          gibbs_state(basis.size(), model.hamiltonian.mass, model.hamiltonian.omega, model.params.temperature);
      j["trace_distance_to_gibbs"] = trace_distance(*st.state, g);
    }
  }
  const StationaryCovariance sc = stationary_covariance(generator_matrices(model));
  if (sc.stationary)
    j["lyapunov_covariance"] = {{"xx", sc.cov.xx}, {"xp", sc.cov.xp}, {"pp", sc.cov.pp}};
  else
    j["lyapunov_covariance"] = nullptr;
  j["momentum_fixed_point"] = sc.momentum_fixed_point ? ordered_json(*sc.momentum_fixed_point) : ordered_json(nullptr);
  return j;
}

}  // namespace qbm
