// qbm: run scenarios, print the trilemma, inspect stationary states.

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"

#include "qbm/report.hpp"

namespace {

using namespace qbm;

int exit_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::InvalidParameter:
    case ErrorKind::InvalidDimension:
    case ErrorKind::InvalidGrid:
    case ErrorKind::Resource:
    case ErrorKind::Io:
      return kExitConfig;
    default:
      return kExitNumerical;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorKind::Io, "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int finish(Scenario sc, const std::string& out, const std::string& traj, bool timing) {
  if (!out.empty()) sc.report_path = out;
  if (!traj.empty()) sc.trajectory_path = traj;
  sc.timing = sc.timing || timing;
  const auto start = std::chrono::steady_clock::now();
  Report rep = run(sc);
  if (sc.timing)
    rep.json["timing"] = {{"wall_seconds",
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count()}};
  if (sc.trajectory_path) {
    if (rep.trajectory.empty()) throw Error(ErrorKind::Config, "trajectory output requested without an evolution check");
    emit_trajectories(rep.trajectory, *sc.trajectory_path);
  }
  if (sc.report_path)
    write_file(*sc.report_path, rep.serialize());
  else
    std::cout << rep.serialize();
  for (const auto& w : rep.json["warnings"]) std::cerr << "warning: " << w.get<std::string>() << "\n";
  return rep.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum Brownian motion master equations: models, property checks, reports"};
  app.require_subcommand(1);

  std::string scenario_path, out, traj;
  bool timing = false;
  auto* run_cmd = app.add_subcommand("run", "Run a JSON scenario");
  run_cmd->add_option("scenario", scenario_path, "Scenario file")->required();
  run_cmd->add_option("--out", out, "Report path (default: stdout)");
  run_cmd->add_option("--traj", traj, "Trajectory path for the evolution check");
  run_cmd->add_flag("--timing", timing, "Add wall-clock timing to the report");

  int dim = 40, guard = 12;
  auto* tri_cmd = app.add_subcommand("trilemma", "CP / translation / canonical matrix for vme-ho, rwa, cl");
  tri_cmd->add_option("--dim", dim, "Retained Fock levels");
  tri_cmd->add_option("--guard", guard, "Guard levels");
  tri_cmd->add_option("--out", out, "Report path (default: stdout)");

  std::string model_name;
  auto* st_cmd = app.add_subcommand("stationary", "Stationary state of one catalog model");
  st_cmd->add_option("model", model_name, "Catalog model")->required();
  st_cmd->add_option("--dim", dim, "Retained Fock levels");
  st_cmd->add_option("--guard", guard, "Guard levels");

  std::string property;
  std::map<std::string, double> overrides;
  double tolerance = -1.0;
  auto* check_cmd = app.add_subcommand("check", "One property check on one catalog model");
  check_cmd->add_option("property", property, "cp, translation-covariance, rotation-covariance, stationarity, "
                                              "equipartition or canonicality")
      ->required();
  check_cmd->add_option("model", model_name, "Catalog model")->required();
  check_cmd->add_option("--dim", dim, "Retained Fock levels");
  check_cmd->add_option("--guard", guard, "Guard levels");
  check_cmd->add_option("--tolerance", tolerance, "Verdict tolerance");
  for (const char* k : {"M", "T", "eta", "omega", "gamma", "m_gas"})
    check_cmd->add_option_function<double>(std::string("--") + k, [&overrides, k](double v) { overrides[k] = v; },
                                           std::string("Model parameter ") + k);

  auto* list_cmd = app.add_subcommand("list-models", "Print the model catalog");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*list_cmd) {
      for (const auto& e : kCatalog) std::printf("%-10s %s\n", std::string(e.name).c_str(), std::string(e.description).c_str());
      return kExitPass;
    }
    if (*run_cmd) return finish(parse_scenario(read_file(scenario_path)), out, traj, timing);
    if (*tri_cmd) {
      ordered_json s = {{"dim", dim}, {"guard", guard}, {"models", {"vme-ho", "rwa", "cl"}}, {"checks", {"trilemma"}}};
      return finish(parse_scenario(s.dump()), out, "", false);
    }
    if (*st_cmd) {
      ordered_json s = {{"dim", dim}, {"guard", guard}, {"models", {model_name}}, {"checks", {"canonicality"}}};
      const Scenario sc = parse_scenario(s.dump());
      std::cout << stationary_summary(sc.models[0].build(), dim, guard).dump(2) << "\n";
      return kExitPass;
    }
    if (*check_cmd) {
      if (property == "trilemma" || property == "high-temperature" || property == "evolution")
        throw Error(ErrorKind::Config, "'" + property + "' is a scenario check; use 'run'");
      ordered_json params = ordered_json::object();
      for (const auto& [k, v] : overrides) params[k] = v;
      ordered_json check = {{"name", property}};
      if (tolerance >= 0.0) check["tolerance"] = tolerance;
      ordered_json s = {{"params", params}, {"dim", dim}, {"guard", guard}, {"models", {model_name}},
                        {"checks", {check}}};
      return finish(parse_scenario(s.dump()), "", "", false);
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.kind()) << "]: " << e.what() << "\n";
    return exit_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitPass;
}
