#pragma once

// Property checks over catalog models and the model x property matrix they assemble into.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "qbm/errors.hpp"
#include "qbm/fock.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/liouvillian.hpp"
#include "qbm/models.hpp"
#include "qbm/parallel.hpp"

namespace qbm {

using ordered_json = nlohmann::ordered_json;

enum class Property {
  CpStructural,
  CpDynamical,
  TranslationCovariance,
  RotationCovariance,
  Stationarity,
  Canonicality,
  Equipartition,
};

inline const char* to_string(Property p) {
  switch (p) {
    case Property::CpStructural: return "cp-structural";
    case Property::CpDynamical: return "cp-dynamical";
    case Property::TranslationCovariance: return "translation-covariance";
    case Property::RotationCovariance: return "rotation-covariance";
    case Property::Stationarity: return "stationarity";
    case Property::Canonicality: return "canonicality";
    case Property::Equipartition: return "equipartition";
  }
  return "unknown";
}

struct PropertyVerdict {
  Property property = Property::CpStructural;
  std::string model;
  bool pass = false;
  bool applicable = true;
  double residual = 0.0;
  double tolerance = 0.0;
  ordered_json details = ordered_json::object();

  bool failed() const { return applicable && !pass; }
};

inline PropertyVerdict not_applicable(Property property, const std::string& model, std::string reason) {
  PropertyVerdict v;
  v.property = property;
  v.model = model;
  v.applicable = false;
  v.details["reason"] = std::move(reason);
  return v;
}

struct CheckConfig {
  int dim = 40;
  int guard = 12;
  double translation_tolerance = 1e-6;
  double rotation_tolerance = 1e-8;
  double stationarity_tolerance = 1e-6;
  double canonicality_tolerance = 1e-6;
  double equipartition_tolerance = 1e-8;
  double maxwell_tolerance = 1e-10;
  double choi_tolerance = 1e-8;
  double kossakowski_tolerance = 1e-12;
  std::vector<double> shifts{0.1, 0.3};
  std::vector<double> thetas{M_PI / 7.0, M_PI / 3.0};
  std::vector<double> cp_times{0.05, 0.5, 5.0};
  int choi_dim = 20;
  int choi_guard = 8;
  /// Basis frequency for free models; harmonic models always use their own frequency.
  std::optional<double> basis_omega;
};

inline constexpr double kNormalizationFloor = 1e-12;
inline constexpr double kSampleTruncationLimit = 1e-8;

inline FockBasis check_basis(const MasterEquationModel& model, int dim, int guard, const CheckConfig& cfg) {
  MasterEquationModel m = model;
  if (cfg.basis_omega) m.basis_omega = *cfg.basis_omega;
  return m.fock_basis(dim, guard);
}

struct SampleState {
  std::string name;
  DensityMatrix state;
};

/// Fixed sample family supported on the reported block. The thermal member runs at
/// min(T, w_basis dim / 30) so its tail stays clear of the guard band.
inline std::vector<SampleState> sample_states(const FockBasis& basis, double temperature) {
  const int n = basis.size();
  const int d = basis.dim;
  const double t_sample = std::min(temperature, basis.omega_ref * d / 30.0);
  CMatrix thermal = CMatrix::Zero(n, n);
  thermal.topLeftCorner(d, d).diagonal() = thermal_populations(d, basis.omega_ref, t_sample).cast<cplx>();
  CVector sup = CVector::Zero(n);
  sup(0) = 1.0;
  sup(3) = 1.0;
  std::vector<SampleState> out;
  out.push_back({"vacuum", ground_state(n)});
  out.push_back({"thermal", DensityMatrix::unchecked(std::move(thermal))});
  out.push_back({"coherent(+0.5)", coherent_state(n, cplx(0.5, 0.0), d)});
  out.push_back({"coherent(-0.5i)", coherent_state(n, cplx(0.0, -0.5), d)});
  out.push_back({"superposition(0,3)", pure_state(sup)});
  out.push_back({"mixed(10)", maximally_mixed(n, std::min(10, d))});
  return out;
}

namespace detail {

inline double relative_block_residual(const CMatrix& diff, const CMatrix& reference, int dim) {
  const double num = trace_norm(leading_block(diff, dim));
  const double den = trace_norm(leading_block(reference, dim));
  return den < kNormalizationFloor ? num : num / den;
}

}  // namespace detail

/// Covariance of the translation-invariant part (generator minus external potential)
/// under x -> x + s.
inline PropertyVerdict check_translation_covariance(const MasterEquationModel& model, const CheckConfig& cfg) {
  const FockBasis basis = check_basis(model, cfg.dim, cfg.guard, cfg);
  const Superoperator sop = assemble(model, basis, GeneratorTerms::translation_part());
  const auto samples = sample_states(basis, model.params.temperature);
  PropertyVerdict v;
  v.property = Property::TranslationCovariance;
  v.model = model.label;
  v.tolerance = cfg.translation_tolerance;
  double worst_truncation = 0.0;
  ordered_json per_shift = ordered_json::array();
  for (double s : cfg.shifts) {
    double worst = 0.0;
    if (s != 0.0) {
      const UnitaryOperator u = displacement_unitary(basis, s);
      for (const auto& sample : samples) {
        const CMatrix moved = u.conjugate(sample.state.matrix());
        const double trunc = truncation_residual(moved, basis.guard);
        worst_truncation = std::max(worst_truncation, trunc);
        if (trunc > kSampleTruncationLimit)
          throw Error(ErrorKind::TruncationUnsafe, "sample '" + sample.name + "' shifted by " + format_param(s) +
                                                       " leaks " + format_param(trunc) + " into the guard band");
        const CMatrix image = sop.apply(sample.state.matrix());
        const CMatrix diff = sop.apply(moved) - u.conjugate(image);
        worst = std::max(worst, detail::relative_block_residual(diff, image, basis.dim));
      }
    }
    per_shift.push_back({{"shift", s}, {"residual", worst}});
    v.residual = std::max(v.residual, worst);
  }
  v.pass = v.residual <= v.tolerance;
  v.details["basis_omega"] = basis.omega_ref;
  v.details["dim"] = basis.dim;
  v.details["guard"] = basis.guard;
  v.details["per_shift"] = std::move(per_shift);
  v.details["max_truncation_residual"] = worst_truncation;
  return v;
}

/// Covariance of the dissipator under phase-space rotations a -> a e^{-i theta}.
inline PropertyVerdict check_rotation_covariance(const MasterEquationModel& model, const CheckConfig& cfg) {
  const FockBasis basis = check_basis(model, cfg.dim, cfg.guard, cfg);
  const Superoperator sop = assemble(model, basis, GeneratorTerms::dissipator_only());
  const auto samples = sample_states(basis, model.params.temperature);
  PropertyVerdict v;
  v.property = Property::RotationCovariance;
  v.model = model.label;
  v.tolerance = cfg.rotation_tolerance;
  ordered_json per_theta = ordered_json::array();
  for (double theta : cfg.thetas) {
    double worst = 0.0;
    if (theta != 0.0) {
      const UnitaryOperator r = rotation_unitary(basis.size(), theta);
      for (const auto& sample : samples) {
        const CMatrix moved = r.conjugate(sample.state.matrix());
        const double trunc = truncation_residual(moved, basis.guard);
        if (trunc > kSampleTruncationLimit)
          throw Error(ErrorKind::TruncationUnsafe, "rotated sample '" + sample.name + "' leaks into the guard band");
        const CMatrix image = sop.apply(sample.state.matrix());
        const CMatrix diff = sop.apply(moved) - r.conjugate(image);
        worst = std::max(worst, detail::relative_block_residual(diff, image, basis.dim));
      }
    }
    per_theta.push_back({{"theta", theta}, {"residual", worst}});
    v.residual = std::max(v.residual, worst);
  }
  v.pass = v.residual <= v.tolerance;
  v.details["basis_omega"] = basis.omega_ref;
  v.details["dim"] = basis.dim;
  v.details["per_theta"] = std::move(per_theta);
  return v;
}

struct CpVerdicts {
  PropertyVerdict structural;
  PropertyVerdict dynamical;

  bool pass() const { return structural.pass && dynamical.pass; }
};

/// Structural (Kossakowski PSD) and dynamical (Choi PSD of exp(L t)) complete positivity.
inline CpVerdicts check_cp(const MasterEquationModel& model, const CheckConfig& cfg) {
  for (double t : cfg.cp_times)
    if (!(t > 0.0)) throw Error(ErrorKind::InvalidGrid, "cp times must be positive");
  CpVerdicts out;
  const KossakowskiMatrix k = model_kossakowski(model);
  auto& s = out.structural;
  s.property = Property::CpStructural;
  s.model = model.label;
  s.tolerance = cfg.kossakowski_tolerance;
  s.residual = std::max(0.0, -k.min_eigenvalue);
  s.pass = k.min_eigenvalue >= -cfg.kossakowski_tolerance;
  s.details["min_eigenvalue"] = k.min_eigenvalue;
  s.details["det"] = (k.c(0, 0) * k.c(1, 1) - k.c(0, 1) * k.c(1, 0)).real();

  const FockBasis basis = check_basis(model, cfg.choi_dim, cfg.choi_guard, cfg);
  const Superoperator sop = assemble(model, basis);
  auto& d = out.dynamical;
  d.property = Property::CpDynamical;
  d.model = model.label;
  d.tolerance = cfg.choi_tolerance;
  double worst = std::numeric_limits<double>::infinity();
  ordered_json per_t = ordered_json::array();
  for (double t : cfg.cp_times) {
    const double lo = min_hermitian_eigenvalue(choi_matrix(sop, t));
    per_t.push_back({{"t", t}, {"min_eigenvalue", lo}});
    worst = std::min(worst, lo);
  }
  d.residual = std::max(0.0, -worst);
  d.pass = worst >= -cfg.choi_tolerance;
  d.details["min_eigenvalue"] = worst;
  d.details["per_time"] = std::move(per_t);
  d.details["dim"] = basis.dim;
  d.details["guard"] = basis.guard;
  d.details["basis_omega"] = basis.omega_ref;
  return out;
}

struct StationarityCandidate {
  enum class Kind { Explicit, Gibbs, MaxwellMomentum };
  Kind kind = Kind::Gibbs;
  std::optional<DensityMatrix> state;

  static StationarityCandidate gibbs() { return {Kind::Gibbs, std::nullopt}; }
  static StationarityCandidate maxwell_momentum() { return {Kind::MaxwellMomentum, std::nullopt}; }
  static StationarityCandidate explicit_state(DensityMatrix rho) { return {Kind::Explicit, std::move(rho)}; }
};

/// ||L rho||_1 relative to ||L_H rho||_1 + ||L_D rho||_1, absolute below the floor.
inline double normalized_generator_residual(const MasterEquationModel& model, const FockBasis& basis,
                                            const DensityMatrix& rho) {
  const Superoperator full = assemble(model, basis);
  const Superoperator ham = assemble(model, basis, GeneratorTerms::hamiltonian_only());
  const Superoperator dis = assemble(model, basis, GeneratorTerms::dissipator_only());
  const double num = generator_residual(full, rho);
  const double den = generator_residual(ham, rho) + generator_residual(dis, rho);
  return den < kNormalizationFloor ? num : num / den;
}

inline PropertyVerdict check_stationarity(const MasterEquationModel& model, const StationarityCandidate& candidate,
                                          const CheckConfig& cfg) {
  PropertyVerdict v;
  v.property = Property::Stationarity;
  v.model = model.label;
  if (candidate.kind == StationarityCandidate::Kind::MaxwellMomentum) {
    if (!model.is_free())
      throw Error(ErrorKind::InvalidCandidate, "maxwell-momentum candidate needs a free model (omega = 0)");
    const DriftDiffusion dd = generator_matrices(model);
    const StationaryCovariance sc = stationary_covariance(dd);
    const double mt = model.hamiltonian.mass * model.params.temperature;
    v.tolerance = cfg.maxwell_tolerance;
    v.details["candidate"] = "maxwell-momentum";
    v.details["momentum_drift_x_coupling"] = dd.drift(1, 0);
    v.details["expected_sigma_pp"] = mt;
    if (!sc.momentum_fixed_point) {
      v.residual = std::abs(dd.drift(1, 0));
      v.pass = false;
      v.details["momentum_fixed_point"] = nullptr;
      return v;
    }
    v.details["momentum_fixed_point"] = *sc.momentum_fixed_point;
    v.residual = std::abs(*sc.momentum_fixed_point - mt);
    v.pass = dd.drift(1, 0) == 0.0 && v.residual <= v.tolerance;
    return v;
  }
  const FockBasis basis = check_basis(model, cfg.dim, cfg.guard, cfg);
  DensityMatrix rho = [&] {
    if (candidate.kind == StationarityCandidate::Kind::Explicit) {
      if (!candidate.state) throw Error(ErrorKind::InvalidCandidate, "explicit candidate without a state");
      return *candidate.state;
    }
    if (model.is_free()) throw Error(ErrorKind::InvalidCandidate, "gibbs candidate needs omega > 0");
    return gibbs_state(basis.size(), model.hamiltonian.mass, model.hamiltonian.omega, model.params.temperature);
  }();
  if (rho.dim() != basis.size()) throw Error(ErrorKind::Shape, "candidate does not match dim + guard");
  v.tolerance = cfg.stationarity_tolerance;
  v.residual = normalized_generator_residual(model, basis, rho);
  v.pass = v.residual <= v.tolerance;
  v.details["candidate"] = candidate.kind == StationarityCandidate::Kind::Gibbs ? "gibbs" : "explicit";
  v.details["raw_residual"] = generator_residual(assemble(model, basis), rho);
  v.details["dim"] = basis.dim;
  v.details["guard"] = basis.guard;
  return v;
}

/// Canonical second moments. Classical gaps are reported; only quantum (Gibbs) gaps gate.
inline PropertyVerdict check_equipartition(const MasterEquationModel& model, const CheckConfig& cfg) {
  const DriftDiffusion dd = generator_matrices(model);
  const StationaryCovariance sc = stationary_covariance(dd);
  const double m = model.hamiltonian.mass, w = model.hamiltonian.omega, t = model.params.temperature;
  PropertyVerdict v;
  v.property = Property::Equipartition;
  v.model = model.label;
  v.tolerance = cfg.equipartition_tolerance;
  if (sc.stationary && w > 0.0) {
    const EquipartitionDeltas d = equipartition_deltas(sc.cov, m, w, t);
    v.residual = std::max({std::abs(d.quantum.kinetic), std::abs(d.quantum.potential), std::abs(d.cross)});
    v.pass = v.residual <= v.tolerance;
    v.details["covariance"] = {{"xx", sc.cov.xx}, {"xp", sc.cov.xp}, {"pp", sc.cov.pp}};
    v.details["classical"] = {{"kinetic", d.classical.kinetic}, {"potential", d.classical.potential}};
    v.details["quantum"] = {{"kinetic", d.quantum.kinetic}, {"potential", d.quantum.potential}, {"cross", d.cross}};
    return v;
  }
  if (sc.momentum_fixed_point) {
    const double spp = *sc.momentum_fixed_point;
    v.residual = std::abs(spp - m * t);
    v.pass = v.residual <= v.tolerance;
    v.details["momentum_fixed_point"] = spp;
    v.details["classical"] = {{"kinetic", spp / m - t}, {"potential", nullptr}};
    v.details["quantum"] = {{"kinetic", spp - m * t}, {"potential", nullptr}, {"cross", nullptr}};
    return v;
  }
  return not_applicable(Property::Equipartition, model.label, "no stationary covariance and no momentum fixed point");
}

/// Trace distance between the numerically stationary state and the Gibbs state.
inline PropertyVerdict check_canonicality(const MasterEquationModel& model, const CheckConfig& cfg) {
  if (model.is_free()) return not_applicable(Property::Canonicality, model.label, "free model has no Gibbs state");
  const FockBasis basis = check_basis(model, cfg.dim, cfg.guard, cfg);
  const Superoperator sop = assemble(model, basis);
  const StationaryResult st = stationary_state(sop);
  if (!st.state) {
    auto v = not_applicable(Property::Canonicality, model.label, "degenerate stationary kernel");
    v.details["kernel_dimension"] = st.kernel.size();
    return v;
  }
  const DensityMatrix gibbs =
      gibbs_state(basis.size(), model.hamiltonian.mass, model.hamiltonian.omega, model.params.temperature);
  PropertyVerdict v;
  v.property = Property::Canonicality;
  v.model = model.label;
  v.tolerance = cfg.canonicality_tolerance;
  v.residual = trace_distance(*st.state, gibbs);
  v.pass = v.residual <= v.tolerance;
  const GaussianMoments mom = fock_moments(*st.state, basis);
  v.details["unique"] = st.unique;
  v.details["eigenvalue_modulus"] = std::abs(st.eigenvalue);
  v.details["spectral_gap"] = st.second_modulus;
  v.details["stationary_covariance"] = {{"xx", mom.cov.xx}, {"xp", mom.cov.xp}, {"pp", mom.cov.pp}};
  v.details["truncation_residual"] = truncation_residual(*st.state, basis.guard);
  v.details["dim"] = basis.dim;
  v.details["guard"] = basis.guard;
  return v;
}

struct TrilemmaCell {
  bool pass = false;
  std::vector<PropertyVerdict> verdicts;
  std::optional<std::string> error;  // e.g. truncation-unsafe; the cell then carries no verdict
};

struct TrilemmaRow {
  std::string model;
  bool harmonic = false;
  TrilemmaCell cp;
  TrilemmaCell ti;
  TrilemmaCell canonical;
  bool free_particle_exception = false;

  bool all_pass() const { return cp.pass && ti.pass && canonical.pass; }
};

struct TrilemmaReport {
  std::vector<TrilemmaRow> rows;
  bool no_triple_pass_holds = true;  // over rows with a harmonic potential
  ordered_json metadata = ordered_json::object();
};

namespace detail {

template <typename Fn>
TrilemmaCell guarded_cell(Fn&& fn) {
  TrilemmaCell cell;
  try {
    cell.verdicts = fn();
    cell.pass = !cell.verdicts.empty();
    for (const auto& v : cell.verdicts) cell.pass = cell.pass && v.applicable && v.pass;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::TruncationUnsafe) throw;
    cell.error = e.what();
    cell.pass = false;
  }
  return cell;
}

}  // namespace detail

inline TrilemmaRow trilemma_row(const MasterEquationModel& model, const CheckConfig& cfg) {
  TrilemmaRow row;
  row.model = model.label;
  row.harmonic = !model.is_free();
  row.cp = detail::guarded_cell([&] {
    CpVerdicts cp = check_cp(model, cfg);
    return std::vector<PropertyVerdict>{cp.structural, cp.dynamical};
  });
  row.ti = detail::guarded_cell([&] { return std::vector<PropertyVerdict>{check_translation_covariance(model, cfg)}; });
  row.canonical = detail::guarded_cell([&] {
    if (row.harmonic) return std::vector<PropertyVerdict>{check_canonicality(model, cfg)};
    return std::vector<PropertyVerdict>{check_stationarity(model, StationarityCandidate::maxwell_momentum(), cfg)};
  });
  row.free_particle_exception = !row.harmonic && row.all_pass();
  return row;
}

/// CP x translation invariance x canonical equilibrium for each model.
inline TrilemmaReport trilemma(const std::vector<MasterEquationModel>& models, const CheckConfig& cfg) {
  if (models.empty()) throw Error(ErrorKind::InvalidParameter, "trilemma needs at least one model");
  TrilemmaReport report;
  report.rows = parallel_map<TrilemmaRow>(models.size(), [&](std::size_t i) { return trilemma_row(models[i], cfg); });
  for (const auto& row : report.rows)
    if (row.harmonic && row.all_pass()) report.no_triple_pass_holds = false;
  report.metadata["dim"] = cfg.dim;
  report.metadata["guard"] = cfg.guard;
  report.metadata["choi_dim"] = cfg.choi_dim;
  report.metadata["choi_guard"] = cfg.choi_guard;
  report.metadata["tolerances"] = {{"kossakowski", cfg.kossakowski_tolerance},
                                   {"choi", cfg.choi_tolerance},
                                   {"translation", cfg.translation_tolerance},
                                   {"canonicality", cfg.canonicality_tolerance},
                                   {"maxwell", cfg.maxwell_tolerance}};
  return report;
}

struct HighTemperatureRow {
  double temperature = 0.0;
  std::optional<double> relative_distance;  // empty when CL's open-system part is below the floor
  double coefficient_ratio = 0.0;           // Dxx/Dpp of the diffusive generator
};

/// ||L_VME - L_CL||_F / ||L_CL - L_H||_F along an ascending temperature list at fixed eta.
inline std::vector<HighTemperatureRow> high_temperature_comparison(const ModelParams& params,
                                                                  const std::vector<double>& temperatures,
                                                                  const CheckConfig& cfg) {
  for (std::size_t i = 0; i < temperatures.size(); ++i) {
    if (!(temperatures[i] > 0.0)) throw Error(ErrorKind::InvalidGrid, "temperatures must be positive");
    if (i > 0 && !(temperatures[i] > temperatures[i - 1]))
      throw Error(ErrorKind::InvalidGrid, "temperatures must be ascending");
  }
  const Potential pot = params.omega > 0.0 ? Potential::Harmonic : Potential::Free;
  std::vector<HighTemperatureRow> rows;
  for (double t : temperatures) {
    ModelParams p = params;
    p.temperature = t;
    const double m = p.mass;
    const MasterEquationModel vme =
        p.eta > 0.0 ? vme_diffusive(p, pot) : custom_coefficients(CoefficientForm{}, p, pot, "vme");
    const MasterEquationModel cl =
        p.eta > 0.0 ? custom_coefficients(caldeira_leggett(p), p, pot, "cl") : custom_coefficients(CoefficientForm{}, p, pot, "cl");
    const FockBasis basis = check_basis(vme, cfg.dim, cfg.guard, cfg);
    const Superoperator a = assemble(vme, basis);
    const Superoperator b = assemble(cl, basis);
    HighTemperatureRow row;
    row.temperature = t;
    const CoefficientForm f = coefficient_form(vme).form;
    row.coefficient_ratio = f.dpp > 0.0 ? f.dxx / f.dpp : 1.0 / (16.0 * m * m * t * t);
    // the shared Hamiltonian cancels in the numerator; measure against CL's open-system part only
    const MasterEquationModel bare = custom_coefficients(CoefficientForm{}, p, pot, "bare");
    const double den = SparseCMatrix(b.matrix() - assemble(bare, basis).matrix()).norm();
    if (den >= kNormalizationFloor) {
      const SparseCMatrix diff = a.matrix() - b.matrix();
      row.relative_distance = diff.norm() / den;
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace qbm
