#pragma once

// Master-equation catalog. Every model is a quadratic Hamiltonian
//   H = p^2/2M + M w^2 x^2/2 + (kappa/2)(xp + px)
// plus a dissipator that is either a set of channels linear in (x, p) or, for
// generators outside Lindblad form, the double-commutator coefficient form
//   -i eta [x,{p,rho}] - Dpp [x,[x,rho]] - Dxx [p,[p,rho]] + Dxp ([x,[p,rho]] + [p,[x,rho]]).

#include <cmath>
#include <cstdio>
#include <complex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "qbm/errors.hpp"
#include "qbm/fock.hpp"

namespace qbm {

enum class Potential { Free, Harmonic };

struct ModelParams {
  double mass = 1.0;
  double temperature = 1.0;
  double eta = 0.1;
  double omega = 1.0;
  double gamma = 0.1;
  std::optional<double> m_gas;

  void validate() const {
    if (!(mass > 0.0) || !std::isfinite(mass)) throw Error(ErrorKind::InvalidParameter, "M must be positive");
    if (!(temperature > 0.0) || !std::isfinite(temperature))
      throw Error(ErrorKind::InvalidParameter, "T must be positive");
    if (!(eta >= 0.0) || !std::isfinite(eta)) throw Error(ErrorKind::InvalidParameter, "eta must be nonnegative");
    if (!(omega >= 0.0) || !std::isfinite(omega)) throw Error(ErrorKind::InvalidParameter, "omega must be nonnegative");
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw Error(ErrorKind::InvalidParameter, "gamma must be nonnegative");
    if (m_gas && !(*m_gas > 0.0)) throw Error(ErrorKind::InvalidParameter, "m_gas must be positive");
  }

  /// The diffusive construction assumes m_gas/M << 1; flag ratios above 0.1.
  bool brownian_limit_warning() const { return m_gas && *m_gas / mass > 0.1; }
};

struct Hamiltonian {
  double mass = 1.0;
  double omega = 0.0;
  double kappa = 0.0;
};

/// L = cx x + cp p
struct Channel {
  cplx cx;
  cplx cp;
};

struct CoefficientForm {
  double eta = 0.0;
  double dpp = 0.0;
  double dxx = 0.0;
  double dxp = 0.0;
};

struct MasterEquationModel {
  std::string label;
  Hamiltonian hamiltonian;
  std::vector<Channel> channels;
  std::optional<CoefficientForm> coefficients;  // set only for coefficient-only models
  ModelParams params;
  /// Basis frequency used for the Fock quadratures when the model has no potential.
  double basis_omega = 1.0;
  std::vector<std::string> warnings;
  std::vector<std::string> assumptions;

  bool is_free() const { return hamiltonian.omega == 0.0; }
  bool coefficient_only() const { return coefficients.has_value(); }

  FockBasis fock_basis(int dim, int guard) const {
    return FockBasis{dim, guard, hamiltonian.mass, is_free() ? basis_omega : hamiltonian.omega};
  }
};

struct KossakowskiMatrix {
  Eigen::Matrix2cd c;  // over the operator basis (x, p)
  double min_eigenvalue = 0.0;
  bool cp = false;
};

inline constexpr double kKossakowskiTolerance = 1e-12;

inline double min_eigenvalue_2x2(const Eigen::Matrix2cd& c) {
  const double a = c(0, 0).real();
  const double d = c(1, 1).real();
  const double off = std::abs(c(0, 1));
  return 0.5 * (a + d) - std::sqrt(0.25 * (a - d) * (a - d) + off * off);
}

/// C = [[2Dpp, -2Dxp - i eta], [-2Dxp + i eta, 2Dxx]]; CP iff C is PSD.
inline KossakowskiMatrix kossakowski(const CoefficientForm& f) {
  KossakowskiMatrix k;
  k.c << cplx(2.0 * f.dpp, 0.0), cplx(-2.0 * f.dxp, -f.eta), cplx(-2.0 * f.dxp, f.eta), cplx(2.0 * f.dxx, 0.0);
  k.min_eigenvalue = min_eigenvalue_2x2(k.c);
  k.cp = k.min_eigenvalue >= -kKossakowskiTolerance;
  return k;
}

/// Kossakowski matrix of a channel set: C = sum_k c_k c_k^dagger with c_k = (cx, cp).
inline Eigen::Matrix2cd channel_kossakowski(const std::vector<Channel>& channels) {
  Eigen::Matrix2cd c = Eigen::Matrix2cd::Zero();
  for (const auto& ch : channels) {
    Eigen::Vector2cd v(ch.cx, ch.cp);
    c += v * v.adjoint();
  }
  return c;
}

/// A model expressed in double-commutator form. Channel models pick up
/// kappa -> kappa - eta because the channel dissipator carries a hidden (eta/2)(xp+px).
struct CoefficientRepresentation {
  CoefficientForm form;
  double kappa = 0.0;
};

inline CoefficientRepresentation coefficient_form(const MasterEquationModel& model) {
  if (model.coefficients) return {*model.coefficients, model.hamiltonian.kappa};
  const Eigen::Matrix2cd c = channel_kossakowski(model.channels);
  CoefficientForm f;
  f.dpp = 0.5 * c(0, 0).real();
  f.dxx = 0.5 * c(1, 1).real();
  f.dxp = -0.5 * c(0, 1).real();
  f.eta = -c(0, 1).imag();
  return {f, model.hamiltonian.kappa - f.eta};
}

inline KossakowskiMatrix model_kossakowski(const MasterEquationModel& model) {
  return kossakowski(coefficient_form(model).form);
}

inline double thermal_occupation(double omega, double temperature) {
  return 1.0 / std::expm1(omega / temperature);
}

inline std::string format_param(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

/// Translation-covariant Brownian generator in its diffusive limit:
/// one channel alpha x + i beta p with alpha beta = eta at the minimal-noise boundary.
inline MasterEquationModel vme_diffusive(const ModelParams& params, Potential potential) {
  params.validate();
  if (potential == Potential::Harmonic && !(params.omega > 0.0))
    throw Error(ErrorKind::InvalidParameter, "harmonic vme needs omega > 0");
  const double m = params.mass, t = params.temperature, eta = params.eta;
  MasterEquationModel model;
  model.label = potential == Potential::Free ? "vme-free" : "vme-ho";
  model.params = params;
  model.hamiltonian = {m, potential == Potential::Free ? 0.0 : params.omega, eta};
  model.params.omega = model.hamiltonian.omega;
  const double alpha = 2.0 * std::sqrt(eta * m * t);
  const double beta = 0.5 * std::sqrt(eta / (m * t));
  if (eta > 0.0) model.channels.push_back({cplx(alpha, 0.0), cplx(0.0, beta)});
  model.assumptions.push_back("diffusive limit saturates the CP bound: Dxx = eta/(8 M T)");
  if (params.brownian_limit_warning())
    model.warnings.push_back("brownian-limit: m_gas/M = " + format_param(*params.m_gas / m) +
                             " exceeds 0.1; the diffusive construction assumes m_gas/M << 1");
  return model;
}

/// Quantum-optical generator in the rotating-wave approximation.
inline MasterEquationModel rwa_optical(const ModelParams& params) {
  params.validate();
  if (!(params.omega > 0.0)) throw Error(ErrorKind::InvalidParameter, "rwa needs omega > 0");
  const double m = params.mass, w = params.omega, g = params.gamma;
  const double nbar = thermal_occupation(w, params.temperature);
  MasterEquationModel model;
  model.label = "rwa";
  model.params = params;
  model.hamiltonian = {m, w, 0.0};
  const cplx ax(std::sqrt(m * w / 2.0), 0.0);
  const cplx ap(0.0, 1.0 / std::sqrt(2.0 * m * w));
  const double down = std::sqrt(g * (nbar + 1.0));
  if (g > 0.0) model.channels.push_back({down * ax, down * ap});
  if (g > 0.0 && nbar > 0.0) {
    const double up = std::sqrt(g * nbar);
    model.channels.push_back({up * ax, -up * ap});
  }
  if (params.brownian_limit_warning())
    model.warnings.push_back("brownian-limit: m_gas/M = " + format_param(*params.m_gas / m) + " exceeds 0.1");
  return model;
}

/// High-temperature Brownian coefficients with no position diffusion.
inline CoefficientForm caldeira_leggett(const ModelParams& params) {
  params.validate();
  return {params.eta, 2.0 * params.eta * params.mass * params.temperature, 0.0, 0.0};
}

/// Build a model from coefficients. PSD Kossakowski matrices are factorized into channels
/// (with kappa += eta); anything else stays a coefficient-only model flagged not-CP.
inline MasterEquationModel custom_coefficients(const CoefficientForm& form, const ModelParams& params,
                                               Potential potential, std::string label = "custom") {
  params.validate();
  if (!(form.dpp >= 0.0) || !(form.dxx >= 0.0))
    throw Error(ErrorKind::InvalidParameter, "Dpp and Dxx must be nonnegative");
  if (!std::isfinite(form.eta) || !std::isfinite(form.dxp))
    throw Error(ErrorKind::InvalidParameter, "coefficients must be finite");
  if (potential == Potential::Harmonic && !(params.omega > 0.0))
    throw Error(ErrorKind::InvalidParameter, "harmonic potential needs omega > 0");
  MasterEquationModel model;
  model.label = std::move(label);
  model.params = params;
  model.hamiltonian = {params.mass, potential == Potential::Free ? 0.0 : params.omega, 0.0};
  model.params.omega = model.hamiltonian.omega;
  const KossakowskiMatrix k = kossakowski(form);
  if (k.cp) {
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(k.c);
    const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
    for (int i = 1; i >= 0; --i) {
      const double lambda = es.eigenvalues()(i);
      if (lambda <= 1e-14 * scale) continue;
      Eigen::Vector2cd v = es.eigenvectors().col(i);
      // fix the channel phase so the leading nonzero component is real positive
      const int lead = std::abs(v(0)) > 1e-14 ? 0 : 1;
      v *= std::conj(v(lead)) / std::abs(v(lead));
      v *= std::sqrt(lambda);
      model.channels.push_back({v(0), v(1)});
    }
    model.hamiltonian.kappa = form.eta;
  } else {
    model.coefficients = form;
    model.warnings.push_back("not-cp: Kossakowski matrix has negative eigenvalue " +
                             format_param(k.min_eigenvalue));
  }
  if (params.brownian_limit_warning())
    model.warnings.push_back("brownian-limit: m_gas/M = " + format_param(*params.m_gas / params.mass) +
                             " exceeds 0.1");
  return model;
}

/// Insert a harmonic potential into a free model, leaving the dissipator and kappa untouched.
inline MasterEquationModel harmonic_extrapolation(const MasterEquationModel& model, double omega) {
  if (!(omega > 0.0)) throw Error(ErrorKind::InvalidParameter, "extrapolation needs omega > 0");
  if (!model.is_free()) throw Error(ErrorKind::InvalidParameter, "model already has a potential");
  MasterEquationModel out = model;
  out.hamiltonian.omega = omega;
  out.params.omega = omega;
  out.label = model.label + "+ho(omega=" + format_param(omega) + ")";
  return out;
}

struct CatalogEntry {
  std::string_view name;
  std::string_view description;
};

inline constexpr CatalogEntry kCatalog[] = {
    {"vme-free", "translation-covariant Brownian generator, diffusive limit, free particle"},
    {"vme-ho", "vme-free with a harmonic potential inserted"},
    {"rwa", "quantum-optical generator in the rotating-wave approximation"},
    {"cl", "Caldeira-Leggett high-temperature generator (no position diffusion, not CP)"},
    {"custom", "user-supplied coefficients (eta, Dpp, Dxx, Dxp)"},
};

inline bool is_catalog_name(std::string_view name) {
  for (const auto& e : kCatalog)
    if (e.name == name) return true;
  return false;
}

/// Named catalog models (everything except "custom", which needs coefficients).
inline MasterEquationModel make_model(std::string_view name, const ModelParams& params) {
  if (name == "vme-free") return vme_diffusive(params, Potential::Free);
  if (name == "vme-ho") return vme_diffusive(params, Potential::Harmonic);
  if (name == "rwa") return rwa_optical(params);
  if (name == "cl") {
    const Potential pot = params.omega > 0.0 ? Potential::Harmonic : Potential::Free;
    return custom_coefficients(caldeira_leggett(params), params, pot, "cl");
  }
  if (name == "custom") throw Error(ErrorKind::Config, "model 'custom' needs a coefficient block");
  throw Error(ErrorKind::Config, "unknown model '" + std::string(name) + "'");
}

}  // namespace qbm
