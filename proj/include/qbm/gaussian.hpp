#pragma once

// First and second phase-space moments of quadratic models with linear channels.
// Means obey d<r>/dt = A <r>; the symmetrized covariance obeys dS/dt = A S + S A^T + D.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qbm/errors.hpp"
#include "qbm/models.hpp"

namespace qbm {

struct Covariance {
  double xx = 0.0;
  double xp = 0.0;
  double pp = 0.0;

  double det() const { return xx * pp - xp * xp; }
  Eigen::Matrix2d matrix() const { return (Eigen::Matrix2d() << xx, xp, xp, pp).finished(); }
  static Covariance from(const Eigen::Matrix2d& s) { return {s(0, 0), 0.5 * (s(0, 1) + s(1, 0)), s(1, 1)}; }
};

struct GaussianMoments {
  double x = 0.0;
  double p = 0.0;
  Covariance cov;

  /// Robertson-Schroedinger bound at hbar = 1.
  bool quantum_valid() const { return cov.xx > 0.0 && cov.pp > 0.0 && cov.det() >= 0.25 - 1e-10; }
};

struct DriftDiffusion {
  Eigen::Matrix2d drift;
  Eigen::Matrix2d diffusion;
};

/// Moment generator of a model: A = J (G - Im C), D = J Re(C) J^T, with G the Hamiltonian
/// quadratic form (including the effective kappa) and C the Kossakowski matrix over (x, p).
inline DriftDiffusion generator_matrices(const MasterEquationModel& model) {
  const auto& h = model.hamiltonian;
  const auto rep = coefficient_form(model);
  const auto& f = rep.form;
  for (double v : {h.mass, h.omega, h.kappa, f.eta, f.dpp, f.dxx, f.dxp})
    if (!std::isfinite(v)) throw Error(ErrorKind::Unsupported, "non-finite model coefficient");
  for (const auto& ch : model.channels)
    if (!std::isfinite(std::abs(ch.cx)) || !std::isfinite(std::abs(ch.cp)))
      throw Error(ErrorKind::Unsupported, "non-finite channel coefficient");
  if (!(h.mass > 0.0)) throw Error(ErrorKind::Unsupported, "non-positive mass");

  const Eigen::Matrix2cd c = kossakowski(f).c;
  const double kappa = rep.kappa + f.eta;
  Eigen::Matrix2d g;
  g << h.mass * h.omega * h.omega, kappa, kappa, 1.0 / h.mass;
  Eigen::Matrix2d j;
  j << 0.0, 1.0, -1.0, 0.0;
  DriftDiffusion dd;
  dd.drift = j * (g - c.imag());
  dd.diffusion = j * c.real() * j.transpose();
  dd.diffusion = 0.5 * (dd.diffusion + dd.diffusion.transpose()).eval();
  return dd;
}

/// Moments at each requested time, from the closed-form propagator. The covariance
/// integral int_0^t e^{As} D e^{A^T s} ds comes from one 4x4 exponential (Van Loan).
inline std::vector<GaussianMoments> evolve_moments(const DriftDiffusion& dd, const GaussianMoments& m0,
                                                   const std::vector<double>& times) {
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0)
      throw Error(ErrorKind::InvalidGrid, "times must be finite and nonnegative");
    if (i > 0 && !(times[i] >= times[i - 1])) throw Error(ErrorKind::InvalidGrid, "times must be ascending");
  }
  const Eigen::Vector2d mean0(m0.x, m0.p);
  const Eigen::Matrix2d s0 = m0.cov.matrix();
  std::vector<GaussianMoments> out;
  out.reserve(times.size());
  for (double t : times) {
    if (t == 0.0) {
      out.push_back(m0);
      continue;
    }
    Eigen::Matrix4d block = Eigen::Matrix4d::Zero();
    block.topLeftCorner<2, 2>() = dd.drift * t;
    block.topRightCorner<2, 2>() = dd.diffusion * t;
    block.bottomRightCorner<2, 2>() = -dd.drift.transpose() * t;
    const Eigen::Matrix4d e = block.exp();
    const Eigen::Matrix2d prop = e.topLeftCorner<2, 2>();
    const Eigen::Matrix2d noise = e.topRightCorner<2, 2>() * prop.transpose();
    const Eigen::Vector2d mean = prop * mean0;
    const Eigen::Matrix2d s = prop * s0 * prop.transpose() + noise;
    out.push_back({mean(0), mean(1), Covariance::from(0.5 * (s + s.transpose()))});
  }
  return out;
}

inline constexpr double kHurwitzThreshold = 1e-12;
inline constexpr double kLyapunovResidual = 1e-10;

struct StationaryCovariance {
  bool stationary = false;
  Covariance cov;
  double residual = 0.0;  // ||A S + S A^T + D||_F, when stationary
  /// Eigenvectors of A whose eigenvalue real part is >= -threshold.
  std::vector<Eigen::Vector2cd> non_contracting;
  std::vector<cplx> non_contracting_eigenvalues;
  /// Fixed point of d sigma_pp/dt when the momentum row is autonomous and contracting.
  std::optional<double> momentum_fixed_point;
};

inline double lyapunov_residual(const DriftDiffusion& dd, const Covariance& cov) {
  const Eigen::Matrix2d s = cov.matrix();
  return (dd.drift * s + s * dd.drift.transpose() + dd.diffusion).norm();
}

inline StationaryCovariance stationary_covariance(const DriftDiffusion& dd) {
  StationaryCovariance out;
  const Eigen::Matrix2d& a = dd.drift;
  Eigen::EigenSolver<Eigen::Matrix2d> es(a);
  bool hurwitz = true;
  for (int i = 0; i < 2; ++i) {
    if (es.eigenvalues()(i).real() >= -kHurwitzThreshold) {
      hurwitz = false;
      out.non_contracting.push_back(es.eigenvectors().col(i));
      out.non_contracting_eigenvalues.push_back(es.eigenvalues()(i));
    }
  }
  if (hurwitz) {
    // unknowns (sxx, sxp, spp)
    Eigen::Matrix3d m;
    m << 2.0 * a(0, 0), 2.0 * a(0, 1), 0.0,
        a(1, 0), a(0, 0) + a(1, 1), a(0, 1),
        0.0, 2.0 * a(1, 0), 2.0 * a(1, 1);
    const Eigen::Vector3d rhs(-dd.diffusion(0, 0), -dd.diffusion(0, 1), -dd.diffusion(1, 1));
    const Eigen::Vector3d s = m.fullPivLu().solve(rhs);
    out.stationary = true;
    out.cov = {s(0), s(1), s(2)};
    out.residual = lyapunov_residual(dd, out.cov);
    if (!(out.residual <= kLyapunovResidual))
      throw Error(ErrorKind::Numerical, "Lyapunov residual " + std::to_string(out.residual) + " above contract");
    return out;
  }
  if (a(1, 0) == 0.0 && a(1, 1) < -kHurwitzThreshold)
    out.momentum_fixed_point = -dd.diffusion(1, 1) / (2.0 * a(1, 1));
  return out;
}

/// Covariance of exp(-H/T)/Z for the oscillator.
inline Covariance gibbs_covariance(double mass, double omega, double temperature) {
  if (!(mass > 0.0) || !(omega > 0.0) || !(temperature > 0.0))
    throw Error(ErrorKind::InvalidParameter, "gibbs covariance needs M, omega, T > 0");
  const double coth = 1.0 / std::tanh(omega / (2.0 * temperature));
  return {coth / (2.0 * mass * omega), 0.0, 0.5 * mass * omega * coth};
}

struct EquipartitionGap {
  double kinetic = 0.0;
  double potential = 0.0;
};

struct EquipartitionDeltas {
  EquipartitionGap classical;  // (spp/M - T, M w^2 sxx - T)
  EquipartitionGap quantum;    // (spp - spp_gibbs, sxx - sxx_gibbs)
  double cross = 0.0;          // sxp - 0
};

inline EquipartitionDeltas equipartition_deltas(const Covariance& cov, double mass, double omega,
                                                double temperature) {
  const Covariance g = gibbs_covariance(mass, omega, temperature);
  EquipartitionDeltas d;
  d.classical = {cov.pp / mass - temperature, mass * omega * omega * cov.xx - temperature};
  d.quantum = {cov.pp - g.pp, cov.xx - g.xx};
  d.cross = cov.xp;
  return d;
}

}  // namespace qbm
