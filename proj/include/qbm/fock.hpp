#pragma once

// Truncated number-basis operators and states. Natural units: hbar = k_B = 1.

#include <algorithm>
#include <cmath>
#include <complex>
#include <utility>

#include <Eigen/Dense>
#include <unsupported/Eigen/MatrixFunctions>

#include "qbm/errors.hpp"

namespace qbm {

using cplx = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr cplx kI{0.0, 1.0};

/// Default guard band: max(8, dim/5) extra levels above the reported block.
inline int default_guard(int dim) { return std::max(8, dim / 5); }

/// A truncated Fock space: `dim` reported levels plus `guard` levels that absorb
/// truncation leakage. Quadratures are scaled by the basis oscillator (mass, omega_ref).
struct FockBasis {
  int dim = 40;
  int guard = 12;
  double mass = 1.0;
  double omega_ref = 1.0;

  int size() const { return dim + guard; }
};

class FockOperator {
 public:
  FockOperator() = default;
  explicit FockOperator(CMatrix entries) : entries_(std::move(entries)) {
    if (entries_.rows() != entries_.cols() || entries_.rows() < 1)
      throw Error(ErrorKind::Shape, "operator matrix must be square and non-empty");
  }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const CMatrix& matrix() const { return entries_; }

  bool is_hermitian(double tol = 1e-12) const {
    return (entries_ - entries_.adjoint()).cwiseAbs().maxCoeff() <= tol;
  }

  FockOperator adjoint() const { return FockOperator(entries_.adjoint()); }

 private:
  CMatrix entries_;
};

struct DensityCheck {
  double hermiticity = 0.0;   // max |rho - rho^dagger|
  double trace_error = 0.0;   // |tr rho - 1|
  double min_eigenvalue = 0.0;

  bool valid() const {
    return hermiticity <= 1e-12 && trace_error <= 1e-10 && min_eigenvalue >= -1e-10;
  }
};

inline DensityCheck inspect_density(const CMatrix& rho) {
  DensityCheck c;
  c.hermiticity = (rho - rho.adjoint()).cwiseAbs().maxCoeff();
  c.trace_error = std::abs(rho.trace() - cplx(1.0, 0.0));
  const CMatrix herm = 0.5 * (rho + rho.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  c.min_eigenvalue = es.eigenvalues().minCoeff();
  return c;
}

/// A state. `make` enforces Hermiticity, unit trace and positivity; states produced by
/// non-CP dynamics are carried through `unchecked` so negative eigenvalues stay visible.
class DensityMatrix {
 public:
  static DensityMatrix make(CMatrix entries) {
    if (entries.rows() != entries.cols() || entries.rows() < 1)
      throw Error(ErrorKind::Shape, "density matrix must be square and non-empty");
    const DensityCheck c = inspect_density(entries);
    if (!c.valid())
      throw Error(ErrorKind::InvalidParameter,
                  "not a density matrix (hermiticity " + std::to_string(c.hermiticity) +
                      ", trace error " + std::to_string(c.trace_error) + ", min eigenvalue " +
                      std::to_string(c.min_eigenvalue) + ")");
    return DensityMatrix(std::move(entries));
  }

  static DensityMatrix unchecked(CMatrix entries) {
    if (entries.rows() != entries.cols() || entries.rows() < 1)
      throw Error(ErrorKind::Shape, "density matrix must be square and non-empty");
    return DensityMatrix(std::move(entries));
  }

  int dim() const { return static_cast<int>(entries_.rows()); }
  const CMatrix& matrix() const { return entries_; }

  Eigen::VectorXd populations() const { return entries_.diagonal().real(); }

  double expectation(const CMatrix& op) const { return (entries_ * op).trace().real(); }

 private:
  explicit DensityMatrix(CMatrix entries) : entries_(std::move(entries)) {}
  CMatrix entries_;
};

enum class UnitaryKind { Displacement, Rotation };

class UnitaryOperator {
 public:
  UnitaryOperator(CMatrix entries, UnitaryKind kind) : entries_(std::move(entries)), kind_(kind) {}

  int dim() const { return static_cast<int>(entries_.rows()); }
  const CMatrix& matrix() const { return entries_; }
  UnitaryKind kind() const { return kind_; }

  /// U rho U^dagger
  CMatrix conjugate(const CMatrix& rho) const { return entries_ * rho * entries_.adjoint(); }

 private:
  CMatrix entries_;
  UnitaryKind kind_;
};

/// Annihilation and creation operators, a[n-1, n] = sqrt(n).
inline std::pair<FockOperator, FockOperator> build_ladder(int dim) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "ladder operators need dim >= 2");
  CMatrix a = CMatrix::Zero(dim, dim);
  for (int n = 1; n < dim; ++n) a(n - 1, n) = std::sqrt(static_cast<double>(n));
  CMatrix ad = a.adjoint();
  return {FockOperator(std::move(a)), FockOperator(std::move(ad))};
}

/// x = (a + a^dagger)/sqrt(2 M w), p = i sqrt(M w / 2)(a^dagger - a).
inline std::pair<FockOperator, FockOperator> build_quadratures(int dim, double mass, double omega_ref) {
  if (!(mass > 0.0) || !(omega_ref > 0.0))
    throw Error(ErrorKind::InvalidParameter, "quadratures need positive mass and basis frequency");
  auto [a, ad] = build_ladder(dim);
  CMatrix x = (a.matrix() + ad.matrix()) / std::sqrt(2.0 * mass * omega_ref);
  CMatrix p = kI * std::sqrt(mass * omega_ref / 2.0) * (ad.matrix() - a.matrix());
  return {FockOperator(std::move(x)), FockOperator(std::move(p))};
}

inline std::pair<FockOperator, FockOperator> build_quadratures(const FockBasis& basis) {
  return build_quadratures(basis.size(), basis.mass, basis.omega_ref);
}

/// Thermal populations exp(-w n / T) of the oscillator, normalized over `levels`.
inline Eigen::VectorXd thermal_populations(int levels, double omega, double temperature) {
  Eigen::VectorXd pop(levels);
  const double ratio = std::exp(-omega / temperature);
  double q = 1.0;
  for (int n = 0; n < levels; ++n) {
    pop(n) = q;
    q *= ratio;
  }
  return pop / pop.sum();
}

/// exp(-H/T)/Z for the harmonic oscillator, truncated to dim levels.
inline DensityMatrix gibbs_state(int dim, double mass, double omega, double temperature) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "gibbs state needs dim >= 2");
  if (!(mass > 0.0) || !(omega > 0.0))
    throw Error(ErrorKind::InvalidParameter, "gibbs state needs positive mass and frequency");
  if (!(temperature > 0.0))
    throw Error(ErrorKind::InvalidParameter,
                "gibbs state needs T > 0; request the ground state explicitly for T = 0");
  CMatrix rho = CMatrix::Zero(dim, dim);
  rho.diagonal() = thermal_populations(dim, omega, temperature).cast<cplx>();
  return DensityMatrix::unchecked(std::move(rho));
}

inline DensityMatrix number_state(int dim, int n) {
  if (n < 0 || n >= dim) throw Error(ErrorKind::InvalidParameter, "number state outside truncation");
  CMatrix rho = CMatrix::Zero(dim, dim);
  rho(n, n) = 1.0;
  return DensityMatrix::unchecked(std::move(rho));
}

inline DensityMatrix ground_state(int dim) { return number_state(dim, 0); }

inline DensityMatrix pure_state(CVector psi) {
  psi /= psi.norm();
  return DensityMatrix::unchecked(psi * psi.adjoint());
}

/// Coherent state built from its Fock amplitudes on the leading `levels` levels of a dim-level space.
inline DensityMatrix coherent_state(int dim, cplx alpha, int levels) {
  levels = std::min(levels, dim);
  CVector psi = CVector::Zero(dim);
  cplx amp = std::exp(-0.5 * std::norm(alpha));
  for (int n = 0; n < levels; ++n) {
    psi(n) = amp;
    amp *= alpha / std::sqrt(static_cast<double>(n + 1));
  }
  return pure_state(std::move(psi));
}

/// Uniform mixture of the leading `levels` number states.
inline DensityMatrix maximally_mixed(int dim, int levels) {
  if (levels < 1 || levels > dim) throw Error(ErrorKind::InvalidParameter, "mixture support outside truncation");
  CMatrix rho = CMatrix::Zero(dim, dim);
  for (int n = 0; n < levels; ++n) rho(n, n) = 1.0 / levels;
  return DensityMatrix::unchecked(std::move(rho));
}

/// Largest shift whose coherent displacement stays well inside the reported block.
inline double safe_shift_limit(const FockBasis& basis) {
  return 0.1 * std::sqrt(static_cast<double>(basis.dim)) / std::sqrt(2.0 * basis.mass * basis.omega_ref);
}

/// U = exp(-i s p): conjugation U^dagger x U = x + s on the non-guard block.
inline UnitaryOperator displacement_unitary(const FockBasis& basis, double shift) {
  if (std::abs(shift) > safe_shift_limit(basis))
    throw Error(ErrorKind::TruncationUnsafe,
                "shift " + std::to_string(shift) + " exceeds safe limit " +
                    std::to_string(safe_shift_limit(basis)));
  const int n = basis.size();
  if (shift == 0.0) return UnitaryOperator(CMatrix::Identity(n, n), UnitaryKind::Displacement);
  const auto [x, p] = build_quadratures(basis);
  CMatrix gen = -kI * shift * p.matrix();
  return UnitaryOperator(gen.exp(), UnitaryKind::Displacement);
}

/// R = exp(-i theta a^dagger a); number-diagonal, so exact under truncation.
inline UnitaryOperator rotation_unitary(int dim, double theta) {
  if (dim < 2) throw Error(ErrorKind::InvalidDimension, "rotation needs dim >= 2");
  CMatrix r = CMatrix::Zero(dim, dim);
  for (int n = 0; n < dim; ++n) {
    const double phase = std::fmod(theta * n, 2.0 * M_PI);
    r(n, n) = std::polar(1.0, -phase);
  }
  return UnitaryOperator(std::move(r), UnitaryKind::Rotation);
}

/// Sum of singular values.
inline double trace_norm(const CMatrix& m) {
  Eigen::BDCSVD<CMatrix> svd(m);
  return svd.singularValues().sum();
}

inline double trace_distance(const DensityMatrix& rho, const DensityMatrix& sigma) {
  if (rho.dim() != sigma.dim())
    throw Error(ErrorKind::Shape, "trace distance between states of different dimension");
  return 0.5 * trace_norm(rho.matrix() - sigma.matrix());
}

/// Total population in the top `guard` levels.
inline double truncation_residual(const CMatrix& rho, int guard) {
  const int n = static_cast<int>(rho.rows());
  if (guard < 1 || guard >= n) throw Error(ErrorKind::InvalidParameter, "guard must lie in [1, dim)");
  double sum = 0.0;
  for (int k = n - guard; k < n; ++k) sum += std::abs(rho(k, k).real());
  return sum;
}

inline double truncation_residual(const DensityMatrix& rho, int guard) {
  return truncation_residual(rho.matrix(), guard);
}

/// Leading dim x dim block of an operator on the full (dim + guard) space.
inline CMatrix leading_block(const CMatrix& m, int dim) { return m.topLeftCorner(dim, dim); }

}  // namespace qbm
