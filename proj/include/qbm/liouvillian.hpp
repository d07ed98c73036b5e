#pragma once

// Superoperators on column-stacked density matrices: vec(A rho B) = (B^T (x) A) vec(rho).
// Generators are stored sparse; quadratic models couple only neighbouring Fock levels.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "qbm/errors.hpp"
#include "qbm/fock.hpp"
#include "qbm/gaussian.hpp"
#include "qbm/models.hpp"

namespace qbm {

using SparseCMatrix = Eigen::SparseMatrix<cplx>;

inline constexpr int kDefaultResourceCap = 6400;
inline constexpr int kDenseExponentialCap = 1024;
inline constexpr int kDenseEigenCap = 2500;

/// Which pieces of a model's generator to assemble.
struct GeneratorTerms {
  bool kinetic = true;
  bool potential = true;
  bool correction = true;  // (kappa/2)(xp + px)
  bool dissipator = true;

  static GeneratorTerms all() { return {}; }
  static GeneratorTerms dissipator_only() { return {false, false, false, true}; }
  static GeneratorTerms hamiltonian_only() { return {true, true, true, false}; }
  /// Everything except the external potential.
  static GeneratorTerms translation_part() { return {true, false, true, true}; }
};

class Superoperator {
 public:
  Superoperator(SparseCMatrix generator, FockBasis basis) : gen_(std::move(generator)), basis_(basis) {}

  /// Hilbert dimension the generator acts on (reported block plus guard band).
  int size() const { return basis_.size(); }
  const FockBasis& basis() const { return basis_; }
  const SparseCMatrix& matrix() const { return gen_; }

  CMatrix apply(const CMatrix& rho) const {
    const int n = size();
    if (rho.rows() != n || rho.cols() != n) throw Error(ErrorKind::Shape, "state does not match generator");
    CVector v = Eigen::Map<const CVector>(rho.data(), n * n);
    CVector out = gen_ * v;
    return Eigen::Map<CMatrix>(out.data(), n, n);
  }

  CMatrix dense() const { return CMatrix(gen_); }

  double norm1() const {
    double best = 0.0;
    for (int k = 0; k < gen_.outerSize(); ++k) {
      double col = 0.0;
      for (SparseCMatrix::InnerIterator it(gen_, k); it; ++it) col += std::abs(it.value());
      best = std::max(best, col);
    }
    return best;
  }

  double frobenius_norm() const { return gen_.norm(); }

 private:
  SparseCMatrix gen_;
  FockBasis basis_;
};

namespace detail {

inline SparseCMatrix sparse(const CMatrix& m) { return m.sparseView(); }

inline SparseCMatrix kron(const CMatrix& a, const CMatrix& b) {
  SparseCMatrix out = Eigen::kroneckerProduct(sparse(a), sparse(b));
  return out;
}

/// A rho
inline SparseCMatrix left(const CMatrix& a) { return kron(CMatrix::Identity(a.rows(), a.cols()), a); }
/// rho B
inline SparseCMatrix right(const CMatrix& b) {
  return kron(b.transpose(), CMatrix::Identity(b.rows(), b.cols()));
}
/// A rho B
inline SparseCMatrix sandwich(const CMatrix& a, const CMatrix& b) { return kron(b.transpose(), a); }

inline SparseCMatrix commutator(const CMatrix& a) { return left(a) - right(a); }

}  // namespace detail

/// Build the generator of `model` on basis.dim + basis.guard levels.
inline Superoperator assemble(const MasterEquationModel& model, const FockBasis& basis,
                              GeneratorTerms terms = GeneratorTerms::all(), int resource_cap = kDefaultResourceCap) {
  const int n = basis.size();
  if (basis.dim < 2 || basis.guard < 0) throw Error(ErrorKind::InvalidDimension, "need dim >= 2 and guard >= 0");
  if (static_cast<long>(n) * n > resource_cap)
    throw Error(ErrorKind::Resource, "(dim + guard)^2 = " + std::to_string(static_cast<long>(n) * n) +
                                         " exceeds cap " + std::to_string(resource_cap));
  const auto [xo, po] = build_quadratures(basis);
  const CMatrix& x = xo.matrix();
  const CMatrix& p = po.matrix();
  const auto& h = model.hamiltonian;

  CMatrix ham = CMatrix::Zero(n, n);
  if (terms.kinetic) ham += p * p / (2.0 * h.mass);
  if (terms.potential) ham += 0.5 * h.mass * h.omega * h.omega * (x * x);
  if (terms.correction) ham += 0.5 * h.kappa * (x * p + p * x);

  SparseCMatrix gen = -kI * detail::commutator(ham);

  if (terms.dissipator) {
    for (const auto& ch : model.channels) {
      const CMatrix l = ch.cx * x + ch.cp * p;
      const CMatrix ldl = l.adjoint() * l;
      gen += detail::kron(l.conjugate(), l) - 0.5 * detail::left(ldl) - 0.5 * detail::right(ldl);
    }
    if (model.coefficients) {
      const auto& f = *model.coefficients;
      const CMatrix xp = x * p, px = p * x, xx = x * x, pp = p * p;
      // -i eta [x,{p,rho}]
      if (f.eta != 0.0) {
        SparseCMatrix fr = detail::left(xp) + detail::sandwich(x, p) - detail::sandwich(p, x) - detail::right(px);
        gen += -kI * f.eta * fr;
      }
      if (f.dpp != 0.0)
        gen -= f.dpp * (detail::left(xx) - 2.0 * detail::sandwich(x, x) + detail::right(xx));
      if (f.dxx != 0.0)
        gen -= f.dxx * (detail::left(pp) - 2.0 * detail::sandwich(p, p) + detail::right(pp));
      if (f.dxp != 0.0) {
        SparseCMatrix xpc = detail::left(xp) - detail::sandwich(x, p) - detail::sandwich(p, x) + detail::right(px);
        SparseCMatrix pxc = detail::left(px) - detail::sandwich(p, x) - detail::sandwich(x, p) + detail::right(xp);
        gen += f.dxp * (xpc + pxc);
      }
    }
  }
  gen.prune(cplx(0.0, 0.0));
  gen.makeCompressed();
  return Superoperator(std::move(gen), basis);
}

inline Superoperator assemble(const MasterEquationModel& model, int dim, int guard,
                              GeneratorTerms terms = GeneratorTerms::all()) {
  return assemble(model, model.fock_basis(dim, guard), terms);
}

/// Trace norm of L(rho).
inline double generator_residual(const Superoperator& sop, const DensityMatrix& rho) {
  if (rho.dim() != sop.size()) throw Error(ErrorKind::Shape, "state does not match generator");
  return trace_norm(sop.apply(rho.matrix()));
}

/// exp(L t) v by a scaled Taylor series; the number of terms adapts to the requested accuracy.
inline CVector expmv(const SparseCMatrix& gen, const CVector& v, double t, double norm1) {
  if (t == 0.0) return v;
  constexpr double kStepNorm = 4.0;
  const int steps = std::max(1, static_cast<int>(std::ceil(norm1 * std::abs(t) / kStepNorm)));
  const double h = t / steps;
  CVector state = v;
  CVector term(v.size());
  for (int s = 0; s < steps; ++s) {
    term = state;
    CVector sum = state;
    const double scale_floor = 1e-17;
    for (int k = 1; k < 200; ++k) {
      term = (gen * term) * (h / k);
      sum += term;
      const double tn = term.cwiseAbs().maxCoeff();
      if (k > kStepNorm && tn <= scale_floor * sum.cwiseAbs().maxCoeff()) break;
    }
    state = std::move(sum);
  }
  return state;
}

inline double min_hermitian_eigenvalue(const CMatrix& m) {
  const CMatrix herm = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

struct EvolutionResult {
  std::vector<double> times;
  std::vector<DensityMatrix> states;
  double trace_drift = 0.0;
  double min_eigenvalue = 0.0;  // most negative eigenvalue observed
  double truncation_residual = 0.0;
  bool reliable = true;
  std::string method;
};

inline constexpr double kTraceDriftLimit = 1e-8;
inline constexpr double kTruncationLimit = 1e-8;

inline EvolutionResult evolve(const Superoperator& sop, const DensityMatrix& rho0, const std::vector<double>& times) {
  const int n = sop.size();
  if (rho0.dim() != n) throw Error(ErrorKind::Shape, "initial state does not match generator");
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!std::isfinite(times[i]) || times[i] < 0.0) throw Error(ErrorKind::InvalidGrid, "times must be nonnegative");
    if (i > 0 && !(times[i] >= times[i - 1])) throw Error(ErrorKind::InvalidGrid, "times must be ascending");
  }
  EvolutionResult res;
  res.times = times;
  const long big = static_cast<long>(n) * n;
  const bool dense = big <= kDenseExponentialCap;
  res.method = dense ? "dense-exponential" : "taylor-expmv";
  CMatrix ldense;
  if (dense) ldense = sop.dense();
  const double norm1 = sop.norm1();
  const int guard = sop.basis().guard;

  CVector v = Eigen::Map<const CVector>(rho0.matrix().data(), big);
  double t_prev = 0.0;
  double cached_dt = -1.0;  // uniform grids reuse one exponential
  CMatrix step;
  for (double t : times) {
    const double dt = t - t_prev;
    if (dt > 0.0) {
      if (dense) {
        if (dt != cached_dt) {
          step = (ldense * dt).exp();
          cached_dt = dt;
        }
        v = step * v;
      } else {
        v = expmv(sop.matrix(), v, dt, norm1);
      }
    }
    t_prev = t;
    CMatrix rho = Eigen::Map<const CMatrix>(v.data(), n, n);
    if (dt > 0.0) rho = 0.5 * (rho + rho.adjoint()).eval();
    res.trace_drift = std::max(res.trace_drift, std::abs(rho.trace() - cplx(1.0, 0.0)));
    res.min_eigenvalue = std::min(res.min_eigenvalue, min_hermitian_eigenvalue(rho));
    if (guard > 0) res.truncation_residual = std::max(res.truncation_residual, truncation_residual(rho, guard));
    res.states.push_back(DensityMatrix::unchecked(std::move(rho)));
  }
  res.reliable = res.trace_drift <= kTraceDriftLimit && res.truncation_residual <= kTruncationLimit;
  return res;
}

struct StationaryResult {
  std::optional<DensityMatrix> state;  // empty when the kernel is degenerate
  bool unique = false;
  bool degenerate = false;
  cplx eigenvalue{0.0, 0.0};
  double second_modulus = 0.0;
  std::vector<CMatrix> kernel;  // every kernel vector found, reshaped
  std::string method;
};

inline constexpr double kKernelTolerance = 1e-8;
inline constexpr double kUniquenessGap = 1e-6;

namespace detail {

inline DensityMatrix normalize_kernel_vector(const CVector& v, int n) {
  CMatrix rho = Eigen::Map<const CMatrix>(v.data(), n, n);
  const cplx tr = rho.trace();
  if (std::abs(tr) < 1e-300) throw Error(ErrorKind::Numerical, "kernel vector has zero trace");
  rho *= std::conj(tr) / std::abs(tr);
  rho = 0.5 * (rho + rho.adjoint()).eval();
  rho /= rho.trace().real();
  return DensityMatrix::unchecked(std::move(rho));
}

inline StationaryResult dense_kernel(const Superoperator& sop) {
  const int n = sop.size();
  const CMatrix l = sop.dense();
  Eigen::BDCSVD<CMatrix> svd(l, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  StationaryResult res;
  res.method = "dense-svd";
  const long big = sv.size();
  for (long k = big - 1; k >= 0; --k) {
    if (sv(k) > kKernelTolerance) break;
    CVector v = svd.matrixV().col(k);
    res.kernel.push_back(Eigen::Map<const CMatrix>(v.data(), n, n));
  }
  if (res.kernel.empty())
    throw Error(ErrorKind::NoStationaryState,
                "smallest singular value " + std::to_string(sv(big - 1)) + " exceeds kernel tolerance");
  res.eigenvalue = 0.0;
  res.second_modulus = big >= 2 ? sv(big - 2) : 0.0;
  res.degenerate = res.kernel.size() > 1;
  res.unique = !res.degenerate && res.second_modulus > kUniquenessGap;
  if (!res.degenerate) {
    CVector v = svd.matrixV().col(big - 1);
    res.state = normalize_kernel_vector(v, n);
  }
  return res;
}

}  // namespace detail

/// Kernel of the generator by shift-invert subspace iteration. A degenerate kernel is
/// reported, never resolved; small degenerate problems are re-solved densely to list it in full.
inline StationaryResult stationary_state(const Superoperator& sop) {
  const int n = sop.size();
  const long big = static_cast<long>(n) * n;
  constexpr double kShift = 1e-3;
  constexpr int kBlock = 4;

  SparseCMatrix shifted = sop.matrix();
  SparseCMatrix ident(big, big);
  ident.setIdentity();
  shifted -= kShift * ident;
  Eigen::SparseLU<SparseCMatrix, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(shifted);
  lu.factorize(shifted);
  if (lu.info() != Eigen::Success) {
    if (big <= kDenseEigenCap) return detail::dense_kernel(sop);
    throw Error(ErrorKind::Numerical, "shift-invert factorization failed");
  }

  std::mt19937_64 rng(0x5eed);
  std::normal_distribution<double> normal;
  CMatrix block(big, kBlock);
  for (long i = 0; i < big; ++i)
    for (int j = 0; j < kBlock; ++j) block(i, j) = cplx(normal(rng), normal(rng));
  auto orthonormalize = [&](const CMatrix& m) {
    Eigen::HouseholderQR<CMatrix> qr(m);
    return CMatrix(qr.householderQ() * CMatrix::Identity(big, kBlock));
  };
  CMatrix q = orthonormalize(block);

  const double scale = std::max(1.0, sop.norm1());
  Eigen::VectorXcd ritz;
  CMatrix ritz_vectors;
  double prev_second = -1.0;
  bool converged = false;
  for (int iter = 0; iter < 300 && !converged; ++iter) {
    CMatrix y = lu.solve(q);
    q = orthonormalize(y);
    const CMatrix lq = sop.matrix() * q;
    const CMatrix proj = q.adjoint() * lq;
    Eigen::ComplexEigenSolver<CMatrix> es(proj);
    std::vector<int> order(kBlock);
    for (int i = 0; i < kBlock; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return std::abs(es.eigenvalues()(a)) < std::abs(es.eigenvalues()(b)); });
    ritz.resize(kBlock);
    ritz_vectors.resize(big, kBlock);
    for (int i = 0; i < kBlock; ++i) {
      ritz(i) = es.eigenvalues()(order[i]);
      ritz_vectors.col(i) = q * es.eigenvectors().col(order[i]);
      ritz_vectors.col(i).normalize();
    }
    const double resid = (sop.matrix() * ritz_vectors.col(0) - ritz(0) * ritz_vectors.col(0)).norm();
    const double second = std::abs(ritz(1));
    const bool second_settled = prev_second >= 0.0 && std::abs(second - prev_second) <= 1e-6 * std::max(second, 1e-6);
    converged = iter >= 2 && resid <= 1e-13 * scale && second_settled;
    prev_second = second;
  }

  StationaryResult res;
  res.method = "shift-invert";
  res.eigenvalue = ritz(0);
  res.second_modulus = std::abs(ritz(1));
  int near_zero = 0;
  for (int i = 0; i < kBlock; ++i)
    if (std::abs(ritz(i)) <= kKernelTolerance) ++near_zero;
  if (near_zero == 0)
    throw Error(ErrorKind::NoStationaryState,
                "smallest generator eigenvalue modulus " + std::to_string(std::abs(ritz(0))) + " exceeds 1e-8");
  if (near_zero > 1) {
    if (big <= kDenseEigenCap) return detail::dense_kernel(sop);
    res.degenerate = true;
    res.unique = false;
    for (int i = 0; i < near_zero; ++i) {
      CVector v = ritz_vectors.col(i);
      res.kernel.push_back(Eigen::Map<const CMatrix>(v.data(), n, n));
    }
    return res;
  }
  res.unique = res.second_modulus > kUniquenessGap;
  CVector v = ritz_vectors.col(0);
  res.kernel.push_back(Eigen::Map<const CMatrix>(v.data(), n, n));
  res.state = detail::normalize_kernel_vector(v, n);
  return res;
}

/// Choi matrix sum_ij |i><j| (x) Phi_t(|i><j|) of Phi_t = exp(L t).
inline CMatrix choi_matrix(const Superoperator& sop, double t) {
  if (!(t > 0.0)) throw Error(ErrorKind::InvalidParameter, "choi matrix needs t > 0");
  const int n = sop.size();
  const CMatrix prop = (sop.dense() * t).exp();
  CMatrix choi(n * n, n * n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int a = 0; a < n; ++a)
        for (int b = 0; b < n; ++b) choi(i * n + a, j * n + b) = prop(a + n * b, i + n * j);
  return choi;
}

/// Phase-space moments of a Fock state.
inline GaussianMoments fock_moments(const CMatrix& rho, const CMatrix& x, const CMatrix& p) {
  GaussianMoments m;
  const auto ev = [&](const CMatrix& op) { return (rho * op).trace().real(); };
  m.x = ev(x);
  m.p = ev(p);
  m.cov.xx = ev(x * x) - m.x * m.x;
  m.cov.pp = ev(p * p) - m.p * m.p;
  m.cov.xp = 0.5 * ev(x * p + p * x) - m.x * m.p;
  return m;
}

inline GaussianMoments fock_moments(const DensityMatrix& rho, const FockBasis& basis) {
  const auto [x, p] = build_quadratures(basis);
  return fock_moments(rho.matrix(), x.matrix(), p.matrix());
}

}  // namespace qbm
