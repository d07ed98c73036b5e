#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "qbm/liouvillian.hpp"

using namespace qbm;

namespace {

ModelParams unitary_params() {
  ModelParams p;
  p.eta = 0.0;
  p.gamma = 0.0;
  return p;
}

std::vector<MasterEquationModel> catalog() {
  const ModelParams p;
  return {make_model("vme-free", p), make_model("vme-ho", p), make_model("rwa", p), make_model("cl", p)};
}

}  // namespace

TEST(Assemble, TracePreserving) {
  for (const auto& m : catalog()) {
    const Superoperator sop = assemble(m, 10, 4);
    const int n = sop.size();
    CVector vec_id = CVector::Zero(static_cast<long>(n) * n);
    for (int i = 0; i < n; ++i) vec_id(i + n * i) = 1.0;
    const CVector left = sop.matrix().adjoint() * vec_id;
    EXPECT_LT(left.cwiseAbs().maxCoeff(), 1e-10) << m.label;
  }
}

TEST(Assemble, PreservesHermiticity) {
  const DensityMatrix rho = coherent_state(14, {0.3, -0.4}, 14);
  for (const auto& m : catalog()) {
    const CMatrix out = assemble(m, 10, 4).apply(rho.matrix());
    EXPECT_LT((out - out.adjoint()).cwiseAbs().maxCoeff(), 1e-12) << m.label;
  }
}

TEST(Assemble, UnitarySpectrumIsImaginary) {
  for (const auto& m : {vme_diffusive(unitary_params(), Potential::Harmonic), rwa_optical(unitary_params())}) {
    const Superoperator sop = assemble(m, 8, 4);
    Eigen::ComplexEigenSolver<CMatrix> es(sop.dense(), false);
    EXPECT_LT(es.eigenvalues().real().cwiseAbs().maxCoeff(), 1e-8) << m.label;
  }
}

TEST(Assemble, TwoLevelCoherenceDecay) {
  ModelParams p;
  p.temperature = 1e-6;  // nbar = 0
  const auto m = rwa_optical(p);
  // one guard level: a bare two-level cut of x^2 + p^2 makes both levels degenerate
  const Superoperator sop = assemble(m, FockBasis{2, 1, 1.0, 1.0});
  Eigen::ComplexEigenSolver<CMatrix> es(sop.dense(), false);
  double best = 1e300;
  for (int i = 0; i < es.eigenvalues().size(); ++i)
    best = std::min(best, std::abs(es.eigenvalues()(i) - cplx(-0.05, -1.0)));
  EXPECT_LT(best, 1e-12);
}

TEST(Assemble, ResourceCap) {
  try {
    assemble(make_model("rwa", ModelParams{}), 200, 12);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Resource);
  }
}

TEST(Evolve, TimeZeroReturnsInitialState) {
  const Superoperator sop = assemble(make_model("vme-ho", ModelParams{}), 10, 4);
  const DensityMatrix rho0 = coherent_state(14, {0.5, 0.1}, 10);
  const auto res = evolve(sop, rho0, {0.0});
  EXPECT_EQ((res.states[0].matrix() - rho0.matrix()).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Evolve, BackendsAgree) {
  // 20 levels exercise the dense exponential, 40 the Taylor path; compare the retained block.
  const auto m = make_model("vme-ho", ModelParams{});
  const auto dense = evolve(assemble(m, 20, 8), coherent_state(28, {0.4, 0.0}, 20), {0.5, 2.0});
  const auto taylor = evolve(assemble(m, 20, 20), coherent_state(40, {0.4, 0.0}, 20), {0.5, 2.0});
  EXPECT_EQ(dense.method, "dense-exponential");
  EXPECT_EQ(taylor.method, "taylor-expmv");
  for (int k = 0; k < 2; ++k) {
    const CMatrix a = dense.states[k].matrix().topLeftCorner(12, 12);
    const CMatrix b = taylor.states[k].matrix().topLeftCorner(12, 12);
    EXPECT_LT((a - b).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Evolve, RwaRelaxesToGibbs) {
  const auto m = make_model("rwa", ModelParams{});
  const Superoperator sop = assemble(m, 20, 8);
  const DensityMatrix g = gibbs_state(28, 1.0, 1.0, 1.0);
  const auto res = evolve(sop, ground_state(28), {0.0, 10.0, 50.0, 200.0 / 0.1});
  EXPECT_LE(trace_distance(res.states.back(), g), 1e-8);
  for (std::size_t i = 1; i < res.states.size(); ++i)
    EXPECT_LE(trace_distance(res.states[i], g), trace_distance(res.states[i - 1], g) + 1e-12);
  EXPECT_TRUE(res.reliable);
}

TEST(Evolve, VmeHarmonicMovesGibbs) {
  const auto m = make_model("vme-ho", ModelParams{});
  const Superoperator sop = assemble(m, 20, 8);
  const DensityMatrix g = gibbs_state(28, 1.0, 1.0, 1.0);
  const auto res = evolve(sop, g, {1.0});
  EXPECT_GT(trace_distance(res.states[0], g), 1e-4);
}

TEST(Evolve, PositiveAndNormalizedForCpModels) {
  for (const auto& name : {"vme-ho", "rwa"}) {
    const auto m = make_model(name, ModelParams{});
    const auto res = evolve(assemble(m, 20, 8), coherent_state(28, {0.7, 0.2}, 20), {0.1, 1.0, 5.0});
    EXPECT_LT(res.trace_drift, 1e-10) << name;
    EXPECT_GT(res.min_eigenvalue, -1e-8) << name;
  }
}

TEST(Evolve, RejectsBadGrid) {
  const Superoperator sop = assemble(make_model("rwa", ModelParams{}), 6, 2);
  EXPECT_THROW(evolve(sop, ground_state(8), {1.0, 0.5}), Error);
  EXPECT_THROW(evolve(sop, ground_state(7), {1.0}), Error);
}

TEST(Stationary, RwaIsGibbs) {
  const Superoperator sop = assemble(make_model("rwa", ModelParams{}), 40, 12);
  const auto st = stationary_state(sop);
  ASSERT_TRUE(st.state.has_value());
  EXPECT_TRUE(st.unique);
  EXPECT_LE(trace_distance(*st.state, gibbs_state(52, 1.0, 1.0, 1.0)), 1e-8);
  EXPECT_LE(generator_residual(sop, *st.state), 1e-8);
  EXPECT_LE(generator_residual(sop, gibbs_state(52, 1.0, 1.0, 1.0)), 1e-8);
}

TEST(Stationary, VmeHarmonicMatchesLyapunov) {
  const auto m = make_model("vme-ho", ModelParams{});
  const FockBasis basis = m.fock_basis(50, 12);
  const Superoperator sop = assemble(m, basis);
  const auto st = stationary_state(sop);
  ASSERT_TRUE(st.state.has_value());
  EXPECT_TRUE(st.unique);
  const auto mom = fock_moments(*st.state, basis);
  EXPECT_NEAR(mom.cov.xx, 1.065, 1e-4 * 1.065);
  EXPECT_NEAR(mom.cov.xp, -0.0125, 1e-4 * 1.065);
  EXPECT_NEAR(mom.cov.pp, 1.0625, 1e-4 * 1.0625);
  EXPECT_LE(generator_residual(sop, *st.state), 1e-8);
  EXPECT_GT(generator_residual(sop, gibbs_state(62, 1.0, 1.0, 1.0)), 1e-3);
}

TEST(Stationary, UnitaryOscillatorKernelIsDegenerate) {
  const auto m = vme_diffusive(unitary_params(), Potential::Harmonic);
  const auto st = stationary_state(assemble(m, 6, 2));
  EXPECT_TRUE(st.degenerate);
  EXPECT_FALSE(st.unique);
  EXPECT_FALSE(st.state.has_value());
  // Kernel = commutant of H: sum of squared multiplicities. The cut top level of
  // x^2 + p^2 loses half a quantum and collides with a lower level.
  const auto [xo, po] = build_quadratures(m.fock_basis(6, 2));
  const CMatrix h = 0.5 * (po.matrix() * po.matrix() + xo.matrix() * xo.matrix());
  std::size_t expected = 0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) expected += std::abs(h(i, i).real() - h(j, j).real()) < 1e-12;
  EXPECT_EQ(expected, 10u);
  EXPECT_EQ(st.kernel.size(), expected);
}

TEST(Choi, NearIdentityMapIsRankOneProjector) {
  const Superoperator sop = assemble(make_model("rwa", ModelParams{}), 4, 2);
  const CMatrix choi = choi_matrix(sop, 1e-12);
  const int n = sop.size();
  CVector omega = CVector::Zero(n * n);
  for (int i = 0; i < n; ++i) omega(i * n + i) = 1.0;
  EXPECT_LT((choi - omega * omega.adjoint()).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_GE(min_hermitian_eigenvalue(choi), -1e-10);
}

TEST(Choi, DiscriminatesCp) {
  const Superoperator rwa = assemble(make_model("rwa", ModelParams{}), 20, 8);
  EXPECT_GE(min_hermitian_eigenvalue(choi_matrix(rwa, 0.5)), -1e-8);
  const Superoperator cl = assemble(make_model("cl", ModelParams{}), 20, 8);
  EXPECT_LT(min_hermitian_eigenvalue(choi_matrix(cl, 0.05)), -1e-4);
}

TEST(Choi, PartialTraceIsIdentity) {
  const Superoperator sop = assemble(make_model("vme-ho", ModelParams{}), 5, 2);
  const int n = sop.size();
  const CMatrix choi = choi_matrix(sop, 0.3);
  // trace over the output factor leaves the identity on the input factor
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      cplx s = 0.0;
      for (int a = 0; a < n; ++a) s += choi(i * n + a, j * n + a);
      EXPECT_NEAR(std::abs(s - cplx(i == j ? 1.0 : 0.0, 0.0)), 0.0, 1e-10);
    }
}

TEST(Moments, GeneratorMatchesFockDerivative) {
  for (const auto& m : catalog()) {
    const FockBasis basis = m.fock_basis(30, 10);
    const auto [xo, po] = build_quadratures(basis);
    const CMatrix& x = xo.matrix();
    const CMatrix& p = po.matrix();
    const Superoperator sop = assemble(m, basis);
    const auto dd = generator_matrices(m);
    const DensityMatrix rho = coherent_state(basis.size(), {0.6, -0.3}, basis.dim);
    const CMatrix drho = sop.apply(rho.matrix());
    const auto mom = fock_moments(rho, basis);
    const Eigen::Vector2d mean(mom.x, mom.p);
    const Eigen::Vector2d dmean = dd.drift * mean;
    EXPECT_NEAR((drho * x).trace().real(), dmean(0), 1e-8) << m.label;
    EXPECT_NEAR((drho * p).trace().real(), dmean(1), 1e-8) << m.label;
  }
}
