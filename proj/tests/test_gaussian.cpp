#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "qbm/gaussian.hpp"

using namespace qbm;

namespace {

ModelParams unit_params() { return ModelParams{}; }

// Classic RK4 on the covariance ODE, independent of the closed-form propagator.
Eigen::Matrix2d integrate_covariance(const DriftDiffusion& dd, Eigen::Matrix2d s, double t_end, double dt) {
  auto f = [&](const Eigen::Matrix2d& x) -> Eigen::Matrix2d {
    return dd.drift * x + x * dd.drift.transpose() + dd.diffusion;
  };
  const int steps = static_cast<int>(std::lround(t_end / dt));
  for (int i = 0; i < steps; ++i) {
    const Eigen::Matrix2d k1 = f(s);
    const Eigen::Matrix2d k2 = f(s + 0.5 * dt * k1);
    const Eigen::Matrix2d k3 = f(s + 0.5 * dt * k2);
    const Eigen::Matrix2d k4 = f(s + dt * k3);
    s += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  }
  return s;
}

GaussianMoments vacuum_moments() { return {0.0, 0.0, {0.5, 0.0, 0.5}}; }

}  // namespace

TEST(GeneratorMatrices, VmeFreeParticle) {
  const auto dd = generator_matrices(vme_diffusive(unit_params(), Potential::Free));
  Eigen::Matrix2d a, d;
  a << 0.0, 1.0, 0.0, -0.2;
  d << 0.025, 0.0, 0.0, 0.4;
  EXPECT_LT((dd.drift - a).norm(), 1e-14);
  EXPECT_LT((dd.diffusion - d).norm(), 1e-14);
}

TEST(GeneratorMatrices, FrictionlessFreeParticleIsUnitary) {
  ModelParams p = unit_params();
  p.eta = 0.0;
  p.mass = 2.0;
  const auto dd = generator_matrices(vme_diffusive(p, Potential::Free));
  Eigen::Matrix2d a;
  a << 0.0, 0.5, 0.0, 0.0;
  EXPECT_LT((dd.drift - a).norm(), 1e-15);
  EXPECT_LT(dd.diffusion.norm(), 1e-15);
}

TEST(GeneratorMatrices, RwaDampedOscillator) {
  const ModelParams p = unit_params();
  const auto dd = generator_matrices(rwa_optical(p));
  const double nbar = 1.0 / (std::exp(1.0) - 1.0);
  Eigen::Matrix2d a;
  a << -0.05, 1.0, -1.0, -0.05;
  EXPECT_LT((dd.drift - a).norm(), 1e-14);
  EXPECT_LT((dd.diffusion - p.gamma * (nbar + 0.5) * Eigen::Matrix2d::Identity()).norm(), 1e-14);
}

TEST(GeneratorMatrices, RejectsNonFiniteCoefficients) {
  CoefficientForm f{0.1, std::nan(""), 0.0, 0.0};
  MasterEquationModel m = vme_diffusive(unit_params(), Potential::Free);
  m.channels.clear();
  m.coefficients = f;
  try {
    generator_matrices(m);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::Unsupported);
  }
}

TEST(EvolveMoments, StaticWithoutDynamics) {
  const DriftDiffusion dd{Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};
  const GaussianMoments m0{0.3, -0.2, {0.7, 0.1, 0.6}};
  for (const auto& m : evolve_moments(dd, m0, {0.0, 1.0, 50.0})) {
    EXPECT_EQ(m.x, m0.x);
    EXPECT_EQ(m.p, m0.p);
    EXPECT_NEAR(m.cov.xx, m0.cov.xx, 1e-15);
    EXPECT_NEAR(m.cov.xp, m0.cov.xp, 1e-15);
    EXPECT_NEAR(m.cov.pp, m0.cov.pp, 1e-15);
  }
}

TEST(EvolveMoments, MeanMomentumDecay) {
  const auto dd = generator_matrices(vme_diffusive(unit_params(), Potential::Free));
  const auto traj = evolve_moments(dd, {0.0, 1.0, {0.5, 0.0, 0.5}}, {0.0, 5.0});
  EXPECT_NEAR(traj[1].p, std::exp(-1.0), 1e-12);
  EXPECT_NEAR(traj[1].p, 0.367879, 1e-6);
}

TEST(EvolveMoments, FreeMomentumVarianceRelaxesMonotonically) {
  const auto dd = generator_matrices(vme_diffusive(unit_params(), Potential::Free));
  std::vector<double> times;
  for (int i = 0; i <= 60; ++i) times.push_back(i * 2.5);
  const auto traj = evolve_moments(dd, vacuum_moments(), times);
  double prev = std::abs(traj[0].cov.pp - 1.0);
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const double r = std::abs(traj[i].cov.pp - 1.0);
    EXPECT_LE(r, prev + 1e-13);  // round-off floor once relaxed
    EXPECT_TRUE(traj[i].quantum_valid());
    prev = r;
  }
  EXPECT_NEAR(traj.back().cov.pp, 1.0, 1e-10);
}

TEST(EvolveMoments, MatchesRungeKutta) {
  for (const auto& model : {vme_diffusive(unit_params(), Potential::Harmonic), rwa_optical(unit_params())}) {
    const auto dd = generator_matrices(model);
    const GaussianMoments m0{0.2, -0.1, {0.8, 0.1, 0.4}};
    const auto traj = evolve_moments(dd, m0, {3.0});
    const Eigen::Matrix2d rk = integrate_covariance(dd, m0.cov.matrix(), 3.0, 1e-3);
    EXPECT_LT((traj[0].cov.matrix() - rk).norm(), 1e-10) << model.label;
  }
}

TEST(EvolveMoments, RejectsBadGrids) {
  const DriftDiffusion dd{Eigen::Matrix2d::Zero(), Eigen::Matrix2d::Zero()};
  for (const std::vector<double>& t : {std::vector<double>{1.0, 0.5}, std::vector<double>{-1.0},
                                       std::vector<double>{0.0, std::nan("")}}) {
    try {
      evolve_moments(dd, vacuum_moments(), t);
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::InvalidGrid);
    }
  }
}

TEST(StationaryCovariance, VmeHarmonicLyapunovSolution) {
  const auto dd = generator_matrices(vme_diffusive(unit_params(), Potential::Harmonic));
  const auto sc = stationary_covariance(dd);
  ASSERT_TRUE(sc.stationary);
  EXPECT_NEAR(sc.cov.xx, 1.065, 1e-12);
  EXPECT_NEAR(sc.cov.xp, -0.0125, 1e-12);
  EXPECT_NEAR(sc.cov.pp, 1.0625, 1e-12);
}

TEST(StationaryCovariance, AgreesWithLongTimeIntegration) {
  for (const auto& model : {vme_diffusive(unit_params(), Potential::Harmonic), rwa_optical(unit_params())}) {
    const auto dd = generator_matrices(model);
    const auto sc = stationary_covariance(dd);
    ASSERT_TRUE(sc.stationary);
    const Eigen::Matrix2d rk = integrate_covariance(dd, vacuum_moments().cov.matrix(), 200.0, 0.01);
    EXPECT_LT((sc.cov.matrix() - rk).cwiseAbs().maxCoeff(), 1e-8) << model.label;
  }
}

TEST(StationaryCovariance, FreeParticleHasOnlyMomentumFixedPoint) {
  const auto sc = stationary_covariance(generator_matrices(vme_diffusive(unit_params(), Potential::Free)));
  EXPECT_FALSE(sc.stationary);
  ASSERT_FALSE(sc.non_contracting.empty());
  ASSERT_TRUE(sc.momentum_fixed_point.has_value());
  EXPECT_NEAR(*sc.momentum_fixed_point, 1.0, 1e-12);
}

TEST(StationaryCovariance, RwaEqualsGibbs) {
  const auto sc = stationary_covariance(generator_matrices(rwa_optical(unit_params())));
  const Covariance g = gibbs_covariance(1.0, 1.0, 1.0);
  ASSERT_TRUE(sc.stationary);
  EXPECT_NEAR(sc.cov.xx, g.xx, 1e-12);
  EXPECT_NEAR(sc.cov.pp, g.pp, 1e-12);
  EXPECT_NEAR(sc.cov.xp, 0.0, 1e-14);
  EXPECT_NEAR(sc.cov.xx, 1.08198, 1e-5);
}

TEST(GibbsCovariance, ClosedForms) {
  const Covariance g = gibbs_covariance(1.0, 1.0, 1.0);
  EXPECT_NEAR(g.xx, 0.5 / std::tanh(0.5), 1e-15);
  EXPECT_NEAR(g.pp, 1.081977, 1e-6);
  const Covariance cold = gibbs_covariance(2.0, 3.0, 1e-4);
  EXPECT_NEAR(cold.xx, 1.0 / 12.0, 1e-14);
  EXPECT_NEAR(cold.pp, 3.0, 1e-14);
  const Covariance hot = gibbs_covariance(1.0, 1.0, 100.0);
  const double x = 0.005;  // omega / 2T; coth x = 1/x + x/3 - x^3/45 + ...
  EXPECT_NEAR(hot.pp, 0.5 * (1.0 / x + x / 3.0 - x * x * x / 45.0), 1e-12);
  EXPECT_NEAR(hot.pp, 100.000833, 1e-6);
  EXPECT_THROW(gibbs_covariance(1.0, 0.0, 1.0), Error);
  EXPECT_THROW(gibbs_covariance(1.0, 1.0, -1.0), Error);
}

TEST(Equipartition, Deltas) {
  const Covariance g = gibbs_covariance(1.0, 1.0, 1.0);
  const auto dg = equipartition_deltas(g, 1.0, 1.0, 1.0);
  EXPECT_NEAR(dg.quantum.kinetic, 0.0, 1e-15);
  EXPECT_NEAR(dg.quantum.potential, 0.0, 1e-15);
  EXPECT_NEAR(dg.classical.kinetic, 0.081977, 1e-6);
  EXPECT_NEAR(dg.classical.potential, 0.081977, 1e-6);

  const auto dv = equipartition_deltas({1.065, -0.0125, 1.0625}, 1.0, 1.0, 1.0);
  EXPECT_NEAR(dv.classical.kinetic, 0.0625, 1e-12);
  EXPECT_NEAR(dv.classical.potential, 0.065, 1e-12);
  EXPECT_NEAR(dv.quantum.potential, -0.016977, 1e-6);
  EXPECT_NEAR(dv.quantum.kinetic, -0.019477, 1e-6);
  EXPECT_EQ(dv.cross, -0.0125);
}

// Analytic VME+HO stationary state: spp - MT = M^2 w^2 / (16 T) for every eta, sxp = -eta / (8 T).
TEST(StationaryCovariance, HarmonicDeviationHasEtaIndependentFloor) {
  for (double eta : {0.1, 0.05, 0.025, 0.0125}) {
    ModelParams p = unit_params();
    p.eta = eta;
    const auto sc = stationary_covariance(generator_matrices(vme_diffusive(p, Potential::Harmonic)));
    ASSERT_TRUE(sc.stationary);
    EXPECT_NEAR(sc.cov.pp - 1.0, 1.0 / 16.0, 1e-10) << eta;
    EXPECT_NEAR(sc.cov.xp, -eta / 8.0, 1e-12) << eta;
    EXPECT_GT(std::abs(sc.cov.pp - gibbs_covariance(1.0, 1.0, 1.0).pp), 0.0);
  }
}

TEST(Property, ValidStatesStayValid) {
  const GaussianMoments squeezed{0.0, 0.0, {0.1, 0.0, 2.5}};
  ASSERT_TRUE(squeezed.quantum_valid());
  for (const auto& model : {vme_diffusive(unit_params(), Potential::Free), vme_diffusive(unit_params(), Potential::Harmonic),
                            rwa_optical(unit_params())}) {
    const auto traj = evolve_moments(generator_matrices(model), squeezed, {0.1, 0.5, 1.0, 3.0, 10.0, 40.0});
    for (const auto& m : traj) EXPECT_TRUE(m.quantum_valid()) << model.label;
  }
}
