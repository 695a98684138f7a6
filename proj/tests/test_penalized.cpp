#include "lsm/eval.hpp"
#include "lsm/penalized.hpp"
#include "lsm/simulate.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace lsm {
namespace {

Matrix centered_gram(const Matrix& w) {
  const Matrix jw = testing::centered(w);
  return jw * jw.transpose();
}

TEST(AlphaProfile, TwoNodeClosedForm) {
  CountTensor a(2, 1);
  a[0](0, 1) = a[0](1, 0) = 1.0;
  const auto al = alpha_profile(a, InteractionMatrix(Matrix::Zero(2, 2)));
  EXPECT_NEAR(al.alpha(0, 0), -std::log(3.0) / 2.0, 1e-10);
  EXPECT_NEAR(al.alpha(1, 0), -std::log(3.0) / 2.0, 1e-10);
}

TEST(AlphaProfile, ZeroAtExactIntensities) {
  std::mt19937_64 rng(1);
  const Matrix g = centered_gram(testing::random_matrix(7, 2, rng, 0.5));
  CountTensor a(7, 3);
  for (auto& s : a.slices) s = g.array().exp().matrix();
  const auto al = alpha_profile(a, InteractionMatrix(g));
  EXPECT_LT(al.alpha.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(AlphaProfile, BoxKeepsEmptyNodeFinite) {
  CountTensor a(3, 1);
  a[0](0, 1) = a[0](1, 0) = 2.0;
  const auto al = alpha_profile(a, InteractionMatrix(Matrix::Zero(3, 3)), std::nullopt, 4.0);
  EXPECT_EQ(al.alpha(2, 0), -4.0);
  EXPECT_TRUE(al.alpha.allFinite());
}

TEST(Projection, FeasibleInputIsFixed) {
  std::mt19937_64 rng(2);
  Matrix g = centered_gram(testing::random_matrix(10, 2, rng));
  ModelBounds b;
  b.m_z1 = g.cwiseAbs().maxCoeff() + 1.0;
  const auto p = project_constraints(g, b);
  EXPECT_LT((p.g - g).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Projection, RankOneUncenteredInput) {
  Vector z(5);
  z << 1.0, 0.5, -0.2, 0.9, 0.3;
  const Vector jz = z.array() - z.mean();
  ModelBounds b;
  b.m_z1 = 10.0;
  const auto p = project_constraints(z * z.transpose(), b);
  EXPECT_LT((p.g - jz * jz.transpose()).cwiseAbs().maxCoeff(), 1e-9);
}

// Projection onto a closed convex set: <x - P(x), y - P(x)> <= 0 for every feasible y.
TEST(Projection, VariationalInequality) {
  std::mt19937_64 rng(3);
  const Eigen::Index n = 8;
  ModelBounds b;
  b.m_z1 = 0.6;
  Matrix x = testing::random_matrix(n, n, rng);
  x = (x + x.transpose()).eval();
  const auto p = project_constraints(x, b, 2000);
  const auto res = constraint_residuals(p.g, b.m_z1);
  EXPECT_LT(std::max({res.psd, res.centering, res.box}), 1e-7);
  for (int trial = 0; trial < 50; ++trial) {
    Matrix y = centered_gram(testing::random_matrix(n, 3, rng));
    y *= 0.9 * b.m_z1 / y.cwiseAbs().maxCoeff();
    const double ip = ((x - p.g).array() * (y - p.g).array()).sum();
    EXPECT_LT(ip, 1e-6 * x.norm());
  }
}

TEST(GramGradient, MatchesFiniteDifferences) {
  const auto inst = testing::random_instance(5, 2, 2, 4);
  const Matrix g = inst.z.z * inst.z.z.transpose();
  const Matrix grad = gram_gradient(inst.a, g, inst.alpha);
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < 5; ++i)
    for (Eigen::Index j = i; j < 5; ++j) {
      // symmetric perturbation of the (i, j) and (j, i) entries
      Matrix e = Matrix::Zero(5, 5);
      e(i, j) = e(j, i) = 1.0;
      const double fd = (log_likelihood_gram(inst.a, g + h * e, inst.alpha) -
                         log_likelihood_gram(inst.a, g - h * e, inst.alpha)) / (2.0 * h);
      const double analytic = (grad.array() * e.array()).sum();
      EXPECT_NEAR(analytic, fd, 1e-6 * std::max(1.0, std::abs(fd)));
    }
}

TEST(Pmle, HugePenaltyGivesZeroGram) {
  SimConfig sc;
  sc.n = 30;
  sc.T = 4;
  sc.seed = 5;
  const auto sim = simulate(sc);
  PmleConfig cfg;
  cfg.lambda_mult = 1e6;
  cfg.alpha_bound = sim.config.bounds.m_alpha;
  const auto res = penalized_mle(sim.counts, cfg, sim.config.bounds);
  EXPECT_EQ(res.g.g.cwiseAbs().maxCoeff(), 0.0);
  const auto degree_only =
      alpha_profile(sim.counts, InteractionMatrix(Matrix::Zero(30, 30)), std::nullopt, cfg.alpha_bound);
  EXPECT_LT((res.alpha.alpha - degree_only.alpha).cwiseAbs().maxCoeff(), 1e-7);
  EXPECT_EQ(rank_select(res.g, cfg.rank_eps), 0);
}

TEST(Pmle, MonotoneAndFeasibleOnSimulation) {
  SimConfig sc;
  sc.n = 100;
  sc.T = 20;
  sc.seed = 6;
  const auto sim = simulate(sc);
  PmleConfig cfg;
  cfg.alpha_bound = sim.config.bounds.m_alpha;
  const auto res = penalized_mle(sim.counts, cfg, sim.config.bounds);
  for (std::size_t i = 1; i < res.trace.size(); ++i)
    EXPECT_GE(res.trace[i], res.trace[i - 1] - 1e-9 * std::abs(res.trace[i - 1]));
  EXPECT_TRUE(res.converged);
  const auto cr = constraint_residuals(res.g.g, sim.config.bounds.m_z1);
  EXPECT_LT(std::max({cr.psd, cr.centering, cr.box}), 1e-7);
  const double kkt = pmle_kkt_residual(sim.counts, res.g.g, res.alpha, res.lambda, res.step, sim.config.bounds);
  EXPECT_LT(kkt, 1e-4 * res.grad_norm);
  EXPECT_EQ(rank_select(res.g, cfg.rank_eps), 2);
  EXPECT_LT(procrustes(z_from_g(res.g, 2), sim.z).dist_sq, 3.0);
}

TEST(RankSelect, TrueGramAndZero) {
  const auto z = gen_latent(200, 2, 7);
  EXPECT_EQ(rank_select(InteractionMatrix(z.z * z.z.transpose()), 0.25), 2);
  EXPECT_EQ(rank_select(InteractionMatrix(Matrix::Zero(200, 200)), 0.25), 0);
}

TEST(ZFromG, ExactFactorization) {
  const auto z = gen_latent(40, 3, 8);
  const auto zh = z_from_g(InteractionMatrix(z.z * z.z.transpose()), 3);
  EXPECT_LT(std::sqrt(procrustes(zh, z).dist_sq), 1e-8);
}

TEST(ZFromG, NonPositiveEigenvalueThrows) {
  const auto z = gen_latent(10, 1, 9);
  EXPECT_THROW(z_from_g(InteractionMatrix(z.z * z.z.transpose()), 2), InputError);
}

TEST(PmleConfigTest, LambdaScaling) {
  PmleConfig cfg;
  cfg.lambda_mult = 1.0;
  EXPECT_NEAR(cfg.lambda(100, 20), std::sqrt(2000.0) * std::log(2000.0), 1e-9);
  cfg.rank_eps = 0.7;
  EXPECT_THROW(cfg.validate(), InputError);
}

}  // namespace
}  // namespace lsm
