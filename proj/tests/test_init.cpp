#include "lsm/eval.hpp"
#include "lsm/init.hpp"
#include "support.hpp"

#include <gtest/gtest.h>

namespace lsm {
namespace {

TEST(Usvt, ConstantSliceIsRecovered) {
  const Eigen::Index n = 30;
  const Matrix a = Matrix::Constant(n, n, 3.0);
  const Matrix e = usvt_denoise(a, InitConfig{});
  EXPECT_LT((e - a).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Usvt, EmptySliceGivesFloor) {
  InitConfig cfg;
  bool empty = false;
  const Matrix e = usvt_denoise(Matrix::Zero(6, 6), cfg, &empty);
  EXPECT_TRUE(empty);
  EXPECT_EQ(e.minCoeff(), cfg.effective_clip_floor());
  EXPECT_EQ(e.maxCoeff(), cfg.effective_clip_floor());
}

TEST(Usvt, BeatsOracleRankTruncationOnNoisyRankThree) {
  const Eigen::Index n = 200;
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> ud(0.5, 1.5);
  Matrix f(n, 3);
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index i = 0; i < n; ++i) f(i, j) = ud(rng);
  f.col(1).head(n / 2).array() += 1.0;
  f.col(2).tail(n / 3).array() += 2.0;
  const Matrix e_star = f * f.transpose() / 3.0;
  Matrix a(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = i; j < n; ++j) {
      std::poisson_distribution<int> pd(e_star(i, j));
      a(i, j) = a(j, i) = pd(rng);
    }
  // Oracle: keep exactly the three leading components of A.
  Eigen::SelfAdjointEigenSolver<Matrix> eig(a);
  Eigen::VectorXi order(n);
  for (Eigen::Index r = 0; r < n; ++r) order(r) = static_cast<int>(r);
  std::sort(order.data(), order.data() + n,
            [&](int x, int y) { return std::abs(eig.eigenvalues()(x)) > std::abs(eig.eigenvalues()(y)); });
  Matrix trunc = Matrix::Zero(n, n);
  for (int r = 0; r < 3; ++r)
    trunc += eig.eigenvalues()(order(r)) * eig.eigenvectors().col(order(r)) * eig.eigenvectors().col(order(r)).transpose();
  const double oracle = (trunc - e_star).norm() / e_star.norm();
  const double usvt = (usvt_denoise(a, InitConfig{}) - e_star).norm() / e_star.norm();
  EXPECT_LE(usvt, oracle * (1.0 + 1e-12));
  EXPECT_LT(usvt, (a - e_star).norm() / e_star.norm());
}

TEST(InitAlpha, InvertsHn) {
  std::mt19937_64 rng(4);
  for (Eigen::Index n : {2, 5, 50}) {
    Matrix theta = testing::random_matrix(n, n, rng);
    theta = (theta + theta.transpose()).eval();
    const Vector x = init_alpha(theta);
    const Matrix h = static_cast<double>(n) * Matrix::Identity(n, n) + Matrix::Ones(n, n);
    const Vector rhs = theta.rowwise().sum();
    EXPECT_LT((h * x - rhs).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, rhs.cwiseAbs().maxCoeff()));
  }
}

TEST(InitAlpha, RecoversBaselineFromExactTheta) {
  const auto inst = testing::random_instance(12, 1, 2, 5);
  const auto np = natural_params(inst.z, inst.alpha);
  EXPECT_LT((init_alpha(np.theta[0]) - inst.alpha.alpha.col(0)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_EQ(init_alpha(Matrix::Zero(4, 4)).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Stage1, NoiselessIntensitiesAreExact) {
  const auto inst = testing::random_instance(20, 4, 2, 6);
  const auto np = natural_params(inst.z, inst.alpha);
  std::vector<Matrix> e;
  for (const auto& th : np.theta) e.push_back(th.array().exp().matrix());
  const auto s1 = init_stage1_from_intensities(e, 2);
  EXPECT_LT(std::sqrt(procrustes(s1.z, inst.z).dist_sq), 1e-8);
  EXPECT_LT((s1.alpha.alpha - inst.alpha.alpha).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Stage1, SignAmbiguityForTwoNodes) {
  Matrix z(2, 1);
  z << 1, -1;
  const Matrix g = z * z.transpose();
  const auto s1 = init_stage1_from_intensities({g.array().exp().matrix()}, 1);
  EXPECT_LT(std::min((s1.z.z - z).norm(), (s1.z.z + z).norm()), 1e-12);
}

TEST(Stage1, TooFewPositiveEigenvalues) {
  EXPECT_THROW(init_stage1_from_intensities({Matrix::Constant(5, 5, 2.0)}, 1), InputError);
}

TEST(Stage1, CruderThanStage2) {
  SimConfig cfg;
  cfg.n = 200;
  cfg.T = 20;
  cfg.seed = 7;
  const auto sim = simulate(cfg);
  InitConfig ic;
  ic.bounds = sim.config.bounds;
  const auto init = initialize(sim.counts, 2, ic);
  auto max_err = [&](const LatentPositions& z, const Baseline& al) {
    const auto align = procrustes(z, sim.z);
    return ((al.alpha - sim.alpha.alpha).cwiseAbs().colwise() + align.per_row).maxCoeff();
  };
  const double e1 = max_err(init.stage1.z, init.stage1.alpha);
  const double e2 = max_err(init.stage2.z, init.stage2.alpha);
  EXPECT_LT(e1, 5.0 * e2);
  EXPECT_LE(procrustes(init.stage2.z, sim.z).dist_sq, procrustes(init.stage1.z, sim.z).dist_sq);
}

TEST(ProjectLatent, SatisfiesConstraints) {
  std::mt19937_64 rng(8);
  const Matrix z = testing::random_matrix(30, 2, rng, 2.0);
  const Matrix p = project_latent(z, 1.5);
  EXPECT_LT(p.colwise().sum().cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LE(p.rowwise().squaredNorm().maxCoeff(), 1.5 * (1.0 + 1e-12));
}

TEST(Stage2, StationaryStartIsKept) {
  const auto inst = testing::random_instance(10, 3, 2, 9);
  const auto a = testing::intensity_tensor(inst.z.z, inst.alpha.alpha);
  InitConfig cfg;
  cfg.bounds.m_z1 = 10.0;
  cfg.bounds.m_alpha = 10.0;
  const auto res = init_stage2_pgd(a, inst.z, inst.alpha, cfg);
  EXPECT_TRUE(res.converged);
  EXPECT_LT((res.z.z - inst.z.z).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((res.alpha.alpha - inst.alpha.alpha).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Stage2, MonotoneAndFeasible) {
  SimConfig cfg;
  cfg.n = 60;
  cfg.T = 8;
  cfg.seed = 10;
  const auto sim = simulate(cfg);
  InitConfig ic;
  ic.bounds = sim.config.bounds;
  const auto init = initialize(sim.counts, 2, ic);
  const auto& tr = init.stage2.trace;
  for (std::size_t i = 1; i < tr.size(); ++i) EXPECT_GE(tr[i], tr[i - 1]);
  EXPECT_LT(init.stage2.z.max_column_mean_abs(), 1e-12);
  EXPECT_LE(init.stage2.z.max_row_norm_sq(), ic.bounds.m_z1 * (1.0 + 1e-12));
  EXPECT_LE(init.stage2.alpha.alpha.cwiseAbs().maxCoeff(), ic.bounds.m_alpha);
}

TEST(InitConfigTest, RejectsBadValues) {
  InitConfig cfg;
  cfg.pgd_tol = 0.0;
  EXPECT_THROW(cfg.validate(), InputError);
}

}  // namespace
}  // namespace lsm
