#pragma once

// Two-stage initial estimator: spectral warm start from USVT-denoised slices,
// then projected gradient ascent on the likelihood over the constraint set
//   S_C = {1^T Z = 0, max_i ||z_i||^2 <= M_Z1, max |alpha_it| <= M_alpha}.

#include "lsm/model.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace lsm {

struct InitConfig {
  double usvt_threshold_mult = 2.1;
  double clip_floor = 0.0;      // <= 0: exp(-(M_Z1 + 2 M_alpha))
  double pgd_step_z = 0.0;      // <= 0: derived from the starting intensities
  double pgd_step_alpha = 0.0;  // <= 0: derived from the starting intensities
  int pgd_max_iters = 500;
  double pgd_tol = 1e-8;
  ModelBounds bounds;

  double effective_clip_floor() const {
    return clip_floor > 0.0 ? clip_floor : std::exp(-(bounds.m_z1 + 2.0 * bounds.m_alpha));
  }

  void validate() const {
    bounds.validate();
    if (!(usvt_threshold_mult > 0.0)) throw InputError("usvt_threshold_mult must be positive");
    if (pgd_max_iters <= 0) throw InputError("pgd_max_iters must be positive");
    if (!(pgd_tol > 0.0 && pgd_tol < 1.0)) throw InputError("pgd_tol must lie in (0, 1)");
  }
};

// ---------------------------------------------------------------------------
// stage 1
// ---------------------------------------------------------------------------

/// Universal singular value thresholding of one symmetric count slice.
///
/// For a symmetric matrix the singular triplets are the eigenpairs with
/// |eigenvalue| as singular value, so the symmetric eigensolver is used.
inline Matrix usvt_denoise(const Matrix& a_t, const InitConfig& cfg, bool* empty_slice = nullptr) {
  const auto n = a_t.rows();
  if (a_t.cols() != n) throw ShapeError("usvt_denoise expects a square slice");
  const double floor = cfg.effective_clip_floor();
  const double mean = a_t.mean();
  if (empty_slice) *empty_slice = false;
  if (mean <= 0.0) {
    if (empty_slice) *empty_slice = true;
    return Matrix::Constant(n, n, floor);
  }
  const double tau = cfg.usvt_threshold_mult * std::sqrt(static_cast<double>(n) * mean);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (a_t + a_t.transpose()));
  const auto& vals = eig.eigenvalues();
  const auto& vecs = eig.eigenvectors();
  Matrix e = Matrix::Zero(n, n);
  for (Eigen::Index r = 0; r < n; ++r)
    if (std::abs(vals(r)) > tau) e.noalias() += vals(r) * vecs.col(r) * vecs.col(r).transpose();
  e = 0.5 * (e + e.transpose()).eval();
  const double ceiling = a_t.maxCoeff() + 1.0;
  return e.cwiseMax(floor).cwiseMin(ceiling);
}

/// H_n^{-1} Theta_t 1 with H_n = n I + 1 1^T, via the closed form
/// H_n^{-1} = (I - 1 1^T / (2n)) / n.
inline Vector init_alpha(const Matrix& theta_t) {
  const double n = static_cast<double>(theta_t.rows());
  const Vector row_sums = theta_t.rowwise().sum();
  return (row_sums.array() - row_sums.sum() / (2.0 * n)).matrix() / n;
}

struct Stage1Result {
  LatentPositions z;
  Baseline alpha;
  Matrix gram;  // symmetrized G before the eigendecomposition
  int empty_slices = 0;
};

/// Steps (b)-(c) given intensity estimates E_t.
inline Stage1Result init_stage1_from_intensities(const std::vector<Matrix>& e_hat, Eigen::Index k) {
  if (e_hat.empty()) throw ShapeError("no intensity slices");
  const auto n = e_hat.front().rows();
  if (k < 1 || k >= n) throw InputError("init_stage1 requires 1 <= k < n");
  const auto T = static_cast<Eigen::Index>(e_hat.size());
  Stage1Result out;
  out.alpha.alpha.resize(n, T);
  Matrix gram = Matrix::Zero(n, n);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& e = e_hat[static_cast<std::size_t>(t)];
    if (e.rows() != n || e.cols() != n) throw ShapeError("intensity slices disagree on n");
    if ((e.array() <= 0.0).any()) throw NumericError("non-positive intensity estimate in slice " + std::to_string(t));
    const Matrix theta = (0.5 * (e + e.transpose())).array().log().matrix();
    const Vector a = init_alpha(theta);
    out.alpha.alpha.col(t) = a;
    Matrix g = theta;
    g.colwise() -= a;
    g.rowwise() -= a.transpose();
    gram += g;
  }
  gram /= static_cast<double>(T);
  out.gram = 0.5 * (gram + gram.transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> eig(out.gram);
  const auto& vals = eig.eigenvalues();  // ascending
  Matrix z(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index idx = n - 1 - c;
    if (!(vals(idx) > 0.0))
      throw InputError("initial Gram estimate has only " + std::to_string(c) +
                       " positive eigenvalues; try a smaller k");
    z.col(c) = std::sqrt(vals(idx)) * eig.eigenvectors().col(idx);
  }
  z.rowwise() -= z.colwise().mean();
  out.z = LatentPositions(std::move(z));
  return out;
}

/// Stage 1: USVT per slice, log, alpha by the H_n relation, top-k of G.
inline Stage1Result init_stage1(const CountTensor& a, Eigen::Index k, const InitConfig& cfg) {
  a.validate();
  cfg.validate();
  std::vector<Matrix> e_hat;
  e_hat.reserve(a.slices.size());
  int empty = 0;
  for (const auto& slice : a.slices) {
    bool was_empty = false;
    e_hat.push_back(usvt_denoise(slice, cfg, &was_empty));
    empty += was_empty ? 1 : 0;
  }
  auto out = init_stage1_from_intensities(e_hat, k);
  out.empty_slices = empty;
  return out;
}

// ---------------------------------------------------------------------------
// stage 2
// ---------------------------------------------------------------------------

/// Euclidean projection of Z onto {1^T Z = 0, ||z_i||^2 <= m_z1}.
///
/// Centering and radial row clipping are alternated; if a row still exceeds
/// the ball afterwards the whole (centered) matrix is scaled down, which keeps
/// both constraints exact.
inline Matrix project_latent(Matrix z, double m_z1) {
  const double radius = std::sqrt(m_z1);
  for (int cycle = 0; cycle < 50; ++cycle) {
    z.rowwise() -= z.colwise().mean();
    bool clipped = false;
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double norm = z.row(i).norm();
      if (norm > radius) {
        z.row(i) *= radius / norm;
        clipped = true;
      }
    }
    if (!clipped) return z;
  }
  z.rowwise() -= z.colwise().mean();
  const double worst = z.rowwise().squaredNorm().maxCoeff();
  if (worst > m_z1) z *= std::sqrt(m_z1 / worst);
  return z;
}

inline Matrix project_alpha(const Matrix& alpha, double m_alpha) {
  return alpha.cwiseMax(-m_alpha).cwiseMin(m_alpha);
}

struct PgdResult {
  LatentPositions z;
  Baseline alpha;
  std::vector<double> trace;  // log-likelihood after each accepted step, starting point first
  int iterations = 0;
  bool converged = false;
  double step_z = 0.0;
  double step_alpha = 0.0;
};

/// Projected gradient ascent on L(Z, alpha) over S_C.
///
/// A step that lowers the likelihood is rejected and both step sizes are
/// halved, so the trace is non-decreasing.
inline PgdResult init_stage2_pgd(const CountTensor& a, const LatentPositions& z0, const Baseline& alpha0,
                                 const InitConfig& cfg) {
  cfg.validate();
  check_shapes(a, z0, alpha0);
  if (!z0.z.allFinite() || !alpha0.alpha.allFinite()) throw InputError("non-finite starting point");
  const auto n = z0.n(), k = z0.k(), T = a.T();
  const auto& bounds = cfg.bounds;

  PgdResult res;
  Matrix z = project_latent(z0.z, bounds.m_z1);
  Matrix alpha = project_alpha(alpha0.alpha, bounds.m_alpha);

  double step_z = cfg.pgd_step_z, step_alpha = cfg.pgd_step_alpha;
  if (step_z <= 0.0 || step_alpha <= 0.0) {
    // Lipschitz-style scales: alpha_t only sees slice t, Z sees all slices.
    const Matrix gram = z * z.transpose();
    double max_op = 0.0, total_op = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
      const Matrix lam = detail::intensity(detail::theta_slice(gram, alpha.col(t)), t);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(lam, Eigen::EigenvaluesOnly);
      const double op = eig.eigenvalues().cwiseAbs().maxCoeff();
      max_op = std::max(max_op, op);
      total_op += op;
    }
    if (step_alpha <= 0.0) step_alpha = 1.0 / (2.0 * std::max(max_op, 1e-12));
    if (step_z <= 0.0) step_z = 1.0 / (2.0 * std::max(total_op * std::max(1.0, bounds.m_z1), 1e-12));
  }

  double current = log_likelihood(a, LatentPositions(z), Baseline(alpha));
  res.trace.push_back(current);

  for (int iter = 0; iter < cfg.pgd_max_iters; ++iter) {
    const Score g = score(a, LatentPositions(z), Baseline(alpha));
    const Matrix gz = LatentPositions::from_vec(g.z, n, k).z;
    const Matrix galpha = Eigen::Map<const Matrix>(g.alpha.data(), n, T);

    while (true) {
      Matrix z_new = project_latent(z + step_z * gz, bounds.m_z1);
      Matrix alpha_new = project_alpha(alpha + step_alpha * galpha, bounds.m_alpha);
      double next = -std::numeric_limits<double>::infinity();
      try {
        next = log_likelihood(a, LatentPositions(z_new), Baseline(alpha_new));
      } catch (const NumericError&) {
      }
      if (next >= current) {
        const double gain = next - current;
        z = std::move(z_new);
        alpha = std::move(alpha_new);
        current = next;
        res.trace.push_back(current);
        res.iterations = iter + 1;
        if (gain <= cfg.pgd_tol * std::max(std::abs(current), 1.0)) res.converged = true;
        break;
      }
      step_z *= 0.5;
      step_alpha *= 0.5;
      if (step_z < 1e-12 || step_alpha < 1e-12)
        throw ConvergenceError("projected gradient ascent: step size fell below 1e-12", res.trace);
    }
    if (res.converged) break;
  }

  res.z = LatentPositions(std::move(z));
  res.alpha = Baseline(std::move(alpha));
  res.step_z = step_z;
  res.step_alpha = step_alpha;
  return res;
}

struct InitResult {
  Stage1Result stage1;
  PgdResult stage2;
};

inline InitResult initialize(const CountTensor& a, Eigen::Index k, const InitConfig& cfg) {
  InitResult out;
  out.stage1 = init_stage1(a, k, cfg);
  out.stage2 = init_stage2_pgd(a, out.stage1.z, out.stage1.alpha, cfg);
  return out;
}

}  // namespace lsm
