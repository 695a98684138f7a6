#pragma once

// Poisson latent space model: natural parameters, log-likelihood, scores,
// expected/observed information and the efficient score/information for Z.
//
// Vectorization: Z_v stacks rows z_1..z_n (index i*k + a); alpha_v stacks
// columns alpha_1..alpha_T (index t*n + i). Self-pairs i == j are part of the
// likelihood with Theta_ii = 2 alpha_it + ||z_i||^2.

#include "lsm/types.hpp"

#include <atomic>
#include <cstdint>

namespace lsm {

/// Natural parameters above this value are clamped before exponentiation.
inline constexpr double kThetaClamp = 40.0;

/// Number of times an intensity was clamped since process start.
inline std::atomic<std::uint64_t>& theta_clamp_counter() {
  static std::atomic<std::uint64_t> counter{0};
  return counter;
}

namespace detail {

inline Matrix theta_slice(const Matrix& gram, const Eigen::Ref<const Vector>& alpha_t) {
  Matrix theta = gram;
  theta.colwise() += alpha_t;
  theta.rowwise() += alpha_t.transpose();
  return theta;
}

// exp(theta) elementwise with the overflow guard.
inline Matrix intensity(const Matrix& theta, Eigen::Index t) {
  Matrix lam(theta.rows(), theta.cols());
  std::uint64_t clamped = 0;
  for (Eigen::Index j = 0; j < theta.cols(); ++j)
    for (Eigen::Index i = 0; i < theta.rows(); ++i) {
      double v = theta(i, j);
      if (!std::isfinite(v)) throw NumericError("non-finite natural parameter", t, i, j);
      if (v > kThetaClamp) {
        v = kThetaClamp;
        ++clamped;
      }
      lam(i, j) = std::exp(v);
    }
  if (clamped) theta_clamp_counter() += clamped;
  return lam;
}

// Neumaier compensated accumulator.
struct CompensatedSum {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double value() const { return sum + comp; }
};

// Per-slice log-likelihood over i <= j.
inline double slice_loglik(const Matrix& a, const Matrix& theta, const Matrix& lam) {
  CompensatedSum acc;
  const auto n = a.rows();
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i <= j; ++i) acc.add(a(i, j) * theta(i, j) - lam(i, j));
  return acc.value();
}

}  // namespace detail

inline NaturalParams natural_params(const LatentPositions& z, const Baseline& alpha) {
  check_shapes(z, alpha);
  const Matrix gram = z.z * z.z.transpose();
  NaturalParams out;
  out.theta.reserve(static_cast<std::size_t>(alpha.T()));
  for (Eigen::Index t = 0; t < alpha.T(); ++t)
    out.theta.push_back(detail::theta_slice(gram, alpha.alpha.col(t)));
  return out;
}

/// sum_t sum_{i<=j} [A_tij Theta_tij - exp(Theta_tij)], with per-slice
/// compensated sums reduced in slice order.
inline double log_likelihood(const CountTensor& a, const LatentPositions& z, const Baseline& alpha) {
  check_shapes(a, z, alpha);
  const Matrix gram = z.z * z.z.transpose();
  detail::CompensatedSum total;
  for (Eigen::Index t = 0; t < a.T(); ++t) {
    const Matrix theta = detail::theta_slice(gram, alpha.alpha.col(t));
    total.add(detail::slice_loglik(a[t], theta, detail::intensity(theta, t)));
  }
  return total.value();
}

/// Likelihood in the Gram parameterization, l(G, alpha).
inline double log_likelihood_gram(const CountTensor& a, const Matrix& gram, const Baseline& alpha) {
  if (gram.rows() != a.n() || gram.cols() != a.n() || alpha.n() != a.n() || alpha.T() != a.T())
    throw ShapeError("log_likelihood_gram: shape mismatch");
  detail::CompensatedSum total;
  for (Eigen::Index t = 0; t < a.T(); ++t) {
    const Matrix theta = detail::theta_slice(gram, alpha.alpha.col(t));
    total.add(detail::slice_loglik(a[t], theta, detail::intensity(theta, t)));
  }
  return total.value();
}

struct Score {
  Vector z;      // length n*k, row-major Z ordering
  Vector alpha;  // length n*T, column-stacked alpha ordering
};

/// Residual slices R_t = A_t - exp(Theta_t).
inline std::vector<Matrix> residuals(const CountTensor& a, const LatentPositions& z,
                                     const Baseline& alpha) {
  check_shapes(a, z, alpha);
  const Matrix gram = z.z * z.z.transpose();
  std::vector<Matrix> r;
  r.reserve(static_cast<std::size_t>(a.T()));
  for (Eigen::Index t = 0; t < a.T(); ++t) {
    const Matrix theta = detail::theta_slice(gram, alpha.alpha.col(t));
    r.push_back(a[t] - detail::intensity(theta, t));
  }
  return r;
}

/// Gradient of `log_likelihood` w.r.t. Z_v and alpha_v.
///
/// d/d alpha_t = R_t 1 + diag(R_t); d/dZ = sum_t (R_t + diag(R_t)) Z.
inline Score score(const CountTensor& a, const LatentPositions& z, const Baseline& alpha) {
  const auto r = residuals(a, z, alpha);
  const auto n = z.n(), T = a.T();
  Score s;
  s.alpha.resize(n * T);
  Matrix r_total = Matrix::Zero(n, n);
  for (Eigen::Index t = 0; t < T; ++t) {
    const auto& rt = r[static_cast<std::size_t>(t)];
    s.alpha.segment(t * n, n) = rt.rowwise().sum() + rt.diagonal();
    r_total += rt;
  }
  r_total.diagonal() *= 2.0;
  s.z = LatentPositions(r_total * z.z).vec();
  return s;
}

/// Expected information blocks under the Poisson model.
struct FisherBlocks {
  Matrix zz;                        // nk x nk
  Matrix zalpha;                    // nk x nT
  std::vector<Matrix> alphaalpha;   // T blocks of n x n
};

namespace detail {

// I_{alpha alpha} for one slice: lambda + diag(rowsum + 2 diag(lambda)).
inline Matrix alpha_block(const Matrix& lam) {
  Matrix b = lam;
  b.diagonal() += lam.rowwise().sum() + 2.0 * lam.diagonal();
  return b;
}

// I_{Z alpha_t}: nk x n. Column j, row-block i: lam_ij z_j for i != j;
// column i, row-block i: (lam Z)_i + 3 lam_ii z_i.
inline Matrix z_alpha_block(const Matrix& lam, const Matrix& z) {
  const auto n = z.rows(), k = z.cols();
  Matrix c(n * k, n);
  const Matrix lz = lam * z;
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j)
        c.block(i * k, j, k, 1) = (lz.row(i) + 3.0 * lam(i, i) * z.row(i)).transpose();
      else
        c.block(i * k, j, k, 1) = lam(i, j) * z.row(j).transpose();
    }
  return c;
}

// I_ZZ from the time-summed intensity.
inline Matrix zz_block(const Matrix& lam_total, const Matrix& z) {
  const auto n = z.rows(), k = z.cols();
  Matrix out(n * k, n * k);
  for (Eigen::Index j = 0; j < n; ++j)
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == j) continue;
      out.block(i * k, j * k, k, k).noalias() = lam_total(i, j) * z.row(j).transpose() * z.row(i);
    }
  for (Eigen::Index i = 0; i < n; ++i) {
    Matrix d = 3.0 * lam_total(i, i) * z.row(i).transpose() * z.row(i);
    for (Eigen::Index j = 0; j < n; ++j) d.noalias() += lam_total(i, j) * z.row(j).transpose() * z.row(j);
    out.block(i * k, i * k, k, k) = d;
  }
  return out;
}

}  // namespace detail

inline FisherBlocks fisher_blocks(const LatentPositions& z, const Baseline& alpha) {
  check_shapes(z, alpha);
  const auto n = z.n(), k = z.k(), T = alpha.T();
  const Matrix gram = z.z * z.z.transpose();
  FisherBlocks fb;
  fb.zalpha.resize(n * k, n * T);
  Matrix lam_total = Matrix::Zero(n, n);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix lam = detail::intensity(detail::theta_slice(gram, alpha.alpha.col(t)), t);
    fb.alphaalpha.push_back(detail::alpha_block(lam));
    fb.zalpha.middleCols(t * n, n) = detail::z_alpha_block(lam, z.z);
    lam_total += lam;
  }
  fb.zz = detail::zz_block(lam_total, z.z);
  return fb;
}

enum class InfoMode { fisher, observed };

struct EfficientSystem {
  Vector s_eff;  // length nk
  Matrix i_eff;  // nk x nk; -H_eff in observed mode
  InfoMode mode = InfoMode::fisher;
  int ridge_warnings = 0;  // slices that needed a ridge on the alpha block
};

/// Efficient score and information for Z with alpha profiled out, one
/// n x n solve per time slice.
inline EfficientSystem efficient_system(const CountTensor& a, const LatentPositions& z,
                                        const Baseline& alpha, InfoMode mode = InfoMode::fisher) {
  check_shapes(a, z, alpha);
  const auto n = z.n(), k = z.k(), T = a.T();
  const Matrix gram = z.z * z.z.transpose();

  EfficientSystem es;
  es.mode = mode;
  Matrix lam_total = Matrix::Zero(n, n);
  Matrix r_total = Matrix::Zero(n, n);
  Matrix zz_correction = Matrix::Zero(n * k, n * k);
  Vector s_alpha_part = Vector::Zero(n * k);

  Matrix rhs(n, n * k + 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Matrix lam = detail::intensity(detail::theta_slice(gram, alpha.alpha.col(t)), t);
    const Matrix r = a[t] - lam;
    lam_total += lam;
    r_total += r;

    Matrix block = detail::alpha_block(lam);
    const Matrix c = detail::z_alpha_block(lam, z.z);
    // The block is diagonally dominant, so the ridge is only a fallback for
    // intensities that underflow.
    Eigen::LLT<Matrix> llt(block);
    if (llt.info() != Eigen::Success) {
      Matrix ridged = block;
      ridged.diagonal().array() += 1e-10 * block.trace() / static_cast<double>(n);
      llt.compute(ridged);
      if (llt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Matrix> es_block(block, Eigen::EigenvaluesOnly);
        throw ConditioningError("alpha information block is not positive definite", t,
                                es_block.eigenvalues()(0));
      }
      ++es.ridge_warnings;
    }
    rhs.leftCols(n * k) = c.transpose();
    rhs.col(n * k) = r.rowwise().sum() + r.diagonal();
    const Matrix sol = llt.solve(rhs);

    zz_correction.noalias() += c * sol.leftCols(n * k);
    s_alpha_part.noalias() += c * sol.col(n * k);
  }

  r_total.diagonal() *= 2.0;
  es.s_eff = LatentPositions(r_total * z.z).vec() - s_alpha_part;
  es.i_eff = detail::zz_block(lam_total, z.z) - zz_correction;
  if (mode == InfoMode::observed) {
    // -H_ZZ = I_ZZ - (R + diag R) (x) I_k; alpha is linear in Theta so the
    // cross and nuisance blocks coincide with their expectations.
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index d = 0; d < k; ++d) es.i_eff(i * k + d, j * k + d) -= r_total(i, j);
  }
  es.i_eff = 0.5 * (es.i_eff + es.i_eff.transpose()).eval();
  return es;
}

}  // namespace lsm
