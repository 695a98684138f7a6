#pragma once

// Generalized one-step estimator. The efficient information is singular with
// null space spanned by centering shifts vec(1 a^T) and infinitesimal
// rotations vec(Z S), S skew; the update is solved on its complement.

#include "lsm/model.hpp"

#include <string>

namespace lsm {

enum class BasisMethod { analytic_complement, eigen_threshold };

struct OneStepConfig {
  InfoMode mode = InfoMode::fisher;
  BasisMethod basis_method = BasisMethod::analytic_complement;
  double eigen_tol = 1e-8;
  int steps = 1;

  void validate() const {
    if (!(eigen_tol > 0.0 && eigen_tol < 1e-3)) throw InputError("eigen_tol must lie in (0, 1e-3)");
    if (steps < 1) throw InputError("steps must be >= 1");
  }
};

inline Eigen::Index null_dimension(Eigen::Index k) { return k * (k + 1) / 2; }

/// Unorthonormalized null directions, one column each.
inline Matrix null_directions(const LatentPositions& z) {
  const auto n = z.n(), k = z.k();
  Matrix dirs = Matrix::Zero(n * k, null_dimension(k));
  Eigen::Index col = 0;
  for (Eigen::Index a = 0; a < k; ++a, ++col)
    for (Eigen::Index i = 0; i < n; ++i) dirs(i * k + a, col) = 1.0;
  // Z (e_a e_b^T - e_b e_a^T): column b gets Z_a, column a gets -Z_b.
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = a + 1; b < k; ++b, ++col)
      for (Eigen::Index i = 0; i < n; ++i) {
        dirs(i * k + b, col) = z.z(i, a);
        dirs(i * k + a, col) = -z.z(i, b);
      }
  return dirs;
}

/// Orthonormal basis (nk x k(k+1)/2) of the null directions.
inline Matrix null_space_basis(const LatentPositions& z) {
  const auto n = z.n(), k = z.k();
  if (k < 1 || n <= k) throw InputError("null_space_basis requires 1 <= k < n");
  Eigen::JacobiSVD<Matrix> svd(z.z);
  const auto& sv = svd.singularValues();
  if (!(sv(k - 1) > 1e-10 * std::max(sv(0), 1e-300)))
    throw InputError("latent positions are rank deficient");
  const Matrix dirs = null_directions(z);
  Eigen::HouseholderQR<Matrix> qr(dirs);
  const auto m = dirs.cols();
  const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
  const double scale = r.diagonal().cwiseAbs().maxCoeff();
  if (r.diagonal().cwiseAbs().minCoeff() <= 1e-10 * scale)
    throw InputError("null directions are linearly dependent");
  return qr.householderQ() * Matrix::Identity(n * k, m);
}

/// Orthonormal basis of the column space of the efficient information.
inline Matrix effective_basis(const LatentPositions& z, const Matrix& i_eff, const OneStepConfig& cfg) {
  cfg.validate();
  const auto n = z.n(), k = z.k();
  const auto dim = n * k;
  const auto rank = dim - null_dimension(k);
  if (cfg.basis_method == BasisMethod::analytic_complement) {
    const Matrix null_basis = null_space_basis(z);
    Eigen::HouseholderQR<Matrix> qr(null_basis);
    const Matrix q = qr.householderQ();
    return q.rightCols(rank);
  }

  if (i_eff.rows() != dim || i_eff.cols() != dim) throw ShapeError("i_eff has the wrong size");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(i_eff);
  const Vector& vals = eig.eigenvalues();
  const double top = vals.cwiseAbs().maxCoeff();
  Eigen::Index kept = 0;
  for (Eigen::Index r = 0; r < dim; ++r) {
    const double rel = vals(r) / top;
    if (std::abs(rel) >= cfg.eigen_tol / 10.0 && std::abs(rel) <= cfg.eigen_tol * 10.0) {
      std::string msg = "ambiguous numerical rank of the efficient information; spectrum/lambda_max:";
      for (Eigen::Index s = 0; s < std::min<Eigen::Index>(dim, 2 * null_dimension(k) + 2); ++s)
        msg += " " + std::to_string(vals(s) / top);
      throw ConditioningError(msg, -1, vals(0));
    }
    if (rel > cfg.eigen_tol) ++kept;
  }
  if (kept != rank)
    throw ConditioningError("efficient information has rank " + std::to_string(kept) + ", expected " +
                                std::to_string(rank),
                            -1, vals(0));
  return eig.eigenvectors().rightCols(rank);
}

struct OneStepResult {
  LatentPositions z;
  Vector reduced_spectrum;  // eigenvalues of U^T I_eff U (last step)
  double update_norm = 0.0;  // ||Z_hat - Z_init||_F
  InfoMode mode = InfoMode::fisher;
  int ridge_warnings = 0;
};

/// Z_v + U (U^T I_eff U)^{-1} U^T S_eff, evaluated at (Z_v, alpha).
inline Vector one_step_update(const EfficientSystem& sys, const Matrix& basis, Vector* spectrum = nullptr) {
  const Matrix reduced = basis.transpose() * sys.i_eff * basis;
  Eigen::LLT<Matrix> llt(reduced);
  if (spectrum || llt.info() != Eigen::Success) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced, Eigen::EigenvaluesOnly);
    if (spectrum) *spectrum = eig.eigenvalues();
    if (llt.info() != Eigen::Success)
      throw ConditioningError("reduced efficient information is not positive definite", -1,
                              eig.eigenvalues()(0));
  }
  const Vector step = basis * llt.solve(basis.transpose() * sys.s_eff);
  if (!step.allFinite()) throw NumericError("non-finite one-step update");
  return step;
}

inline OneStepResult one_step(const CountTensor& a, const LatentPositions& z_init, const Baseline& alpha_init,
                              const OneStepConfig& cfg = {}) {
  cfg.validate();
  check_shapes(a, z_init, alpha_init);
  if (z_init.max_column_mean_abs() > 1e-8)
    throw InputError("one_step needs a centered initial estimate (1^T Z = 0)");

  OneStepResult res;
  res.mode = cfg.mode;
  LatentPositions current = z_init;
  for (int s = 0; s < cfg.steps; ++s) {
    const EfficientSystem sys = efficient_system(a, current, alpha_init, cfg.mode);
    res.ridge_warnings += sys.ridge_warnings;
    const Matrix basis = effective_basis(current, sys.i_eff, cfg);
    const Vector step = one_step_update(sys, basis, &res.reduced_spectrum);
    current = LatentPositions::from_vec(current.vec() + step, current.n(), current.k());
  }
  res.update_norm = (current.z - z_init.z).norm();
  res.z = std::move(current);
  return res;
}

}  // namespace lsm
