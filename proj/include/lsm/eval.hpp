#pragma once

#include "lsm/types.hpp"

#include <utility>
#include <vector>

namespace lsm {

struct AlignmentResult {
  Matrix q;          // k x k orthogonal
  double dist_sq = 0.0;
  Vector per_row;    // ||z_hat_i - Q^T z_star_i||
};

/// Orthogonal Procrustes: min over Q in O(k) of ||Z_hat - Z_star Q||_F^2,
/// attained at Q = V U^T where U S V^T = svd(Z_hat^T Z_star).
inline AlignmentResult procrustes(const Matrix& z_hat, const Matrix& z_star) {
  if (z_hat.rows() != z_star.rows() || z_hat.cols() != z_star.cols())
    throw ShapeError("procrustes: shape mismatch");
  if (z_hat.cols() < 1) throw ShapeError("procrustes: k must be >= 1");
  Eigen::JacobiSVD<Matrix> svd(z_hat.transpose() * z_star, Eigen::ComputeFullU | Eigen::ComputeFullV);
  AlignmentResult res;
  res.q = svd.matrixV() * svd.matrixU().transpose();
  const Matrix diff = z_hat - z_star * res.q;
  res.per_row = diff.rowwise().norm();
  res.dist_sq = diff.squaredNorm();
  return res;
}

inline AlignmentResult procrustes(const LatentPositions& z_hat, const LatentPositions& z_star) {
  return procrustes(z_hat.z, z_star.z);
}

/// ||G_hat - G_star||_F^2 / n.
inline double g_error(const Matrix& g_hat, const Matrix& g_star) {
  if (g_hat.rows() != g_star.rows() || g_hat.cols() != g_star.cols()) throw ShapeError("g_error: shape mismatch");
  return (g_hat - g_star).squaredNorm() / static_cast<double>(g_hat.rows());
}

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// OLS of log(value) on log(x).
inline SlopeFit slope_fit(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw InputError("slope_fit needs at least 3 points");
  const double m = static_cast<double>(pairs.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : pairs) {
    if (!(x > 0.0) || !(y > 0.0)) throw InputError("slope_fit needs positive values");
    sx += std::log(x);
    sy += std::log(y);
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : pairs) {
    const double dx = std::log(x) - mx, dy = std::log(y) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) throw InputError("slope_fit needs at least two distinct x values");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace lsm
