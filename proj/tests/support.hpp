#pragma once

// Independent reference implementations used as test oracles.

#include "lsm/simulate.hpp"

#include <cmath>
#include <functional>
#include <random>

namespace lsm::testing {

struct Instance {
  CountTensor a;
  LatentPositions z;
  Baseline alpha;
};

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = nd(rng);
  return m;
}

inline Matrix centered(Matrix z) {
  z.rowwise() -= z.colwise().mean();
  return z;
}

/// Theta by explicit loops.
inline double theta_loop(const Matrix& z, const Matrix& alpha, Eigen::Index t, Eigen::Index i, Eigen::Index j) {
  double dot = 0.0;
  for (Eigen::Index a = 0; a < z.cols(); ++a) dot += z(i, a) * z(j, a);
  return alpha(i, t) + alpha(j, t) + dot;
}

/// sum_t sum_{i <= j} A log(lambda) - lambda, by loops.
inline double loglik_loop(const CountTensor& a, const Matrix& z, const Matrix& alpha) {
  long double total = 0.0L;
  for (Eigen::Index t = 0; t < a.T(); ++t)
    for (Eigen::Index i = 0; i < a.n(); ++i)
      for (Eigen::Index j = i; j < a.n(); ++j) {
        const double th = theta_loop(z, alpha, t, i, j);
        total += a[static_cast<std::size_t>(t)](i, j) * th - std::exp(th);
      }
  return static_cast<double>(total);
}

/// Poisson counts with mean exp(Theta), drawn with a plain mt19937_64.
inline CountTensor poisson_counts(const Matrix& z, const Matrix& alpha, std::mt19937_64& rng) {
  const auto n = z.rows(), T = alpha.cols();
  CountTensor a(n, static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = i; j < n; ++j) {
        std::poisson_distribution<int> pd(std::exp(theta_loop(z, alpha, t, i, j)));
        const double v = pd(rng);
        a[static_cast<std::size_t>(t)](i, j) = v;
        a[static_cast<std::size_t>(t)](j, i) = v;
      }
  return a;
}

inline Instance random_instance(Eigen::Index n, Eigen::Index T, Eigen::Index k, std::uint64_t seed,
                                double z_sd = 0.5) {
  std::mt19937_64 rng(seed);
  Instance inst;
  inst.z = LatentPositions(centered(random_matrix(n, k, rng, z_sd)));
  std::uniform_real_distribution<double> ud(-1.0, 0.5);
  Matrix alpha(n, T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < n; ++i) alpha(i, t) = ud(rng);
  inst.alpha = Baseline(alpha);
  inst.a = poisson_counts(inst.z.z, inst.alpha.alpha, rng);
  return inst;
}

/// Counts equal to the intensities, so every residual vanishes.
inline CountTensor intensity_tensor(const Matrix& z, const Matrix& alpha) {
  const auto n = z.rows(), T = alpha.cols();
  CountTensor a(n, static_cast<std::size_t>(T));
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j) a[static_cast<std::size_t>(t)](i, j) = std::exp(theta_loop(z, alpha, t, i, j));
  return a;
}

/// Central differences of f at x.
inline Vector central_gradient(const std::function<double(const Vector&)>& f, const Vector& x, double h) {
  Vector g(x.size());
  Vector xp = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double orig = xp(i);
    xp(i) = orig + h;
    const double fp = f(xp);
    xp(i) = orig - h;
    const double fm = f(xp);
    xp(i) = orig;
    g(i) = (fp - fm) / (2.0 * h);
  }
  return g;
}

/// Jacobian of a vector field by central differences (column c = d F / d x_c).
inline Matrix central_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x, double h) {
  const Vector f0 = f(x);
  Matrix jac(f0.size(), x.size());
  Vector xp = x;
  for (Eigen::Index c = 0; c < x.size(); ++c) {
    const double orig = xp(c);
    xp(c) = orig + h;
    const Vector fp = f(xp);
    xp(c) = orig - h;
    const Vector fm = f(xp);
    xp(c) = orig;
    jac.col(c) = (fp - fm) / (2.0 * h);
  }
  return jac;
}

/// Full (nk + nT) square Fisher matrix assembled from the blocks.
template <class Blocks>
Matrix assemble_fisher(const Blocks& fb, Eigen::Index n, Eigen::Index k, Eigen::Index T) {
  const auto dz = n * k, da = n * T;
  Matrix full = Matrix::Zero(dz + da, dz + da);
  full.topLeftCorner(dz, dz) = fb.zz;
  full.topRightCorner(dz, da) = fb.zalpha;
  full.bottomLeftCorner(da, dz) = fb.zalpha.transpose();
  for (Eigen::Index t = 0; t < T; ++t) full.block(dz + t * n, dz + t * n, n, n) = fb.alphaalpha[static_cast<std::size_t>(t)];
  return full;
}

/// Minimum of ||Zhat Q - Zstar||_F^2 over a grid of planar rotations and
/// reflections with `steps` angles each.
inline double procrustes_grid_k2(const Matrix& z_hat, const Matrix& z_star, int steps) {
  double best = std::numeric_limits<double>::infinity();
  for (int s = 0; s < steps; ++s) {
    const double th = 2.0 * M_PI * s / steps;
    const double c = std::cos(th), sn = std::sin(th);
    Matrix rot(2, 2), refl(2, 2);
    rot << c, -sn, sn, c;
    refl << c, sn, sn, -c;
    best = std::min(best, (z_hat * rot - z_star).squaredNorm());
    best = std::min(best, (z_hat * refl - z_star).squaredNorm());
  }
  return best;
}

}  // namespace lsm::testing
