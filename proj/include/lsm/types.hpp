#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct InputError : Error {
  using Error::Error;
};

// Non-finite natural parameter or intensity; carries the offending cell.
struct NumericError : Error {
  NumericError(const std::string& what, std::ptrdiff_t t, std::ptrdiff_t i, std::ptrdiff_t j)
      : Error(what + " at (t=" + std::to_string(t) + ", i=" + std::to_string(i) +
              ", j=" + std::to_string(j) + ")"),
        t(t), i(i), j(j) {}
  explicit NumericError(const std::string& what) : Error(what) {}
  std::ptrdiff_t t = -1, i = -1, j = -1;
};

struct ConditioningError : Error {
  ConditioningError(const std::string& what, std::ptrdiff_t block, double min_eig)
      : Error(what + " (block " + std::to_string(block) +
              ", smallest eigenvalue " + std::to_string(min_eig) + ")"),
        block(block), min_eig(min_eig) {}
  std::ptrdiff_t block;
  double min_eig;
};

struct ConvergenceError : Error {
  ConvergenceError(const std::string& what, std::vector<double> trace)
      : Error(what), trace(std::move(trace)) {}
  std::vector<double> trace;
};

// ---------------------------------------------------------------------------
// domain types
// ---------------------------------------------------------------------------

/// T symmetric n x n matrices of nonnegative interaction counts.
///
/// Counts are stored as doubles; `validate(true)` additionally requires
/// integral entries. Tests use fractional "counts" equal to intensities.
struct CountTensor {
  std::vector<Matrix> slices;

  CountTensor() = default;
  explicit CountTensor(std::vector<Matrix> s) : slices(std::move(s)) {}
  CountTensor(Eigen::Index n, std::size_t T) : slices(T, Matrix::Zero(n, n)) {}

  Eigen::Index n() const { return slices.empty() ? 0 : slices.front().rows(); }
  Eigen::Index T() const { return static_cast<Eigen::Index>(slices.size()); }

  const Matrix& operator[](std::size_t t) const { return slices[t]; }
  Matrix& operator[](std::size_t t) { return slices[t]; }

  void validate(bool require_integral = false) const {
    if (slices.empty()) throw ShapeError("count tensor has no time slices");
    const auto nn = n();
    if (nn < 2) throw ShapeError("count tensor needs n >= 2");
    for (std::size_t t = 0; t < slices.size(); ++t) {
      const auto& a = slices[t];
      if (a.rows() != nn || a.cols() != nn)
        throw ShapeError("slice " + std::to_string(t) + " is not " + std::to_string(nn) + "x" +
                         std::to_string(nn));
      for (Eigen::Index j = 0; j < nn; ++j)
        for (Eigen::Index i = 0; i < nn; ++i) {
          const double v = a(i, j);
          if (!std::isfinite(v) || v < 0.0)
            throw InputError("negative or non-finite count in slice " + std::to_string(t));
          if (v != a(j, i))
            throw InputError("slice " + std::to_string(t) + " is not symmetric");
          if (require_integral && v != std::floor(v))
            throw InputError("non-integral count in slice " + std::to_string(t));
        }
    }
  }
};

/// n x k latent positions; rows are node embeddings.
struct LatentPositions {
  Matrix z;

  LatentPositions() = default;
  explicit LatentPositions(Matrix m) : z(std::move(m)) {}

  Eigen::Index n() const { return z.rows(); }
  Eigen::Index k() const { return z.cols(); }

  double max_column_mean_abs() const {
    if (z.size() == 0) return 0.0;
    return (z.colwise().sum() / static_cast<double>(z.rows())).cwiseAbs().maxCoeff();
  }
  double max_row_norm_sq() const { return z.rowwise().squaredNorm().maxCoeff(); }

  /// Row-major stacking z_1^T, ..., z_n^T.
  Vector vec() const {
    Vector v(z.size());
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      for (Eigen::Index a = 0; a < z.cols(); ++a) v(i * z.cols() + a) = z(i, a);
    return v;
  }

  static LatentPositions from_vec(const Vector& v, Eigen::Index n, Eigen::Index k) {
    if (v.size() != n * k) throw ShapeError("vector length does not match n*k");
    Matrix m(n, k);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index a = 0; a < k; ++a) m(i, a) = v(i * k + a);
    return LatentPositions(std::move(m));
  }
};

/// n x T node-by-time baseline parameters.
struct Baseline {
  Matrix alpha;

  Baseline() = default;
  explicit Baseline(Matrix m) : alpha(std::move(m)) {}

  Eigen::Index n() const { return alpha.rows(); }
  Eigen::Index T() const { return alpha.cols(); }

  /// Column stacking alpha_1, ..., alpha_T.
  Vector vec() const { return Eigen::Map<const Vector>(alpha.data(), alpha.size()); }
};

struct ModelBounds {
  double m_z1 = 2.0;     // bound on ||z_i||^2
  double m_alpha = 4.0;  // bound on |alpha_it|
  double m_theta1 = 0.0;

  void validate() const {
    if (!(m_z1 > 0.0) || !(m_alpha > 0.0) || !(m_theta1 >= 0.0))
      throw InputError("model bounds must be positive (m_theta1 >= 0)");
  }
};

/// Theta_t = alpha_t 1^T + 1 alpha_t^T + Z Z^T for every t.
struct NaturalParams {
  std::vector<Matrix> theta;
};

inline void check_shapes(const LatentPositions& z, const Baseline& alpha) {
  if (z.n() != alpha.n())
    throw ShapeError("latent positions have " + std::to_string(z.n()) + " rows, baseline has " +
                     std::to_string(alpha.n()));
}

inline void check_shapes(const CountTensor& a, const LatentPositions& z, const Baseline& alpha) {
  check_shapes(z, alpha);
  if (a.n() != z.n()) throw ShapeError("count tensor and latent positions disagree on n");
  if (a.T() != alpha.T()) throw ShapeError("count tensor and baseline disagree on T");
}

}  // namespace lsm
