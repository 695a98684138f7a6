#pragma once

// Nuclear-norm penalized MLE over (G, alpha):
//   max l(G, alpha) - lambda ||G||_*  s.t. G PSD, G 1 = 0, |G_ij| <= M_Z1.
// On the PSD cone ||G||_* = trace(G), so the G-step is a projected gradient
// step on l - lambda tr(G); alpha is profiled exactly between G-steps.

#include "lsm/model.hpp"

#include <algorithm>
#include <limits>
#include <optional>

namespace lsm {

struct InteractionMatrix {
  Matrix g;

  InteractionMatrix() = default;
  explicit InteractionMatrix(Matrix m) : g(std::move(m)) {}
  Eigen::Index n() const { return g.rows(); }
};

struct PmleConfig {
  double lambda_mult = 0.02;
  int outer_max_iters = 5000;
  double outer_tol = 1e-6;
  int dykstra_iters = 200;
  double rank_eps = 0.25;
  // Bound on |alpha_it| used while profiling; <= 0 profiles over all of R.
  double alpha_bound = 0.0;

  double lambda(Eigen::Index n, Eigen::Index T) const {
    const double nt = static_cast<double>(n) * static_cast<double>(T);
    return lambda_mult * std::sqrt(nt) * std::log(nt);
  }

  void validate() const {
    if (!(lambda_mult > 0.0)) throw InputError("lambda_mult must be positive");
    if (!(rank_eps > 0.0 && rank_eps < 0.5)) throw InputError("rank_eps must lie in (0, 1/2)");
    if (outer_max_iters < 1 || dykstra_iters < 1) throw InputError("iteration limits must be positive");
    if (!(outer_tol > 0.0)) throw InputError("outer_tol must be positive");
  }
};

// ---------------------------------------------------------------------------
// alpha profiling
// ---------------------------------------------------------------------------

namespace detail {

struct SliceFit {
  double value;
  Vector grad;
  Matrix lam;
};

inline SliceFit slice_objective(const Matrix& a_t, const Matrix& gram, const Vector& alpha_t, Eigen::Index t) {
  const Matrix theta = theta_slice(gram, alpha_t);
  SliceFit f;
  f.lam = intensity(theta, t);
  f.value = slice_loglik(a_t, theta, f.lam);
  const Matrix r = a_t - f.lam;
  f.grad = r.rowwise().sum() + r.diagonal();
  return f;
}

// Projected gradient sup-norm for the box [-bound, bound] (bound = inf: plain gradient).
inline double projected_grad_norm(const Vector& grad, const Vector& alpha, double bound) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    const double g = grad(i);
    if (alpha(i) <= -bound && g < 0.0) continue;
    if (alpha(i) >= bound && g > 0.0) continue;
    worst = std::max(worst, std::abs(g));
  }
  return worst;
}

}  // namespace detail

/// Maximizer of the strictly concave per-slice likelihood in alpha_t for a
/// fixed G, by damped (projected) Newton. `warm` supplies the start.
inline Vector alpha_profile_slice(const Matrix& a_t, const Matrix& gram, Eigen::Index t,
                                  const Vector& warm, double bound = 0.0, double grad_tol = 1e-8,
                                  int max_iters = 100) {
  const auto n = gram.rows();
  const double box = bound > 0.0 ? bound : std::numeric_limits<double>::infinity();
  Vector alpha = warm.cwiseMax(-box).cwiseMin(box);
  auto fit = detail::slice_objective(a_t, gram, alpha, t);
  for (int iter = 0; iter < max_iters; ++iter) {
    const double pg = detail::projected_grad_norm(fit.grad, alpha, box);
    if (pg < grad_tol) return alpha;

    std::vector<Eigen::Index> free;
    free.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const bool pinned = (alpha(i) <= -box && fit.grad(i) < 0.0) || (alpha(i) >= box && fit.grad(i) > 0.0);
      if (!pinned) free.push_back(i);
    }
    const Matrix info = detail::alpha_block(fit.lam);
    const auto m = static_cast<Eigen::Index>(free.size());
    Matrix info_free(m, m);
    Vector g_free(m);
    for (Eigen::Index r = 0; r < m; ++r) {
      g_free(r) = fit.grad(free[static_cast<std::size_t>(r)]);
      for (Eigen::Index c = 0; c < m; ++c)
        info_free(r, c) = info(free[static_cast<std::size_t>(r)], free[static_cast<std::size_t>(c)]);
    }
    Eigen::LLT<Matrix> llt(info_free);
    Vector dir_free = llt.info() == Eigen::Success ? Vector(llt.solve(g_free)) : g_free;
    Vector dir = Vector::Zero(n);
    for (Eigen::Index r = 0; r < m; ++r) dir(free[static_cast<std::size_t>(r)]) = dir_free(r);

    // Inside the quadratic region the objective change is below rounding, so
    // the plain Newton step is taken without a line search.
    if (fit.grad.dot(dir) < 1e-10 * std::max(1.0, std::abs(fit.value)) && dir.cwiseAbs().maxCoeff() < 1e-3) {
      alpha = (alpha + dir).cwiseMax(-box).cwiseMin(box);
      fit = detail::slice_objective(a_t, gram, alpha, t);
      continue;
    }

    // Cap the step so a single update cannot move any coordinate by more than 5.
    double step = std::min(1.0, 5.0 / std::max(dir.cwiseAbs().maxCoeff(), 1e-300));
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls, step *= 0.5) {
      const Vector cand = (alpha + step * dir).cwiseMax(-box).cwiseMin(box);
      detail::SliceFit cand_fit;
      try {
        cand_fit = detail::slice_objective(a_t, gram, cand, t);
      } catch (const NumericError&) {
        continue;
      }
      if (cand_fit.value >= fit.value + 1e-4 * fit.grad.dot(cand - alpha)) {
        alpha = cand;
        fit = std::move(cand_fit);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // No ascent possible at working precision.
      if (detail::projected_grad_norm(fit.grad, alpha, box) < 1e3 * grad_tol) return alpha;
      break;
    }
  }
  const double pg = detail::projected_grad_norm(fit.grad, alpha, box);
  if (pg < grad_tol) return alpha;
  throw ConvergenceError("alpha profiling did not converge in slice " + std::to_string(t) +
                             " (projected gradient " + std::to_string(pg) + ")",
                         {pg});
}

inline Baseline alpha_profile(const CountTensor& a, const InteractionMatrix& g,
                              const std::optional<Baseline>& warm = std::nullopt, double bound = 0.0) {
  if (g.n() != a.n() || g.g.cols() != a.n()) throw ShapeError("alpha_profile: G and counts disagree on n");
  if (!g.g.allFinite()) throw InputError("alpha_profile: G is not finite");
  const auto n = a.n(), T = a.T();
  if (warm && (warm->n() != n || warm->T() != T)) throw ShapeError("alpha_profile: warm start has wrong shape");
  Matrix alpha(n, T);
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vector start = warm ? Vector(warm->alpha.col(t)) : Vector::Zero(n);
    alpha.col(t) = alpha_profile_slice(a[static_cast<std::size_t>(t)], g.g, t, start, bound);
  }
  return Baseline(std::move(alpha));
}

// ---------------------------------------------------------------------------
// constraint projection
// ---------------------------------------------------------------------------

namespace detail {

inline Matrix project_centered(const Matrix& g) {
  Matrix out = g;
  out.colwise() -= g.rowwise().mean();  // J G
  out.rowwise() -= out.colwise().mean();  // (J G) J
  return 0.5 * (out + out.transpose());
}

inline Matrix project_psd(const Matrix& g) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()));
  const Vector vals = eig.eigenvalues().cwiseMax(0.0);
  Matrix out = eig.eigenvectors() * vals.asDiagonal() * eig.eigenvectors().transpose();
  return 0.5 * (out + out.transpose());
}

inline Matrix project_box(const Matrix& g, double bound) { return g.cwiseMax(-bound).cwiseMin(bound); }

}  // namespace detail

/// Dykstra's alternating projections onto {G 1 = 0} n {PSD} n {|G_ij| <= M_Z1}.
inline InteractionMatrix project_constraints(const Matrix& g, const ModelBounds& bounds, int dykstra_iters = 200) {
  if (g.rows() != g.cols()) throw ShapeError("project_constraints expects a square matrix");
  const auto n = g.rows();
  Matrix x = 0.5 * (g + g.transpose());
  Matrix p_center = Matrix::Zero(n, n), p_psd = Matrix::Zero(n, n), p_box = Matrix::Zero(n, n);
  for (int cycle = 0; cycle < dykstra_iters; ++cycle) {
    const Matrix start = x;
    Matrix y = detail::project_centered(x + p_center);
    p_center = x + p_center - y;
    x = std::move(y);
    y = detail::project_psd(x + p_psd);
    p_psd = x + p_psd - y;
    x = std::move(y);
    y = detail::project_box(x + p_box, bounds.m_z1);
    p_box = x + p_box - y;
    x = std::move(y);
    if ((x - start).norm() < 1e-10 * std::max(1.0, x.norm())) break;
  }
  return InteractionMatrix(std::move(x));
}

struct ConstraintResiduals {
  double psd = 0.0;        // max(0, -lambda_min)
  double centering = 0.0;  // |G 1|_inf
  double box = 0.0;        // max(0, max |G_ij| - M_Z1)
  double symmetry = 0.0;
};

inline ConstraintResiduals constraint_residuals(const Matrix& g, double m_z1) {
  ConstraintResiduals r;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g + g.transpose()), Eigen::EigenvaluesOnly);
  r.psd = std::max(0.0, -eig.eigenvalues()(0));
  r.centering = (g.rowwise().sum()).cwiseAbs().maxCoeff();
  r.box = std::max(0.0, g.cwiseAbs().maxCoeff() - m_z1);
  r.symmetry = (g - g.transpose()).cwiseAbs().maxCoeff();
  return r;
}

// ---------------------------------------------------------------------------
// solver
// ---------------------------------------------------------------------------

/// Frobenius gradient of l(G, alpha) over symmetric G: sum_t R_t with
/// off-diagonal entries halved (each unordered pair appears once in l).
inline Matrix gram_gradient(const CountTensor& a, const Matrix& gram, const Baseline& alpha) {
  const auto n = a.n();
  Matrix grad = Matrix::Zero(n, n);
  for (Eigen::Index t = 0; t < a.T(); ++t) {
    const Matrix theta = detail::theta_slice(gram, alpha.alpha.col(t));
    grad += a[static_cast<std::size_t>(t)] - detail::intensity(theta, t);
  }
  const Vector diag = grad.diagonal();
  grad *= 0.5;
  grad.diagonal() = diag;
  return grad;
}

struct PmleResult {
  InteractionMatrix g;
  Baseline alpha;
  std::vector<double> trace;  // penalized objective l - lambda tr(G), one entry per outer iteration
  double lambda = 0.0;
  double step = 0.0;  // last accepted step size
  int iterations = 0;
  bool converged = false;
  double kkt_residual = 0.0;  // ||G - P(G + eta (grad - lambda I))||_F / eta at exit
  double grad_norm = 0.0;     // ||grad l||_F at exit
};

inline double penalized_objective(const CountTensor& a, const Matrix& gram, const Baseline& alpha, double lambda) {
  return log_likelihood_gram(a, gram, alpha) - lambda * gram.trace();
}

/// ||G - P(G + eta (grad l - lambda I))||_F / eta evaluated at (G, alpha).
inline double pmle_kkt_residual(const CountTensor& a, const Matrix& g, const Baseline& alpha, double lambda,
                                double eta, const ModelBounds& bounds, int dykstra_iters = 200) {
  const Matrix grad = gram_gradient(a, g, alpha);
  const Matrix moved = g + eta * (grad - lambda * Matrix::Identity(g.rows(), g.cols()));
  return (g - project_constraints(moved, bounds, dykstra_iters).g).norm() / eta;
}

/// Alternating exact-alpha / projected-gradient-G ascent.
///
/// The G step backtracks until the quadratic minorization holds, then the
/// step size is allowed to grow by 1.5 for the next iteration. Termination
/// requires a relative objective change below outer_tol and a
/// projected-gradient residual below 10 outer_tol ||grad l||_F, the latter
/// re-evaluated at the current (G, alpha) after the alpha update.
inline PmleResult penalized_mle(const CountTensor& a, const PmleConfig& cfg, const ModelBounds& bounds,
                                const std::optional<Matrix>& g_start = std::nullopt) {
  a.validate();
  cfg.validate();
  bounds.validate();
  const auto n = a.n(), T = a.T();
  PmleResult res;
  res.lambda = cfg.lambda(n, T);
  const double lambda = res.lambda;
  const double alpha_bound = cfg.alpha_bound;

  Matrix g = g_start ? project_constraints(*g_start, bounds, cfg.dykstra_iters).g : Matrix::Zero(n, n);
  Baseline alpha = alpha_profile(a, InteractionMatrix(g), std::nullopt, alpha_bound);
  double objective = penalized_objective(a, g, alpha, lambda);
  res.trace.push_back(objective);

  // Initial step 1 / ||sum_t exp(Theta_t)||_op.
  double eta = 0.0;
  {
    Matrix lam_total = Matrix::Zero(n, n);
    for (Eigen::Index t = 0; t < T; ++t)
      lam_total += detail::intensity(detail::theta_slice(g, alpha.alpha.col(t)), t);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(lam_total, Eigen::EigenvaluesOnly);
    eta = 1.0 / std::max(eig.eigenvalues().cwiseAbs().maxCoeff(), 1e-12);
  }

  const Matrix penalty = lambda * Matrix::Identity(n, n);
  for (int iter = 0; iter < cfg.outer_max_iters; ++iter) {
    const Matrix grad = gram_gradient(a, g, alpha);
    const double l_cur = log_likelihood_gram(a, g, alpha);
    Matrix g_new;
    double l_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 80; ++ls) {
      g_new = project_constraints(g + eta * (grad - penalty), bounds, cfg.dykstra_iters).g;
      const Matrix diff = g_new - g;
      try {
        l_new = log_likelihood_gram(a, g_new, alpha);
      } catch (const NumericError&) {
        eta *= 0.5;
        continue;
      }
      // Quadratic minorization of l (concave) around g.
      const double model = l_cur + (grad.array() * diff.array()).sum() - diff.squaredNorm() / (2.0 * eta);
      if (l_new >= model - 1e-12 * std::abs(l_cur)) {
        accepted = true;
        break;
      }
      eta *= 0.5;
    }
    if (!accepted) throw ConvergenceError("penalized MLE: backtracking exhausted", res.trace);

    const double residual = (g_new - g).norm() / eta;
    const double grad_norm = grad.norm();
    g = std::move(g_new);
    alpha = alpha_profile(a, InteractionMatrix(g), alpha, alpha_bound);
    const double next = penalized_objective(a, g, alpha, lambda);
    if (next < objective - 1e-9 * std::max(1.0, std::abs(objective)))
      throw ConvergenceError("penalized MLE: objective decreased", res.trace);
    const double change = std::abs(next - objective) / std::max(1.0, std::abs(objective));
    objective = next;
    res.trace.push_back(objective);
    res.iterations = iter + 1;
    res.step = eta;
    res.kkt_residual = residual;
    res.grad_norm = grad_norm;
    if (change < cfg.outer_tol && residual < 10.0 * cfg.outer_tol * grad_norm) {
      const double grad_here = gram_gradient(a, g, alpha).norm();
      const double kkt_here = pmle_kkt_residual(a, g, alpha, lambda, eta, bounds, cfg.dykstra_iters);
      if (kkt_here < 10.0 * cfg.outer_tol * grad_here) {
        res.kkt_residual = kkt_here;
        res.grad_norm = grad_here;
        res.converged = true;
        break;
      }
    }
    eta *= 1.5;
  }

  res.g = InteractionMatrix(std::move(g));
  res.alpha = std::move(alpha);
  return res;
}

// ---------------------------------------------------------------------------
// rank and latent positions from G
// ---------------------------------------------------------------------------

/// Number of eigenvalues of G above n^{1 - rank_eps}.
inline Eigen::Index rank_select(const InteractionMatrix& g, double rank_eps) {
  const auto n = g.n();
  if (n == 0) return 0;
  const double threshold = std::pow(static_cast<double>(n), 1.0 - rank_eps);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g.g + g.g.transpose()), Eigen::EigenvaluesOnly);
  return static_cast<Eigen::Index>((eig.eigenvalues().array() > threshold).count());
}

/// Top-k eigencomponents U_k D_k^{1/2}, re-centered.
inline LatentPositions z_from_g(const InteractionMatrix& g, Eigen::Index k) {
  const auto n = g.n();
  if (k < 1 || k > n) throw InputError("z_from_g: k out of range");
  Eigen::SelfAdjointEigenSolver<Matrix> eig(0.5 * (g.g + g.g.transpose()));
  const auto& vals = eig.eigenvalues();
  // Eigenvalues at rounding level of the largest one count as zero.
  const double floor = 1e-12 * std::max(vals(n - 1), 0.0);
  Matrix z(n, k);
  for (Eigen::Index c = 0; c < k; ++c) {
    const Eigen::Index idx = n - 1 - c;
    if (!(vals(idx) > floor))
      throw InputError("z_from_g: eigenvalue " + std::to_string(c + 1) + " of G is not positive");
    z.col(c) = std::sqrt(vals(idx)) * eig.eigenvectors().col(idx);
  }
  z.rowwise() -= z.colwise().mean();
  return LatentPositions(std::move(z));
}

}  // namespace lsm
