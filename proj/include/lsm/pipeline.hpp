#pragma once

// End-to-end fitting: initializer -> one-step or penalized MLE, plus the
// bounds heuristics used when the truth is unknown.

#include "lsm/eval.hpp"
#include "lsm/init.hpp"
#include "lsm/onestep.hpp"
#include "lsm/penalized.hpp"

#include <chrono>
#include <optional>
#include <string>

namespace lsm {

enum class Estimator { onestep, pmle };

inline std::string to_string(Estimator e) { return e == Estimator::onestep ? "onestep" : "pmle"; }

inline Estimator estimator_from_string(const std::string& s) {
  if (s == "onestep") return Estimator::onestep;
  if (s == "pmle") return Estimator::pmle;
  throw InputError("unknown estimator '" + s + "'");
}

struct FitOptions {
  InitConfig init;
  OneStepConfig onestep;
  PmleConfig pmle;
};

struct OneStepFit {
  InitResult init;
  OneStepResult onestep;
  double seconds = 0.0;
};

inline OneStepFit fit_onestep(const CountTensor& a, Eigen::Index k, const FitOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  OneStepFit fit;
  fit.init = initialize(a, k, opts.init);
  fit.onestep = one_step(a, fit.init.stage2.z, fit.init.stage2.alpha, opts.onestep);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

struct PmleFit {
  PmleResult pmle;
  Eigen::Index k_hat = 0;
  Eigen::Index k_used = 0;
  std::optional<LatentPositions> z;  // absent when the chosen rank is 0
  double seconds = 0.0;
};

/// Penalized MLE; latent positions use `k` when given, otherwise rank_select.
inline PmleFit fit_pmle(const CountTensor& a, const ModelBounds& bounds, std::optional<Eigen::Index> k,
                        const FitOptions& opts) {
  const auto start = std::chrono::steady_clock::now();
  PmleFit fit;
  PmleConfig cfg = opts.pmle;
  if (cfg.alpha_bound <= 0.0) cfg.alpha_bound = bounds.m_alpha;
  fit.pmle = penalized_mle(a, cfg, bounds);
  fit.k_hat = rank_select(fit.pmle.g, cfg.rank_eps);
  fit.k_used = k ? *k : fit.k_hat;
  if (fit.k_used > 0) fit.z = z_from_g(fit.pmle.g, fit.k_used);
  fit.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return fit;
}

/// Bounds for data without known truth: M_Z1 = 1.25 max_i G_ii and
/// M_alpha = max(4, 1.25 max |alpha_it|) from the stage-1 estimates.
inline ModelBounds bounds_from_stage1(const Stage1Result& s1) {
  ModelBounds b;
  const double max_diag = s1.gram.diagonal().maxCoeff();
  b.m_z1 = max_diag > 0.0 ? 1.25 * max_diag : 1.0;
  b.m_alpha = std::max(4.0, 1.25 * s1.alpha.alpha.cwiseAbs().maxCoeff());
  return b;
}

/// Per-slice mean baseline level sum_{i,j} exp(alpha_it + alpha_jt) / n^2.
inline Vector mean_baseline_levels(const Baseline& alpha) {
  const double n = static_cast<double>(alpha.n());
  Vector out(alpha.T());
  for (Eigen::Index t = 0; t < alpha.T(); ++t) {
    const double s = alpha.alpha.col(t).array().exp().sum();
    out(t) = s * s / (n * n);
  }
  return out;
}

}  // namespace lsm
