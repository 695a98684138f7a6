#pragma once

// Ground-truth generation and Poisson count sampling for simulation studies.

#include "lsm/model.hpp"

#include <cstdint>
#include <limits>
#include <random>
#include <string>

namespace lsm {

// ---------------------------------------------------------------------------
// counter-based random streams
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Combine a seed with any number of stream coordinates.
template <class... Ts>
std::uint64_t derive_seed(std::uint64_t seed, Ts... coords) {
  std::uint64_t h = splitmix64(seed);
  ((h = splitmix64(h ^ (static_cast<std::uint64_t>(coords) + 0x632BE59BD9B4E019ULL))), ...);
  return h;
}

/// SplitMix64 as a UniformRandomBitGenerator.
class StreamRng {
 public:
  using result_type = std::uint64_t;
  explicit StreamRng(std::uint64_t seed) : state_(seed) {}
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }
  result_type operator()() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

 private:
  std::uint64_t state_;
};

// stream tags
inline constexpr std::uint64_t kStreamLatent = 1;
inline constexpr std::uint64_t kStreamAlpha = 2;
inline constexpr std::uint64_t kStreamCounts = 3;

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

enum class AlphaCase { uniform, two_block };

inline std::string to_string(AlphaCase c) { return c == AlphaCase::uniform ? "uniform" : "two_block"; }

inline AlphaCase alpha_case_from_string(const std::string& s) {
  if (s == "uniform" || s == "I" || s == "1") return AlphaCase::uniform;
  if (s == "two_block" || s == "II" || s == "2") return AlphaCase::two_block;
  throw InputError("unknown alpha case '" + s + "'");
}

struct SimConfig {
  Eigen::Index n = 100;
  Eigen::Index T = 20;
  Eigen::Index k = 2;
  AlphaCase alpha_case = AlphaCase::uniform;
  std::uint64_t seed = 0;
  ModelBounds bounds;

  void validate() const {
    if (n < 2) throw InputError("n must be >= 2");
    if (T < 1) throw InputError("T must be >= 1");
    if (k < 1 || k >= n) throw InputError("k must satisfy 1 <= k < n");
  }
};

// ---------------------------------------------------------------------------
// generators
// ---------------------------------------------------------------------------

/// n i.i.d. draws from the uniform distribution on the unit k-ball:
/// normalized Gaussian direction times U^{1/k}.
inline Matrix uniform_ball_draws(Eigen::Index n, Eigen::Index k, StreamRng& rng) {
  std::normal_distribution<double> normal;
  Matrix w(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vector dir(k);
    double norm = 0.0;
    do {
      for (Eigen::Index a = 0; a < k; ++a) dir(a) = normal(rng);
      norm = dir.norm();
    } while (norm == 0.0);
    const double radius = std::pow(rng.uniform(), 1.0 / static_cast<double>(k));
    w.row(i) = (radius / norm) * dir.transpose();
  }
  return w;
}

/// Centered latent positions scaled so that ||Z Z^T||_F = n.
inline LatentPositions gen_latent(Eigen::Index n, Eigen::Index k, std::uint64_t seed) {
  if (k < 1 || k >= n) throw InputError("gen_latent requires 1 <= k < n");
  constexpr int kMaxAttempts = 10;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    StreamRng rng(derive_seed(seed, kStreamLatent, attempt));
    Matrix w = uniform_ball_draws(n, k, rng);
    w.rowwise() -= w.colwise().mean();
    Eigen::JacobiSVD<Matrix> svd(w);
    const auto& sv = svd.singularValues();
    if (sv(k - 1) <= 1e-10 * std::max(sv(0), 1e-300)) continue;
    // ||W W^T||_F == ||W^T W||_F
    const double scale = std::sqrt(static_cast<double>(n)) / std::sqrt((w.transpose() * w).norm());
    return LatentPositions(w * scale);
  }
  throw InputError("gen_latent: centered draws stayed rank deficient after 10 attempts");
}

inline Baseline gen_alpha(Eigen::Index n, Eigen::Index T, AlphaCase alpha_case, std::uint64_t seed) {
  if (n < 1 || T < 1) throw InputError("gen_alpha requires n >= 1 and T >= 1");
  StreamRng rng(derive_seed(seed, kStreamAlpha));
  Matrix alpha(n, T);
  const Eigen::Index half = n / 2;
  for (Eigen::Index t = 0; t < T; ++t) {
    const double frac = static_cast<double>(t + 1) / static_cast<double>(T);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (alpha_case == AlphaCase::uniform) {
        alpha(i, t) = rng.uniform(-2.0, 0.0);
      } else if (i < half) {
        alpha(i, t) = frac + rng.uniform(-3.0, -1.0);
      } else {
        alpha(i, t) = -2.0 * frac + rng.uniform(-2.0, 0.0);
      }
    }
  }
  return Baseline(std::move(alpha));
}

/// Draw one Poisson variate from the cell stream (seed, t, i, j).
inline double poisson_cell(double lambda, std::uint64_t seed, Eigen::Index t, Eigen::Index i,
                           Eigen::Index j) {
  if (lambda <= 0.0) return 0.0;
  StreamRng rng(derive_seed(seed, kStreamCounts, t, i, j));
  std::poisson_distribution<long long> dist(lambda);
  return static_cast<double>(dist(rng));
}

/// Symmetric Poisson counts with mean exp(Theta): upper triangle sampled
/// from per-cell streams and mirrored.
inline CountTensor sample_counts(const LatentPositions& z, const Baseline& alpha, std::uint64_t seed) {
  const NaturalParams np = natural_params(z, alpha);
  const auto n = z.n();
  CountTensor a(n, static_cast<std::size_t>(alpha.T()));
  for (Eigen::Index t = 0; t < alpha.T(); ++t) {
    const auto& theta = np.theta[static_cast<std::size_t>(t)];
    auto& slice = a[static_cast<std::size_t>(t)];
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index i = 0; i <= j; ++i) {
        const double th = theta(i, j);
        if (!std::isfinite(th) || th > kThetaClamp)
          throw NumericError("intensity overflow while sampling", t, i, j);
        const double v = poisson_cell(std::exp(th), seed, t, i, j);
        slice(i, j) = v;
        slice(j, i) = v;
      }
  }
  return a;
}

struct SimInstance {
  SimConfig config;
  LatentPositions z;
  Baseline alpha;
  CountTensor counts;
};

/// Default projection bounds for a simulated truth: M_Z1 = 1.25 max ||z_i||^2, M_alpha = 4.
inline ModelBounds default_bounds(const LatentPositions& z) {
  ModelBounds b;
  b.m_z1 = 1.25 * z.max_row_norm_sq();
  b.m_alpha = 4.0;
  return b;
}

inline SimInstance simulate(SimConfig cfg) {
  cfg.validate();
  SimInstance out;
  out.z = gen_latent(cfg.n, cfg.k, cfg.seed);
  out.alpha = gen_alpha(cfg.n, cfg.T, cfg.alpha_case, cfg.seed);
  out.counts = sample_counts(out.z, out.alpha, cfg.seed);
  cfg.bounds = default_bounds(out.z);
  out.config = cfg;
  return out;
}

}  // namespace lsm
