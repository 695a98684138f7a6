#pragma once

// Monte-Carlo experiment harness and real-data fitting front end.

#include "lsm/io.hpp"
#include "lsm/pipeline.hpp"
#include "lsm/simulate.hpp"

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>
#include <vector>

namespace lsm {

enum class Scenario { vary_T, vary_n };

inline std::string to_string(Scenario s) { return s == Scenario::vary_T ? "vary_T" : "vary_n"; }

inline Scenario scenario_from_string(const std::string& s) {
  if (s == "vary_T" || s == "a") return Scenario::vary_T;
  if (s == "vary_n" || s == "b") return Scenario::vary_n;
  throw InputError("unknown scenario '" + s + "'");
}

struct ExperimentSpec {
  Scenario scenario = Scenario::vary_T;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> grid;  // (n, T)
  std::vector<Eigen::Index> k_list{2};
  AlphaCase alpha_case = AlphaCase::uniform;
  std::vector<Estimator> estimators{Estimator::onestep};
  int reps = 50;
  std::uint64_t master_seed = 0;
  int threads = 1;
  FitOptions options;

  void validate() const {
    if (reps < 1) throw InputError("reps must be >= 1");
    if (grid.empty()) throw InputError("experiment grid is empty");
    if (k_list.empty()) throw InputError("k_list is empty");
    if (estimators.empty()) throw InputError("no estimators selected");
    for (const auto& [n, T] : grid)
      for (auto k : k_list)
        if (n < 2 || T < 1 || k < 1 || k >= n) throw InputError("invalid grid cell");
  }
};

struct ResultRow {
  Eigen::Index n = 0, T = 0, k = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  Estimator estimator = Estimator::onestep;
  bool ok = false;
  double dist_sq = 0.0;
  double g_error = 0.0;
  double init_dist_sq = 0.0;   // stage-2 initializer (onestep rows)
  double init_max_error = 0.0; // max_{i,t} |alpha - alpha*| + dist_i (onestep rows)
  Eigen::Index k_hat = 0;      // pmle rows
  double column_sum = 0.0;     // |1^T Z_hat|_inf
  double max_decrease = 0.0;   // largest relative drop of the penalized objective between iterations (pmle rows)
  double kkt_ratio = 0.0;      // projected-gradient residual / ||grad l||_F at exit (pmle rows)
  bool converged = true;
  double constraint_residual = 0.0;  // max of the PSD, centering and box residuals of G_hat (pmle rows)
  double seconds = 0.0;
  std::string message;
};

struct ExperimentReport {
  std::vector<ResultRow> rows;
  io::json summary;
  double failure_fraction = 0.0;
  bool failed() const { return failure_fraction > 0.2; }
};

inline std::uint64_t rep_seed(std::uint64_t master, Eigen::Index n, Eigen::Index T, Eigen::Index k, int rep) {
  return derive_seed(master, static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(T),
                     static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(rep));
}

/// max_{i,t} (|alpha_it - alpha*_it| + dist_i(z_i, z*_i)).
inline double max_elementwise_error(const LatentPositions& z, const Baseline& alpha, const LatentPositions& z_star,
                                    const Baseline& alpha_star) {
  const auto align = procrustes(z, z_star);
  const Matrix alpha_err = (alpha.alpha - alpha_star.alpha).cwiseAbs();
  return (alpha_err.colwise() + align.per_row).maxCoeff();
}

namespace detail {

inline std::vector<ResultRow> run_cell(const ExperimentSpec& spec, Eigen::Index n, Eigen::Index T, Eigen::Index k,
                                       int rep) {
  std::vector<ResultRow> rows;
  const std::uint64_t seed = rep_seed(spec.master_seed, n, T, k, rep);
  auto base_row = [&](Estimator e) {
    ResultRow r;
    r.n = n;
    r.T = T;
    r.k = k;
    r.rep = rep;
    r.seed = seed;
    r.estimator = e;
    return r;
  };

  SimInstance sim;
  try {
    SimConfig cfg;
    cfg.n = n;
    cfg.T = T;
    cfg.k = k;
    cfg.alpha_case = spec.alpha_case;
    cfg.seed = seed;
    sim = simulate(cfg);
  } catch (const std::exception& e) {
    for (auto est : spec.estimators) {
      auto r = base_row(est);
      r.message = std::string("simulate: ") + e.what();
      rows.push_back(r);
    }
    return rows;
  }
  const Matrix g_star = sim.z.z * sim.z.z.transpose();
  FitOptions opts = spec.options;
  opts.init.bounds = sim.config.bounds;

  for (auto est : spec.estimators) {
    auto r = base_row(est);
    try {
      if (est == Estimator::onestep) {
        const auto fit = fit_onestep(sim.counts, k, opts);
        r.dist_sq = procrustes(fit.onestep.z, sim.z).dist_sq;
        r.g_error = g_error(fit.onestep.z.z * fit.onestep.z.z.transpose(), g_star);
        r.init_dist_sq = procrustes(fit.init.stage2.z, sim.z).dist_sq;
        r.init_max_error = max_elementwise_error(fit.init.stage2.z, fit.init.stage2.alpha, sim.z, sim.alpha);
        r.column_sum = fit.onestep.z.z.colwise().sum().cwiseAbs().maxCoeff();
        r.seconds = fit.seconds;
      } else {
        const auto fit = fit_pmle(sim.counts, sim.config.bounds, k, opts);
        r.dist_sq = procrustes(*fit.z, sim.z).dist_sq;
        r.g_error = g_error(fit.pmle.g.g, g_star);
        r.k_hat = fit.k_hat;
        r.column_sum = fit.z->z.colwise().sum().cwiseAbs().maxCoeff();
        const auto& trace = fit.pmle.trace;
        for (std::size_t i = 1; i < trace.size(); ++i)
          r.max_decrease = std::max(r.max_decrease, (trace[i - 1] - trace[i]) / std::max(1.0, std::abs(trace[i - 1])));
        // Re-evaluated at the returned (G, alpha), after the final alpha update.
        const double grad_norm = gram_gradient(sim.counts, fit.pmle.g.g, fit.pmle.alpha).norm();
        r.kkt_ratio = pmle_kkt_residual(sim.counts, fit.pmle.g.g, fit.pmle.alpha, fit.pmle.lambda, fit.pmle.step,
                                        sim.config.bounds, opts.pmle.dykstra_iters) /
                      std::max(grad_norm, 1e-300);
        r.converged = fit.pmle.converged;
        const auto cr = constraint_residuals(fit.pmle.g.g, sim.config.bounds.m_z1);
        r.constraint_residual = std::max({cr.psd, cr.centering, cr.box, cr.symmetry});
        r.seconds = fit.seconds;
      }
      r.ok = std::isfinite(r.dist_sq);
      if (!r.ok) r.message = "non-finite error";
    } catch (const std::exception& e) {
      r.ok = false;
      r.message = e.what();
    }
    rows.push_back(std::move(r));
  }
  return rows;
}

inline double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sd_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace detail

inline io::json summarize(const ExperimentSpec& spec, const std::vector<ResultRow>& rows) {
  using Key = std::tuple<std::string, Eigen::Index, Eigen::Index, Eigen::Index>;  // estimator, n, T, k
  std::map<Key, std::vector<const ResultRow*>> groups;
  for (const auto& r : rows) groups[{to_string(r.estimator), r.n, r.T, r.k}].push_back(&r);

  io::json cells = io::json::array();
  std::map<Key, double> means;
  for (const auto& [key, members] : groups) {
    std::vector<double> d, g;
    int failures = 0;
    for (const auto* r : members) {
      if (!r->ok) {
        ++failures;
        continue;
      }
      d.push_back(r->dist_sq);
      g.push_back(r->g_error);
    }
    io::json c;
    c["estimator"] = std::get<0>(key);
    c["n"] = std::get<1>(key);
    c["T"] = std::get<2>(key);
    c["k"] = std::get<3>(key);
    c["ok"] = d.size();
    c["failures"] = failures;
    c["mean_dist_sq"] = detail::mean_of(d);
    c["sd_dist_sq"] = detail::sd_of(d);
    c["mean_g_error"] = detail::mean_of(g);
    c["sd_g_error"] = detail::sd_of(g);
    cells.push_back(c);
    if (!d.empty()) means[key] = detail::mean_of(d);
  }

  io::json slopes = io::json::array();
  io::json flatness = io::json::array();
  // Group cell means by (estimator, n, k) across T, and by (estimator, T, k) across n.
  std::map<std::tuple<std::string, Eigen::Index, Eigen::Index>, std::vector<std::pair<double, double>>> by_t, by_n;
  for (const auto& [key, m] : means) {
    const auto& [est, n, T, k] = key;
    by_t[{est, n, k}].emplace_back(static_cast<double>(T), m);
    by_n[{est, T, k}].emplace_back(static_cast<double>(n), m);
  }
  for (const auto& [key, pts] : by_t) {
    if (pts.size() < 3) continue;
    const auto fit = slope_fit(pts);
    slopes.push_back({{"estimator", std::get<0>(key)},
                      {"n", std::get<1>(key)},
                      {"k", std::get<2>(key)},
                      {"slope", fit.slope},
                      {"intercept", fit.intercept},
                      {"r2", fit.r2}});
  }
  for (const auto& [key, pts] : by_n) {
    if (pts.size() < 2) continue;
    double lo = pts.front().second, hi = lo;
    for (const auto& p : pts) {
      lo = std::min(lo, p.second);
      hi = std::max(hi, p.second);
    }
    flatness.push_back({{"estimator", std::get<0>(key)},
                        {"T", std::get<1>(key)},
                        {"k", std::get<2>(key)},
                        {"max_over_min", hi / lo}});
  }

  io::json s;
  s["scenario"] = to_string(spec.scenario);
  s["alpha_case"] = to_string(spec.alpha_case);
  s["reps"] = spec.reps;
  s["master_seed"] = spec.master_seed;
  s["cells"] = cells;
  s["slopes"] = slopes;
  s["flatness"] = flatness;
  return s;
}

inline void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw InputError("cannot open " + path.string());
  out << "estimator,n,T,k,rep,seed,status,dist_sq,g_error,init_dist_sq,init_max_error,k_hat,column_sum,kkt_ratio,constraint_residual,message\n";
  for (const auto& r : rows) {
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), ',', ';');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    out << to_string(r.estimator) << ',' << r.n << ',' << r.T << ',' << r.k << ',' << r.rep << ',' << r.seed << ','
        << (r.ok ? "ok" : "error") << ',' << io::format_double(r.dist_sq) << ',' << io::format_double(r.g_error)
        << ',' << io::format_double(r.init_dist_sq) << ',' << io::format_double(r.init_max_error) << ','
        << r.k_hat << ',' << io::format_double(r.column_sum) << ',' << io::format_double(r.kkt_ratio) << ','
        << io::format_double(r.constraint_residual) << ',' << msg << '\n';
  }
}

/// Runs every (cell, k, rep) task on up to `spec.threads` workers. Rows are
/// stored by task index, so output order does not depend on scheduling.
/// When `out_dir` is given, writes results.csv and summary.json there.
inline ExperimentReport run_experiment(const ExperimentSpec& spec,
                                       const std::optional<std::filesystem::path>& out_dir = std::nullopt) {
  spec.validate();
  struct Task {
    Eigen::Index n, T, k;
    int rep;
  };
  std::vector<Task> tasks;
  for (const auto& [n, T] : spec.grid)
    for (auto k : spec.k_list)
      for (int rep = 0; rep < spec.reps; ++rep) tasks.push_back({n, T, k, rep});

  std::vector<std::vector<ResultRow>> results(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const auto& t = tasks[i];
      results[i] = detail::run_cell(spec, t.n, t.T, t.k, t.rep);
    }
  };
  const int threads = std::max(1, std::min<int>(spec.threads, static_cast<int>(tasks.size())));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ExperimentReport report;
  std::size_t failures = 0;
  for (auto& chunk : results)
    for (auto& r : chunk) {
      failures += r.ok ? 0 : 1;
      report.rows.push_back(std::move(r));
    }
  report.failure_fraction =
      report.rows.empty() ? 0.0 : static_cast<double>(failures) / static_cast<double>(report.rows.size());
  report.summary = summarize(spec, report.rows);
  report.summary["failure_fraction"] = report.failure_fraction;
  if (out_dir) {
    write_results_csv(*out_dir / "results.csv", report.rows);
    io::write_json(*out_dir / "summary.json", report.summary);
  }
  return report;
}

// ---------------------------------------------------------------------------
// real data
// ---------------------------------------------------------------------------

struct FitReport {
  Estimator method = Estimator::onestep;
  Eigen::Index n = 0, T = 0;
  Eigen::Index k = 0;
  std::optional<Eigen::Index> k_hat;
  ModelBounds bounds;
  Vector baseline_levels;
  io::json diagnostics;
};

/// Fit a stored tensor and write Z.csv, alpha.csv (G.csv for pmle),
/// baseline_levels.csv and report.json into out_dir.
inline FitReport fit_real(const std::filesystem::path& manifest, Estimator method, std::optional<Eigen::Index> k,
                          const FitOptions& options, const std::filesystem::path& out_dir) {
  const CountTensor a = io::read_tensor(manifest);
  FitOptions opts = options;
  FitReport rep;
  rep.method = method;
  rep.n = a.n();
  rep.T = a.T();

  // Stage 1 supplies the bounds; it needs some k, so use 1 when unknown.
  const Stage1Result s1 = init_stage1(a, k.value_or(1), opts.init);
  rep.bounds = bounds_from_stage1(s1);
  opts.init.bounds = rep.bounds;

  Baseline alpha;
  if (method == Estimator::onestep) {
    rep.k = k.value_or(2);
    const PgdResult s2 = init_stage2_pgd(a, rep.k == s1.z.k() ? s1.z : init_stage1(a, rep.k, opts.init).z,
                                         s1.alpha, opts.init);
    const OneStepResult os = one_step(a, s2.z, s2.alpha, opts.onestep);
    io::write_matrix_csv(out_dir / "Z.csv", os.z.z);
    alpha = s2.alpha;
    rep.diagnostics["pgd_iterations"] = s2.iterations;
    rep.diagnostics["pgd_converged"] = s2.converged;
    rep.diagnostics["update_norm"] = os.update_norm;
    rep.diagnostics["reduced_spectrum_min"] = os.reduced_spectrum.size() ? os.reduced_spectrum.minCoeff() : 0.0;
    rep.diagnostics["reduced_spectrum_max"] = os.reduced_spectrum.size() ? os.reduced_spectrum.maxCoeff() : 0.0;
    rep.diagnostics["mode"] = opts.onestep.mode == InfoMode::fisher ? "fisher" : "observed";
  } else {
    const PmleFit fit = fit_pmle(a, rep.bounds, k, opts);
    rep.k_hat = fit.k_hat;
    rep.k = fit.k_used;
    if (fit.z) io::write_matrix_csv(out_dir / "Z.csv", fit.z->z);
    io::write_matrix_csv(out_dir / "G.csv", fit.pmle.g.g);
    alpha = fit.pmle.alpha;
    rep.diagnostics["iterations"] = fit.pmle.iterations;
    rep.diagnostics["converged"] = fit.pmle.converged;
    rep.diagnostics["lambda"] = fit.pmle.lambda;
    rep.diagnostics["trace"] = fit.pmle.trace;
  }
  io::write_matrix_csv(out_dir / "alpha.csv", alpha.alpha);
  rep.baseline_levels = mean_baseline_levels(alpha);
  io::write_matrix_csv(out_dir / "baseline_levels.csv", rep.baseline_levels);

  io::json j;
  j["method"] = to_string(method);
  j["n"] = rep.n;
  j["T"] = rep.T;
  j["k"] = rep.k;
  if (rep.k_hat) j["k_hat"] = *rep.k_hat;
  j["bounds"] = {{"m_z1", rep.bounds.m_z1}, {"m_alpha", rep.bounds.m_alpha}};
  j["baseline_levels"] = std::vector<double>(rep.baseline_levels.data(),
                                             rep.baseline_levels.data() + rep.baseline_levels.size());
  j["diagnostics"] = rep.diagnostics;
  io::write_json(out_dir / "report.json", j);
  return rep;
}

}  // namespace lsm
