// lsm: command line front end for simulation, fitting, evaluation,
// experiments and trip-log ingestion.

#include "lsm/config.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using lsm::io::json;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out = "out";
  std::string config;
};

json load_config(const Globals& g) { return g.config.empty() ? json::object() : lsm::io::read_json(g.config); }

std::vector<std::pair<Eigen::Index, Eigen::Index>> parse_grid(const std::string& text) {
  // "100:5,100:10"
  std::vector<std::pair<Eigen::Index, Eigen::Index>> grid;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    const auto colon = cell.find(':');
    if (colon == std::string::npos) throw lsm::InputError("grid cells are n:T, got '" + cell + "'");
    grid.emplace_back(std::stol(cell.substr(0, colon)), std::stol(cell.substr(colon + 1)));
  }
  return grid;
}

lsm::InfoMode parse_mode(const std::string& m) {
  if (m == "fisher") return lsm::InfoMode::fisher;
  if (m == "observed") return lsm::InfoMode::observed;
  throw lsm::InputError("--mode must be fisher or observed");
}

json trace_json(const std::vector<double>& trace) { return json(trace); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Longitudinal Poisson latent space models"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Random seed");
  app.add_option("--threads", g.threads, "Worker threads for experiments");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--config", g.config, "JSON configuration file");

  // simulate -----------------------------------------------------------------
  auto* sim = app.add_subcommand("simulate", "Simulate ground truth and a count tensor");
  lsm::SimConfig sim_cfg;
  std::string sim_case = "uniform";
  sim->add_option("--n", sim_cfg.n, "Nodes")->capture_default_str();
  sim->add_option("--T", sim_cfg.T, "Time points")->capture_default_str();
  sim->add_option("--k", sim_cfg.k, "Latent dimension")->capture_default_str();
  sim->add_option("--alpha-case", sim_case, "uniform | two_block")->capture_default_str();

  // init ---------------------------------------------------------------------
  auto* init = app.add_subcommand("init", "Two-stage initial estimate");
  std::string tensor_path;
  Eigen::Index init_k = 2;
  double m_z1 = 0.0, m_alpha = 0.0;
  init->add_option("--tensor", tensor_path, "Count tensor manifest")->required();
  init->add_option("--k", init_k, "Latent dimension")->capture_default_str();
  init->add_option("--m-z1", m_z1, "Bound on ||z_i||^2 (default: from stage 1)");
  init->add_option("--m-alpha", m_alpha, "Bound on |alpha_it| (default: from stage 1)");

  // fit ----------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "Fit the one-step estimator or the penalized MLE");
  std::string method = "onestep", mode = "fisher", z_init_path, alpha_init_path;
  std::optional<Eigen::Index> fit_k;
  std::optional<double> lambda_mult, rank_eps;
  int steps = 1;
  fit->add_option("--tensor", tensor_path, "Count tensor manifest")->required();
  fit->add_option("--method", method, "onestep | pmle")->capture_default_str();
  fit->add_option("--k", fit_k, "Latent dimension (pmle: chosen by rank selection if absent)");
  fit->add_option("--lambda-mult", lambda_mult, "Penalty multiplier");
  fit->add_option("--rank-eps", rank_eps, "Rank selection exponent in (0, 1/2)");
  fit->add_option("--mode", mode, "fisher | observed")->capture_default_str();
  fit->add_option("--steps", steps, "Number of one-step updates")->capture_default_str();
  fit->add_option("--z-init", z_init_path, "Initial Z CSV (skips init)");
  fit->add_option("--alpha-init", alpha_init_path, "Initial alpha CSV (skips init)");

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "Compare an estimate with the truth");
  std::string est_path, truth_path, g_est_path;
  ev->add_option("--estimate", est_path, "Estimated Z CSV")->required();
  ev->add_option("--truth", truth_path, "True Z CSV")->required();
  ev->add_option("--g-estimate", g_est_path, "Estimated G CSV (optional)");

  // experiment ---------------------------------------------------------------
  auto* exp = app.add_subcommand("experiment", "Monte-Carlo experiment");
  std::string grid_text, scenario_text, case_text, estimators_text;
  std::vector<Eigen::Index> k_list;
  std::optional<int> reps;
  exp->add_option("--grid", grid_text, "Cells n:T,n:T,...");
  exp->add_option("--scenario", scenario_text, "vary_T | vary_n");
  exp->add_option("--k-list", k_list, "Latent dimensions");
  exp->add_option("--alpha-case", case_text, "uniform | two_block");
  exp->add_option("--estimators", estimators_text, "Comma-separated: onestep,pmle");
  exp->add_option("--reps", reps, "Repetitions per cell");
  exp->add_option("--lambda-mult", lambda_mult, "Penalty multiplier");

  // ingest -------------------------------------------------------------------
  auto* ing = app.add_subcommand("ingest", "Bin trip records into a count tensor");
  std::string trips_path, window_start, window_end;
  std::optional<double> min_dur, max_dur;
  std::optional<std::int64_t> bin_width;
  ing->add_option("--trips", trips_path, "CSV: start_id,end_id,start_time,duration_s")->required();
  ing->add_option("--window-start", window_start, "Window start (epoch seconds or YYYY-MM-DD HH:MM:SS, UTC)");
  ing->add_option("--window-end", window_end, "Window end (exclusive)");
  ing->add_option("--min-duration", min_dur, "Minimum trip duration in seconds");
  ing->add_option("--max-duration", max_dur, "Maximum trip duration in seconds");
  ing->add_option("--bin-width", bin_width, "Bin width in seconds");

  CLI11_PARSE(app, argc, argv);

  try {
    const json cfg = load_config(g);
    const fs::path out = g.out;
    lsm::FitOptions opts;
    lsm::config::apply_options(cfg, opts);

    if (*sim) {
      sim_cfg.alpha_case = lsm::alpha_case_from_string(sim_case);
      sim_cfg.seed = g.seed;
      const auto inst = lsm::simulate(sim_cfg);
      lsm::io::write_tensor(out / "tensor", inst.counts);
      lsm::io::write_matrix_csv(out / "Z_star.csv", inst.z.z);
      lsm::io::write_matrix_csv(out / "alpha_star.csv", inst.alpha.alpha);
      lsm::io::write_json(out / "config.json", {{"n", sim_cfg.n},
                                                {"T", sim_cfg.T},
                                                {"k", sim_cfg.k},
                                                {"alpha_case", lsm::to_string(sim_cfg.alpha_case)},
                                                {"seed", sim_cfg.seed},
                                                {"bounds",
                                                 {{"m_z1", inst.config.bounds.m_z1},
                                                  {"m_alpha", inst.config.bounds.m_alpha},
                                                  {"m_theta1", inst.config.bounds.m_theta1}}}});
      std::cout << "wrote " << (out / "tensor" / "manifest.json").string() << '\n';
      return 0;
    }

    if (*init) {
      const auto a = lsm::io::read_tensor(tensor_path);
      const auto s1 = lsm::init_stage1(a, init_k, opts.init);
      auto bounds = lsm::bounds_from_stage1(s1);
      if (m_z1 > 0.0) bounds.m_z1 = m_z1;
      if (m_alpha > 0.0) bounds.m_alpha = m_alpha;
      opts.init.bounds = bounds;
      const auto s2 = lsm::init_stage2_pgd(a, s1.z, s1.alpha, opts.init);
      lsm::io::write_matrix_csv(out / "Z_init.csv", s2.z.z);
      lsm::io::write_matrix_csv(out / "alpha_init.csv", s2.alpha.alpha);
      lsm::io::write_json(out / "init_trace.json", {{"trace", trace_json(s2.trace)},
                                                    {"iterations", s2.iterations},
                                                    {"converged", s2.converged},
                                                    {"empty_slices", s1.empty_slices},
                                                    {"bounds", {{"m_z1", bounds.m_z1}, {"m_alpha", bounds.m_alpha}}}});
      std::cout << "initializer: " << s2.iterations << " iterations, log-likelihood " << s2.trace.back() << '\n';
      return 0;
    }

    if (*fit) {
      opts.onestep.mode = parse_mode(mode);
      opts.onestep.steps = steps;
      if (lambda_mult) opts.pmle.lambda_mult = *lambda_mult;
      if (rank_eps) opts.pmle.rank_eps = *rank_eps;
      const auto est = lsm::estimator_from_string(method);
      if (est == lsm::Estimator::onestep && !z_init_path.empty()) {
        if (alpha_init_path.empty()) throw lsm::InputError("--z-init requires --alpha-init");
        const auto a = lsm::io::read_tensor(tensor_path);
        const lsm::LatentPositions z0(lsm::io::read_matrix_csv(z_init_path));
        const lsm::Baseline alpha0(lsm::io::read_matrix_csv(alpha_init_path));
        const auto res = lsm::one_step(a, z0, alpha0, opts.onestep);
        lsm::io::write_matrix_csv(out / "Z.csv", res.z.z);
        const auto& spec = res.reduced_spectrum;
        lsm::io::write_json(out / "diagnostics.json",
                            {{"mode", mode},
                             {"update_norm", res.update_norm},
                             {"spectrum", std::vector<double>(spec.data(), spec.data() + spec.size())},
                             {"ridge_warnings", res.ridge_warnings}});
      } else {
        const auto rep = lsm::fit_real(tensor_path, est, fit_k, opts, out);
        std::cout << "fitted " << method << " with k = " << rep.k << '\n';
      }
      return 0;
    }

    if (*ev) {
      const lsm::Matrix z_hat = lsm::io::read_matrix_csv(est_path);
      const lsm::Matrix z_star = lsm::io::read_matrix_csv(truth_path);
      const auto al = lsm::procrustes(z_hat, z_star);
      json metrics = {{"dist_sq", al.dist_sq},
                      {"g_error_from_z", lsm::g_error(z_hat * z_hat.transpose(), z_star * z_star.transpose())},
                      {"max_row_dist", al.per_row.maxCoeff()}};
      if (!g_est_path.empty())
        metrics["g_error"] = lsm::g_error(lsm::io::read_matrix_csv(g_est_path), z_star * z_star.transpose());
      lsm::io::write_json(out / "metrics.json", metrics);
      std::cout << metrics.dump(2) << '\n';
      return 0;
    }

    if (*exp) {
      lsm::ExperimentSpec spec;
      spec.master_seed = g.seed;
      spec.threads = g.threads;
      lsm::config::apply_experiment(cfg, spec);
      if (!grid_text.empty()) spec.grid = parse_grid(grid_text);
      if (!scenario_text.empty()) spec.scenario = lsm::scenario_from_string(scenario_text);
      if (!k_list.empty()) spec.k_list = k_list;
      if (!case_text.empty()) spec.alpha_case = lsm::alpha_case_from_string(case_text);
      if (!estimators_text.empty()) {
        spec.estimators.clear();
        std::stringstream ss(estimators_text);
        std::string e;
        while (std::getline(ss, e, ',')) spec.estimators.push_back(lsm::estimator_from_string(e));
      }
      if (reps) spec.reps = *reps;
      if (lambda_mult) spec.options.pmle.lambda_mult = *lambda_mult;
      if (app.get_option("--seed")->count()) spec.master_seed = g.seed;
      if (app.get_option("--threads")->count()) spec.threads = g.threads;
      const auto report = lsm::run_experiment(spec, out);
      std::cout << report.summary.dump(2) << '\n';
      return report.failed() ? 2 : 0;
    }

    if (*ing) {
      lsm::IngestConfig icfg;
      lsm::config::apply_ingest(cfg, icfg);
      if (min_dur) icfg.min_duration = *min_dur;
      if (max_dur) icfg.max_duration = *max_dur;
      if (bin_width) icfg.bin_width = *bin_width;
      auto parse_ts = [](const std::string& s) {
        const auto ts = lsm::parse_timestamp(s);
        if (!ts) throw lsm::InputError("cannot parse timestamp '" + s + "'");
        return *ts;
      };
      if (!window_start.empty()) icfg.window_start = parse_ts(window_start);
      if (!window_end.empty()) icfg.window_end = parse_ts(window_end);
      std::ifstream in(trips_path);
      if (!in) throw lsm::InputError("cannot open " + trips_path);
      const auto parsed = lsm::read_trips(in);
      const auto res = lsm::ingest_trips(parsed.records, icfg);
      const auto manifest = lsm::io::write_tensor(out / "tensor", res.counts);
      std::ofstream nodes(out / "nodes.csv");
      nodes << "index,id\n";
      for (std::size_t i = 0; i < res.node_ids.size(); ++i) nodes << i << ',' << res.node_ids[i] << '\n';
      const json summary = {{"n", res.counts.n()},
                            {"T", res.counts.T()},
                            {"kept", res.kept},
                            {"filtered", res.filtered},
                            {"malformed", parsed.malformed},
                            {"total_events", lsm::upper_triangle_total(res.counts)}};
      lsm::io::write_json(out / "ingest.json", summary);
      if (parsed.malformed) std::cerr << "warning: skipped " << parsed.malformed << " malformed rows\n";
      std::cout << summary.dump(2) << '\n';
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
