#pragma once

// JSON configuration for the command line front end. Keys mirror the
// struct fields; anything absent keeps its default.
//
//   {
//     "experiment": {"scenario": "vary_T", "grid": [[100, 5], [100, 10]],
//                    "k_list": [2], "alpha_case": "uniform",
//                    "estimators": ["onestep", "pmle"], "reps": 10,
//                    "master_seed": 1, "threads": 1},
//     "init": {...InitConfig...}, "onestep": {...}, "pmle": {...},
//     "ingest": {"min_duration": 60, "max_duration": 10800,
//                "bin_width": 3600, "window": [start, end]}
//   }

#include "lsm/experiment.hpp"
#include "lsm/ingest.hpp"

namespace lsm::config {

using io::json;

template <class T>
void read_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void apply_init(const json& j, InitConfig& c) {
  read_if(j, "usvt_threshold_mult", c.usvt_threshold_mult);
  read_if(j, "clip_floor", c.clip_floor);
  read_if(j, "pgd_step_z", c.pgd_step_z);
  read_if(j, "pgd_step_alpha", c.pgd_step_alpha);
  read_if(j, "pgd_max_iters", c.pgd_max_iters);
  read_if(j, "pgd_tol", c.pgd_tol);
  if (j.contains("bounds")) {
    read_if(j["bounds"], "m_z1", c.bounds.m_z1);
    read_if(j["bounds"], "m_alpha", c.bounds.m_alpha);
    read_if(j["bounds"], "m_theta1", c.bounds.m_theta1);
  }
}

inline void apply_onestep(const json& j, OneStepConfig& c) {
  if (j.contains("mode")) {
    const auto m = j["mode"].get<std::string>();
    if (m == "fisher") c.mode = InfoMode::fisher;
    else if (m == "observed") c.mode = InfoMode::observed;
    else throw InputError("onestep.mode must be fisher or observed");
  }
  if (j.contains("basis_method")) {
    const auto m = j["basis_method"].get<std::string>();
    if (m == "analytic_complement") c.basis_method = BasisMethod::analytic_complement;
    else if (m == "eigen_threshold") c.basis_method = BasisMethod::eigen_threshold;
    else throw InputError("onestep.basis_method must be analytic_complement or eigen_threshold");
  }
  read_if(j, "eigen_tol", c.eigen_tol);
  read_if(j, "steps", c.steps);
}

inline void apply_pmle(const json& j, PmleConfig& c) {
  read_if(j, "lambda_mult", c.lambda_mult);
  read_if(j, "outer_max_iters", c.outer_max_iters);
  read_if(j, "outer_tol", c.outer_tol);
  read_if(j, "dykstra_iters", c.dykstra_iters);
  read_if(j, "rank_eps", c.rank_eps);
  read_if(j, "alpha_bound", c.alpha_bound);
}

inline void apply_options(const json& j, FitOptions& o) {
  if (j.contains("init")) apply_init(j["init"], o.init);
  if (j.contains("onestep")) apply_onestep(j["onestep"], o.onestep);
  if (j.contains("pmle")) apply_pmle(j["pmle"], o.pmle);
}

inline void apply_experiment(const json& root, ExperimentSpec& s) {
  apply_options(root, s.options);
  if (!root.contains("experiment")) return;
  const json& j = root["experiment"];
  if (j.contains("scenario")) s.scenario = scenario_from_string(j["scenario"].get<std::string>());
  if (j.contains("grid")) {
    s.grid.clear();
    for (const auto& cell : j["grid"]) {
      if (!cell.is_array() || cell.size() != 2) throw InputError("grid cells must be [n, T] pairs");
      s.grid.emplace_back(cell[0].get<Eigen::Index>(), cell[1].get<Eigen::Index>());
    }
  }
  read_if(j, "k_list", s.k_list);
  if (j.contains("alpha_case")) s.alpha_case = alpha_case_from_string(j["alpha_case"].get<std::string>());
  if (j.contains("estimators")) {
    s.estimators.clear();
    for (const auto& e : j["estimators"]) s.estimators.push_back(estimator_from_string(e.get<std::string>()));
  }
  read_if(j, "reps", s.reps);
  read_if(j, "master_seed", s.master_seed);
  read_if(j, "threads", s.threads);
}

inline void apply_ingest(const json& root, IngestConfig& c) {
  if (!root.contains("ingest")) return;
  const json& j = root["ingest"];
  read_if(j, "min_duration", c.min_duration);
  read_if(j, "max_duration", c.max_duration);
  read_if(j, "bin_width", c.bin_width);
  if (j.contains("window")) {
    const auto& w = j["window"];
    if (!w.is_array() || w.size() != 2) throw InputError("ingest.window must be [start, end]");
    auto parse = [](const json& v) -> std::int64_t {
      if (v.is_number()) return v.get<std::int64_t>();
      const auto ts = parse_timestamp(v.get<std::string>());
      if (!ts) throw InputError("ingest.window: unparseable timestamp");
      return *ts;
    };
    c.window_start = parse(w[0]);
    c.window_end = parse(w[1]);
  }
}

}  // namespace lsm::config
