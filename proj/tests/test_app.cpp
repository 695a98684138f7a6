#include "lsm/config.hpp"
#include "lsm/experiment.hpp"
#include "lsm/ingest.hpp"
#include "lsm/io.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <random>
#include <sstream>

namespace lsm {
namespace {

namespace fs = std::filesystem;

fs::path scratch_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("lsm_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

IngestConfig day_config() {
  IngestConfig cfg;
  cfg.window_start = *parse_timestamp("2019-08-01 00:00:00");
  cfg.window_end = cfg.window_start + 24 * 3600;
  return cfg;
}

TEST(Timestamp, FormatsAgree) {
  EXPECT_EQ(parse_timestamp("1970-01-01 00:00:00"), 0);
  EXPECT_EQ(parse_timestamp("2019-08-01T01:00:00"), 1564621200);
  EXPECT_EQ(parse_timestamp("1564621200"), 1564621200);
  EXPECT_FALSE(parse_timestamp("yesterday").has_value());
}

TEST(Ingest, HandFixture) {
  std::istringstream csv(
      "start_id,end_id,start_time,duration_s\n"
      "a,b,2019-08-01 00:10:00,300\n"
      "b,a,2019-08-01 00:50:00,600\n"
      "a,a,2019-08-01 01:05:00,900\n");
  const auto parsed = read_trips(csv);
  EXPECT_EQ(parsed.malformed, 0u);
  const auto res = ingest_trips(parsed.records, day_config());
  ASSERT_EQ(res.node_ids, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(res.counts.T(), 24);
  EXPECT_EQ(res.counts[0](0, 1), 2.0);
  EXPECT_EQ(res.counts[0](1, 0), 2.0);
  EXPECT_EQ(res.counts[1](0, 0), 1.0);
  double total = 0.0;
  for (const auto& s : res.counts.slices) total += s.sum();
  EXPECT_EQ(total, 5.0);
}

TEST(Ingest, ShortTripsAreFiltered) {
  std::vector<TripRecord> recs = {{"a", "b", day_config().window_start + 10, 30.0},
                                  {"a", "c", day_config().window_start + 10, 120.0},
                                  {"c", "b", day_config().window_start + 20, 20000.0}};
  const auto res = ingest_trips(recs, day_config());
  EXPECT_EQ(res.kept, 1u);
  EXPECT_EQ(res.filtered, 2u);
  EXPECT_EQ(res.node_ids.size(), 2u);
}

TEST(Ingest, MalformedRowsAreCounted) {
  std::istringstream csv(
      "start_id,end_id,start_time,duration_s\n"
      "a,b,2019-08-01 00:10:00,300\n"
      "a,b,not-a-time,300\n"
      "a,,2019-08-01 00:10:00,300\n"
      "a,b,2019-08-01 00:10:00\n");
  const auto parsed = read_trips(csv);
  EXPECT_EQ(parsed.records.size(), 1u);
  EXPECT_EQ(parsed.malformed, 3u);
}

TEST(Ingest, NothingSurvivesThrows) {
  EXPECT_THROW(ingest_trips({{"a", "b", 0, 30.0}}, day_config()), InputError);
}

TEST(Ingest, ConservationOnSyntheticLog) {
  const auto cfg = day_config();
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> node(0, 49);
  std::uniform_int_distribution<std::int64_t> when(cfg.window_start - 7200, cfg.window_end + 7200);
  std::uniform_real_distribution<double> dur(10.0, 12000.0);
  std::vector<TripRecord> recs;
  std::size_t expected = 0;
  for (int r = 0; r < 10000; ++r) {
    TripRecord t{"s" + std::to_string(node(rng)), "s" + std::to_string(node(rng)), when(rng), dur(rng)};
    if (t.duration >= cfg.min_duration && t.duration <= cfg.max_duration && t.start_time >= cfg.window_start &&
        t.start_time < cfg.window_end)
      ++expected;
    recs.push_back(std::move(t));
  }
  const auto res = ingest_trips(recs, cfg);
  EXPECT_EQ(res.kept, expected);
  EXPECT_EQ(res.kept + res.filtered, recs.size());
  EXPECT_EQ(upper_triangle_total(res.counts), static_cast<double>(expected));
  EXPECT_NO_THROW(res.counts.validate(true));
}

TEST(Io, TensorRoundTrip) {
  const auto dir = scratch_dir("io");
  SimConfig sc;
  sc.n = 12;
  sc.T = 3;
  sc.seed = 1;
  const auto sim = simulate(sc);
  const auto manifest = io::write_tensor(dir / "tensor", sim.counts);
  const auto back = io::read_tensor(manifest);
  ASSERT_EQ(back.T(), 3);
  for (std::size_t t = 0; t < 3; ++t) EXPECT_TRUE((back[t].array() == sim.counts[t].array()).all());
  io::write_matrix_csv(dir / "z.csv", sim.z.z);
  EXPECT_TRUE((io::read_matrix_csv(dir / "z.csv").array() == sim.z.z.array()).all());
}

TEST(Io, MissingFileThrows) { EXPECT_THROW(io::read_matrix_csv("/nonexistent/x.csv"), InputError); }

ExperimentSpec small_spec() {
  ExperimentSpec spec;
  spec.grid = {{25, 4}};
  spec.reps = 1;
  spec.master_seed = 11;
  spec.estimators = {Estimator::onestep, Estimator::pmle};
  return spec;
}

TEST(Experiment, OneRowPerEstimatorPerK) {
  auto spec = small_spec();
  spec.k_list = {1, 2};
  const auto rep = run_experiment(spec);
  EXPECT_EQ(rep.rows.size(), 4u);
  for (const auto& r : rep.rows) EXPECT_TRUE(r.ok) << r.message;
}

TEST(Experiment, DeterministicAcrossRunsAndThreads) {
  auto spec = small_spec();
  spec.reps = 3;
  const auto d1 = scratch_dir("exp1"), d2 = scratch_dir("exp2");
  run_experiment(spec, d1);
  spec.threads = 3;
  run_experiment(spec, d2);
  EXPECT_EQ(slurp(d1 / "results.csv"), slurp(d2 / "results.csv"));
}

TEST(Experiment, FailuresAreRecorded) {
  auto spec = small_spec();
  spec.estimators = {Estimator::pmle};
  spec.options.pmle.lambda_mult = 1e6;  // G = 0, so z_from_g fails
  const auto rep = run_experiment(spec);
  ASSERT_EQ(rep.rows.size(), 1u);
  EXPECT_FALSE(rep.rows[0].ok);
  EXPECT_TRUE(rep.failed());
}

TEST(FitReal, WritesOutputsAndSelectsRank) {
  const auto dir = scratch_dir("fit");
  SimConfig sc;
  sc.n = 40;
  sc.T = 6;
  sc.seed = 3;
  const auto manifest = io::write_tensor(dir / "tensor", simulate(sc).counts);
  const auto rep = fit_real(manifest, Estimator::pmle, std::nullopt, FitOptions{}, dir / "out");
  EXPECT_TRUE(rep.k_hat.has_value());
  const auto report = io::read_json(dir / "out" / "report.json");
  EXPECT_TRUE(report.contains("k_hat"));
  EXPECT_TRUE(fs::exists(dir / "out" / "G.csv"));
  EXPECT_EQ(io::read_matrix_csv(dir / "out" / "baseline_levels.csv").rows(), 6);

  fit_real(manifest, Estimator::onestep, 2, FitOptions{}, dir / "os1");
  fit_real(manifest, Estimator::onestep, 2, FitOptions{}, dir / "os2");
  const Matrix z = io::read_matrix_csv(dir / "os1" / "Z.csv");
  EXPECT_EQ(z.rows(), 40);
  EXPECT_EQ(z.cols(), 2);
  EXPECT_EQ(slurp(dir / "os1" / "Z.csv"), slurp(dir / "os2" / "Z.csv"));
}

TEST(BaselineLevels, ClosedForm) {
  Matrix al(2, 1);
  al << 0.0, std::log(3.0);
  EXPECT_NEAR(mean_baseline_levels(Baseline(al))(0), 16.0 / 4.0, 1e-12);
}

TEST(Config, AppliesNestedKeys) {
  const auto j = io::json::parse(R"({
    "experiment": {"scenario": "vary_n", "grid": [[50, 20], [100, 20]], "k_list": [2],
                   "alpha_case": "two_block", "estimators": ["pmle"], "reps": 4, "master_seed": 9},
    "pmle": {"lambda_mult": 0.5},
    "onestep": {"mode": "observed"},
    "ingest": {"window": ["2019-08-01 00:00:00", "2019-08-02 00:00:00"], "min_duration": 90}
  })");
  ExperimentSpec spec;
  config::apply_experiment(j, spec);
  EXPECT_EQ(spec.scenario, Scenario::vary_n);
  EXPECT_EQ(spec.grid.size(), 2u);
  EXPECT_EQ(spec.alpha_case, AlphaCase::two_block);
  EXPECT_EQ(spec.reps, 4);
  EXPECT_EQ(spec.options.pmle.lambda_mult, 0.5);
  EXPECT_EQ(spec.options.onestep.mode, InfoMode::observed);
  IngestConfig ic;
  config::apply_ingest(j, ic);
  EXPECT_EQ(ic.window_end - ic.window_start, 86400);
  EXPECT_EQ(ic.min_duration, 90.0);
  EXPECT_THROW(config::apply_onestep(io::json::parse(R"({"mode": "newton"})"), spec.options.onestep), InputError);
}

}  // namespace
}  // namespace lsm
