#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "greedyshift/harness/commands.hpp"
#include "helpers.hpp"

using namespace greedyshift;
using namespace greedyshift::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("greedyshift_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json without_timing(json j) {
  j.erase("wall_time_ms");
  return j;
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(GREEDYSHIFT_CLI) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Csv, ParsesHeaderAndRows) {
  std::istringstream in("x0, x1 ,y\n1,2,3\n\n4,5.5,-6e-1\n");
  const Table t = read_table(in, "mem");
  EXPECT_EQ(t.header, (std::vector<std::string>{"x0", "x1", "y"}));
  ASSERT_EQ(t.values.rows(), 2);
  EXPECT_DOUBLE_EQ(t.values(1, 2), -0.6);
  const TrainingTable tr = training_from_table(t, "mem");
  EXPECT_EQ(tr.data.p(), 2);
  EXPECT_EQ(tr.data.feature_names(), (std::vector<std::string>{"x0", "x1"}));
}

TEST(Csv, MalformedRowNamesTheLine) {
  std::istringstream short_row("x0,y\n1,2\n3\n");
  try {
    read_table(short_row, "train.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  std::istringstream bad_number("x0,y\n1,2\n3,abc\n");
  try {
    read_table(bad_number, "train.csv");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3, column 2"), std::string::npos) << e.what();
  }
  std::istringstream dup("x0,x0,y\n1,2,3\n");
  EXPECT_THROW(read_table(dup, "d"), ValidationError);
  std::istringstream nan("x0,y\n1,nan\n");
  EXPECT_THROW(read_table(nan, "d"), ValidationError);
  std::istringstream no_y("a,b\n1,2\n2,3\n");
  EXPECT_THROW(training_from_table(read_table(no_y, "d"), "d"), ValidationError);
}

TEST(Csv, ImportanceColumnAndTestInputReordering) {
  std::istringstream in("w,x1,x0,y\n1,2,3,4\n2,5,6,7\n");
  const TrainingTable tr = training_from_table(read_table(in, "m"), "m", "w");
  ASSERT_TRUE(tr.importance.has_value());
  EXPECT_EQ(tr.data.feature_names(), (std::vector<std::string>{"x1", "x0"}));
  std::istringstream te("x0,x1\n9,8\n");
  const Matrix x = inputs_from_table(read_table(te, "t"), tr.data.feature_names(), "t");
  EXPECT_EQ(x(0, 0), 8);
  EXPECT_EQ(x(0, 1), 9);
}

TEST(Csv, RoundTripsDoublesExactly) {
  const fs::path dir = scratch_dir("roundtrip");
  const Matrix x = testutil::gaussian_matrix(1, 5, 3);
  const Vector y = testutil::gaussian_matrix(2, 5, 1).col(0);
  write_matrix_csv(dir / "d.csv", default_feature_names(3), x, &y);
  const TrainingTable tr = training_from_table(read_table(dir / "d.csv"), "d");
  EXPECT_EQ(tr.data.x(), x);
  EXPECT_EQ(tr.data.y(), y);
}

TEST(Config, ParsesAndRejectsUnknownKeys) {
  const json j = json::parse(R"({"method": "oga+hdic", "seed": 9,
      "schedule": {"s_a": 3, "eta": 1},
      "scenario": {"n": 50, "p": 20, "xi": 0.5, "q_declared": 3}})");
  const HarnessConfig cfg = parse_config(j);
  EXPECT_EQ(cfg.resolved_method(), Method::oga_hdic);
  EXPECT_EQ(cfg.seed, 9u);
  EXPECT_EQ(cfg.scenario->seed, 9u);
  EXPECT_DOUBLE_EQ(cfg.schedule.s_a, 3.0);
  EXPECT_DOUBLE_EQ(cfg.schedule.q, 3.0);
  EXPECT_DOUBLE_EQ(cfg.schedule.M_eta, 1.5);

  EXPECT_THROW(parse_config(json::parse(R"({"sceanrio": {}})")), ValidationError);
  EXPECT_THROW(parse_config(json::parse(R"({"schedule": {"s_b": 1}})")), ValidationError);
  EXPECT_THROW(parse_config(json::parse(R"({"method": "lasso"})")), ValidationError);
  EXPECT_THROW(parse_config(json::parse(R"({"scenario": {"n": "many"}})")), ValidationError);
  EXPECT_THROW(parse_config(json::parse(R"({"schedule": {"eta": 1, "M_eta": 1}})")), ValidationError);
  EXPECT_THROW(parse_config(json::parse(R"({"scenario": {}, "data": {"train_csv": "a"}})")),
               ValidationError);
}

TEST(Config, WeightModeImpliesMethod) {
  const HarnessConfig est = parse_config(json::parse(R"({"scenario": {"weight_mode": "estimated"}})"));
  EXPECT_EQ(est.resolved_method(), Method::iwoga_hdiwic_s);
  const HarnessConfig clash =
      parse_config(json::parse(R"({"method": "iwoga+hdiwic", "scenario": {"weight_mode": "estimated"}})"));
  EXPECT_THROW(clash.resolved_method(), ValidationError);
  EXPECT_EQ(parse_config(json::parse("{}")).resolved_method(), Method::iwoga_hdiwic);
}

TEST(Pipeline, NoShiftMethodsAgree) {
  ScenarioConfig sc;
  sc.n = 80;
  sc.p = 60;
  sc.shift_mean = sc.shift_cov = 0.0;
  const Population pop = make_population(sc);
  ScheduleConfig cfg;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto a = run_simulated(pop, sc, cfg, Method::iwoga_hdiwic, seed);
    const auto b = run_simulated(pop, sc, cfg, Method::oga_hdic, seed);
    EXPECT_EQ(a.pipeline.trace.selected_k, b.pipeline.trace.selected_k);
    EXPECT_EQ(a.pipeline.selected.model, b.pipeline.selected.model);
    EXPECT_EQ(a.pipeline.selected.beta, b.pipeline.selected.beta);
    EXPECT_EQ(a.pipeline.trace.values, b.pipeline.trace.values);
  }
}

TEST(Pipeline, RecordIsDeterministic) {
  ScenarioConfig sc;
  sc.n = 60;
  sc.p = 40;
  const Population pop = make_population(sc);
  const auto a = run_simulated(pop, sc, ScheduleConfig{}, Method::iwoga_hdiwic_s, 3);
  const auto b = run_simulated(pop, sc, ScheduleConfig{}, Method::iwoga_hdiwic_s, 3);
  const json src = {{"type", "simulated"}};
  EXPECT_EQ(without_timing(run_record(src, {}, a.pipeline, a.mcpe, a.cpe, 3, 10)).dump(),
            without_timing(run_record(src, {}, b.pipeline, b.mcpe, b.cpe, 3, 99)).dump());
}

TEST(RateSweep, Preconditions) {
  ScenarioConfig sc;
  SweepConfig sw;
  sw.n = {20, 30, 40, 50};
  sw.replications = 1;
  EXPECT_THROW(rate_sweep(sc, {}, sw, Method::iwoga_hdiwic, 1, 1), ValidationError);
  sw.replications = 20;
  sw.n = {20, 30, 40};
  EXPECT_THROW(rate_sweep(sc, {}, sw, Method::iwoga_hdiwic, 1, 1), ValidationError);
}

TEST(RateSweep, DegenerateNoiseSkipsSlope) {
  ScenarioConfig sc;
  sc.noise_sd = 1e-9;
  SweepConfig sw;
  sw.n = {20, 30, 40, 50};
  sw.replications = 20;
  const auto r = rate_sweep(sc, {}, sw, Method::iwoga_hdiwic, 1, 1);
  EXPECT_FALSE(r.slope.has_value());
  EXPECT_FALSE(r.slope_skipped.empty());
  EXPECT_EQ(r.cells.size(), 4u);
}

TEST(RateSweep, ThreadCountDoesNotChangeResults) {
  ScenarioConfig sc;
  SweepConfig sw;
  sw.n = {20, 30, 40, 50};
  sw.replications = 20;
  const auto a = rate_sweep(sc, {}, sw, Method::iwoga_hdiwic_s, 5, 1);
  const auto b = rate_sweep(sc, {}, sw, Method::iwoga_hdiwic_s, 5, 4);
  ASSERT_TRUE(a.slope && b.slope);
  EXPECT_EQ(*a.slope, *b.slope);
  for (std::size_t i = 0; i < a.rows.size(); ++i) EXPECT_EQ(a.rows[i].error, b.rows[i].error);
}

TEST(WeightsDiag, TrueParametersGiveZeroDiagnostics) {
  ScenarioConfig sc;
  sc.n = 100;
  sc.p = 20;
  const Population pop = make_population(sc);
  const SimulatedDraw draw = draw_dataset(pop, sc.n, 2, sc.n);
  const auto d = weights_diagnostics(pop, draw, true_importance(pop), ScheduleConfig{});
  EXPECT_EQ(d.max_weight_deviation, 0.0);
  EXPECT_EQ(d.cross_moment, 0.0);
  EXPECT_EQ(d.noise_cross, 0.0);
  EXPECT_EQ(d.noise_variance, 0.0);
}

TEST(WeightsDiag, ShrinkWithMoreEstimationSamples) {
  ScenarioConfig sc;
  sc.n = 200;
  sc.p = 20;
  const Population pop = make_population(sc);
  std::vector<double> small, large;
  for (std::uint64_t seed = 0; seed < 15; ++seed) {
    const SimulatedDraw a = draw_dataset(pop, sc.n, seed, 200);
    const SimulatedDraw b = draw_dataset(pop, sc.n, seed, 2000);
    // Same training rows; only the test-input sample size differs.
    small.push_back(weights_diagnostics(pop, a, fit_gaussian_importance(a.data.x(), a.test_inputs, {0}), {})
                        .max_weight_deviation);
    large.push_back(weights_diagnostics(pop, b, fit_gaussian_importance(b.data.x(), b.test_inputs, {0}), {})
                        .max_weight_deviation);
  }
  auto median = [](std::vector<double> v) {
    std::nth_element(v.begin(), v.begin() + 7, v.end());
    return v[7];
  };
  EXPECT_LT(median(large), median(small));
}

TEST(WeightsDiag, NoShiftWeightsConcentrateNearOne) {
  // Estimated ratios of two samples from the same law: the mean deviation
  // from 1 is of order n^{-1/2} and shrinks roughly threefold from 400 to 4000.
  ScenarioConfig sc;
  sc.p = 10;
  sc.shift_mean = sc.shift_cov = 0.0;
  auto median_deviation = [&](Index n) {
    sc.n = n;
    const Population pop = make_population(sc);
    std::vector<double> devs;
    for (std::uint64_t seed = 0; seed < 7; ++seed) {
      const SimulatedDraw draw = draw_dataset(pop, n, seed, n);
      const auto est = fit_gaussian_importance(draw.data.x(), draw.test_inputs, {0});
      const WeightVector w = build_weights(est, draw.data.x(), 1e6);
      devs.push_back((w.values().array() - 1.0).abs().mean());
    }
    std::nth_element(devs.begin(), devs.begin() + 3, devs.end());
    return devs[3];
  };
  const double small = median_deviation(400);
  const double large = median_deviation(4000);
  EXPECT_LT(small, 0.2);
  EXPECT_LT(large, 0.5 * small);
}

TEST(Cli, ExitCodesAndOutputs) {
  const fs::path dir = scratch_dir("cli");
  write_file(dir / "sim.json", R"({"seed": 4, "scenario": {"n": 60, "p": 30}})");
  EXPECT_EQ(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " + (dir / "sim").string()), 0);
  EXPECT_TRUE(fs::exists(dir / "sim" / "train.csv"));
  EXPECT_TRUE(fs::exists(dir / "sim" / "test_inputs.csv"));
  EXPECT_TRUE(fs::exists(dir / "sim" / "population.json"));

  write_file(dir / "csv.json", R"({"method": "iwoga+hdiwic_s",
      "data": {"train_csv": "sim/train.csv", "test_inputs_csv": "sim/test_inputs.csv",
               "weight_columns": ["x0"]}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "csv.json").string() + " --out " + (dir / "fit").string()), 0);
  const json rec = json::parse(read_file(dir / "fit" / "run.json"));
  EXPECT_TRUE(rec["mcpe"].is_null());
  EXPECT_GE(rec["selected_k"].get<int>(), 1);
  EXPECT_EQ(read_file(dir / "fit" / "trace.csv").substr(0, 20), "k,sigma2,criterion\n1");

  write_file(dir / "known.json", R"({"method": "iwoga+hdiwic", "data": {"train_csv": "sim/train.csv"}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "known.json").string() + " --out " + (dir / "x").string()), 2);
  write_file(dir / "bad.json", R"({"scenario": {"n": 3}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "bad.json").string() + " --out " + (dir / "x").string()), 2);
  EXPECT_EQ(run_cli("fit --config " + (dir / "missing.json").string()), 2);
  EXPECT_EQ(run_cli("fit"), 2);
  write_file(dir / "train_bad.csv", "x0,x1,y\n1,2,3\n4,5\n");
  write_file(dir / "badcsv.json", R"({"method": "oga+hdic", "data": {"train_csv": "train_bad.csv"}})");
  EXPECT_EQ(run_cli("fit --config " + (dir / "badcsv.json").string() + " --out " + (dir / "x").string()), 2);
}

TEST(Cli, ByteIdenticalAcrossRunsAndThreads) {
  const fs::path dir = scratch_dir("determinism");
  write_file(dir / "sweep.json", R"({"method": "iwoga+hdiwic_s", "seed": 3,
      "scenario": {"p": 30, "weight_mode": "estimated"},
      "sweep": {"n": [30, 40, 50, 60], "p": [30, 30, 30, 30], "replications": 20}})");
  write_file(dir / "fit.json", R"({"seed": 3, "scenario": {"n": 80, "p": 50, "misspec_amplitude": 0.3},
      "evaluation": {"mc_draws": 2000}})");
  write_file(dir / "diag.json", R"({"seed": 3, "scenario": {"n": 80, "p": 50}})");
  for (const char* t : {"1", "4"}) {
    for (int run = 0; run < 2; ++run) {
      const std::string tag = std::string(t) + "_" + std::to_string(run);
      const std::string common = " --threads " + std::string(t) + " --out " + (dir / tag).string();
      ASSERT_EQ(run_cli("rate-sweep --config " + (dir / "sweep.json").string() + common), 0);
      ASSERT_EQ(run_cli("fit --config " + (dir / "fit.json").string() + common), 0);
      ASSERT_EQ(run_cli("weights-diag --config " + (dir / "diag.json").string() + common), 0);
      ASSERT_EQ(run_cli("simulate --config " + (dir / "diag.json").string() + common), 0);
    }
  }
  const fs::path ref = dir / "1_0";
  for (const char* tag : {"1_1", "4_0", "4_1"}) {
    for (const char* f : {"sweep.csv", "replications.csv", "trace.csv", "train.csv", "test_inputs.csv",
                          "population.json"})
      EXPECT_EQ(read_file(ref / f), read_file(dir / tag / f)) << tag << "/" << f;
    for (const char* f : {"sweep.json", "run.json", "weights_diag.json"})
      EXPECT_EQ(without_timing(json::parse(read_file(ref / f))),
                without_timing(json::parse(read_file(dir / tag / f))))
          << tag << "/" << f;
  }
}

TEST(Cli, SeedOverrideChangesOutput) {
  const fs::path dir = scratch_dir("seed");
  write_file(dir / "sim.json", R"({"seed": 4, "scenario": {"n": 30, "p": 10}})");
  ASSERT_EQ(run_cli("simulate --config " + (dir / "sim.json").string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run_cli("simulate --config " + (dir / "sim.json").string() + " --seed 5 --out " + (dir / "b").string()), 0);
  EXPECT_NE(read_file(dir / "a" / "train.csv"), read_file(dir / "b" / "train.csv"));
}
