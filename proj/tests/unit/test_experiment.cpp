#include <gtest/gtest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bae/data.hpp"
#include "bae/experiment.hpp"

namespace bae {
namespace {

namespace fs = std::filesystem;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bae_exp_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_simulated(const fs::path& out) {
  ExperimentConfig c = ExperimentConfig::simulated_defaults();
  c.simulated.d = {4};
  c.simulated.n = {60};
  c.bottleneck = {1, 2};
  c.hidden = 8;
  c.algorithms = {Algorithm::bae_type2, Algorithm::plain_nn};
  c.training.epochs = 3;
  c.training.batch_size = 16;
  c.training.lr = 1e-2;
  c.seeds = {0, 1};
  c.output = out.string();
  return c;
}

TEST(Config, DefaultsRoundTrip) {
  for (const auto& c : {ExperimentConfig::simulated_defaults(), ExperimentConfig::image_defaults()}) {
    const auto text = config_to_json(c);
    const auto back = config_from_json(text);
    EXPECT_EQ(back, c);
    EXPECT_EQ(config_to_json(back), text);
  }
}

TEST(Config, OverridesRoundTrip) {
  const std::string text = R"({
    "version": 1,
    "name": "grid",
    "dataset": {"kind": "simulated", "d": [10, 50], "nu_star": [1, 5], "n": [1000], "sigma": [0.0, 0.25]},
    "model": {"bottleneck": [1, 5, 10], "hidden": 32},
    "algorithms": ["plain_nn", "bae_type0", "bae_type2"],
    "training": {"epochs": 7, "lr": 0.005, "phases_per_epoch": "both"},
    "per_algorithm": {"bae_type0": {"w_nn": 0.3}},
    "seeds": [3, 1, 4],
    "output": "out/grid"
  })";
  const auto c = config_from_json(text);
  EXPECT_EQ(c.simulated.d, (std::vector<int>{10, 50}));
  EXPECT_EQ(c.hidden, 32);
  EXPECT_EQ(c.training.epochs, 7);
  EXPECT_EQ(c.training.phases, PhaseSchedule::both);
  const auto p0 = c.plan_for(Algorithm::bae_type0);
  EXPECT_EQ(p0.w_nn, 0.3);
  EXPECT_EQ(p0.epochs, 7);  // override starts from the base plan
  EXPECT_EQ(p0.algorithm, Algorithm::bae_type0);
  EXPECT_EQ(c.plan_for(Algorithm::bae_type2).w_nn, 0.1);
  EXPECT_EQ(config_from_json(config_to_json(c)), c);
}

TEST(Config, Rejections) {
  auto bad = [](const std::string& text) {
    try {
      config_from_json(text);
      ADD_FAILURE() << "accepted: " << text;
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::invalid_argument) << text;
    }
  };
  bad("{");
  bad(R"({"name": "x"})");
  bad(R"({"version": 2})");
  bad(R"({"version": 1, "colour": 3})");
  bad(R"({"version": 1, "seeds": []})");
  bad(R"({"version": 1, "seeds": [1, 1]})");
  bad(R"({"version": 1, "dataset": {"kind": "audio"}})");
  bad(R"({"version": 1, "dataset": {"kind": "simulated", "d": []}})");
  bad(R"({"version": 1, "dataset": {"kind": "simulated", "train_fraction": 1.0}})");
  bad(R"({"version": 1, "algorithms": ["gan"]})");
  bad(R"({"version": 1, "training": {"epochs": 0}})");
  bad(R"({"version": 1, "training": {"epochs": "many"}})");
  bad(R"({"version": 1, "training": {"task_loss": "cce"}})");
  bad(R"({"version": 1, "dataset": {"kind": "images", "noise": [-0.1]}})");
  EXPECT_NO_THROW(config_from_json(R"({"version": 1})"));
}

TEST(Config, SeedLists) {
  EXPECT_EQ(parse_seed_list("0..4"), (std::vector<std::uint64_t>{0, 1, 2, 3, 4}));
  EXPECT_EQ(parse_seed_list("7"), (std::vector<std::uint64_t>{7}));
  EXPECT_EQ(parse_seed_list("0..1,9,3"), (std::vector<std::uint64_t>{0, 1, 9, 3}));
  EXPECT_THROW(parse_seed_list(""), Error);
  EXPECT_THROW(parse_seed_list("4..2"), Error);
  EXPECT_THROW(parse_seed_list("a"), Error);
  EXPECT_THROW(parse_seed_list("1,,2"), Error);
}

TEST(Runner, ExpandOrderAndPlainNnOncePerGridPoint) {
  auto c = tiny_simulated("unused");
  c.simulated.sigma = {0.0, 0.5};
  const auto runs = expand(c);
  // 2 grid points x (bae nu1, bae nu2, plain) x 2 seeds
  ASSERT_EQ(runs.size(), 12u);
  EXPECT_EQ(runs[0].grid, "d4_nustar1_n60_sigma0");
  EXPECT_EQ(runs[0].algorithm, "bae_type2_nu1");
  EXPECT_EQ(runs[1].seed, 1u);
  EXPECT_EQ(runs[2].algorithm, "bae_type2_nu2");
  EXPECT_EQ(runs[4].algorithm, "plain_nn");
  EXPECT_EQ(runs[4].nu, 0);
  EXPECT_EQ(runs[6].grid, "d4_nustar1_n60_sigma0.5");
}

RunRow row(const std::string& alg, std::uint64_t seed, double best, bool failed = false) {
  return {"g", alg, seed, "mse", best, 1, failed, failed ? "boom" : ""};
}

TEST(Aggregate, SampleStdAndFailures) {
  const auto s = aggregate({row("plain_nn", 0, 1.0), row("plain_nn", 1, 3.0), row("bae_type2_nu1", 0, 0.5),
                            row("bae_type2_nu1", 1, std::nan(""), true), row("bae_type2_nu1", 2, 0.7, true)});
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].algorithm, "plain_nn");  // baselines first
  EXPECT_EQ(s[0].mean, 2.0);
  EXPECT_NEAR(s[0].std, std::sqrt(2.0), 1e-15);
  EXPECT_EQ(s[0].failures, 0);
  EXPECT_EQ(s[1].runs, 3);
  EXPECT_EQ(s[1].failures, 2);
  EXPECT_EQ(s[1].counted, 2);
  EXPECT_NEAR(s[1].mean, 0.6, 1e-15);
  EXPECT_EQ(s[1].min, 0.5);
  EXPECT_EQ(s[1].max, 0.7);
}

TEST(Aggregate, SingleSeedHasZeroStd) {
  const auto s = aggregate({row("plain_nn", 4, 0.25)});
  ASSERT_EQ(s.size(), 1u);
  EXPECT_EQ(s[0].std, 0.0);
  EXPECT_EQ(s[0].mean, 0.25);
}

TEST(Aggregate, AllFailedGroupHasNoStatistics) {
  const auto s = aggregate({row("plain_nn", 0, std::nan(""), true)});
  EXPECT_EQ(s[0].counted, 0);
  EXPECT_TRUE(std::isnan(s[0].mean));
  EXPECT_NE(summary_csv(s).find(",nan,"), std::string::npos);
  EXPECT_NE(tables_markdown(s).find("n/a"), std::string::npos);
  EXPECT_NE(summary_json(s, {}).find("null"), std::string::npos);
}

TEST(Aggregate, RunRowJsonRoundTrip) {
  const RunRow r{"noise0.25", "bae_type2_nu32", 17, "accuracy", 0.123456789012345678, 9, true, "x"};
  const auto back = run_row_from_json(run_row_to_json(r, {}, TrainingPlan{}));
  EXPECT_EQ(back.grid, r.grid);
  EXPECT_EQ(back.algorithm, r.algorithm);
  EXPECT_EQ(back.seed, r.seed);
  EXPECT_EQ(back.best, r.best);
  EXPECT_EQ(back.best_epoch, 9);
  EXPECT_TRUE(back.failed);
}

TEST(Runner, WritesFilesAndIsDeterministicAcrossJobs) {
  const auto dir1 = scratch("a");
  const auto dir2 = scratch("b");
  auto c1 = tiny_simulated(dir1);
  auto c2 = tiny_simulated(dir2);
  int seen = 0;
  RunnerOptions serial;
  serial.on_run = [&](const RunSpec&, const RunRow&) { ++seen; };
  const auto r1 = run_experiment(c1, serial);
  RunnerOptions parallel;
  parallel.jobs = 3;
  const auto r2 = run_experiment(c2, parallel);
  EXPECT_EQ(seen, 6);
  EXPECT_EQ(r1.rows.size(), 6u);
  for (const char* f : {"summary.csv", "summary.json", "tables.md", "config.json"}) EXPECT_TRUE(fs::exists(dir1 / f));
  EXPECT_TRUE(fs::exists(dir1 / "d4_nustar1_n60_sigma0" / "bae_type2_nu2" / "1.csv"));
  EXPECT_TRUE(fs::exists(dir1 / "d4_nustar1_n60_sigma0" / "plain_nn" / "0.json"));
  EXPECT_EQ(slurp(dir1 / "summary.csv"), slurp(dir2 / "summary.csv"));
  EXPECT_EQ(slurp(dir1 / "d4_nustar1_n60_sigma0" / "plain_nn" / "1.csv"),
            slurp(dir2 / "d4_nustar1_n60_sigma0" / "plain_nn" / "1.csv"));
  for (const auto& r : r1.rows) {
    EXPECT_FALSE(r.failed);
    EXPECT_TRUE(std::isfinite(r.best));
    EXPECT_EQ(r.metric, "mse");
  }
  fs::remove_all(dir1);
  fs::remove_all(dir2);
}

TEST(Report, ReaggregatesRunFilesIdentically) {
  const auto dir = scratch("report");
  const auto ran = run_experiment(tiny_simulated(dir));
  const std::string csv = slurp(dir / "summary.csv");
  const std::string js = slurp(dir / "summary.json");
  const std::string md = slurp(dir / "tables.md");
  fs::remove(dir / "summary.csv");
  const auto again = report(dir.string());
  EXPECT_EQ(slurp(dir / "summary.csv"), csv);
  EXPECT_EQ(slurp(dir / "summary.json"), js);
  EXPECT_EQ(slurp(dir / "tables.md"), md);
  ASSERT_EQ(again.summary.size(), ran.summary.size());
  report(dir.string());
  EXPECT_EQ(slurp(dir / "summary.csv"), csv);  // idempotent

  // Double entry: each group mean recomputed by hand from the per-run rows.
  for (const auto& s : again.summary) {
    double sum = 0;
    int n = 0;
    for (const auto& r : again.rows)
      if (r.grid == s.grid && r.algorithm == s.algorithm) {
        sum += r.best;
        ++n;
      }
    EXPECT_EQ(n, s.runs);
    EXPECT_NEAR(s.mean, sum / n, 1e-15);
  }
  EXPECT_NE(md.find("±"), std::string::npos);
  fs::remove_all(dir);
}

TEST(Runner, RefusesOutputOfAnotherConfig) {
  const auto dir = scratch("reuse");
  auto c = tiny_simulated(dir);
  c.seeds = {0};
  c.algorithms = {Algorithm::plain_nn};
  run_experiment(c);
  EXPECT_NO_THROW(run_experiment(c));  // same config overwrites identically
  c.seeds = {0, 1};
  try {
    run_experiment(c);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
  fs::remove_all(dir);
}

TEST(Report, MissingOrEmptyDirectory) {
  const auto dir = scratch("missing");
  try {
    report(dir.string());
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::invalid_argument);
  }
  fs::create_directories(dir);
  EXPECT_THROW(report(dir.string()), Error);
  fs::remove_all(dir);
}

TEST(Runner, ImagesNeedDataFiles) {
  auto c = ExperimentConfig::image_defaults();
  c.images.data_dir = scratch("nodata").string();
  c.output = scratch("nodata_out").string();
  try {
    run_experiment(c);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_NE(std::string(e.what()).find("BAE_DATA_DIR"), std::string::npos);
  }
}

// Tiny synthetic IDX set: class k images are bright in column block k.
void write_fixture(const fs::path& dir, int n, std::uint64_t seed, const std::string& prefix) {
  Rng rng(seed);
  Dataset d;
  d.task = Task::classification;
  d.inputs = Matrix::Zero(n, 16);
  d.targets = Matrix::Zero(n, 10);
  for (int i = 0; i < n; ++i) {
    const int k = i % 3;
    for (int j = 0; j < 16; ++j) d.inputs(i, j) = (j % 4 == k ? 0.8 : 0.1) + 0.05 * rng.uniform();
    d.targets(i, k) = 1.0;
  }
  write_idx(d, 4, 4, (dir / (prefix + "-images-idx3-ubyte")).string(), (dir / (prefix + "-labels-idx1-ubyte")).string());
}

TEST(Runner, ImagePipelineOnSyntheticIdx) {
  const auto data = scratch("idx");
  const auto out = scratch("idx_out");
  fs::create_directories(data / "mnist");
  write_fixture(data / "mnist", 90, 1, "train");
  write_fixture(data / "mnist", 45, 2, "t10k");
  auto c = ExperimentConfig::image_defaults();
  c.images.data_dir = data.string();
  c.images.train_size = 60;
  c.images.test_size = 30;
  c.images.noise = {0.0, 0.25};
  c.bottleneck = {3};
  c.hidden = 8;
  c.training.epochs = 4;
  c.training.lr = 1e-2;
  c.seeds = {0};
  c.output = out.string();
  const auto res = run_experiment(c);
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& r : res.rows) {
    EXPECT_EQ(r.metric, "accuracy");
    EXPECT_GE(r.best, 0.0);
    EXPECT_LE(r.best, 1.0);
  }
  EXPECT_EQ(res.summary.front().grid, "noise0");
  EXPECT_TRUE(fs::exists(out / "noise0.25" / "bae_type2_nu3" / "0.json"));
  fs::remove_all(data);
  fs::remove_all(out);
}

}  // namespace
}  // namespace bae
