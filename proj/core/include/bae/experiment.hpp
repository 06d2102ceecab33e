#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bae/training.hpp"

namespace bae {

inline constexpr int kConfigVersion = 1;

enum class DatasetKind { simulated, images };

/// Grid axes for the sum-of-sigmoids regression data. Every combination of
/// d, nu_star, n and sigma is one grid point; each point is split
/// train_fraction / rest into train and test rows.
struct SimulatedGrid {
  std::vector<int> d{10};
  std::vector<int> nu_star{1};
  std::vector<int> n{1000};
  std::vector<double> sigma{0.0};
  double train_fraction = 0.8;

  bool operator==(const SimulatedGrid&) const = default;
};

/// IDX image data under data_dir/name. Train and test rows are stratified
/// subsets of the official train and test files; every noise factor is one
/// grid point.
struct ImageGrid {
  std::string name = "mnist";
  std::string data_dir;  // empty: resolve_data_dir("")
  int train_size = 8000;
  int test_size = 2000;
  std::vector<double> noise{0.0};
  bool clip = true;

  bool operator==(const ImageGrid&) const = default;
};

struct ExperimentConfig {
  std::string name = "experiment";
  DatasetKind kind = DatasetKind::simulated;
  SimulatedGrid simulated;
  ImageGrid images;
  std::vector<int> bottleneck{1};  // autoencoder code width nu
  int hidden = 64;                 // hidden width of the dense layers
  std::vector<Algorithm> algorithms{Algorithm::plain_nn, Algorithm::uae_then_nn, Algorithm::bae_type2};
  TrainingPlan training;
  /// Partial overrides of `training`, keyed by algorithm.
  std::map<Algorithm, TrainingPlan> per_algorithm;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output = "runs";

  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
  TrainingPlan plan_for(Algorithm a) const;

  /// Defaults reproducing the simulated table at desk scale.
  static ExperimentConfig simulated_defaults();
  /// Defaults for the image table: 8000/2000 MNIST subset, bottleneck 32,
  /// 15 epochs, accuracy, 3 seeds.
  static ExperimentConfig image_defaults();
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Throws Error(invalid_argument) on a bad document, an unknown key or a
/// version other than kConfigVersion. Missing keys keep their defaults.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::string& path);

/// "0,1,2", "0..4" or a mix such as "0..2,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text);

/// One training run in the grid.
struct RunSpec {
  std::string grid;       // e.g. "d50_nustar1_n2000_sigma0" or "noise0.25"
  std::string algorithm;  // e.g. "bae_type2_nu1" or "plain_nn"
  Algorithm alg = Algorithm::plain_nn;
  int nu = 0;             // 0 for plain_nn
  std::uint64_t seed = 0;
  std::size_t grid_index = 0;
};

/// Per-run row of the report.
struct RunRow {
  std::string grid;
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string metric;  // "mse" or "accuracy"
  double best = 0.0;   // NaN when no epoch was evaluated
  int best_epoch = 0;
  bool failed = false;
  std::string failure;
};

struct SummaryRow {
  std::string grid;
  std::string algorithm;
  std::string metric;
  int runs = 0;      // rows in the group
  int failures = 0;  // rows with the failure flag
  int counted = 0;   // rows with a finite best metric, used for the statistics
  double mean = 0.0;
  double std = 0.0;  // sample (n - 1) standard deviation; 0 for a single run
  double min = 0.0;
  double max = 0.0;
};

/// Runs in the fixed order grid point, algorithm, bottleneck, seed.
std::vector<RunSpec> expand(const ExperimentConfig& cfg);

/// Deterministic ordering of report rows: grid, algorithm family (plain_nn,
/// uae_then_nn, bae_type0, bae_type1, bae_type2), bottleneck, seed.
void sort_rows(std::vector<RunRow>& rows);

/// Groups rows by (grid, algorithm). Failed rows count in `failures`; only
/// rows with a finite best metric enter mean, std, min and max.
std::vector<SummaryRow> aggregate(std::vector<RunRow> rows);

std::string summary_csv(const std::vector<SummaryRow>& summary);
std::string summary_json(const std::vector<SummaryRow>& summary, const std::vector<RunRow>& rows);
/// One Markdown table per grid point, algorithms as columns, "mean ± std".
std::string tables_markdown(const std::vector<SummaryRow>& summary);

std::string run_row_to_json(const RunRow& row, const MetricTrace& trace, const TrainingPlan& plan);
RunRow run_row_from_json(const std::string& text);

struct RunnerOptions {
  int jobs = 1;
  /// Called after each run finishes, from the worker thread, serialized.
  std::function<void(const RunSpec&, const RunRow&)> on_run;
};

struct ExperimentResult {
  std::vector<RunRow> rows;
  std::vector<SummaryRow> summary;
};

/// Generates or loads the data for every grid point, trains every run and
/// writes output/<grid>/<algorithm>/<seed>.csv and .json, then summary.csv,
/// summary.json, tables.md and config.json in output/. Results do not depend
/// on jobs. An output directory whose config.json differs from cfg is
/// rejected, so a report never mixes runs from two configs.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunnerOptions& opts = {});

/// Re-reads every output/<grid>/<algorithm>/<seed>.json under dir and
/// rewrites the three summary files. Throws if dir does not exist or holds no
/// runs.
ExperimentResult report(const std::string& dir);

}  // namespace bae
