#pragma once

#include <functional>
#include <string>
#include <vector>

#include "bae/dataset.hpp"
#include "bae/nn.hpp"
#include "bae/rng.hpp"

namespace bae {

enum class Algorithm { bae_type0, bae_type1, bae_type2, uae_then_nn, plain_nn };
enum class EvalMetric { mse, accuracy };
/// alternating: odd epochs run phase A, even epochs phase B.
/// both: every epoch runs phase A then phase B.
enum class PhaseSchedule { alternating, both };

const char* to_string(Algorithm a);
const char* to_string(EvalMetric m);
const char* to_string(PhaseSchedule s);
Algorithm algorithm_from_string(const std::string& s);
EvalMetric eval_metric_from_string(const std::string& s);
PhaseSchedule phase_schedule_from_string(const std::string& s);

struct TrainingPlan {
  Algorithm algorithm = Algorithm::bae_type2;
  double w_nn = 0.1;
  double w_ae = 0.9;
  int epochs = 20;
  double lr = 1e-3;
  int batch_size = 32;
  nn::LossKind task_loss = nn::LossKind::mse;
  nn::LossKind recon_loss = nn::LossKind::mse;
  EvalMetric eval_metric = EvalMetric::mse;
  PhaseSchedule phases = PhaseSchedule::alternating;

  void validate() const;
  bool operator==(const TrainingPlan&) const = default;
};

/// One pass over the training set under a single freeze pattern and loss
/// weighting. Losses are row-weighted means over the epoch's batches.
struct PhaseRecord {
  int epoch = 0;   // 1-based within its stage
  int stage = 0;   // 1 or 2 for the UAE baseline, 0 otherwise
  std::string phase;  // "A", "B", "recon", "task"
  double task_weight = 0.0;
  double recon_weight = 0.0;
  double task_loss = 0.0;
  double recon_loss = 0.0;
  double total_loss = 0.0;
  bool evaluated = false;  // test metric computed after this record
  double test_metric = 0.0;
};

struct MetricTrace {
  std::vector<PhaseRecord> records;
  double best_test_metric = 0.0;
  int best_epoch = 0;   // epoch of the best evaluated record, 0 if none
  bool failed = false;
  std::string failure;

  /// min for mse, max for accuracy over evaluated records.
  static bool better(EvalMetric m, double candidate, double incumbent);
  std::string to_csv() const;
};

struct TrainResult {
  nn::NetworkParams params;  // parameters at the best evaluated epoch
  MetricTrace trace;
};

/// Called after every phase with its record and the parameters at that point
/// (freeze flags as set for the phase), before the test metric is computed.
using PhaseHook = std::function<void(const PhaseRecord&, const nn::NetworkParams&)>;

/// Test metric in eval mode: mean squared error over all entries, or the
/// fraction of rows whose argmax matches the one-hot target.
double evaluate(const nn::NetworkParams& params, const Dataset& test, EvalMetric metric);

/// Dispatches on plan.algorithm. Initialization draws from
/// rng.derive(Stream::init) and batch order from rng.derive(Stream::shuffle).
/// A non-finite loss or test metric stops the run and sets trace.failed.
TrainResult train(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                  const TrainingPlan& plan, const Rng& rng, const PhaseHook& hook = {});

TrainResult train_bae_type0(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook = {});
TrainResult train_bae_type1(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook = {});
TrainResult train_bae_type2(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook = {});
TrainResult train_uae_then_nn(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                              TrainingPlan plan, const Rng& rng, const PhaseHook& hook = {});
/// Uses only the discriminator block of spec.
TrainResult train_plain_nn(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                           TrainingPlan plan, const Rng& rng, const PhaseHook& hook = {});

/// Shallow linear autoencoder d -> nu -> d and a discriminator with one relu
/// hidden layer and a linear scalar output.
nn::NetworkSpec simulated_architecture(int d, int nu, int hidden = 64);

/// Dense image model: encoder features -> hidden -> bottleneck (relu),
/// decoder bottleneck -> hidden (relu) -> features (sigmoid), discriminator
/// features -> hidden (relu) -> classes (softmax).
nn::NetworkSpec image_architecture(int features, int bottleneck, int classes, int hidden = 128);

}  // namespace bae
