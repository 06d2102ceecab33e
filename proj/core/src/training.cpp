#include "bae/training.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <optional>
#include <span>

namespace bae {

using nn::Block;

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::bae_type0: return "bae_type0";
    case Algorithm::bae_type1: return "bae_type1";
    case Algorithm::bae_type2: return "bae_type2";
    case Algorithm::uae_then_nn: return "uae_then_nn";
    case Algorithm::plain_nn: return "plain_nn";
  }
  return "?";
}

const char* to_string(EvalMetric m) { return m == EvalMetric::mse ? "mse" : "accuracy"; }
const char* to_string(PhaseSchedule s) { return s == PhaseSchedule::alternating ? "alternating" : "both"; }

Algorithm algorithm_from_string(const std::string& s) {
  for (Algorithm a : {Algorithm::bae_type0, Algorithm::bae_type1, Algorithm::bae_type2, Algorithm::uae_then_nn,
                      Algorithm::plain_nn})
    if (s == to_string(a)) return a;
  fail(ErrorKind::invalid_argument, "unknown algorithm '" + s + "'");
}

EvalMetric eval_metric_from_string(const std::string& s) {
  if (s == "mse") return EvalMetric::mse;
  if (s == "accuracy") return EvalMetric::accuracy;
  fail(ErrorKind::invalid_argument, "unknown eval metric '" + s + "'");
}

PhaseSchedule phase_schedule_from_string(const std::string& s) {
  if (s == "alternating") return PhaseSchedule::alternating;
  if (s == "both") return PhaseSchedule::both;
  fail(ErrorKind::invalid_argument, "unknown phase schedule '" + s + "'");
}

void TrainingPlan::validate() const {
  auto unit = [](double w) { return std::isfinite(w) && w >= 0.0 && w <= 1.0; };
  require(unit(w_nn) && unit(w_ae), ErrorKind::invalid_argument, "training: w_nn and w_ae must lie in [0, 1]");
  require(epochs >= 1, ErrorKind::invalid_argument, "training: epochs must be at least 1");
  require(std::isfinite(lr) && lr > 0.0, ErrorKind::invalid_argument, "training: lr must be positive");
  require(batch_size >= 1, ErrorKind::invalid_argument, "training: batch_size must be at least 1");
}

bool MetricTrace::better(EvalMetric m, double candidate, double incumbent) {
  return m == EvalMetric::mse ? candidate < incumbent : candidate > incumbent;
}

std::string MetricTrace::to_csv() const {
  std::string out = "epoch,stage,phase,task_weight,recon_weight,task_loss,recon_loss,total_loss,test_metric\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%d,%s,%.17g,%.17g,%.17g,%.17g,%.17g,", r.epoch, r.stage, r.phase.c_str(),
                  r.task_weight, r.recon_weight, r.task_loss, r.recon_loss, r.total_loss);
    out += buf;
    if (r.evaluated) {
      std::snprintf(buf, sizeof buf, "%.17g", r.test_metric);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

double evaluate(const nn::NetworkParams& params, const Dataset& test, EvalMetric metric) {
  require(test.size() > 0, ErrorKind::invalid_argument, "evaluate: empty test set");
  const Matrix pred = nn::predict(params, test.inputs);
  require(pred.rows() == test.targets.rows() && pred.cols() == test.targets.cols(), ErrorKind::shape,
          "evaluate: prediction and target shapes differ");
  if (metric == EvalMetric::mse) return (pred - test.targets).squaredNorm() / static_cast<double>(pred.size());
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < pred.rows(); ++i) {
    Eigen::Index p = 0, t = 0;
    pred.row(i).maxCoeff(&p);
    test.targets.row(i).maxCoeff(&t);
    hits += p == t;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.rows());
}

namespace {

/// One freeze pattern with its loss weights.
struct Phase {
  const char* name;
  std::array<bool, 3> frozen;
  double task_weight;
  double recon_weight;
};

class Trainer {
 public:
  Trainer(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set, const TrainingPlan& plan,
          const Rng& rng, const PhaseHook& hook)
      : train_(train_set), test_(test_set), plan_(plan), shuffle_(rng.derive(Stream::shuffle)), hook_(hook) {
    plan.validate();
    spec.validate();
    train_set.validate();
    test_set.validate();
    require(train_set.size() > 0 && test_set.size() > 0, ErrorKind::invalid_argument,
            "training: empty train or test set");
    require(train_set.n_features() == spec.input_dim() && test_set.n_features() == spec.input_dim(),
            ErrorKind::shape, "training: input width does not match the network");
    require(test_set.n_targets() == train_set.n_targets(), ErrorKind::shape,
            "training: train and test target widths differ");
    Rng init_rng = rng.derive(Stream::init);
    params_ = nn::init(spec, init_rng);
    adam_ = nn::AdamState::for_params(params_);
  }

  void fresh_optimizer() { adam_ = nn::AdamState::for_params(params_); }

  /// One pass over a fresh permutation of the training set. Returns false
  /// when the run failed.
  bool run_phase(const Phase& phase, int epoch, int stage) {
    params_.frozen = phase.frozen;
    const nn::Composite c{phase.task_weight, phase.recon_weight, plan_.task_loss, plan_.recon_loss};
    const auto perm = shuffle_.permutation(train_.size());
    const std::span<const std::size_t> order(perm);
    const auto bs = static_cast<std::size_t>(plan_.batch_size);
    const nn::AdamHyper hyper{plan_.lr};
    PhaseRecord rec;
    rec.epoch = epoch;
    rec.stage = stage;
    rec.phase = phase.name;
    rec.task_weight = phase.task_weight;
    rec.recon_weight = phase.recon_weight;
    std::size_t batch = 0;
    for (std::size_t start = 0; start < order.size(); start += bs, ++batch) {
      const Dataset b = train_.rows(order.subspan(start, std::min(bs, order.size() - start)));
      nn::LossAndGrad lg;
      try {
        lg = nn::loss_and_grad(params_, b.inputs, b.targets, c, nn::Mode::train, batch);
      } catch (const nn::NonFiniteLoss& e) {
        fail_run("non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(e.batch_index()));
        trace_.records.push_back(rec);
        return false;
      }
      nn::adam_step(params_, lg.grads, adam_, hyper);
      nn::update_running_stats(params_, lg.acts);
      const double w = static_cast<double>(b.size());
      rec.task_loss += w * lg.loss.task;
      rec.recon_loss += w * lg.loss.recon;
      rec.total_loss += w * lg.loss.total;
    }
    const double n = static_cast<double>(train_.size());
    rec.task_loss /= n;
    rec.recon_loss /= n;
    rec.total_loss /= n;
    trace_.records.push_back(rec);
    if (hook_) hook_(rec, params_);
    return true;
  }

  /// Scores the current parameters on the test set and keeps them if they are
  /// the best so far. Returns false when the metric is not finite.
  bool evaluate_epoch(int epoch) {
    params_.frozen = {false, false, false};
    const double m = evaluate(params_, test_, plan_.eval_metric);
    auto& rec = trace_.records.back();
    rec.evaluated = true;
    rec.test_metric = m;
    if (!std::isfinite(m)) {
      fail_run("non-finite test metric at epoch " + std::to_string(epoch));
      return false;
    }
    if (!best_ || MetricTrace::better(plan_.eval_metric, m, trace_.best_test_metric)) {
      best_ = params_;
      trace_.best_test_metric = m;
      trace_.best_epoch = epoch;
    }
    return true;
  }

  /// Alternating or paired phases A and B for the benign-autoencoder variants.
  TrainResult run_alternating(const Phase& a, const Phase& b) {
    for (int epoch = 1; epoch <= plan_.epochs; ++epoch) {
      bool ok = true;
      if (plan_.phases == PhaseSchedule::both)
        ok = run_phase(a, epoch, 0) && run_phase(b, epoch, 0);
      else
        ok = run_phase(epoch % 2 == 1 ? a : b, epoch, 0);
      if (!ok || !evaluate_epoch(epoch)) break;
    }
    return finish();
  }

  TrainResult run_single(const Phase& p, int stage, bool evaluate_each) {
    for (int epoch = 1; epoch <= plan_.epochs; ++epoch) {
      if (!run_phase(p, epoch, stage)) break;
      if (evaluate_each && !evaluate_epoch(epoch)) break;
    }
    return finish();
  }

  bool failed() const { return trace_.failed; }

  TrainResult finish() {
    TrainResult out;
    out.params = best_ ? *best_ : params_;
    out.params.frozen = {false, false, false};
    if (!best_) trace_.best_test_metric = std::nan("");
    out.trace = trace_;
    return out;
  }

 private:
  void fail_run(std::string why) {
    trace_.failed = true;
    trace_.failure = std::move(why);
  }

  const Dataset& train_;
  const Dataset& test_;
  TrainingPlan plan_;
  Rng shuffle_;
  const PhaseHook& hook_;
  nn::NetworkParams params_;
  nn::AdamState adam_;
  MetricTrace trace_;
  std::optional<nn::NetworkParams> best_;
};

void require_full(const nn::NetworkSpec& spec, const char* who) {
  require(spec.has(Block::encoder) && spec.has(Block::decoder) && spec.has(Block::discriminator),
          ErrorKind::invalid_argument, std::string(who) + ": needs encoder, decoder and discriminator blocks");
}

constexpr std::array<bool, 3> kNone{false, false, false};
constexpr std::array<bool, 3> kTheta{false, true, false};
constexpr std::array<bool, 3> kPsi{false, false, true};
constexpr std::array<bool, 3> kPhiPsi{true, false, true};
constexpr std::array<bool, 3> kPhiTheta{true, true, false};

}  // namespace

TrainResult train_bae_type2(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook) {
  plan.algorithm = Algorithm::bae_type2;
  require_full(spec, "bae_type2");
  Trainer t(spec, train_set, test_set, plan, rng, hook);
  return t.run_alternating({"A", kNone, 1.0 - plan.w_nn, plan.w_nn}, {"B", kPsi, 1.0 - plan.w_ae, plan.w_ae});
}

TrainResult train_bae_type0(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook) {
  plan.algorithm = Algorithm::bae_type0;
  require_full(spec, "bae_type0");
  Trainer t(spec, train_set, test_set, plan, rng, hook);
  return t.run_alternating({"A", kTheta, 1.0 - plan.w_nn, plan.w_nn}, {"B", kPhiPsi, 1.0 - plan.w_ae, plan.w_ae});
}

TrainResult train_bae_type1(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                            TrainingPlan plan, const Rng& rng, const PhaseHook& hook) {
  plan.algorithm = Algorithm::bae_type1;
  require_full(spec, "bae_type1");
  Trainer t(spec, train_set, test_set, plan, rng, hook);
  return t.run_alternating({"A", kTheta, 1.0 - plan.w_nn, plan.w_nn}, {"B", kPsi, 1.0 - plan.w_ae, plan.w_ae});
}

TrainResult train_uae_then_nn(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                              TrainingPlan plan, const Rng& rng, const PhaseHook& hook) {
  plan.algorithm = Algorithm::uae_then_nn;
  require_full(spec, "uae_then_nn");
  Trainer t(spec, train_set, test_set, plan, rng, hook);
  t.run_single({"recon", kPsi, 0.0, 1.0}, 1, false);
  if (t.failed()) return t.finish();
  t.fresh_optimizer();
  return t.run_single({"task", kPhiTheta, 1.0, 0.0}, 2, true);
}

TrainResult train_plain_nn(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                           TrainingPlan plan, const Rng& rng, const PhaseHook& hook) {
  plan.algorithm = Algorithm::plain_nn;
  require(spec.has(Block::discriminator), ErrorKind::invalid_argument, "plain_nn: needs a discriminator block");
  nn::NetworkSpec only;
  only.block(Block::discriminator) = spec.block(Block::discriminator);
  Trainer t(only, train_set, test_set, plan, rng, hook);
  return t.run_single({"task", kNone, 1.0, 0.0}, 0, true);
}

TrainResult train(const nn::NetworkSpec& spec, const Dataset& train_set, const Dataset& test_set,
                  const TrainingPlan& plan, const Rng& rng, const PhaseHook& hook) {
  switch (plan.algorithm) {
    case Algorithm::bae_type0: return train_bae_type0(spec, train_set, test_set, plan, rng, hook);
    case Algorithm::bae_type1: return train_bae_type1(spec, train_set, test_set, plan, rng, hook);
    case Algorithm::bae_type2: return train_bae_type2(spec, train_set, test_set, plan, rng, hook);
    case Algorithm::uae_then_nn: return train_uae_then_nn(spec, train_set, test_set, plan, rng, hook);
    case Algorithm::plain_nn: return train_plain_nn(spec, train_set, test_set, plan, rng, hook);
  }
  fail(ErrorKind::invalid_argument, "train: unknown algorithm");
}

nn::NetworkSpec simulated_architecture(int d, int nu, int hidden) {
  using nn::Activation;
  using nn::LayerSpec;
  require(d >= 1 && nu >= 1 && hidden >= 1, ErrorKind::invalid_argument,
          "simulated_architecture: d, nu and hidden must be positive");
  nn::NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::dense(d, nu, Activation::linear)};
  s.block(Block::decoder) = {LayerSpec::dense(nu, d, Activation::linear)};
  s.block(Block::discriminator) = {LayerSpec::dense(d, hidden, Activation::relu),
                                   LayerSpec::dense(hidden, 1, Activation::linear)};
  return s;
}

nn::NetworkSpec image_architecture(int features, int bottleneck, int classes, int hidden) {
  using nn::Activation;
  using nn::LayerSpec;
  require(features >= 1 && bottleneck >= 1 && classes >= 2 && hidden >= 1, ErrorKind::invalid_argument,
          "image_architecture: bad dimensions");
  nn::NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::dense(features, hidden, Activation::relu),
                             LayerSpec::dense(hidden, bottleneck, Activation::relu)};
  s.block(Block::decoder) = {LayerSpec::dense(bottleneck, hidden, Activation::relu),
                             LayerSpec::dense(hidden, features, Activation::sigmoid)};
  s.block(Block::discriminator) = {LayerSpec::dense(features, hidden, Activation::relu),
                                   LayerSpec::dense(hidden, classes, Activation::softmax)};
  return s;
}

}  // namespace bae
