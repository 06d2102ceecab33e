#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "bae/data.hpp"
#include "bae/training.hpp"

namespace bae {
namespace {

using nn::Activation;
using nn::Block;
using nn::LayerSpec;

Dataset small_regression(std::uint64_t seed, int n) {
  SimulatedSpec s;
  s.d = 4;
  s.nu_star = 1;
  s.n = n;
  s.seed = seed;
  return generate_simulated(s);
}

// Simulated-shape network with a batch-norm layer in every block, so the
// freeze checks also cover running statistics.
nn::NetworkSpec bn_spec(int d) {
  nn::NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::dense(d, 3, Activation::tanh), LayerSpec::batch_norm(3),
                             LayerSpec::dense(3, 2, Activation::linear)};
  s.block(Block::decoder) = {LayerSpec::dense(2, 3, Activation::relu), LayerSpec::batch_norm(3),
                             LayerSpec::dense(3, d, Activation::linear)};
  s.block(Block::discriminator) = {LayerSpec::dense(d, 5, Activation::relu), LayerSpec::batch_norm(5),
                                   LayerSpec::dense(5, 1, Activation::linear)};
  return s;
}

bool block_equal(const nn::NetworkParams& a, const nn::NetworkParams& b, Block blk) {
  const auto& la = a.block(blk);
  const auto& lb = b.block(blk);
  for (std::size_t i = 0; i < la.size(); ++i) {
    if (la[i].W != lb[i].W || la[i].b != lb[i].b || la[i].gamma != lb[i].gamma || la[i].beta != lb[i].beta ||
        la[i].running_mean != lb[i].running_mean || la[i].running_var != lb[i].running_var)
      return false;
  }
  return true;
}

TrainingPlan quick_plan(Algorithm a, int epochs = 4) {
  TrainingPlan p;
  p.algorithm = a;
  p.epochs = epochs;
  p.batch_size = 16;
  p.lr = 1e-2;
  return p;
}

TEST(TrainingPlan, ValidateRejectsBadValues) {
  TrainingPlan p;
  EXPECT_NO_THROW(p.validate());
  auto bad = [](auto mutate) {
    TrainingPlan q;
    mutate(q);
    EXPECT_THROW(q.validate(), Error);
  };
  bad([](TrainingPlan& q) { q.w_nn = -0.1; });
  bad([](TrainingPlan& q) { q.w_ae = 1.5; });
  bad([](TrainingPlan& q) { q.epochs = 0; });
  bad([](TrainingPlan& q) { q.lr = 0.0; });
  bad([](TrainingPlan& q) { q.lr = std::numeric_limits<double>::infinity(); });
  bad([](TrainingPlan& q) { q.batch_size = 0; });
}

TEST(TrainingPlan, NamesRoundTrip) {
  for (Algorithm a : {Algorithm::bae_type0, Algorithm::bae_type1, Algorithm::bae_type2, Algorithm::uae_then_nn,
                      Algorithm::plain_nn})
    EXPECT_EQ(algorithm_from_string(to_string(a)), a);
  EXPECT_EQ(eval_metric_from_string("accuracy"), EvalMetric::accuracy);
  EXPECT_EQ(phase_schedule_from_string("both"), PhaseSchedule::both);
  EXPECT_THROW(algorithm_from_string("bae"), Error);
  EXPECT_THROW(eval_metric_from_string("auc"), Error);
}

TEST(Evaluate, MseAndAccuracy) {
  nn::NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 2, Activation::linear)};
  Rng rng(1);
  auto p = nn::init(s, rng);
  p.block(Block::discriminator)[0].W = Matrix::Identity(2, 2);
  Dataset d;
  d.inputs = Matrix{{1.0, 0.0}, {0.0, 1.0}, {0.2, 0.7}};
  d.targets = Matrix{{1.0, 0.0}, {1.0, 0.0}, {0.0, 1.0}};
  EXPECT_NEAR(evaluate(p, d, EvalMetric::accuracy), 2.0 / 3.0, 1e-15);
  const double mse = (1.0 + 1.0 + 0.04 + 0.09) / 6.0;
  EXPECT_NEAR(evaluate(p, d, EvalMetric::mse), mse, 1e-15);
}

class FreezeContract : public ::testing::TestWithParam<Algorithm> {};

// Every phase leaves the blocks it freezes bit-identical, including batch-norm
// running statistics, and moves every block it trains.
TEST_P(FreezeContract, FrozenBlocksUntouchedPerPhase) {
  const Algorithm alg = GetParam();
  const Dataset data = small_regression(3, 96);
  const auto spec = bn_spec(data.n_features());
  const Rng rng(11);
  Rng init_rng = rng.derive(Stream::init);
  nn::NetworkParams prev = nn::init(spec, init_rng);
  int phases = 0;
  auto hook = [&](const PhaseRecord& rec, const nn::NetworkParams& now) {
    ++phases;
    for (Block b : nn::kBlocks) {
      if (now.is_frozen(b))
        EXPECT_TRUE(block_equal(prev, now, b)) << to_string(alg) << " phase " << rec.phase << " epoch " << rec.epoch
                                               << " moved frozen " << nn::to_string(b);
      else
        EXPECT_FALSE(block_equal(prev, now, b)) << to_string(alg) << " phase " << rec.phase << " epoch "
                                                << rec.epoch << " left " << nn::to_string(b) << " unchanged";
    }
    prev = now;
  };
  auto plan = quick_plan(alg, 4);
  const auto result = train(spec, data, data, plan, rng, hook);
  EXPECT_FALSE(result.trace.failed);
  EXPECT_EQ(phases, alg == Algorithm::uae_then_nn ? 8 : 4);
}

INSTANTIATE_TEST_SUITE_P(Algorithms, FreezeContract,
                         ::testing::Values(Algorithm::bae_type0, Algorithm::bae_type1, Algorithm::bae_type2,
                                           Algorithm::uae_then_nn));

TEST(Training, FreezePatternsPerAlgorithm) {
  const Dataset data = small_regression(4, 40);
  const auto spec = bn_spec(data.n_features());
  using F = std::array<bool, 3>;
  struct Expect {
    Algorithm alg;
    F a, b;
  };
  const Expect cases[] = {
      {Algorithm::bae_type0, F{false, true, false}, F{true, false, true}},
      {Algorithm::bae_type1, F{false, true, false}, F{false, false, true}},
      {Algorithm::bae_type2, F{false, false, false}, F{false, false, true}},
  };
  for (const auto& c : cases) {
    std::vector<F> seen;
    auto hook = [&](const PhaseRecord&, const nn::NetworkParams& p) { seen.push_back(p.frozen); };
    train(spec, data, data, quick_plan(c.alg, 2), Rng(0), hook);
    ASSERT_EQ(seen.size(), 2u);
    EXPECT_EQ(seen[0], c.a) << to_string(c.alg);
    EXPECT_EQ(seen[1], c.b) << to_string(c.alg);
  }
}

TEST(Training, PhaseWeightsFollowThePlan) {
  const Dataset data = small_regression(5, 40);
  auto plan = quick_plan(Algorithm::bae_type2, 3);
  plan.w_nn = 0.25;
  plan.w_ae = 0.75;
  const auto r = train(simulated_architecture(4, 1), data, data, plan, Rng(2));
  ASSERT_EQ(r.trace.records.size(), 3u);
  EXPECT_EQ(r.trace.records[0].phase, "A");
  EXPECT_EQ(r.trace.records[0].task_weight, 0.75);
  EXPECT_EQ(r.trace.records[0].recon_weight, 0.25);
  EXPECT_EQ(r.trace.records[1].phase, "B");
  EXPECT_EQ(r.trace.records[1].task_weight, 0.25);
  EXPECT_EQ(r.trace.records[1].recon_weight, 0.75);
  EXPECT_EQ(r.trace.records[2].phase, "A");
}

TEST(Training, BothScheduleRunsTwoPhasesPerEpoch) {
  const Dataset data = small_regression(6, 40);
  auto plan = quick_plan(Algorithm::bae_type1, 3);
  plan.phases = PhaseSchedule::both;
  const auto r = train(simulated_architecture(4, 2), data, data, plan, Rng(2));
  ASSERT_EQ(r.trace.records.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(r.trace.records[i].epoch, static_cast<int>(i / 2 + 1));
    EXPECT_EQ(r.trace.records[i].phase, i % 2 == 0 ? "A" : "B");
    EXPECT_EQ(r.trace.records[i].evaluated, i % 2 == 1);
  }
}

TEST(Training, DeterministicForFixedSeed) {
  const Dataset train_set = small_regression(7, 64);
  const Dataset test_set = small_regression(8, 32);
  for (Algorithm alg : {Algorithm::bae_type2, Algorithm::uae_then_nn, Algorithm::plain_nn}) {
    const auto plan = quick_plan(alg, 3);
    const auto a = train(simulated_architecture(4, 1), train_set, test_set, plan, Rng(42));
    const auto b = train(simulated_architecture(4, 1), train_set, test_set, plan, Rng(42));
    const auto c = train(simulated_architecture(4, 1), train_set, test_set, plan, Rng(43));
    EXPECT_EQ(a.trace.to_csv(), b.trace.to_csv()) << to_string(alg);
    EXPECT_EQ(nn::checkpoint_to_string(a.params), nn::checkpoint_to_string(b.params)) << to_string(alg);
    EXPECT_NE(a.trace.to_csv(), c.trace.to_csv()) << to_string(alg);
  }
}

TEST(Training, BestIsTraceExtremumAndReturnedParamsReproduceIt) {
  const Dataset train_set = small_regression(9, 80);
  const Dataset test_set = small_regression(10, 40);
  for (Algorithm alg : {Algorithm::bae_type0, Algorithm::bae_type1, Algorithm::bae_type2, Algorithm::uae_then_nn,
                        Algorithm::plain_nn}) {
    const auto r = train(simulated_architecture(4, 1), train_set, test_set, quick_plan(alg, 6), Rng(3));
    double best = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    for (const auto& rec : r.trace.records)
      if (rec.evaluated && rec.test_metric < best) {
        best = rec.test_metric;
        best_epoch = rec.epoch;
      }
    EXPECT_EQ(r.trace.best_test_metric, best) << to_string(alg);
    EXPECT_EQ(r.trace.best_epoch, best_epoch) << to_string(alg);
    EXPECT_EQ(evaluate(r.params, test_set, EvalMetric::mse), best) << to_string(alg);
    EXPECT_EQ(r.params.frozen, (std::array<bool, 3>{false, false, false}));
  }
}

TEST(Training, AccuracyBestIsMaximum) {
  EXPECT_TRUE(MetricTrace::better(EvalMetric::accuracy, 0.9, 0.8));
  EXPECT_FALSE(MetricTrace::better(EvalMetric::accuracy, 0.8, 0.8));
  EXPECT_TRUE(MetricTrace::better(EvalMetric::mse, 0.1, 0.2));
}

TEST(Training, RecordedLossesDecompose) {
  const Dataset data = small_regression(11, 50);  // 50 rows, batches 16+16+16+2
  for (Algorithm alg : {Algorithm::bae_type0, Algorithm::bae_type2, Algorithm::uae_then_nn}) {
    const auto r = train(simulated_architecture(4, 2), data, data, quick_plan(alg, 4), Rng(5));
    for (const auto& rec : r.trace.records) {
      const double composed = rec.task_weight * rec.task_loss + rec.recon_weight * rec.recon_loss;
      EXPECT_NEAR(rec.total_loss, composed, 1e-12 * std::max(1.0, std::abs(composed))) << to_string(alg);
      if (rec.task_weight > 0) EXPECT_GT(rec.task_loss, 0.0);
      if (rec.recon_weight > 0) EXPECT_GT(rec.recon_loss, 0.0);
    }
  }
}

TEST(Training, UaeStagesAndMonotoneReconstruction) {
  const Dataset data = small_regression(12, 200);
  auto plan = quick_plan(Algorithm::uae_then_nn, 30);
  plan.lr = 5e-3;
  nn::NetworkParams after_stage1;
  auto hook = [&](const PhaseRecord& rec, const nn::NetworkParams& p) {
    if (rec.stage == 1 && rec.epoch == plan.epochs) after_stage1 = p;
    if (rec.stage == 2) {
      EXPECT_TRUE(block_equal(after_stage1, p, Block::encoder));
      EXPECT_TRUE(block_equal(after_stage1, p, Block::decoder));
    }
  };
  const auto r = train(simulated_architecture(4, 2), data, data, plan, Rng(6), hook);
  ASSERT_EQ(r.trace.records.size(), 60u);
  std::vector<double> recon;
  for (const auto& rec : r.trace.records) {
    if (rec.stage == 1) {
      EXPECT_EQ(rec.phase, "recon");
      EXPECT_FALSE(rec.evaluated);
      EXPECT_EQ(rec.task_weight, 0.0);
      recon.push_back(rec.recon_loss);
    } else {
      EXPECT_EQ(rec.stage, 2);
      EXPECT_TRUE(rec.evaluated);
    }
  }
  ASSERT_EQ(recon.size(), 30u);
  auto window = [&](std::size_t i) {
    double s = 0;
    for (std::size_t k = i; k < i + 5; ++k) s += recon[k];
    return s / 5.0;
  };
  for (std::size_t i = 1; i + 5 <= recon.size(); ++i) EXPECT_LE(window(i), window(i - 1)) << "window " << i;
  EXPECT_LT(recon.back(), 0.5 * recon.front());
}

TEST(Training, PlainNnSeparatesGaussians) {
  Rng rng(21);
  const int n = 400;
  Dataset d;
  d.task = Task::classification;
  d.inputs.resize(n, 2);
  d.targets = Matrix::Zero(n, 2);
  for (int i = 0; i < n; ++i) {
    const int k = i % 2;
    d.inputs(i, 0) = (k == 0 ? -2.0 : 2.0) + 0.5 * rng.normal();
    d.inputs(i, 1) = 0.5 * rng.normal();
    d.targets(i, k) = 1.0;
  }
  Rng split_rng(1);
  const auto [tr, te] = split(d, 0.75, split_rng);
  nn::NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 8, Activation::relu),
                                   LayerSpec::dense(8, 2, Activation::softmax)};
  TrainingPlan p = quick_plan(Algorithm::plain_nn, 20);
  p.task_loss = nn::LossKind::categorical_cross_entropy;
  p.eval_metric = EvalMetric::accuracy;
  const auto r = train(s, tr, te, p, Rng(4));
  EXPECT_GT(r.trace.best_test_metric, 0.95);
  EXPECT_EQ(evaluate(r.params, te, EvalMetric::accuracy), r.trace.best_test_metric);
}

TEST(Training, PlainNnFitsIdentityRegression) {
  Rng rng(22);
  Dataset d;
  d.inputs.resize(300, 3);
  for (Eigen::Index i = 0; i < d.inputs.size(); ++i) d.inputs.data()[i] = rng.normal();
  d.targets = d.inputs;
  nn::NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(3, 3, Activation::linear)};
  TrainingPlan p = quick_plan(Algorithm::plain_nn, 60);
  const auto r = train(s, d, d, p, Rng(8));
  EXPECT_LT(r.trace.best_test_metric, 1e-3);
}

TEST(Training, PlainNnIgnoresAutoencoderBlocks) {
  const Dataset data = small_regression(13, 40);
  const auto r = train(simulated_architecture(4, 1), data, data, quick_plan(Algorithm::plain_nn, 2), Rng(1));
  EXPECT_FALSE(r.params.spec.has(Block::encoder));
  EXPECT_FALSE(r.params.spec.has(Block::decoder));
  for (const auto& rec : r.trace.records) EXPECT_EQ(rec.recon_weight, 0.0);
}

TEST(Training, NonFiniteLossMarksRunFailed) {
  Dataset data = small_regression(14, 40);
  data.inputs(17, 2) = 1e200;
  const auto r = train(simulated_architecture(4, 1), data, data, quick_plan(Algorithm::bae_type2, 3), Rng(1));
  EXPECT_TRUE(r.trace.failed);
  EXPECT_NE(r.trace.failure.find("epoch 1"), std::string::npos) << r.trace.failure;
  EXPECT_TRUE(std::isnan(r.trace.best_test_metric));
  EXPECT_EQ(r.trace.best_epoch, 0);
  EXPECT_EQ(r.trace.records.size(), 1u);
}

TEST(Training, RejectsMismatchedInputs) {
  const Dataset data = small_regression(15, 20);
  EXPECT_THROW(train(simulated_architecture(5, 1), data, data, quick_plan(Algorithm::bae_type2), Rng(0)), Error);
  nn::NetworkSpec disc_only;
  disc_only.block(Block::discriminator) = {LayerSpec::dense(4, 1, Activation::linear)};
  EXPECT_THROW(train(disc_only, data, data, quick_plan(Algorithm::bae_type2), Rng(0)), Error);
  EXPECT_NO_THROW(train(disc_only, data, data, quick_plan(Algorithm::plain_nn, 1), Rng(0)));
}

TEST(Training, CsvHasOneRowPerPhase) {
  const Dataset data = small_regression(16, 20);
  const auto r = train(simulated_architecture(4, 1), data, data, quick_plan(Algorithm::uae_then_nn, 2), Rng(0));
  const std::string csv = r.trace.to_csv();
  EXPECT_EQ(csv.rfind("epoch,stage,phase,task_weight,recon_weight,task_loss,recon_loss,total_loss,test_metric\n", 0),
            0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_NE(csv.find("\n1,1,recon,0,1,"), std::string::npos);
}

TEST(Architectures, Validate) {
  EXPECT_NO_THROW(simulated_architecture(10, 3).validate());
  const auto img = image_architecture(784, 32, 10);
  EXPECT_NO_THROW(img.validate());
  EXPECT_EQ(img.code_dim(), 32);
  EXPECT_EQ(img.recon_dim(), 784);
  EXPECT_EQ(img.output_dim(), 10);
  EXPECT_THROW(image_architecture(784, 32, 1), Error);
}

}  // namespace
}  // namespace bae
