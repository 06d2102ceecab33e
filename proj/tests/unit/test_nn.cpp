#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>

#include "bae/nn.hpp"
#include "support/gradcheck.hpp"

using namespace bae;
using namespace bae::nn;

namespace {

NetworkSpec toy_242(Activation hidden, Activation out) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 4, hidden), LayerSpec::dense(4, 2, out)};
  return s;
}

NetworkSpec small_bae(int d, int code, int classes) {
  NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::dense(d, code, Activation::linear)};
  s.block(Block::decoder) = {LayerSpec::dense(code, d, Activation::linear)};
  s.block(Block::discriminator) = {LayerSpec::dense(d, 5, Activation::relu), LayerSpec::batch_norm(5),
                                   LayerSpec::dense(5, classes, Activation::softmax)};
  return s;
}

Matrix random_matrix(int r, int c, Rng& rng) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
  return m;
}

Matrix one_hot(int rows, int classes, Rng& rng) {
  Matrix y = Matrix::Zero(rows, classes);
  for (int i = 0; i < rows; ++i) y(i, static_cast<Eigen::Index>(rng.index(classes))) = 1.0;
  return y;
}

bool bit_identical(NetworkParams a, NetworkParams b, Block only) {
  auto ta = trainable(a);
  auto tb = trainable(b);
  for (std::size_t k = 0; k < ta.size(); ++k) {
    if (ta[k].block != only) continue;
    if (std::memcmp(ta[k].data, tb[k].data, sizeof(double) * static_cast<std::size_t>(ta[k].size())) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(NetworkSpec, ValidatesChainingAndSoftmaxPlacement) {
  NetworkSpec s = toy_242(Activation::relu, Activation::linear);
  EXPECT_NO_THROW(s.validate());
  s.block(Block::discriminator)[1].in = 3;
  EXPECT_THROW(s.validate(), Error);
  NetworkSpec t = small_bae(3, 2, 2);
  t.block(Block::encoder)[0].activation = Activation::softmax;
  EXPECT_THROW(t.validate(), Error);
  EXPECT_THROW(NetworkSpec{}.validate(), Error);
  NetworkSpec u;
  u.block(Block::encoder) = {LayerSpec::dense(3, 2, Activation::linear), LayerSpec::batch_norm(3)};
  EXPECT_THROW(u.validate(), Error);
}

TEST(Init, GlorotBoundsAndZeroBiases) {
  const double limit = std::sqrt(6.0 / 5.0);
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 3, Activation::linear)};
  double lo = 1e9, hi = -1e9;
  for (int seed = 0; seed < 1700; ++seed) {
    Rng rng(static_cast<std::uint64_t>(seed));
    const NetworkParams p = init(s, rng);
    const auto& l = p.block(Block::discriminator)[0];
    lo = std::min(lo, l.W.minCoeff());
    hi = std::max(hi, l.W.maxCoeff());
    ASSERT_EQ(l.b.size(), 3);
    EXPECT_EQ(l.b.cwiseAbs().maxCoeff(), 0.0);
  }
  EXPECT_GE(lo, -limit);
  EXPECT_LE(hi, limit);
  // 10^4 uniform draws reach within 1% of both ends.
  EXPECT_LT(lo, -0.99 * limit);
  EXPECT_GT(hi, 0.99 * limit);
}

TEST(Init, SameSeedSameParameters) {
  Rng a(42), b(42);
  const auto pa = checkpoint_to_string(init(small_bae(4, 2, 3), a));
  const auto pb = checkpoint_to_string(init(small_bae(4, 2, 3), b));
  EXPECT_EQ(pa, pb);
}

TEST(Forward, IdentityReluSoftmaxSphere) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 2, Activation::linear)};
  Rng rng(1);
  NetworkParams p = init(s, rng);
  p.block(Block::discriminator)[0].W = Matrix::Identity(2, 2);
  Matrix x(2, 2);
  x << 1.5, -2.0, 0.25, 3.0;
  EXPECT_EQ(predict(p, x), x);

  s.block(Block::discriminator)[0].activation = Activation::relu;
  p.spec = s;
  Matrix v(1, 2);
  v << -1.0, 2.0;
  const Matrix r = predict(p, v);
  EXPECT_EQ(r(0, 0), 0.0);
  EXPECT_EQ(r(0, 1), 2.0);

  NetworkSpec sp;
  sp.block(Block::encoder) = {LayerSpec::sphere_norm(2)};
  const NetworkParams ps = init(sp, rng);
  Matrix u(1, 2);
  u << 3.0, 4.0;
  const Matrix out = forward(ps, u).code;
  EXPECT_NEAR(out(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(out(0, 1), 0.8, 1e-15);

  NetworkSpec sm;
  sm.block(Block::discriminator) = {LayerSpec::dense(3, 5, Activation::softmax)};
  const NetworkParams pm = init(sm, rng);
  const Matrix probs = predict(pm, random_matrix(20, 3, rng) * 10.0);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) EXPECT_NEAR(probs.row(i).sum(), 1.0, 1e-12);

  const Matrix norms = forward(ps, random_matrix(30, 2, rng)).code;
  for (Eigen::Index i = 0; i < norms.rows(); ++i) EXPECT_NEAR(norms.row(i).norm(), 1.0, 1e-12);
}

TEST(BatchNorm, ZeroVarianceFeatureStandardizesToZero) {
  NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::batch_norm(2)};
  Rng rng(2);
  NetworkParams p = init(s, rng);
  p.block(Block::encoder)[0].beta << 0.5, -0.25;
  Matrix x(4, 2);
  x << 1.0, 3.0, 2.0, 3.0, 3.0, 3.0, 4.0, 3.0;
  const auto acts = forward(p, x, Mode::train);
  const auto& c = acts.block(Block::encoder)[0];
  EXPECT_EQ(c.xhat.col(1).cwiseAbs().maxCoeff(), 0.0);
  for (int i = 0; i < 4; ++i) EXPECT_EQ(acts.code(i, 1), -0.25);
  EXPECT_NEAR(c.xhat.col(0).mean(), 0.0, 1e-15);
}

TEST(BatchNorm, EvalModeUsesRunningStatsAndIsDeterministic) {
  NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::batch_norm(3)};
  Rng rng(3);
  NetworkParams p = init(s, rng);
  const Matrix x = random_matrix(8, 3, rng) * 2.0;
  const auto acts = forward(p, x, Mode::train);
  update_running_stats(p, acts);
  const auto& l = p.block(Block::encoder)[0];
  const auto& c = acts.block(Block::encoder)[0];
  for (int j = 0; j < 3; ++j) {
    EXPECT_NEAR(l.running_mean(j), 0.01 * c.mean(j), 1e-17);
    EXPECT_NEAR(l.running_var(j), 0.99 + 0.01 * c.var(j), 1e-15);
  }
  const Matrix a = forward(p, x, Mode::eval).code;
  const Matrix b = forward(p, x, Mode::eval).code;
  EXPECT_EQ(a, b);
  for (int j = 0; j < 3; ++j)
    EXPECT_NEAR(a(0, j), (x(0, j) - l.running_mean(j)) / std::sqrt(l.running_var(j) + kBatchNormEps), 1e-12);
}

TEST(BatchNorm, FrozenBlockRunsInEvalModeAndKeepsStats) {
  NetworkSpec s = small_bae(3, 2, 2);
  Rng rng(4);
  NetworkParams p = init(s, rng);
  p.set_frozen(Block::discriminator, true);
  const Matrix x = random_matrix(6, 3, rng);
  const auto acts = forward(p, x, Mode::train);
  EXPECT_FALSE(acts.block(Block::discriminator)[1].batch_stats);
  const NetworkParams before = p;
  update_running_stats(p, acts);
  EXPECT_EQ(p.block(Block::discriminator)[1].running_mean, before.block(Block::discriminator)[1].running_mean);
}

TEST(Loss, ConventionsAndEndpoints) {
  Matrix p(2, 2), y(2, 2);
  p << 0.2, 0.8, 0.6, 0.4;
  y << 0.0, 1.0, 1.0, 0.0;
  EXPECT_NEAR(loss_value(LossKind::mse, p, y), (0.04 + 0.04 + 0.16 + 0.16) / 4.0, 1e-15);
  EXPECT_NEAR(loss_value(LossKind::binary_cross_entropy, p, y),
              -(std::log(0.8) + std::log(0.8) + std::log(0.6) + std::log(0.6)) / 4.0, 1e-15);
  EXPECT_NEAR(loss_value(LossKind::categorical_cross_entropy, p, y), -(std::log(0.8) + std::log(0.6)) / 2.0, 1e-15);
  EXPECT_EQ(loss_value(LossKind::mse, y, y), 0.0);
  EXPECT_EQ(loss_grad(LossKind::mse, y, y).cwiseAbs().maxCoeff(), 0.0);
  Matrix edge(1, 2), t(1, 2);
  edge << 0.0, 1.0;
  t << 1.0, 0.0;
  EXPECT_NEAR(loss_value(LossKind::binary_cross_entropy, edge, t), -std::log(kBceClamp), 1e-9);
  EXPECT_EQ(loss_grad(LossKind::binary_cross_entropy, edge, t).cwiseAbs().maxCoeff(), 0.0);
}

TEST(LossAndGrad, WeightEndpointsSelectOneTerm) {
  Rng rng(5);
  const NetworkParams p = init(small_bae(4, 2, 3), rng);
  const Matrix x = random_matrix(7, 4, rng);
  const Matrix y = one_hot(7, 3, rng);
  const auto task = loss_and_grad(p, x, y, {1.0, 0.0, LossKind::categorical_cross_entropy, LossKind::mse});
  const auto recon = loss_and_grad(p, x, y, {0.0, 1.0, LossKind::categorical_cross_entropy, LossKind::mse});
  const auto mix = loss_and_grad(p, x, y, {0.3, 0.7, LossKind::categorical_cross_entropy, LossKind::mse});
  EXPECT_DOUBLE_EQ(task.loss.total, task.loss.task);
  EXPECT_DOUBLE_EQ(recon.loss.total, recon.loss.recon);
  EXPECT_NEAR(mix.loss.total, 0.3 * task.loss.task + 0.7 * recon.loss.recon, 1e-14);
  EXPECT_NEAR(task.loss.task, loss_value(LossKind::categorical_cross_entropy, forward(p, x, Mode::train).output, y), 1e-12);
  // Pure reconstruction leaves the discriminator without gradient.
  NetworkParams g = recon.grads;
  for (auto& t : trainable(g))
    if (t.block == Block::discriminator)
      for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_EQ(t.data[i], 0.0);
}

TEST(LossAndGrad, PerfectMsePredictionHasZeroGradient) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(3, 2, Activation::linear)};
  Rng rng(6);
  const NetworkParams p = init(s, rng);
  const Matrix x = random_matrix(5, 3, rng);
  const Matrix y = predict(p, x);
  auto r = loss_and_grad(p, x, y, {});
  EXPECT_EQ(r.loss.total, 0.0);
  for (auto& t : trainable(r.grads))
    for (Eigen::Index i = 0; i < t.size(); ++i) EXPECT_EQ(t.data[i], 0.0);
}

TEST(LossAndGrad, FusedSoftmaxCrossEntropyGradient) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(3, 4, Activation::softmax)};
  Rng rng(7);
  const NetworkParams p = init(s, rng);
  const Matrix x = random_matrix(6, 3, rng);
  const Matrix y = one_hot(6, 4, rng);
  auto r = loss_and_grad(p, x, y, {1.0, 0.0, LossKind::categorical_cross_entropy, LossKind::mse});
  const Matrix dz = (r.acts.output - y) / 6.0;
  const auto& g = r.grads.block(Block::discriminator)[0];
  EXPECT_LT((g.b - dz.colwise().sum().transpose()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((g.W - x.transpose() * dz).cwiseAbs().maxCoeff(), 1e-14);
  const auto fd = bae::testing::grad_check(p, x, y, {1.0, 0.0, LossKind::categorical_cross_entropy, LossKind::mse},
                                      Mode::train);
  EXPECT_LT(fd.worst, 1e-6);
}

TEST(LossAndGrad, CrossEntropyNeedsSoftmaxOutput) {
  Rng rng(8);
  const NetworkParams p = init(toy_242(Activation::tanh, Activation::sigmoid), rng);
  const Matrix x = random_matrix(3, 2, rng);
  EXPECT_THROW(loss_and_grad(p, x, one_hot(3, 2, rng), {1.0, 0.0, LossKind::categorical_cross_entropy, LossKind::mse}),
               Error);
}

TEST(LossAndGrad, NonFiniteLossCarriesBatchIndex) {
  Rng rng(9);
  NetworkParams p = init(toy_242(Activation::relu, Activation::linear), rng);
  p.block(Block::discriminator)[1].b(0) = std::numeric_limits<double>::quiet_NaN();
  const Matrix x = random_matrix(3, 2, rng);
  try {
    loss_and_grad(p, x, Matrix::Zero(3, 2), {}, Mode::train, 17);
    FAIL() << "expected NonFiniteLoss";
  } catch (const NonFiniteLoss& e) {
    EXPECT_EQ(e.batch_index(), 17u);
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(GradCheck, Toy242AllActivations) {
  Rng rng(10);
  for (Activation h : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::tanh}) {
    for (Activation o : {Activation::linear, Activation::sigmoid, Activation::tanh}) {
      const NetworkParams p = init(toy_242(h, o), rng);
      const Matrix x = random_matrix(5, 2, rng);
      const Matrix y = random_matrix(5, 2, rng);
      const auto r = bae::testing::grad_check(p, x, y, {}, Mode::train);
      EXPECT_LT(r.worst, 1e-6) << to_string(h) << "/" << to_string(o) << " " << r.worst_tensor;
    }
  }
}

TEST(GradCheck, SphereNormAndBatchNormLayers) {
  Rng rng(11);
  NetworkSpec s;
  s.block(Block::encoder) = {LayerSpec::dense(3, 4, Activation::tanh), LayerSpec::batch_norm(4),
                             LayerSpec::sphere_norm(4)};
  s.block(Block::decoder) = {LayerSpec::dense(4, 3, Activation::linear)};
  NetworkParams p = init(s, rng);
  const Matrix x = random_matrix(6, 3, rng);
  for (Mode m : {Mode::train, Mode::eval}) {
    const auto r = bae::testing::grad_check(p, x, Matrix(6, 0), {0.0, 1.0, LossKind::mse, LossKind::mse}, m);
    EXPECT_LT(r.worst, 1e-6) << r.worst_tensor;
  }
}

TEST(GradCheck, RandomConfigurations) {
  Rng rng(12);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    auto rc = bae::testing::random_case(rng);
    const auto r = bae::testing::grad_check(rc.params, rc.x, rc.y, rc.composite, rc.mode);
    const double tol = r.steep() ? 1e-4 : 1e-6;
    EXPECT_LT(r.worst, tol) << rc.label << " " << r.worst_tensor;
    EXPECT_TRUE(r.frozen_zero) << rc.label;
    ++checked;
  }
  EXPECT_EQ(checked, 60);
}

TEST(Optimizer, SgdStepAndZeroGradient) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(1, 1, Activation::linear)};
  Rng rng(13);
  NetworkParams p = init(s, rng);
  const double w0 = p.block(Block::discriminator)[0].W(0, 0);
  NetworkParams g = p.zeros_like();
  sgd_step(p, g, {0.1});
  EXPECT_EQ(p.block(Block::discriminator)[0].W(0, 0), w0);
  g.block(Block::discriminator)[0].W(0, 0) = 2.5;
  sgd_step(p, g, {0.1});
  EXPECT_DOUBLE_EQ(p.block(Block::discriminator)[0].W(0, 0), w0 - 0.25);
}

TEST(Optimizer, AdamFirstStepAndZeroMoments) {
  NetworkSpec s;
  s.block(Block::discriminator) = {LayerSpec::dense(2, 1, Activation::linear)};
  Rng rng(14);
  NetworkParams p = init(s, rng);
  const NetworkParams start = p;
  AdamState st = AdamState::for_params(p);
  adam_step(p, p.zeros_like(), st, {});
  EXPECT_TRUE(bit_identical(p, start, Block::discriminator));
  EXPECT_EQ(st.step, 1);

  AdamState fresh = AdamState::for_params(p);
  NetworkParams g = p.zeros_like();
  for (auto& t : trainable(g)) std::fill(t.data, t.data + t.size(), 1.0);
  adam_step(p, g, fresh, {});
  // m_hat = 1, v_hat = 1, update = lr / (1 + eps).
  const double expected = 1e-3 / (1.0 + 1e-8);
  EXPECT_NEAR(start.block(Block::discriminator)[0].W(0, 0) - p.block(Block::discriminator)[0].W(0, 0), expected,
              1e-18);
  EXPECT_NEAR(-p.block(Block::discriminator)[0].b(0), expected, 1e-18);
}

TEST(Optimizer, FrozenBlockIsBitIdenticalAcrossSteps) {
  Rng rng(15);
  NetworkParams p = init(small_bae(4, 2, 3), rng);
  p.set_frozen(Block::discriminator, true);
  const NetworkParams start = p;
  AdamState st = AdamState::for_params(p);
  const Matrix x = random_matrix(16, 4, rng);
  const Matrix y = one_hot(16, 3, rng);
  for (int step = 0; step < 50; ++step) {
    auto r = loss_and_grad(p, x, y, {0.5, 0.5, LossKind::categorical_cross_entropy, LossKind::mse});
    adam_step(p, r.grads, st, {});
    update_running_stats(p, r.acts);
    sgd_step(p, r.grads, {0.01});
  }
  EXPECT_TRUE(bit_identical(p, start, Block::discriminator));
  EXPECT_EQ(p.block(Block::discriminator)[1].running_mean, start.block(Block::discriminator)[1].running_mean);
  EXPECT_FALSE(bit_identical(p, start, Block::encoder));
}

TEST(Optimizer, TrainingIsDeterministic) {
  auto run = [] {
    Rng rng(16);
    NetworkParams p = init(small_bae(4, 2, 3), rng);
    AdamState st = AdamState::for_params(p);
    const Matrix x = random_matrix(16, 4, rng);
    const Matrix y = one_hot(16, 3, rng);
    for (int step = 0; step < 20; ++step) {
      auto r = loss_and_grad(p, x, y, {0.5, 0.5, LossKind::categorical_cross_entropy, LossKind::mse});
      adam_step(p, r.grads, st, {});
      update_running_stats(p, r.acts);
    }
    return checkpoint_to_string(p);
  };
  EXPECT_EQ(run(), run());
}

TEST(Checkpoint, RoundTripIsExact) {
  Rng rng(17);
  NetworkParams p = init(small_bae(5, 3, 4), rng);
  p.set_frozen(Block::decoder, true);
  for (auto& t : statistics(p))
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data[i] = rng.normal() / 3.0 + 1.0;
  const std::string text = checkpoint_to_string(p);
  NetworkParams q = checkpoint_from_string(text);
  EXPECT_EQ(q.spec, p.spec);
  EXPECT_TRUE(q.is_frozen(Block::decoder));
  EXPECT_FALSE(q.is_frozen(Block::encoder));
  EXPECT_EQ(checkpoint_to_string(q), text);
  for (Block b : kBlocks) EXPECT_TRUE(bit_identical(p, q, b));

  const auto path = std::filesystem::temp_directory_path() / "bae_checkpoint_test.json";
  save_checkpoint(p, path.string());
  EXPECT_EQ(checkpoint_to_string(load_checkpoint(path.string())), text);
  std::filesystem::remove(path);
}

TEST(Checkpoint, RejectsBadInput) {
  EXPECT_THROW(checkpoint_from_string("not json"), Error);
  EXPECT_THROW(checkpoint_from_string(R"({"format":"other","version":1})"), Error);
  Rng rng(18);
  std::string text = checkpoint_to_string(init(toy_242(Activation::relu, Activation::linear), rng));
  const auto pos = text.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 11, "\"version\":9");
  try {
    checkpoint_from_string(text);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::io);
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos);
  }
  EXPECT_THROW(load_checkpoint("/nonexistent/checkpoint.json"), Error);
}
