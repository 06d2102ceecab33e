#include "bae/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace bae::nn {

const char* to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

const char* to_string(LayerKind k) {
  switch (k) {
    case LayerKind::dense: return "dense";
    case LayerKind::batch_norm: return "batch_norm";
    case LayerKind::sphere_norm: return "sphere_norm";
  }
  return "?";
}

const char* to_string(Block b) {
  switch (b) {
    case Block::encoder: return "encoder";
    case Block::decoder: return "decoder";
    case Block::discriminator: return "discriminator";
  }
  return "?";
}

const char* to_string(LossKind k) {
  switch (k) {
    case LossKind::mse: return "mse";
    case LossKind::binary_cross_entropy: return "bce";
    case LossKind::categorical_cross_entropy: return "cce";
  }
  return "?";
}

Activation activation_from_string(const std::string& s) {
  for (auto a : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::tanh, Activation::softmax})
    if (s == to_string(a)) return a;
  fail(ErrorKind::invalid_argument, "unknown activation '" + s + "'");
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::dense, LayerKind::batch_norm, LayerKind::sphere_norm})
    if (s == to_string(k)) return k;
  fail(ErrorKind::invalid_argument, "unknown layer kind '" + s + "'");
}

LossKind loss_kind_from_string(const std::string& s) {
  if (s == "mse") return LossKind::mse;
  if (s == "bce" || s == "binary_cross_entropy") return LossKind::binary_cross_entropy;
  if (s == "cce" || s == "categorical_cross_entropy") return LossKind::categorical_cross_entropy;
  fail(ErrorKind::invalid_argument, "unknown loss '" + s + "'");
}

LayerSpec LayerSpec::dense(int in, int out, Activation act) { return {LayerKind::dense, in, out, act}; }
LayerSpec LayerSpec::batch_norm(int features) { return {LayerKind::batch_norm, features, features, Activation::linear}; }
LayerSpec LayerSpec::sphere_norm(int features) {
  return {LayerKind::sphere_norm, features, features, Activation::linear};
}

namespace {

int first_in(const std::vector<LayerSpec>& layers) { return layers.empty() ? -1 : layers.front().in; }
int last_out(const std::vector<LayerSpec>& layers) { return layers.empty() ? -1 : layers.back().out; }

}  // namespace

int NetworkSpec::input_dim() const {
  for (Block b : kBlocks)
    if (has(b)) return first_in(block(b));
  return 0;
}

int NetworkSpec::code_dim() const { return has(Block::encoder) ? last_out(block(Block::encoder)) : input_dim(); }

int NetworkSpec::recon_dim() const { return has(Block::decoder) ? last_out(block(Block::decoder)) : code_dim(); }

int NetworkSpec::output_dim() const {
  return has(Block::discriminator) ? last_out(block(Block::discriminator)) : recon_dim();
}

void NetworkSpec::validate() const {
  require(has(Block::encoder) || has(Block::decoder) || has(Block::discriminator), ErrorKind::invalid_argument,
          "network spec: no layers");
  int width = -1;
  for (Block b : kBlocks) {
    const auto& layers = block(b);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const LayerSpec& l = layers[i];
      const std::string where = std::string(to_string(b)) + " layer " + std::to_string(i);
      require(l.in > 0 && l.out > 0, ErrorKind::invalid_argument, "network spec: " + where + " has empty width");
      if (l.kind != LayerKind::dense)
        require(l.in == l.out, ErrorKind::shape, "network spec: " + where + " must preserve width");
      require(width < 0 || width == l.in, ErrorKind::shape,
              "network spec: " + where + " expects " + std::to_string(l.in) + " inputs, got " + std::to_string(width));
      const bool last_of_net = b == Block::discriminator && i + 1 == layers.size();
      require(l.activation != Activation::softmax || last_of_net, ErrorKind::invalid_argument,
              "network spec: softmax is only allowed as the final discriminator activation");
      width = l.out;
    }
  }
}

NetworkParams NetworkParams::zeros_like() const {
  NetworkParams z = *this;
  for (auto& t : trainable(z)) std::fill(t.data, t.data + t.size(), 0.0);
  return z;
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for (auto& t : trainable(const_cast<NetworkParams&>(*this))) n += static_cast<std::size_t>(t.size());
  return n;
}

std::string TensorView::key() const { return std::string(to_string(block)) + "/" + std::to_string(layer) + "/" + name; }

namespace {

template <class F>
void visit(NetworkParams& p, bool stats, F&& f) {
  for (Block b : kBlocks) {
    auto& layers = p.block(b);
    const auto& specs = p.spec.block(b);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      LayerParams& l = layers[i];
      if (specs[i].kind == LayerKind::dense && !stats) {
        f(TensorView{b, i, "W", l.W.data(), l.W.rows(), l.W.cols()});
        f(TensorView{b, i, "b", l.b.data(), l.b.size(), 1});
      } else if (specs[i].kind == LayerKind::batch_norm) {
        if (stats) {
          f(TensorView{b, i, "running_mean", l.running_mean.data(), l.running_mean.size(), 1});
          f(TensorView{b, i, "running_var", l.running_var.data(), l.running_var.size(), 1});
        } else {
          f(TensorView{b, i, "gamma", l.gamma.data(), l.gamma.size(), 1});
          f(TensorView{b, i, "beta", l.beta.data(), l.beta.size(), 1});
        }
      }
    }
  }
}

}  // namespace

std::vector<TensorView> trainable(NetworkParams& p) {
  std::vector<TensorView> out;
  visit(p, false, [&](TensorView t) { out.push_back(t); });
  return out;
}

std::vector<TensorView> statistics(NetworkParams& p) {
  std::vector<TensorView> out;
  visit(p, true, [&](TensorView t) { out.push_back(t); });
  return out;
}

NetworkParams init(const NetworkSpec& spec, Rng& rng) {
  spec.validate();
  NetworkParams p;
  p.spec = spec;
  for (Block b : kBlocks) {
    for (const LayerSpec& l : spec.block(b)) {
      LayerParams lp;
      if (l.kind == LayerKind::dense) {
        const double limit = std::sqrt(6.0 / (l.in + l.out));
        lp.W.resize(l.in, l.out);
        for (Eigen::Index i = 0; i < lp.W.size(); ++i) lp.W.data()[i] = rng.uniform(-limit, limit);
        lp.b = Vector::Zero(l.out);
      } else if (l.kind == LayerKind::batch_norm) {
        lp.gamma = Vector::Ones(l.in);
        lp.beta = Vector::Zero(l.in);
        lp.running_mean = Vector::Zero(l.in);
        lp.running_var = Vector::Ones(l.in);
      }
      p.block(b).push_back(std::move(lp));
    }
  }
  return p;
}

namespace {

void softmax_rows(Matrix& z) {
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    z.row(i) = (z.row(i).array() - m).exp().matrix();
    z.row(i) /= z.row(i).sum();
  }
}

Matrix activate(Activation a, const Matrix& z) {
  switch (a) {
    case Activation::linear: return z;
    case Activation::relu: return z.cwiseMax(0.0);
    case Activation::sigmoid: return (1.0 / (1.0 + (-z.array()).exp())).matrix();
    case Activation::tanh: return z.array().tanh().matrix();
    case Activation::softmax: {
      Matrix s = z;
      softmax_rows(s);
      return s;
    }
  }
  return z;
}

// d loss / d z given d loss / d output.
Matrix activation_backward(Activation a, const Matrix& z, const Matrix& out, const Matrix& dout) {
  switch (a) {
    case Activation::linear: return dout;
    case Activation::relu: return (z.array() > 0.0).select(dout, 0.0);
    case Activation::sigmoid: return (dout.array() * out.array() * (1.0 - out.array())).matrix();
    case Activation::tanh: return (dout.array() * (1.0 - out.array().square())).matrix();
    case Activation::softmax: {
      Matrix dz(dout.rows(), dout.cols());
      for (Eigen::Index i = 0; i < dout.rows(); ++i) {
        const double dot = dout.row(i).dot(out.row(i));
        dz.row(i) = (out.row(i).array() * (dout.row(i).array() - dot)).matrix();
      }
      return dz;
    }
  }
  return dout;
}

Matrix forward_layer(const LayerSpec& spec, const LayerParams& lp, const Matrix& in, bool batch_stats, LayerCache& c) {
  c.input = in;
  switch (spec.kind) {
    case LayerKind::dense:
      c.pre = (in * lp.W).rowwise() + lp.b.transpose();
      c.output = activate(spec.activation, c.pre);
      break;
    case LayerKind::batch_norm: {
      c.batch_stats = batch_stats;
      if (batch_stats) {
        const double n = static_cast<double>(in.rows());
        c.mean = in.colwise().sum().transpose() / n;
        c.var = (in.rowwise() - c.mean.transpose()).array().square().colwise().sum().transpose() / n;
      } else {
        c.mean = lp.running_mean;
        c.var = lp.running_var;
      }
      c.inv_std = (c.var.array() + kBatchNormEps).rsqrt().matrix();
      c.xhat = ((in.rowwise() - c.mean.transpose()).array().rowwise() * c.inv_std.transpose().array()).matrix();
      c.output = ((c.xhat.array().rowwise() * lp.gamma.transpose().array()).rowwise() + lp.beta.transpose().array())
                     .matrix();
      break;
    }
    case LayerKind::sphere_norm:
      c.norms = in.rowwise().norm().cwiseMax(1e-12);
      c.output = in.array().colwise() / c.norms.array();
      break;
  }
  return c.output;
}

// Returns d loss / d input; accumulates parameter gradients into g when given.
// When dz_given is true, dout is already d loss / d pre-activation.
Matrix backward_layer(const LayerSpec& spec, const LayerParams& lp, const LayerCache& c, const Matrix& dout,
                      LayerParams* g, bool dz_given) {
  switch (spec.kind) {
    case LayerKind::dense: {
      const Matrix dz = dz_given ? dout : activation_backward(spec.activation, c.pre, c.output, dout);
      if (g) {
        g->W.noalias() += c.input.transpose() * dz;
        g->b += dz.colwise().sum().transpose();
      }
      return dz * lp.W.transpose();
    }
    case LayerKind::batch_norm: {
      if (g) {
        g->gamma += (dout.array() * c.xhat.array()).colwise().sum().transpose().matrix();
        g->beta += dout.colwise().sum().transpose();
      }
      const Matrix dxhat = (dout.array().rowwise() * lp.gamma.transpose().array()).matrix();
      if (!c.batch_stats) return (dxhat.array().rowwise() * c.inv_std.transpose().array()).matrix();
      const double n = static_cast<double>(dout.rows());
      const Eigen::RowVectorXd sum_d = dxhat.colwise().sum();
      const Eigen::RowVectorXd sum_dx = (dxhat.array() * c.xhat.array()).colwise().sum().matrix();
      Matrix dx = ((n * dxhat.array()).rowwise() - sum_d.array() - (c.xhat.array().rowwise() * sum_dx.array())).matrix();
      dx = (dx.array().rowwise() * (c.inv_std.transpose().array() / n)).matrix();
      return dx;
    }
    case LayerKind::sphere_norm: {
      Matrix dx(dout.rows(), dout.cols());
      for (Eigen::Index i = 0; i < dout.rows(); ++i) {
        const double dot = dout.row(i).dot(c.output.row(i));
        dx.row(i) = (dout.row(i) - dot * c.output.row(i)) / c.norms(i);
      }
      return dx;
    }
  }
  return dout;
}

void check_input(const NetworkParams& params, const Matrix& x) {
  require(x.cols() == params.spec.input_dim(), ErrorKind::shape,
          "network: input has " + std::to_string(x.cols()) + " columns, expected " +
              std::to_string(params.spec.input_dim()));
  require(x.rows() > 0, ErrorKind::invalid_argument, "network: empty batch");
}

}  // namespace

Activations forward(const NetworkParams& params, const Matrix& x, Mode mode) {
  check_input(params, x);
  Activations acts;
  Matrix h = x;
  for (Block b : kBlocks) {
    const auto& specs = params.spec.block(b);
    const auto& layers = params.block(b);
    const bool batch_stats = mode == Mode::train && !params.is_frozen(b);
    auto& caches = acts.layers[static_cast<int>(b)];
    caches.resize(specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i) h = forward_layer(specs[i], layers[i], h, batch_stats, caches[i]);
    if (b == Block::encoder) acts.code = h;
    if (b == Block::decoder) acts.recon = h;
  }
  acts.output = std::move(h);
  return acts;
}

Matrix predict(const NetworkParams& params, const Matrix& x) { return forward(params, x, Mode::eval).output; }

Matrix reconstruct(const NetworkParams& params, const Matrix& x) { return forward(params, x, Mode::eval).recon; }

void update_running_stats(NetworkParams& params, const Activations& acts, double momentum) {
  for (Block b : kBlocks) {
    if (params.is_frozen(b)) continue;
    const auto& specs = params.spec.block(b);
    const auto& caches = acts.block(b);
    for (std::size_t i = 0; i < specs.size() && i < caches.size(); ++i) {
      if (specs[i].kind != LayerKind::batch_norm || !caches[i].batch_stats) continue;
      LayerParams& lp = params.block(b)[i];
      lp.running_mean = momentum * lp.running_mean + (1.0 - momentum) * caches[i].mean;
      lp.running_var = momentum * lp.running_var + (1.0 - momentum) * caches[i].var;
    }
  }
}

double loss_value(LossKind kind, const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::shape,
          "loss: prediction and target shapes differ");
  const double n = static_cast<double>(pred.size());
  switch (kind) {
    case LossKind::mse: return (pred - target).squaredNorm() / n;
    case LossKind::binary_cross_entropy: {
      const auto p = pred.array().cwiseMax(kBceClamp).cwiseMin(1.0 - kBceClamp);
      return -(target.array() * p.log() + (1.0 - target.array()) * (1.0 - p).log()).sum() / n;
    }
    case LossKind::categorical_cross_entropy: {
      const auto p = pred.array().cwiseMax(std::numeric_limits<double>::min());
      return -(target.array() * p.log()).sum() / static_cast<double>(pred.rows());
    }
  }
  return 0.0;
}

Matrix loss_grad(LossKind kind, const Matrix& pred, const Matrix& target) {
  require(pred.rows() == target.rows() && pred.cols() == target.cols(), ErrorKind::shape,
          "loss: prediction and target shapes differ");
  const double n = static_cast<double>(pred.size());
  switch (kind) {
    case LossKind::mse: return 2.0 * (pred - target) / n;
    case LossKind::binary_cross_entropy: {
      Matrix g(pred.rows(), pred.cols());
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double p = pred.data()[i];
        const double y = target.data()[i];
        g.data()[i] = (p < kBceClamp || p > 1.0 - kBceClamp) ? 0.0 : (p - y) / (p * (1.0 - p)) / n;
      }
      return g;
    }
    case LossKind::categorical_cross_entropy: {
      const auto p = pred.array().cwiseMax(std::numeric_limits<double>::min());
      return (-(target.array() / p) / static_cast<double>(pred.rows())).matrix();
    }
  }
  return Matrix::Zero(pred.rows(), pred.cols());
}

NonFiniteLoss::NonFiniteLoss(std::size_t batch_index, double value)
    : Error(ErrorKind::numeric, "non-finite loss (" + std::to_string(value) + ") at batch " + std::to_string(batch_index)),
      batch_index_(batch_index) {}

namespace {

// Cross-entropy from logits: mean over rows of -sum y (z - logsumexp z).
double cce_from_logits(const Matrix& z, const Matrix& y) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const double m = z.row(i).maxCoeff();
    const double lse = m + std::log((z.row(i).array() - m).exp().sum());
    total -= (y.row(i).array() * (z.row(i).array() - lse)).sum();
  }
  return total / static_cast<double>(z.rows());
}

}  // namespace

LossAndGrad loss_and_grad(const NetworkParams& params, const Matrix& x, const Matrix& y, const Composite& c,
                          Mode mode, std::size_t batch_index) {
  const NetworkSpec& spec = params.spec;
  LossAndGrad res;
  res.acts = forward(params, x, mode);
  const Activations& a = res.acts;
  const Eigen::Index batch = x.rows();

  const bool use_task = c.task_weight != 0.0;
  const bool use_recon = c.recon_weight != 0.0;
  const auto& disc = spec.block(Block::discriminator);
  const bool fused = use_task && c.task_loss == LossKind::categorical_cross_entropy && !disc.empty() &&
                     disc.back().kind == LayerKind::dense && disc.back().activation == Activation::softmax;

  Matrix d_out = Matrix::Zero(a.output.rows(), a.output.cols());
  if (use_task) {
    require(y.rows() == batch && y.cols() == a.output.cols(), ErrorKind::shape,
            "loss_and_grad: target shape does not match network output");
    if (fused) {
      res.loss.task = cce_from_logits(a.block(Block::discriminator).back().pre, y);
      d_out = c.task_weight * (a.output - y) / static_cast<double>(batch);
    } else {
      require(c.task_loss != LossKind::categorical_cross_entropy, ErrorKind::invalid_argument,
              "loss_and_grad: categorical cross-entropy needs a softmax discriminator output");
      res.loss.task = loss_value(c.task_loss, a.output, y);
      d_out = c.task_weight * loss_grad(c.task_loss, a.output, y);
    }
  }
  Matrix d_recon = Matrix::Zero(batch, spec.recon_dim());
  if (use_recon) {
    require(spec.has(Block::encoder) || spec.has(Block::decoder), ErrorKind::invalid_argument,
            "loss_and_grad: reconstruction loss needs an autoencoder");
    require(a.recon.cols() == x.cols(), ErrorKind::shape, "loss_and_grad: reconstruction width differs from input");
    res.loss.recon = loss_value(c.recon_loss, a.recon, x);
    d_recon = c.recon_weight * loss_grad(c.recon_loss, a.recon, x);
  }
  res.loss.total = (use_task ? c.task_weight * res.loss.task : 0.0) + (use_recon ? c.recon_weight * res.loss.recon : 0.0);
  if (!std::isfinite(res.loss.total)) throw NonFiniteLoss(batch_index, res.loss.total);

  res.grads = params.zeros_like();
  Matrix d = d_out;
  bool dz_given = fused;
  for (int bi = 2; bi >= 0; --bi) {
    const Block b = kBlocks[static_cast<std::size_t>(bi)];
    const auto& specs = spec.block(b);
    const auto& caches = a.block(b);
    const bool frozen = params.is_frozen(b);
    for (std::size_t i = specs.size(); i-- > 0;) {
      LayerParams* g = frozen ? nullptr : &res.grads.block(b)[i];
      d = backward_layer(specs[i], params.block(b)[i], caches[i], d, g, dz_given);
      dz_given = false;
    }
    // The discriminator reads the reconstruction, so its input gradient and the
    // reconstruction-loss gradient meet here.
    if (b == Block::discriminator && use_recon) d += d_recon;
  }
  return res;
}

AdamState AdamState::for_params(const NetworkParams& p) {
  AdamState s;
  s.m = p.zeros_like();
  s.v = p.zeros_like();
  return s;
}

namespace {

void require_same_layout(NetworkParams& a, NetworkParams& b, const char* who) {
  require(a.spec == b.spec, ErrorKind::shape, std::string(who) + ": gradient layout differs from parameters");
}

}  // namespace

void sgd_step(NetworkParams& params, const NetworkParams& grads, const SgdHyper& hyper) {
  auto& g_mut = const_cast<NetworkParams&>(grads);
  require_same_layout(params, g_mut, "sgd_step");
  auto pt = trainable(params);
  auto gt = trainable(g_mut);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    if (params.is_frozen(pt[k].block)) continue;
    for (Eigen::Index i = 0; i < pt[k].size(); ++i) pt[k].data[i] -= hyper.lr * gt[k].data[i];
  }
}

void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const AdamHyper& hyper) {
  auto& g_mut = const_cast<NetworkParams&>(grads);
  require_same_layout(params, g_mut, "adam_step");
  require_same_layout(params, state.m, "adam_step");
  ++state.step;
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.step));
  auto pt = trainable(params);
  auto gt = trainable(g_mut);
  auto mt = trainable(state.m);
  auto vt = trainable(state.v);
  for (std::size_t k = 0; k < pt.size(); ++k) {
    if (params.is_frozen(pt[k].block)) continue;
    for (Eigen::Index i = 0; i < pt[k].size(); ++i) {
      const double g = gt[k].data[i];
      double& m = mt[k].data[i];
      double& v = vt[k].data[i];
      m = hyper.beta1 * m + (1.0 - hyper.beta1) * g;
      v = hyper.beta2 * v + (1.0 - hyper.beta2) * g * g;
      pt[k].data[i] -= hyper.lr * (m / c1) / (std::sqrt(v / c2) + hyper.eps);
    }
  }
}

}  // namespace bae::nn
