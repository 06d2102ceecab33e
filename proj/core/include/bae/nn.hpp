#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bae/rng.hpp"
#include "bae/types.hpp"

namespace bae::nn {

enum class Activation { linear, relu, sigmoid, tanh, softmax };
enum class LayerKind { dense, batch_norm, sphere_norm };

/// Encoder (phi), decoder (theta), discriminator (psi).
enum class Block { encoder = 0, decoder = 1, discriminator = 2 };
inline constexpr std::array<Block, 3> kBlocks{Block::encoder, Block::decoder, Block::discriminator};

const char* to_string(Activation a);
const char* to_string(LayerKind k);
const char* to_string(Block b);
Activation activation_from_string(const std::string& s);
LayerKind layer_kind_from_string(const std::string& s);

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  int in = 0;
  int out = 0;
  Activation activation = Activation::linear;

  static LayerSpec dense(int in, int out, Activation act);
  static LayerSpec batch_norm(int features);
  static LayerSpec sphere_norm(int features);
  bool operator==(const LayerSpec&) const = default;
};

/// The composite model is discriminator(decoder(encoder(x))). An empty block
/// is the identity, so a plain network has only a discriminator and an
/// autoencoder has no discriminator.
struct NetworkSpec {
  std::array<std::vector<LayerSpec>, 3> blocks;

  std::vector<LayerSpec>& block(Block b) { return blocks[static_cast<int>(b)]; }
  const std::vector<LayerSpec>& block(Block b) const { return blocks[static_cast<int>(b)]; }
  bool has(Block b) const { return !block(b).empty(); }

  int input_dim() const;
  int code_dim() const;    // encoder output
  int recon_dim() const;   // decoder output
  int output_dim() const;  // discriminator output
  /// Throws unless dimensions chain and softmax appears only as the last
  /// discriminator activation.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

struct LayerParams {
  Matrix W;  // dense: in x out
  Vector b;  // dense: out
  Vector gamma, beta;                   // batch_norm scale and shift
  Vector running_mean, running_var;     // batch_norm eval statistics
};

struct NetworkParams {
  NetworkSpec spec;
  std::array<std::vector<LayerParams>, 3> blocks;
  std::array<bool, 3> frozen{false, false, false};

  std::vector<LayerParams>& block(Block b) { return blocks[static_cast<int>(b)]; }
  const std::vector<LayerParams>& block(Block b) const { return blocks[static_cast<int>(b)]; }
  bool is_frozen(Block b) const { return frozen[static_cast<int>(b)]; }
  void set_frozen(Block b, bool f) { frozen[static_cast<int>(b)] = f; }
  /// Same shapes as this, all trainable tensors zero; running stats copied.
  NetworkParams zeros_like() const;
  std::size_t parameter_count() const;
};

/// Flat view of one tensor, for optimizers, checkpoints and finite differences.
struct TensorView {
  Block block;
  std::size_t layer;
  std::string name;  // "W", "b", "gamma", "beta", "running_mean", "running_var"
  double* data;
  Eigen::Index rows;
  Eigen::Index cols;
  Eigen::Index size() const { return rows * cols; }
  std::string key() const;  // "block/layer/name"
};

/// Trainable tensors in a fixed order (block, layer, W/b or gamma/beta).
std::vector<TensorView> trainable(NetworkParams& p);
/// Batch-norm running statistics in the same order convention.
std::vector<TensorView> statistics(NetworkParams& p);

/// Glorot-uniform weights, zero biases, unit gamma, zero beta, running mean 0
/// and running variance 1.
NetworkParams init(const NetworkSpec& spec, Rng& rng);

enum class Mode { train, eval };

struct LayerCache {
  Matrix input;
  Matrix pre;      // dense pre-activation
  Matrix output;
  Matrix xhat;     // batch_norm
  Vector mean;     // batch_norm statistics used
  Vector var;
  Vector inv_std;
  Vector norms;    // sphere_norm row norms (guarded)
  bool batch_stats = false;
};

struct Activations {
  std::array<std::vector<LayerCache>, 3> layers;
  Matrix code;
  Matrix recon;
  Matrix output;
  const std::vector<LayerCache>& block(Block b) const { return layers[static_cast<int>(b)]; }
};

/// Runs every block. In train mode batch_norm uses batch statistics, except in
/// frozen blocks, which always run in eval mode.
Activations forward(const NetworkParams& params, const Matrix& x, Mode mode = Mode::eval);
/// Shortcut returning the final output only.
Matrix predict(const NetworkParams& params, const Matrix& x);
/// Reconstruction decoder(encoder(x)) in eval mode.
Matrix reconstruct(const NetworkParams& params, const Matrix& x);

/// Moves running statistics toward the batch statistics recorded in acts for
/// every non-frozen batch_norm layer: r = m r + (1 - m) s.
void update_running_stats(NetworkParams& params, const Activations& acts, double momentum = 0.99);

enum class LossKind { mse, binary_cross_entropy, categorical_cross_entropy };
const char* to_string(LossKind k);
LossKind loss_kind_from_string(const std::string& s);

inline constexpr double kBceClamp = 1e-7;
inline constexpr double kBatchNormEps = 1e-5;

/// Mean over all entries for mse and bce; mean over rows of the per-row sum
/// for categorical cross-entropy. BCE predictions are clamped to
/// [1e-7, 1 - 1e-7].
double loss_value(LossKind kind, const Matrix& pred, const Matrix& target);
/// d loss / d pred. Zero outside the BCE clamp.
Matrix loss_grad(LossKind kind, const Matrix& pred, const Matrix& target);

struct Composite {
  double task_weight = 1.0;
  double recon_weight = 0.0;
  LossKind task_loss = LossKind::mse;
  LossKind recon_loss = LossKind::mse;
};

struct LossParts {
  double total = 0.0;
  double task = 0.0;
  double recon = 0.0;
};

struct LossAndGrad {
  LossParts loss;
  NetworkParams grads;
  Activations acts;
};

/// Thrown when the composite loss is not finite; carries the batch index
/// passed by the caller.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(std::size_t batch_index, double value);
  std::size_t batch_index() const noexcept { return batch_index_; }

 private:
  std::size_t batch_index_;
};

/// task_weight * task(y, output) + recon_weight * recon(x, recon). A term
/// with zero weight is skipped. A softmax output with categorical
/// cross-entropy uses the fused gradient (p - y) / batch. Gradient slots of
/// frozen blocks are zero.
LossAndGrad loss_and_grad(const NetworkParams& params, const Matrix& x, const Matrix& y, const Composite& c,
                          Mode mode = Mode::train, std::size_t batch_index = 0);

struct SgdHyper {
  double lr = 0.01;
};

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First and second moments for every trainable tensor. The step counter is
/// global and advances on every call.
struct AdamState {
  NetworkParams m;
  NetworkParams v;
  std::int64_t step = 0;
  static AdamState for_params(const NetworkParams& p);
};

/// Frozen blocks are skipped entirely.
void sgd_step(NetworkParams& params, const NetworkParams& grads, const SgdHyper& hyper);
void adam_step(NetworkParams& params, const NetworkParams& grads, AdamState& state, const AdamHyper& hyper);

/// Versioned JSON checkpoint: spec, freeze flags and every tensor as a
/// row-major array with its shape, keyed "block/layer/name".
inline constexpr int kCheckpointVersion = 1;
std::string checkpoint_to_string(const NetworkParams& params);
NetworkParams checkpoint_from_string(const std::string& text);
void save_checkpoint(const NetworkParams& params, const std::string& path);
NetworkParams load_checkpoint(const std::string& path);

}  // namespace bae::nn
