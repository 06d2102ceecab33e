#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "bae/dataset.hpp"
#include "bae/rng.hpp"
#include "bae/types.hpp"

namespace bae {

/// Sum-of-sigmoids regression: y = sum_j c_j sigmoid(w_j' x) + sigma eps.
struct SimulatedSpec {
  int d = 10;
  int nu_star = 1;
  int n = 1000;
  double sigma = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground truth behind a simulated dataset.
struct SimulatedTruth {
  Matrix w;   // nu_star x d, one neuron per row
  Vector c;   // nu_star
  Vector eps; // n
};

/// Draws X (n x d), w (nu_star x d), c (nu_star) and eps (n), all standard
/// normal and in that order, from Rng(seed).derive(Stream::data).
Dataset generate_simulated(const SimulatedSpec& spec, SimulatedTruth* truth = nullptr);

/// The target formula on given parameters; targets are n x 1.
Vector simulated_targets(const Matrix& x, const Matrix& w, const Vector& c, double sigma, const Vector& eps);

struct NoiseSpec {
  double noise_factor = 0.0;
  bool clip_to_unit = true;

  void validate() const;
};

/// inputs + noise_factor * N(0, 1), clamped to [0, 1] when clip_to_unit.
Dataset add_noise(const Dataset& ds, const NoiseSpec& spec, Rng& rng);

/// Seeded permutation split. The first round(fraction * n) permuted rows are
/// the training part.
std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, Rng& rng);

/// Per-class quota subset: each class gets floor(count * c_k / N) rows, and the
/// remainder goes to the classes with the largest fractional parts (ties to the
/// lower class). Rows within a class are chosen by seeded shuffle and the
/// result keeps the original row order.
Dataset stratified_subset(const Dataset& ds, std::size_t count, Rng& rng);

/// Reads an IDX image file (magic 0x00000803, unsigned bytes) and label file
/// (magic 0x00000801). Pixels are scaled to [0, 1]; labels become one-hot rows
/// over `classes` columns.
Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes = 10);

/// Writes the IDX pair. Pixels are rounded from [0, 1] to bytes; used for
/// fixtures and exports.
void write_idx(const Dataset& ds, int rows, int cols, const std::string& images_path, const std::string& labels_path);

/// Dataset directory: the explicit flag when non-empty, else $BAE_DATA_DIR,
/// else "data".
std::string resolve_data_dir(const std::string& flag);

struct ImageFiles {
  std::string train_images, train_labels, test_images, test_labels;
  bool exist() const;
};

/// Standard file names ("train-images-idx3-ubyte", ...) under dir/name, where
/// name is "mnist" or "fashion_mnist". Uncompressed files only.
ImageFiles image_files(const std::string& dir, const std::string& name);

}  // namespace bae
