#include "bae/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <vector>

namespace bae {

void SimulatedSpec::validate() const {
  require(d >= 1, ErrorKind::invalid_argument, "simulated: d must be at least 1");
  require(nu_star >= 1, ErrorKind::invalid_argument, "simulated: nu_star must be at least 1");
  require(n >= 2, ErrorKind::invalid_argument, "simulated: n must be at least 2");
  require(sigma >= 0.0 && std::isfinite(sigma), ErrorKind::invalid_argument, "simulated: sigma must be non-negative");
}

Vector simulated_targets(const Matrix& x, const Matrix& w, const Vector& c, double sigma, const Vector& eps) {
  require(w.cols() == x.cols() && c.size() == w.rows() && eps.size() == x.rows(), ErrorKind::shape,
          "simulated_targets: shape mismatch");
  const Matrix z = x * w.transpose();
  const Matrix s = (1.0 / (1.0 + (-z.array()).exp())).matrix();
  return s * c + sigma * eps;
}

Dataset generate_simulated(const SimulatedSpec& spec, SimulatedTruth* truth) {
  spec.validate();
  Rng rng = Rng(spec.seed).derive(Stream::data);
  auto normal_matrix = [&](int r, int cols) {
    Matrix m(r, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.normal();
    return m;
  };
  const Matrix x = normal_matrix(spec.n, spec.d);
  const Matrix w = normal_matrix(spec.nu_star, spec.d);
  Vector c(spec.nu_star);
  for (auto& v : c) v = rng.normal();
  Vector eps(spec.n);
  for (auto& v : eps) v = rng.normal();

  Dataset ds;
  ds.task = Task::regression;
  ds.inputs = x;
  ds.targets = simulated_targets(x, w, c, spec.sigma, eps);
  if (truth) *truth = {w, c, eps};
  return ds;
}

void NoiseSpec::validate() const {
  require(noise_factor >= 0.0 && std::isfinite(noise_factor), ErrorKind::invalid_argument,
          "noise: factor must be non-negative");
}

Dataset add_noise(const Dataset& ds, const NoiseSpec& spec, Rng& rng) {
  spec.validate();
  Dataset out = ds;
  if (spec.noise_factor == 0.0) return out;
  for (Eigen::Index i = 0; i < out.inputs.size(); ++i) {
    double v = out.inputs.data()[i] + spec.noise_factor * rng.normal();
    if (spec.clip_to_unit) v = std::clamp(v, 0.0, 1.0);
    out.inputs.data()[i] = v;
  }
  return out;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction, Rng& rng) {
  require(train_fraction >= 0.0 && train_fraction <= 1.0, ErrorKind::invalid_argument,
          "split: fraction must lie in [0, 1]");
  const std::size_t n = ds.size();
  const auto perm = rng.permutation(n);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  const std::span<const std::size_t> all(perm);
  return {ds.rows(all.subspan(0, n_train)), ds.rows(all.subspan(n_train))};
}

Dataset stratified_subset(const Dataset& ds, std::size_t count, Rng& rng) {
  require(ds.task == Task::classification, ErrorKind::invalid_argument, "stratified_subset: needs class labels");
  require(count <= ds.size(), ErrorKind::invalid_argument, "stratified_subset: count exceeds dataset size");
  const auto labels = ds.labels();
  const int classes = ds.n_targets();
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

  std::vector<std::size_t> quota(by_class.size());
  std::vector<std::pair<double, int>> remainder;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    const double exact = static_cast<double>(count) * static_cast<double>(by_class[k].size()) / static_cast<double>(ds.size());
    quota[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[k];
    remainder.emplace_back(-(exact - std::floor(exact)), static_cast<int>(k));
  }
  std::sort(remainder.begin(), remainder.end());
  for (std::size_t r = 0; assigned < count && r < remainder.size(); ++r) {
    const auto k = static_cast<std::size_t>(remainder[r].second);
    if (quota[k] < by_class[k].size()) {
      ++quota[k];
      ++assigned;
    }
  }

  std::vector<std::size_t> chosen;
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    Rng sub = rng.derive_index(k);
    auto rows = by_class[k];
    std::shuffle(rows.begin(), rows.end(), sub.engine());
    chosen.insert(chosen.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(quota[k]));
  }
  std::sort(chosen.begin(), chosen.end());
  return ds.rows(chosen);
}

namespace {

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  require(static_cast<bool>(in), ErrorKind::io, "idx: truncated header in " + path);
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | std::uint32_t{b[3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16),
                              static_cast<unsigned char>(v >> 8), static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

std::vector<unsigned char> read_bytes(std::istream& in, std::size_t n, const std::string& path) {
  std::vector<unsigned char> buf(n);
  in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
  require(static_cast<std::size_t>(in.gcount()) == n, ErrorKind::io, "idx: truncated data in " + path);
  return buf;
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path, int classes) {
  require(classes >= 1, ErrorKind::invalid_argument, "idx: classes must be positive");
  std::ifstream img(images_path, std::ios::binary);
  require(static_cast<bool>(img), ErrorKind::io, "idx: cannot open " + images_path);
  std::ifstream lab(labels_path, std::ios::binary);
  require(static_cast<bool>(lab), ErrorKind::io, "idx: cannot open " + labels_path);

  require(read_be32(img, images_path) == 0x00000803u, ErrorKind::io, "idx: bad image magic in " + images_path);
  const std::uint32_t n = read_be32(img, images_path);
  const std::uint32_t rows = read_be32(img, images_path);
  const std::uint32_t cols = read_be32(img, images_path);
  require(read_be32(lab, labels_path) == 0x00000801u, ErrorKind::io, "idx: bad label magic in " + labels_path);
  const std::uint32_t n_labels = read_be32(lab, labels_path);
  require(n == n_labels, ErrorKind::io,
          "idx: " + std::to_string(n) + " images but " + std::to_string(n_labels) + " labels");

  const std::size_t features = std::size_t{rows} * cols;
  const auto pixels = read_bytes(img, std::size_t{n} * features, images_path);
  const auto labels = read_bytes(lab, n, labels_path);

  Dataset ds;
  ds.task = Task::classification;
  ds.inputs.resize(n, static_cast<Eigen::Index>(features));
  for (std::size_t i = 0; i < pixels.size(); ++i) ds.inputs.data()[i] = pixels[i] / 255.0;
  ds.targets = Matrix::Zero(n, classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < classes, ErrorKind::io, "idx: label " + std::to_string(labels[i]) + " out of range");
    ds.targets(static_cast<Eigen::Index>(i), labels[i]) = 1.0;
  }
  return ds;
}

void write_idx(const Dataset& ds, int rows, int cols, const std::string& images_path, const std::string& labels_path) {
  require(ds.task == Task::classification, ErrorKind::invalid_argument, "idx: needs a classification dataset");
  require(rows > 0 && cols > 0 && ds.n_features() == rows * cols, ErrorKind::shape, "idx: image shape mismatch");
  std::ofstream img(images_path, std::ios::binary);
  std::ofstream lab(labels_path, std::ios::binary);
  require(img && lab, ErrorKind::io, "idx: cannot write " + images_path + " / " + labels_path);
  write_be32(img, 0x00000803u);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(rows));
  write_be32(img, static_cast<std::uint32_t>(cols));
  for (Eigen::Index i = 0; i < ds.inputs.size(); ++i) {
    const double v = std::clamp(ds.inputs.data()[i], 0.0, 1.0);
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
  }
  write_be32(lab, 0x00000801u);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int label : ds.labels()) lab.put(static_cast<char>(static_cast<unsigned char>(label)));
  require(static_cast<bool>(img) && static_cast<bool>(lab), ErrorKind::io, "idx: write failed");
}

std::string resolve_data_dir(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("BAE_DATA_DIR"); env && *env) return env;
  return "data";
}

bool ImageFiles::exist() const {
  namespace fs = std::filesystem;
  return fs::exists(train_images) && fs::exists(train_labels) && fs::exists(test_images) && fs::exists(test_labels);
}

ImageFiles image_files(const std::string& dir, const std::string& name) {
  const std::filesystem::path base = std::filesystem::path(dir) / name;
  return {(base / "train-images-idx3-ubyte").string(), (base / "train-labels-idx1-ubyte").string(),
          (base / "t10k-images-idx3-ubyte").string(), (base / "t10k-labels-idx1-ubyte").string()};
}

}  // namespace bae
