#include "bae/dataset.hpp"

#include <cmath>

namespace bae {

void Dataset::validate() const {
  require(inputs.rows() == targets.rows(), ErrorKind::shape,
          "dataset: inputs and targets have different row counts");
  require(inputs.allFinite() && targets.allFinite(), ErrorKind::numeric,
          "dataset: non-finite entries");
  if (task == Task::classification) {
    for (Eigen::Index i = 0; i < targets.rows(); ++i) {
      double sum = targets.row(i).sum();
      bool binary = (targets.row(i).array() == 0.0 || targets.row(i).array() == 1.0).all();
      require(binary && std::abs(sum - 1.0) == 0.0, ErrorKind::invalid_argument,
              "dataset: classification target row " + std::to_string(i) + " is not one-hot");
    }
  }
}

Dataset Dataset::rows(std::span<const std::size_t> indices) const {
  Dataset out;
  out.task = task;
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(indices.size()), targets.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    auto src = static_cast<Eigen::Index>(indices[i]);
    require(src < inputs.rows(), ErrorKind::invalid_argument, "dataset: row index out of range");
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(src);
    out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(src);
  }
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(size());
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    Eigen::Index arg = 0;
    targets.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

}  // namespace bae
