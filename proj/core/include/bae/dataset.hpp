#pragma once

#include <span>
#include <vector>

#include "bae/types.hpp"

namespace bae {

enum class Task { regression, classification };

/// Paired inputs and targets. Classification targets are one-hot rows.
struct Dataset {
  Matrix inputs;
  Matrix targets;
  Task task = Task::regression;

  std::size_t size() const noexcept { return static_cast<std::size_t>(inputs.rows()); }
  int n_features() const noexcept { return static_cast<int>(inputs.cols()); }
  int n_targets() const noexcept { return static_cast<int>(targets.cols()); }

  /// Throws on row-count mismatch, non-finite entries, or malformed one-hot rows.
  void validate() const;

  Dataset rows(std::span<const std::size_t> indices) const;

  /// Class index per row (argmax of the one-hot target).
  std::vector<int> labels() const;
};

}  // namespace bae
