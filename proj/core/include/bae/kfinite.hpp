#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "bae/bregman.hpp"
#include "bae/rng.hpp"
#include "bae/utility.hpp"

namespace bae {

enum class InitMethod { random_rows, kpp_style, provided };

struct SolveOptions {
  int k = 2;
  int restarts = 50;
  int max_iters = 500;
  double objective_tol = 1e-12;
  double action_tol = 1e-12;
  InitMethod init = InitMethod::random_rows;
  /// Used by InitMethod::provided for restart 0. If initial_labels is set it
  /// takes precedence; otherwise initial_actions seed the first assignment
  /// (topped up with random rows when fewer than k).
  std::vector<int> initial_labels;
  Matrix initial_actions;
  /// Optional positive row weights (empty = uniform).
  std::vector<double> weights;
  /// Single-point transfer and cell-merge refinement once the alternation
  /// stalls. Disabling it leaves plain guarded alternation.
  bool refine = true;

  void validate() const;
};

/// Deterministic K-finite autoencoder: actions are cell means of a partition
/// of the training rows. Training rows map through the stored partition;
/// any other point goes to its Bregman cell (projection onto the actions).
/// On a finite sample the best partition need not coincide with the Bregman
/// cells of its own means when W is not convex; bregman_consistent records
/// whether it does.
struct PartitionPolicy {
  FeatureSet actions;
  Matrix support;                     // training rows
  std::vector<int> labels;            // cell of each training row
  bool bregman_consistent = true;     // labels == assign_cells(actions, support)
  std::vector<double> cell_weights;   // empirical probability of each cell
  double objective = 0.0;             // sum_k p_k W(a_k)
  int best_restart = 0;
  int iterations = 0;
  bool k_reduced = false;             // requested K exceeded the sample size
  int tied_restarts = 0;              // other restarts reaching the optimum with different actions
  std::vector<std::vector<double>> objective_traces;  // one per restart, accepted states only

  std::size_t assign(const UtilityFunction& w, const Vector& x) const;
  Vector apply(const UtilityFunction& w, const Vector& x) const;
};

/// Policy closure mapping x to its cell action.
Policy as_policy(const PartitionPolicy& p, const UtilityFunction& w);

/// label_i = argmax_k W(a_k) - D_aW(a_k)'(a_k - x_i), ties to the lowest k.
std::vector<int> assign_cells(const UtilityFunction& w, const FeatureSet& actions, const Matrix& sample);

struct CellUpdate {
  FeatureSet actions;
  std::vector<int> labels;           // relabelled to the surviving cells
  std::vector<double> cell_weights;  // normalized
};

/// Cell means of the labelled rows. Empty cells are dropped and cells whose
/// means coincide (within 1e-12) are merged, so K may shrink.
CellUpdate update_cells(std::span<const int> labels, const Matrix& sample, int k,
                        std::span<const double> weights = {});
FeatureSet update_actions(std::span<const int> labels, const Matrix& sample, int k);

/// sum_k p_k W(mean of cell k) for an arbitrary labelling.
double partition_objective(const UtilityFunction& w, const Matrix& sample, std::span<const int> labels,
                           std::span<const double> weights = {});

PartitionPolicy solve(const UtilityFunction& w, const Matrix& sample, const SolveOptions& opts, Rng& rng);

/// Exhaustive maximization over all set partitions into at most k blocks.
/// Limited to n <= 10 rows and k <= 4.
PartitionPolicy brute_force_oracle(const UtilityFunction& w, const Matrix& sample, int k,
                                   std::span<const double> weights = {});

struct JensenRow {
  int k = 0;
  double objective = 0.0;
  std::size_t cells = 0;
};

/// Solves for each K in k_grid. Each solve also restarts from the previous
/// K's partition, so the objective is non-decreasing along an ascending grid.
std::vector<JensenRow> jensen_direction_probe(const UtilityFunction& w, const Matrix& sample,
                                              std::span<const int> k_grid, const SolveOptions& opts, Rng& rng);

}  // namespace bae
