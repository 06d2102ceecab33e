#include "bae/kfinite.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <cstring>
#include <string>
#include <unordered_map>

namespace bae {

void SolveOptions::validate() const {
  require(k >= 1, ErrorKind::invalid_argument, "solve: K must be at least 1");
  require(restarts >= 1, ErrorKind::invalid_argument, "solve: restarts must be at least 1");
  require(max_iters >= 1, ErrorKind::invalid_argument, "solve: max_iters must be at least 1");
  require(objective_tol >= 0.0 && action_tol >= 0.0, ErrorKind::invalid_argument, "solve: negative tolerance");
  for (double w : weights) require(w > 0.0 && std::isfinite(w), ErrorKind::invalid_argument, "solve: weights must be positive");
}

namespace {

std::string row_key(const Vector& x) {
  std::string key(static_cast<std::size_t>(x.size()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double v = x(i) + 0.0;
    std::memcpy(key.data() + static_cast<std::size_t>(i) * sizeof(double), &v, sizeof(double));
  }
  return key;
}

std::unordered_map<std::string, int> support_index(const PartitionPolicy& p) {
  std::unordered_map<std::string, int> index;
  for (Eigen::Index i = 0; i < p.support.rows(); ++i) {
    index.try_emplace(row_key(p.support.row(i).transpose()), p.labels[static_cast<std::size_t>(i)]);
  }
  return index;
}

}  // namespace

std::size_t PartitionPolicy::assign(const UtilityFunction& w, const Vector& x) const {
  for (Eigen::Index i = 0; i < support.rows(); ++i) {
    if (support.row(i).transpose() == x) return static_cast<std::size_t>(labels[static_cast<std::size_t>(i)]);
  }
  return BregmanProjector(w, actions).project(x).index;
}

Vector PartitionPolicy::apply(const UtilityFunction& w, const Vector& x) const {
  return actions.point(assign(w, x));
}

Policy as_policy(const PartitionPolicy& p, const UtilityFunction& w) {
  auto owned_w = std::make_shared<const UtilityFunction>(w);
  auto proj = std::make_shared<const BregmanProjector>(*owned_w, p.actions);
  auto index = std::make_shared<const std::unordered_map<std::string, int>>(support_index(p));
  return [owned_w, proj, index, actions = p.actions](const Vector& x) -> Vector {
    if (auto it = index->find(row_key(x)); it != index->end()) return actions.point(static_cast<std::size_t>(it->second));
    return actions.point(proj->project(x).index);
  };
}

std::vector<int> assign_cells(const UtilityFunction& w, const FeatureSet& actions, const Matrix& sample) {
  require(!actions.empty(), ErrorKind::invalid_argument, "assign_cells: no actions");
  require(sample.cols() == w.dim() && actions.dim() == w.dim(), ErrorKind::shape, "assign_cells: dimension mismatch");
  BregmanProjector proj(w, actions);
  std::vector<int> labels(static_cast<std::size_t>(sample.rows()));
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(proj.project(sample.row(i).transpose()).index);
  }
  return labels;
}

namespace {

double row_weight(std::span<const double> weights, Eigen::Index i) {
  return weights.empty() ? 1.0 : weights[static_cast<std::size_t>(i)];
}

}  // namespace

CellUpdate update_cells(std::span<const int> labels, const Matrix& sample, int k, std::span<const double> weights) {
  require(static_cast<Eigen::Index>(labels.size()) == sample.rows(), ErrorKind::shape, "update_cells: label count mismatch");
  require(weights.empty() || weights.size() == labels.size(), ErrorKind::shape, "update_cells: weight count mismatch");
  require(k >= 1, ErrorKind::invalid_argument, "update_cells: K must be positive");
  const auto dim = sample.cols();
  Matrix sums = Matrix::Zero(k, dim);
  std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    require(l >= 0 && l < k, ErrorKind::invalid_argument, "update_cells: label out of range");
    const double wi = row_weight(weights, i);
    sums.row(l) += wi * sample.row(i);
    mass[static_cast<std::size_t>(l)] += wi;
  }

  // Survivors in label order; coinciding means are merged into the first.
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  std::vector<Eigen::RowVectorXd> kept_sums;
  std::vector<double> kept_mass;
  for (int c = 0; c < k; ++c) {
    if (mass[static_cast<std::size_t>(c)] <= 0.0) continue;
    Eigen::RowVectorXd mean = sums.row(c) / mass[static_cast<std::size_t>(c)];
    int target = -1;
    for (std::size_t s = 0; s < kept_sums.size(); ++s) {
      Eigen::RowVectorXd other = kept_sums[s] / kept_mass[s];
      if ((mean - other).cwiseAbs().maxCoeff() <= 1e-12) {
        target = static_cast<int>(s);
        break;
      }
    }
    if (target < 0) {
      target = static_cast<int>(kept_sums.size());
      kept_sums.push_back(sums.row(c));
      kept_mass.push_back(mass[static_cast<std::size_t>(c)]);
    } else {
      kept_sums[static_cast<std::size_t>(target)] += sums.row(c);
      kept_mass[static_cast<std::size_t>(target)] += mass[static_cast<std::size_t>(c)];
    }
    remap[static_cast<std::size_t>(c)] = target;
  }

  const double total = std::accumulate(kept_mass.begin(), kept_mass.end(), 0.0);
  Matrix means(static_cast<Eigen::Index>(kept_sums.size()), dim);
  CellUpdate out;
  for (std::size_t s = 0; s < kept_sums.size(); ++s) {
    means.row(static_cast<Eigen::Index>(s)) = kept_sums[s] / kept_mass[s];
    out.cell_weights.push_back(kept_mass[s] / total);
  }
  out.actions = FeatureSet(std::move(means));
  out.labels.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out.labels[i] = remap[static_cast<std::size_t>(labels[i])];
  return out;
}

FeatureSet update_actions(std::span<const int> labels, const Matrix& sample, int k) {
  return update_cells(labels, sample, k).actions;
}

double partition_objective(const UtilityFunction& w, const Matrix& sample, std::span<const int> labels,
                           std::span<const double> weights) {
  const int k = labels.empty() ? 1 : *std::max_element(labels.begin(), labels.end()) + 1;
  const CellUpdate cells = update_cells(labels, sample, k, weights);
  double f = 0.0;
  for (std::size_t c = 0; c < cells.actions.size(); ++c) f += cells.cell_weights[c] * w.value(cells.actions.point(c));
  return f;
}

namespace {

struct State {
  CellUpdate cells;
  double objective = -std::numeric_limits<double>::infinity();
};

State make_state(const UtilityFunction& w, const Matrix& sample, std::span<const int> labels, int k,
                 std::span<const double> weights) {
  State s;
  s.cells = update_cells(labels, sample, k, weights);
  s.objective = 0.0;
  for (std::size_t c = 0; c < s.cells.actions.size(); ++c) {
    s.objective += s.cells.cell_weights[c] * w.value(s.cells.actions.point(c));
  }
  return s;
}

double max_action_move(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  return (a.points() - b.points()).cwiseAbs().maxCoeff();
}

Matrix pick_distinct_rows(const Matrix& sample, int k, Rng& rng, const Matrix& seed_rows = Matrix()) {
  std::vector<Eigen::RowVectorXd> chosen;
  auto distinct = [&](const Eigen::RowVectorXd& r) {
    for (const auto& c : chosen)
      if ((c - r).cwiseAbs().maxCoeff() <= 1e-12) return false;
    return true;
  };
  for (Eigen::Index i = 0; i < seed_rows.rows() && static_cast<int>(chosen.size()) < k; ++i) {
    if (distinct(seed_rows.row(i))) chosen.push_back(seed_rows.row(i));
  }
  for (std::size_t idx : rng.permutation(static_cast<std::size_t>(sample.rows()))) {
    if (static_cast<int>(chosen.size()) >= k) break;
    const Eigen::RowVectorXd r = sample.row(static_cast<Eigen::Index>(idx));
    if (distinct(r)) chosen.push_back(r);
  }
  Matrix out(static_cast<Eigen::Index>(chosen.size()), sample.cols());
  for (std::size_t i = 0; i < chosen.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = chosen[i];
  return out;
}

Matrix pick_kpp_rows(const Matrix& sample, int k, Rng& rng) {
  const auto n = static_cast<std::size_t>(sample.rows());
  std::vector<Eigen::Index> chosen{static_cast<Eigen::Index>(rng.index(n))};
  std::vector<double> d2(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(chosen.size()) < k) {
    const auto last = sample.row(chosen.back());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d2[i] = std::min(d2[i], (sample.row(static_cast<Eigen::Index>(i)) - last).squaredNorm());
      total += d2[i];
    }
    if (total <= 0.0) break;
    double target = rng.uniform(0.0, total);
    std::size_t pick = n - 1;
    for (std::size_t i = 0; i < n; ++i) {
      target -= d2[i];
      if (target < 0.0 && d2[i] > 0.0) {
        pick = i;
        break;
      }
    }
    if (d2[pick] <= 1e-24) break;
    chosen.push_back(static_cast<Eigen::Index>(pick));
  }
  Matrix out(static_cast<Eigen::Index>(chosen.size()), sample.cols());
  for (std::size_t i = 0; i < chosen.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = sample.row(chosen[i]);
  return out;
}

State lloyd_step(const UtilityFunction& w, const Matrix& sample, const State& s, std::span<const double> weights) {
  const auto labels = assign_cells(w, s.cells.actions, sample);
  return make_state(w, sample, labels, static_cast<int>(s.cells.actions.size()), weights);
}

// Single-row transfers between cells and pairwise cell merges, each applied
// only when it raises sum_k m_k W(mean_k). Returns true if anything moved.
bool refine_partition(const UtilityFunction& w, const Matrix& sample, std::span<const double> weights,
                      std::vector<int>& labels, int k, int max_sweeps) {
  const auto dim = sample.cols();
  Matrix sums = Matrix::Zero(k, dim);
  std::vector<double> mass(static_cast<std::size_t>(k), 0.0);
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    const int l = labels[static_cast<std::size_t>(i)];
    sums.row(l) += row_weight(weights, i) * sample.row(i);
    mass[static_cast<std::size_t>(l)] += row_weight(weights, i);
  }
  const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
  std::vector<double> cell_value(static_cast<std::size_t>(k), 0.0);
  auto refresh = [&](int c) {
    const auto cu = static_cast<std::size_t>(c);
    cell_value[cu] = mass[cu] > 0.0 ? w.value((sums.row(c) / mass[cu]).transpose()) : 0.0;
  };
  for (int c = 0; c < k; ++c) refresh(c);
  auto contribution = [&](const Eigen::RowVectorXd& sum, double m) {
    return m > 1e-15 * total ? m * w.value((sum / m).transpose()) : 0.0;
  };
  auto current_total = [&] {
    double f = 0.0;
    for (int c = 0; c < k; ++c) f += mass[static_cast<std::size_t>(c)] * cell_value[static_cast<std::size_t>(c)];
    return f;
  };

  bool any = false;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    const double threshold = 1e-13 * (total + std::abs(current_total()));
    bool moved = false;
    for (Eigen::Index i = 0; i < sample.rows(); ++i) {
      const int from = labels[static_cast<std::size_t>(i)];
      const auto fu = static_cast<std::size_t>(from);
      const double v = row_weight(weights, i);
      const Eigen::RowVectorXd x = v * sample.row(i);
      const double loss_from = contribution(sums.row(from) - x, mass[fu] - v) - mass[fu] * cell_value[fu];
      int best = -1;
      double best_gain = threshold;
      for (int to = 0; to < k; ++to) {
        const auto tu = static_cast<std::size_t>(to);
        if (to == from || mass[tu] <= 0.0) continue;
        const double gain = loss_from + contribution(sums.row(to) + x, mass[tu] + v) - mass[tu] * cell_value[tu];
        if (gain > best_gain) {
          best_gain = gain;
          best = to;
        }
      }
      if (best < 0) continue;
      const auto bu = static_cast<std::size_t>(best);
      sums.row(from) -= x;
      mass[fu] -= v;
      if (mass[fu] <= 1e-15 * total) {
        mass[fu] = 0.0;
        sums.row(from).setZero();
      }
      sums.row(best) += x;
      mass[bu] += v;
      refresh(from);
      refresh(best);
      labels[static_cast<std::size_t>(i)] = best;
      moved = true;
    }
    while (true) {
      int best_a = -1, best_b = -1;
      double best_gain = threshold;
      for (int a = 0; a < k; ++a) {
        const auto au = static_cast<std::size_t>(a);
        if (mass[au] <= 0.0) continue;
        for (int b = a + 1; b < k; ++b) {
          const auto bu = static_cast<std::size_t>(b);
          if (mass[bu] <= 0.0) continue;
          const double gain = contribution(sums.row(a) + sums.row(b), mass[au] + mass[bu]) -
                              mass[au] * cell_value[au] - mass[bu] * cell_value[bu];
          if (gain > best_gain) {
            best_gain = gain;
            best_a = a;
            best_b = b;
          }
        }
      }
      if (best_a < 0) break;
      sums.row(best_a) += sums.row(best_b);
      mass[static_cast<std::size_t>(best_a)] += mass[static_cast<std::size_t>(best_b)];
      sums.row(best_b).setZero();
      mass[static_cast<std::size_t>(best_b)] = 0.0;
      refresh(best_a);
      refresh(best_b);
      for (int& l : labels)
        if (l == best_b) l = best_a;
      moved = true;
    }
    if (!moved) break;
    any = true;
  }
  return any;
}

struct RestartResult {
  State state;
  std::vector<double> trace;
  int iterations = 0;
};

RestartResult run_restart(const UtilityFunction& w, const Matrix& sample, const SolveOptions& opts, State state) {
  RestartResult out;
  out.trace.push_back(state.objective);
  std::span<const double> weights(opts.weights);
  for (int it = 0; it < opts.max_iters; ++it) {
    out.iterations = it + 1;
    State proposal = lloyd_step(w, sample, state, weights);
    bool accepted = proposal.objective >= state.objective;
    double improvement = 0.0;
    double move = 0.0;
    if (accepted) {
      improvement = proposal.objective - state.objective;
      move = max_action_move(proposal.cells.actions, state.cells.actions);
      const bool changed = proposal.cells.labels != state.cells.labels;
      state = std::move(proposal);
      if (changed) out.trace.push_back(state.objective);
    }
    const bool stalled = !accepted || improvement < opts.objective_tol || move < opts.action_tol;
    if (!stalled) continue;
    if (!opts.refine) break;
    std::vector<int> labels = state.cells.labels;
    const int cells = static_cast<int>(state.cells.actions.size());
    if (!refine_partition(w, sample, weights, labels, cells, 1000)) break;
    State refined = make_state(w, sample, labels, cells, weights);
    if (refined.objective < state.objective) break;  // rounding only; keep the accepted state
    state = std::move(refined);
    out.trace.push_back(state.objective);
  }
  out.state = std::move(state);
  return out;
}

Matrix sorted_rows(const Matrix& m) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (m(a, c) != m(b, c)) return m(a, c) < m(b, c);
    }
    return false;
  });
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(order[i]);
  return out;
}

bool same_actions(const FeatureSet& a, const FeatureSet& b) {
  if (a.size() != b.size()) return false;
  return (sorted_rows(a.points()) - sorted_rows(b.points())).cwiseAbs().maxCoeff() <= 1e-9;
}

}  // namespace

PartitionPolicy solve(const UtilityFunction& w, const Matrix& sample, const SolveOptions& opts, Rng& rng) {
  opts.validate();
  require(sample.rows() > 0, ErrorKind::invalid_argument, "solve: empty sample");
  require(sample.cols() == w.dim(), ErrorKind::shape, "solve: sample dimension does not match W");
  require(sample.allFinite(), ErrorKind::numeric, "solve: non-finite sample");
  require(opts.weights.empty() || opts.weights.size() == static_cast<std::size_t>(sample.rows()), ErrorKind::shape,
          "solve: weight count mismatch");

  PartitionPolicy best;
  int k = opts.k;
  if (k > sample.rows()) {
    k = static_cast<int>(sample.rows());
    best.k_reduced = true;
  }
  std::span<const double> weights(opts.weights);
  const Rng base = rng.derive(Stream::solver);

  std::vector<State> finals;
  double best_objective = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < opts.restarts; ++r) {
    Rng local = base.derive_index(static_cast<std::uint64_t>(r));
    State init;
    if (r == 0 && opts.init == InitMethod::provided && !opts.initial_labels.empty()) {
      require(opts.initial_labels.size() == static_cast<std::size_t>(sample.rows()), ErrorKind::shape,
              "solve: initial_labels length mismatch");
      const int kl = *std::max_element(opts.initial_labels.begin(), opts.initial_labels.end()) + 1;
      init = make_state(w, sample, opts.initial_labels, kl, weights);
    } else {
      Matrix start;
      if (r == 0 && opts.init == InitMethod::provided) {
        require(opts.initial_actions.cols() == sample.cols(), ErrorKind::shape, "solve: initial_actions dimension mismatch");
        start = pick_distinct_rows(sample, k, local, opts.initial_actions);
      } else if (opts.init == InitMethod::kpp_style) {
        start = pick_kpp_rows(sample, k, local);
      } else {
        start = pick_distinct_rows(sample, k, local);
      }
      const auto labels = assign_cells(w, FeatureSet(start), sample);
      init = make_state(w, sample, labels, static_cast<int>(start.rows()), weights);
    }
    RestartResult res = run_restart(w, sample, opts, std::move(init));
    best.objective_traces.push_back(res.trace);
    if (res.state.objective > best_objective) {
      best_objective = res.state.objective;
      best.best_restart = r;
      best.iterations = res.iterations;
    }
    finals.push_back(std::move(res.state));
  }

  State& winner = finals[static_cast<std::size_t>(best.best_restart)];
  const double tie_tol = 1e-9 * (1.0 + std::abs(best_objective));
  for (std::size_t r = 0; r < finals.size(); ++r) {
    if (static_cast<int>(r) == best.best_restart) continue;
    if (std::abs(finals[r].objective - best_objective) <= tie_tol &&
        !same_actions(finals[r].cells.actions, winner.cells.actions)) {
      ++best.tied_restarts;
    }
  }
  best.actions = winner.cells.actions;
  best.support = sample;
  best.labels = winner.cells.labels;
  best.bregman_consistent = assign_cells(w, best.actions, sample) == best.labels;
  best.cell_weights = winner.cells.cell_weights;
  best.objective = winner.objective;
  return best;
}

PartitionPolicy brute_force_oracle(const UtilityFunction& w, const Matrix& sample, int k,
                                   std::span<const double> weights) {
  const auto n = static_cast<std::size_t>(sample.rows());
  require(n >= 1 && n <= 10, ErrorKind::invalid_argument, "brute_force_oracle: needs 1 <= n <= 10");
  require(k >= 1 && k <= 4, ErrorKind::invalid_argument, "brute_force_oracle: needs 1 <= K <= 4");
  require(sample.cols() == w.dim(), ErrorKind::shape, "brute_force_oracle: dimension mismatch");

  // Restricted growth strings enumerate each set partition exactly once.
  auto next_partition = [k](std::vector<int>& a) {
    for (std::size_t i = a.size(); i-- > 1;) {
      const int prefix_max = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(i));
      if (a[i] < k - 1 && a[i] <= prefix_max) {
        ++a[i];
        std::fill(a.begin() + static_cast<std::ptrdiff_t>(i) + 1, a.end(), 0);
        return true;
      }
    }
    return false;
  };
  std::vector<int> rgs(n, 0);
  std::vector<int> best_labels = rgs;
  double best_value = -std::numeric_limits<double>::infinity();
  do {
    const double v = partition_objective(w, sample, rgs, weights);
    if (v > best_value) {
      best_value = v;
      best_labels = rgs;
    }
  } while (next_partition(rgs));

  const int kl = *std::max_element(best_labels.begin(), best_labels.end()) + 1;
  const CellUpdate cells = update_cells(best_labels, sample, kl, weights);
  PartitionPolicy out;
  out.actions = cells.actions;
  out.support = sample;
  out.labels = cells.labels;
  out.bregman_consistent = assign_cells(w, out.actions, sample) == out.labels;
  out.cell_weights = cells.cell_weights;
  out.objective = 0.0;
  for (std::size_t c = 0; c < cells.actions.size(); ++c) out.objective += cells.cell_weights[c] * w.value(cells.actions.point(c));
  out.objective_traces = {{out.objective}};
  return out;
}

std::vector<JensenRow> jensen_direction_probe(const UtilityFunction& w, const Matrix& sample,
                                              std::span<const int> k_grid, const SolveOptions& opts, Rng& rng) {
  std::vector<JensenRow> rows;
  std::vector<int> previous;
  int previous_k = 0;
  for (int k : k_grid) {
    SolveOptions o = opts;
    o.k = k;
    if (!previous.empty() && previous_k <= k) {
      o.init = InitMethod::provided;
      o.initial_labels = previous;
    }
    const PartitionPolicy p = solve(w, sample, o, rng);
    rows.push_back({k, p.objective, p.actions.size()});
    previous = p.labels;
    previous_k = k;
  }
  return rows;
}

}  // namespace bae
