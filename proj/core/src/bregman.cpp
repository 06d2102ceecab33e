#include "bae/bregman.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>
#include <numeric>

#include "bae/linalg.hpp"

namespace bae {

FeatureSet::FeatureSet(Matrix points) : points_(std::move(points)) {
  require(points_.allFinite(), ErrorKind::numeric, "feature set: non-finite point");
  if (points_.rows() < 2 || points_.cols() == 0) return;
  // Sweep in first-coordinate order; only rows within 1e-12 on that axis can coincide.
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points_.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return points_(a, 0) < points_(b, 0); });
  for (std::size_t i = 0; i < order.size(); ++i) {
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      if (points_(order[j], 0) - points_(order[i], 0) > 1e-12) break;
      const double gap = (points_.row(order[i]) - points_.row(order[j])).cwiseAbs().maxCoeff();
      require(gap > 1e-12, ErrorKind::invalid_argument,
              "feature set: points " + std::to_string(std::min(order[i], order[j])) + " and " +
                  std::to_string(std::max(order[i], order[j])) + " coincide");
    }
  }
}

double bregman_divergence(const UtilityFunction& w, const Vector& a, const Vector& b) {
  require(a.size() == w.dim() && b.size() == w.dim(), ErrorKind::shape, "bregman_divergence: dimension mismatch");
  return w.value(b) - w.value(a) + w.grad(a).dot(a - b);
}

Projection bregman_project(const UtilityFunction& w, const FeatureSet& xi, const Vector& b) {
  require(!xi.empty(), ErrorKind::invalid_argument, "bregman_project: empty feature set");
  require(xi.dim() == w.dim() && b.size() == w.dim(), ErrorKind::shape, "bregman_project: dimension mismatch");
  Projection best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t k = 0; k < xi.size(); ++k) {
    const double c = bregman_divergence(w, xi.point(k), b);
    if (c < best.value) best = {k, c};
  }
  return best;
}

BregmanProjector::BregmanProjector(const UtilityFunction& w, const FeatureSet& xi)
    : w_(&w), points_(xi.points()) {
  require(!xi.empty(), ErrorKind::invalid_argument, "projector: empty feature set");
  require(xi.dim() == w.dim(), ErrorKind::shape, "projector: dimension mismatch");
  grads_.resize(points_.rows(), points_.cols());
  values_.resize(xi.size());
  offsets_.resize(xi.size());
  for (std::size_t k = 0; k < xi.size(); ++k) {
    Vector a = xi.point(k);
    Vector g = w.grad(a);
    grads_.row(static_cast<Eigen::Index>(k)) = g.transpose();
    values_[k] = w.value(a);
    offsets_[k] = values_[k] - g.dot(a);
  }
}

double BregmanProjector::score(std::size_t k, const Vector& b) const {
  const auto row = static_cast<Eigen::Index>(k);
  return offsets_[k] + grads_.row(row).dot(b);
}

Projection BregmanProjector::project(const Vector& b) const {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < values_.size(); ++k) {
    const double s = score(k, b);
    if (s > best_score) {
      best_score = s;
      best = k;
    }
  }
  return {best, w_->value(b) - best_score};
}

CheckReport check_w_monotone(const UtilityFunction& w, const FeatureSet& xi, double tol) {
  CheckReport rep{"w_monotone", true, std::numeric_limits<double>::infinity(), {}, 0, {}};
  for (std::size_t i = 0; i < xi.size(); ++i) {
    for (std::size_t j = 0; j < xi.size(); ++j) {
      if (i == j) continue;
      const double c = bregman_divergence(w, xi.point(i), xi.point(j));
      ++rep.evaluated;
      if (c < rep.worst_value) {
        rep.worst_value = c;
        rep.worst = {i, j};
      }
    }
  }
  if (rep.evaluated == 0) rep.worst_value = 0.0;
  rep.ok = rep.worst_value >= -tol;
  return rep;
}

CheckReport check_maximal(const UtilityFunction& w, const FeatureSet& xi, const Matrix& probes, double tol) {
  require(probes.cols() == w.dim(), ErrorKind::shape, "check_maximal: probe dimension mismatch");
  CheckReport rep{"maximal", true, -std::numeric_limits<double>::infinity(), {}, 0, {}};
  BregmanProjector proj(w, xi);
  for (Eigen::Index i = 0; i < probes.rows(); ++i) {
    const double best = proj.project(probes.row(i).transpose()).value;
    ++rep.evaluated;
    if (best > rep.worst_value) {
      rep.worst_value = best;
      rep.worst = {static_cast<std::size_t>(i)};
    }
  }
  if (rep.evaluated == 0) rep.worst_value = 0.0;
  rep.ok = rep.worst_value <= tol;
  return rep;
}

namespace {

std::string action_key(const Vector& a) {
  std::string key(static_cast<std::size_t>(a.size()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    const double v = a(i) + 0.0;  // folds -0.0 into +0.0
    std::memcpy(key.data() + static_cast<std::size_t>(i) * sizeof(double), &v, sizeof(double));
  }
  return key;
}

}  // namespace

CheckReport check_unbiased(const Policy& policy, const Matrix& sample, double tol) {
  struct Group {
    Vector action;
    Vector sum;
    std::size_t count = 0;
    std::size_t first_row = 0;
  };
  std::map<std::string, Group> groups;
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    Vector x = sample.row(i).transpose();
    Vector a = policy(x);
    require(a.size() == x.size(), ErrorKind::shape, "check_unbiased: policy changes dimension");
    auto [it, inserted] = groups.try_emplace(action_key(a));
    if (inserted) {
      it->second.action = a;
      it->second.sum = Vector::Zero(x.size());
      it->second.first_row = static_cast<std::size_t>(i);
    }
    it->second.sum += x;
    ++it->second.count;
  }
  CheckReport rep{"unbiased", true, 0.0, {}, groups.size(), {}};
  for (const auto& [key, g] : groups) {
    Vector mean = g.sum / static_cast<double>(g.count);
    const double ratio = (g.action - mean).norm() / (1.0 + mean.norm());
    if (rep.worst.empty() || ratio > rep.worst_value) {
      rep.worst_value = ratio;
      rep.worst = {g.first_row};
    }
  }
  rep.ok = rep.worst_value <= tol;
  rep.detail = std::to_string(groups.size()) + " groups";
  return rep;
}

CheckReport check_projection_idempotent(const Policy& policy, const Matrix& sample, double tol) {
  CheckReport rep{"projection_idempotent", true, 0.0, {}, 0, {}};
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    Vector a = policy(sample.row(i).transpose());
    const double err = (policy(a) - a).norm();
    ++rep.evaluated;
    if (rep.worst.empty() || err > rep.worst_value) {
      rep.worst_value = err;
      rep.worst = {static_cast<std::size_t>(i)};
    }
  }
  rep.ok = rep.worst_value <= tol;
  return rep;
}

CheckReport check_gradient_monotone(const UtilityFunction& w, const Policy& policy, const Matrix& sample,
                                    double tol, std::size_t max_pairs, Rng* rng) {
  require(max_pairs == 0 || rng != nullptr, ErrorKind::invalid_argument,
          "check_gradient_monotone: sampling pairs requires an rng");
  const auto n = static_cast<std::size_t>(sample.rows());
  Matrix grads(sample.rows(), sample.cols());
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    grads.row(i) = w.grad(policy(sample.row(i).transpose())).transpose();
  }
  CheckReport rep{"gradient_monotone", true, std::numeric_limits<double>::infinity(), {}, 0, {}};
  auto visit = [&](std::size_t i, std::size_t j) {
    const auto ri = static_cast<Eigen::Index>(i);
    const auto rj = static_cast<Eigen::Index>(j);
    const double v = (grads.row(ri) - grads.row(rj)).dot(sample.row(ri) - sample.row(rj));
    ++rep.evaluated;
    if (v < rep.worst_value) {
      rep.worst_value = v;
      rep.worst = {i, j};
    }
  };
  if (max_pairs == 0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) visit(i, j);
  } else if (n >= 2) {
    for (std::size_t p = 0; p < max_pairs; ++p) {
      std::size_t i = rng->index(n);
      std::size_t j = rng->index(n - 1);
      if (j >= i) ++j;
      visit(i, j);
    }
  }
  if (rep.evaluated == 0) rep.worst_value = 0.0;
  rep.ok = rep.worst_value >= -tol;
  return rep;
}

CompressibilityReport compressibility_dimension(const UtilityFunction& w, const Matrix& probes, double tol) {
  require(probes.cols() == w.dim(), ErrorKind::shape, "compressibility_dimension: probe dimension mismatch");
  CompressibilityReport rep;
  for (Eigen::Index i = 0; i < probes.rows(); ++i) {
    const Matrix h = w.hess(probes.row(i).transpose());
    const Inertia in = tol < 0.0 ? inertia(h) : inertia(h, tol);
    rep.nu_plus.push_back(in.nu_plus);
    rep.nu_minus.push_back(in.nu_minus);
    rep.nu_plus_max = std::max(rep.nu_plus_max, in.nu_plus);
    if (in.near_zero > 0) rep.degenerate = true;
  }
  return rep;
}

namespace {

Vector random_unit(int dim, Rng& rng) {
  Vector v(dim);
  do {
    for (int i = 0; i < dim; ++i) v(i) = rng.normal();
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace

RayConcavityReport check_ray_concavity(const UtilityFunction& w, double radius, double eps,
                                       int direction_samples, Rng& rng) {
  require(radius > 0.0 && eps > 0.0 && eps < 1.0, ErrorKind::invalid_argument,
          "check_ray_concavity: need radius > 0 and 0 < eps < 1");
  const int dim = w.dim();
  const double max_angle = std::acos(1.0 - eps) * (1.0 - 1e-9);
  RayConcavityReport rep;
  auto test = [&](const Vector& a, const Vector& b) {
    const double q = b.dot(w.hess(a) * b);
    ++rep.evaluated;
    if (q >= 0.0) {
      rep.concave_along_rays = false;
      rep.witness_a = a;
      rep.witness_b = b;
      rep.witness_value = q;
      return true;
    }
    return false;
  };
  for (int s = 0; s < direction_samples; ++s) {
    const Vector u = random_unit(dim, rng);
    const Vector a = rng.uniform(radius, 4.0 * radius) * u;
    if (test(a, u)) return rep;
    if (dim == 1) continue;
    Vector v = random_unit(dim, rng);
    v -= v.dot(u) * u;
    if (v.norm() < 1e-12) continue;
    v.normalize();
    const double theta = rng.uniform(0.0, max_angle);
    if (test(a, std::cos(theta) * u + std::sin(theta) * v)) return rep;
  }
  return rep;
}

}  // namespace bae
