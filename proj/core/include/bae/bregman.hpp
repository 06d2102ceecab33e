#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "bae/rng.hpp"
#include "bae/types.hpp"
#include "bae/utility.hpp"

namespace bae {

/// Finite candidate feature set: K distinct points in R^L stored as rows.
class FeatureSet {
 public:
  FeatureSet() = default;
  /// Throws if points are non-finite or two rows coincide within 1e-12.
  explicit FeatureSet(Matrix points);

  std::size_t size() const noexcept { return static_cast<std::size_t>(points_.rows()); }
  int dim() const noexcept { return static_cast<int>(points_.cols()); }
  bool empty() const noexcept { return points_.rows() == 0; }
  Vector point(std::size_t k) const { return points_.row(static_cast<Eigen::Index>(k)).transpose(); }
  const Matrix& points() const noexcept { return points_; }

 private:
  Matrix points_;
};

/// c(a, b) = W(b) - W(a) + D_aW(a) . (a - b)
double bregman_divergence(const UtilityFunction& w, const Vector& a, const Vector& b);

struct Projection {
  std::size_t index = 0;
  double value = 0.0;
};

/// Argmin over the feature set of c(a, b); ties go to the lowest index.
Projection bregman_project(const UtilityFunction& w, const FeatureSet& xi, const Vector& b);

/// Caches W(a_k) and D_aW(a_k) so repeated projections cost O(K L).
/// c(a_k, b) = W(b) - [W(a_k) + D_aW(a_k) . (b - a_k)], so the projection is
/// the feature whose tangent plane is highest at b.
class BregmanProjector {
 public:
  BregmanProjector(const UtilityFunction& w, const FeatureSet& xi);

  Projection project(const Vector& b) const;
  /// Tangent-plane score W(a_k) - D_aW(a_k) . (a_k - b); larger is closer.
  double score(std::size_t k, const Vector& b) const;
  std::size_t size() const noexcept { return values_.size(); }

 private:
  const UtilityFunction* w_;
  Matrix points_;
  Matrix grads_;
  std::vector<double> values_;
  std::vector<double> offsets_;  // W(a_k) - D_aW(a_k) . a_k
};

/// Common result shape for the structural checks. `worst` holds the indices
/// of the worst offender (one or two entries depending on the check).
struct CheckReport {
  std::string name;
  bool ok = true;
  double worst_value = 0.0;
  std::vector<std::size_t> worst;
  std::size_t evaluated = 0;
  std::string detail;
};

using Policy = std::function<Vector(const Vector&)>;

/// ok iff c(a_i, a_j) >= -tol for every ordered pair.
CheckReport check_w_monotone(const UtilityFunction& w, const FeatureSet& xi, double tol);

/// ok iff min_{a in xi} c(a, b) <= tol for every probe row b.
CheckReport check_maximal(const UtilityFunction& w, const FeatureSet& xi, const Matrix& probes, double tol);

/// Groups rows by their exact action (negative zero folded into zero) and
/// requires ||a - mean of group|| <= tol * (1 + ||mean||).
CheckReport check_unbiased(const Policy& policy, const Matrix& sample, double tol);

/// ok iff ||policy(policy(x)) - policy(x)|| <= tol for every row.
CheckReport check_projection_idempotent(const Policy& policy, const Matrix& sample, double tol);

/// ok iff (D_aW(A(x)) - D_aW(A(y)))' (x - y) >= -tol for every examined pair.
/// With max_pairs == 0 all pairs are examined; otherwise max_pairs random
/// pairs are drawn from rng.
CheckReport check_gradient_monotone(const UtilityFunction& w, const Policy& policy, const Matrix& sample,
                                    double tol, std::size_t max_pairs = 0, Rng* rng = nullptr);

struct CompressibilityReport {
  int nu_plus_max = 0;
  std::vector<int> nu_plus;
  std::vector<int> nu_minus;
  bool degenerate = false;  // some Hessian eigenvalue within tol of zero
};

/// Per-probe inertia of D_aaW. tol < 0 selects default_inertia_tol per probe.
CompressibilityReport compressibility_dimension(const UtilityFunction& w, const Matrix& probes,
                                                double tol = -1.0);

struct RayConcavityReport {
  bool concave_along_rays = true;
  Vector witness_a;
  Vector witness_b;
  double witness_value = 0.0;
  std::size_t evaluated = 0;
};

/// Samples points a with ||a|| in [K, 4K] and unit directions b in the cone
/// {b : cos(a, b) > 1 - eps}; reports the first b' D_aaW(a) b >= 0.
RayConcavityReport check_ray_concavity(const UtilityFunction& w, double radius, double eps,
                                       int direction_samples, Rng& rng);

}  // namespace bae
