#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "bae/bregman.hpp"
#include "bae/types.hpp"
#include "bae/utility.hpp"

namespace bae {

/// Linear optimal autoencoder for quadratic W(a) = a' H a:
/// x -> mean + A (x - mean) with A = S^{1/2} P S^{-1/2}, where S is the data
/// second moment and P projects onto the positive eigenvectors of
/// S^{1/2} H S^{1/2}.
struct QuadraticPolicy {
  Matrix H;
  Matrix Sigma;
  Matrix A;
  Vector mean;
  Vector eigenvalues;  // of S^{1/2} H S^{1/2}, ascending
  double tol = 0.0;    // positive-eigenvalue threshold
  int rank = 0;

  Vector operator()(const Vector& x) const;
  Matrix apply(const Matrix& sample) const;
  Policy as_policy() const;
};

/// Centers the sample and uses its second moment. Throws if that matrix is
/// singular; reduce the dimension first in that case.
QuadraticPolicy quadratic_policy(const Matrix& h, const Matrix& sample);
/// Uses a known second moment and mean instead of estimating them.
QuadraticPolicy quadratic_policy(const Matrix& h, const Matrix& sigma, const Vector& mean);

/// x -> beta x / ||x|| with beta = mean row norm of the fitting sample.
struct SpherePolicy {
  double beta = 0.0;
  int dim = 0;
  std::vector<std::size_t> zero_rows;  // sample rows with ||x|| < 1e-12

  /// Zero input maps to beta e_1.
  Vector operator()(const Vector& x) const;
  Matrix apply(const Matrix& sample) const;
  Policy as_policy() const;
};

SpherePolicy sphere_policy(const Matrix& sample);

struct SphereConditionReport {
  bool ok = true;
  double max_value = 0.0;
  double argmax_radius = 0.0;
  std::size_t evaluated = 0;
};

/// Evaluates f(r) = phi(r^2) - phi(beta^2) + 2 phi'(beta^2) beta (beta - r)
/// on grid + 1 equally spaced radii in [0, radius_bound]. ok iff max f <= 1e-9.
SphereConditionReport check_sphere_condition(const RadialProfile& phi, double beta, double radius_bound,
                                             int grid);

struct VerifyOptions {
  double tol = 1e-9;
  double maximal_tol = 1e-9;
  std::size_t max_image_points = 400;  // cap for the O(K^2) monotone check
  std::size_t max_pairs = 20000;       // gradient-monotone pairs; 0 means all
  std::uint64_t seed = 0;
};

struct VerifyReport {
  bool ok = true;
  std::vector<CheckReport> checks;
  double expected_w_policy = 0.0;  // E[W(policy(X))]
  double expected_w_data = 0.0;    // E[W(X)]
  double w_of_mean = 0.0;          // W(E[X])
  double se_policy = 0.0;
  double se_data = 0.0;
  std::size_t image_points = 0;
};

/// Runs the unbiased, idempotent, W-monotone (on the policy's image),
/// maximal (on probes) and gradient-monotone checks, and reports the three
/// utility levels. Standard errors treat rows as independent.
VerifyReport verify_policy(const UtilityFunction& w, const Policy& policy, const Matrix& sample,
                           const Matrix& probes, const VerifyOptions& opts = {});

}  // namespace bae
