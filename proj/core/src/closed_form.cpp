#include "bae/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <string>
#include <unordered_set>

#include "bae/linalg.hpp"
#include "bae/rng.hpp"

namespace bae {

Vector QuadraticPolicy::operator()(const Vector& x) const {
  require(x.size() == A.cols(), ErrorKind::shape, "quadratic policy: dimension mismatch");
  return mean + A * (x - mean);
}

Matrix QuadraticPolicy::apply(const Matrix& sample) const {
  require(sample.cols() == A.cols(), ErrorKind::shape, "quadratic policy: dimension mismatch");
  Matrix out(sample.rows(), sample.cols());
  for (Eigen::Index i = 0; i < sample.rows(); ++i) out.row(i) = (*this)(sample.row(i).transpose()).transpose();
  return out;
}

Policy QuadraticPolicy::as_policy() const {
  return [p = *this](const Vector& x) { return p(x); };
}

QuadraticPolicy quadratic_policy(const Matrix& h, const Matrix& sigma, const Vector& mean) {
  require(h.rows() == h.cols() && sigma.rows() == h.rows() && sigma.cols() == h.cols() && mean.size() == h.rows(),
          ErrorKind::shape, "quadratic_policy: H, Sigma and mean must agree in dimension");
  const EigenDecomposition se = sym_eigen(sigma);
  const double floor = 1e-10 * std::max(1.0, std::abs(se.eigenvalues(se.eigenvalues.size() - 1)));
  require(se.eigenvalues(0) > floor, ErrorKind::numeric,
          "quadratic_policy: second-moment matrix is singular; reduce the input dimension first");

  QuadraticPolicy p;
  p.H = h;
  p.Sigma = sigma;
  p.mean = mean;
  const Matrix root = sym_sqrt(sigma);
  const Matrix inv_root = sym_inv_sqrt(sigma);
  Matrix v = root * h * root;
  v = (0.5 * (v + v.transpose())).eval();
  const EigenDecomposition ve = sym_eigen(v);
  p.eigenvalues = ve.eigenvalues;
  p.tol = default_inertia_tol(v);
  const Eigen::Index dim = h.rows();
  Matrix proj = Matrix::Zero(dim, dim);
  for (Eigen::Index k = 0; k < dim; ++k) {
    if (ve.eigenvalues(k) > p.tol) {
      proj += ve.eigenvectors.col(k) * ve.eigenvectors.col(k).transpose();
      ++p.rank;
    }
  }
  p.A = root * proj * inv_root;
  return p;
}

QuadraticPolicy quadratic_policy(const Matrix& h, const Matrix& sample) {
  require(sample.rows() > 0, ErrorKind::invalid_argument, "quadratic_policy: empty sample");
  require(sample.cols() == h.rows(), ErrorKind::shape, "quadratic_policy: sample dimension mismatch");
  require(all_finite(sample), ErrorKind::numeric, "quadratic_policy: non-finite sample");
  const Vector mean = sample.colwise().mean().transpose();
  const Matrix centered = sample.rowwise() - mean.transpose();
  Matrix sigma = centered.transpose() * centered / static_cast<double>(sample.rows());
  sigma = (0.5 * (sigma + sigma.transpose())).eval();
  return quadratic_policy(h, sigma, mean);
}

Vector SpherePolicy::operator()(const Vector& x) const {
  require(x.size() == dim, ErrorKind::shape, "sphere policy: dimension mismatch");
  const double norm = x.norm();
  if (norm < 1e-12) {
    Vector e = Vector::Zero(dim);
    e(0) = beta;
    return e;
  }
  return beta * x / norm;
}

Matrix SpherePolicy::apply(const Matrix& sample) const {
  Matrix out(sample.rows(), sample.cols());
  for (Eigen::Index i = 0; i < sample.rows(); ++i) out.row(i) = (*this)(sample.row(i).transpose()).transpose();
  return out;
}

Policy SpherePolicy::as_policy() const {
  return [p = *this](const Vector& x) { return p(x); };
}

SpherePolicy sphere_policy(const Matrix& sample) {
  require(sample.rows() > 0 && sample.cols() > 0, ErrorKind::invalid_argument, "sphere_policy: empty sample");
  require(all_finite(sample), ErrorKind::numeric, "sphere_policy: non-finite sample");
  SpherePolicy p;
  p.dim = static_cast<int>(sample.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    const double norm = sample.row(i).norm();
    if (norm < 1e-12) p.zero_rows.push_back(static_cast<std::size_t>(i));
    total += norm;
  }
  p.beta = total / static_cast<double>(sample.rows());
  require(p.beta > 0.0, ErrorKind::invalid_argument, "sphere_policy: all rows are zero");
  return p;
}

SphereConditionReport check_sphere_condition(const RadialProfile& phi, double beta, double radius_bound, int grid) {
  require(beta > 0.0 && std::isfinite(beta), ErrorKind::invalid_argument, "check_sphere_condition: beta must be positive");
  require(radius_bound >= 0.0 && std::isfinite(radius_bound), ErrorKind::invalid_argument,
          "check_sphere_condition: radius_bound must be non-negative");
  require(grid >= 1, ErrorKind::invalid_argument, "check_sphere_condition: grid must be positive");
  const double base = phi.value(beta * beta);
  const double slope = 2.0 * phi.d1(beta * beta) * beta;
  SphereConditionReport rep;
  rep.max_value = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= grid; ++i) {
    const double r = radius_bound * static_cast<double>(i) / grid;
    const double f = phi.value(r * r) - base + slope * (beta - r);
    ++rep.evaluated;
    if (f > rep.max_value) {
      rep.max_value = f;
      rep.argmax_radius = r;
    }
  }
  rep.ok = rep.max_value <= 1e-9;
  return rep;
}

namespace {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return out;
}

// Distinct rows, first occurrence order; exact bytes with -0 folded.
Matrix distinct_rows(const Matrix& m) {
  std::unordered_set<std::string> seen;
  std::vector<Eigen::Index> keep;
  std::string key(static_cast<std::size_t>(m.cols()) * sizeof(double), '\0');
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j) + 0.0;
      std::memcpy(key.data() + static_cast<std::size_t>(j) * sizeof(double), &v, sizeof(double));
    }
    if (seen.insert(key).second) keep.push_back(i);
  }
  Matrix out(static_cast<Eigen::Index>(keep.size()), m.cols());
  for (std::size_t k = 0; k < keep.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(keep[k]);
  return out;
}

// Drops rows within 1e-12 (max-abs) of an earlier kept row so FeatureSet accepts them.
Matrix separated_rows(const Matrix& m) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(m.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  if (m.cols() > 0)
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) { return m(a, 0) < m(b, 0); });
  std::vector<Eigen::Index> kept;
  for (std::size_t i = 0; i < order.size(); ++i) {
    bool clash = false;
    for (auto it = kept.rbegin(); it != kept.rend(); ++it) {
      if (m(order[i], 0) - m(*it, 0) > 1e-12) break;
      if ((m.row(order[i]) - m.row(*it)).cwiseAbs().maxCoeff() <= 1e-12) {
        clash = true;
        break;
      }
    }
    if (!clash) kept.push_back(order[i]);
  }
  std::sort(kept.begin(), kept.end());
  Matrix out(static_cast<Eigen::Index>(kept.size()), m.cols());
  for (std::size_t k = 0; k < kept.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(kept[k]);
  return out;
}

}  // namespace

VerifyReport verify_policy(const UtilityFunction& w, const Policy& policy, const Matrix& sample, const Matrix& probes,
                           const VerifyOptions& opts) {
  require(sample.rows() > 0, ErrorKind::invalid_argument, "verify_policy: empty sample");
  require(sample.cols() == w.dim(), ErrorKind::shape, "verify_policy: sample dimension mismatch");
  require(probes.rows() == 0 || probes.cols() == w.dim(), ErrorKind::shape, "verify_policy: probe dimension mismatch");

  Matrix actions(sample.rows(), sample.cols());
  std::vector<double> w_policy(static_cast<std::size_t>(sample.rows()));
  std::vector<double> w_data(static_cast<std::size_t>(sample.rows()));
  for (Eigen::Index i = 0; i < sample.rows(); ++i) {
    const Vector x = sample.row(i).transpose();
    const Vector a = policy(x);
    require(a.size() == x.size(), ErrorKind::shape, "verify_policy: policy changes dimension");
    actions.row(i) = a.transpose();
    w_policy[static_cast<std::size_t>(i)] = w.value(a);
    w_data[static_cast<std::size_t>(i)] = w.value(x);
  }

  VerifyReport rep;
  const MeanSe mp = mean_se(w_policy);
  const MeanSe md = mean_se(w_data);
  rep.expected_w_policy = mp.mean;
  rep.se_policy = mp.se;
  rep.expected_w_data = md.mean;
  rep.se_data = md.se;
  rep.w_of_mean = w.value(sample.colwise().mean().transpose());

  const Matrix image = separated_rows(distinct_rows(actions));
  rep.image_points = static_cast<std::size_t>(image.rows());
  Rng rng(opts.seed);

  rep.checks.push_back(check_unbiased(policy, sample, opts.tol));
  rep.checks.push_back(check_projection_idempotent(policy, sample, opts.tol));

  Matrix capped = image;
  if (opts.max_image_points > 0 && static_cast<std::size_t>(image.rows()) > opts.max_image_points) {
    Rng sub = rng.derive(Stream::subset);
    std::vector<std::size_t> perm = sub.permutation(static_cast<std::size_t>(image.rows()));
    perm.resize(opts.max_image_points);
    std::sort(perm.begin(), perm.end());
    capped.resize(static_cast<Eigen::Index>(perm.size()), image.cols());
    for (std::size_t k = 0; k < perm.size(); ++k)
      capped.row(static_cast<Eigen::Index>(k)) = image.row(static_cast<Eigen::Index>(perm[k]));
  }
  auto mono = check_w_monotone(w, FeatureSet(capped), opts.tol);
  mono.detail = std::to_string(capped.rows()) + " of " + std::to_string(image.rows()) + " image points";
  rep.checks.push_back(std::move(mono));

  if (probes.rows() > 0) rep.checks.push_back(check_maximal(w, FeatureSet(image), probes, opts.maximal_tol));

  Rng pair_rng = rng.derive(Stream::probe);
  rep.checks.push_back(check_gradient_monotone(w, policy, sample, opts.tol, opts.max_pairs, &pair_rng));

  for (const auto& c : rep.checks) rep.ok = rep.ok && c.ok;
  return rep;
}

}  // namespace bae
