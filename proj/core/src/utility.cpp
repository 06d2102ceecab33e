#include "bae/utility.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

namespace bae {

namespace profiles {

RadialProfile linear() {
  return {"linear", [](double x) { return x; }, [](double) { return 1.0; }, [](double) { return 0.0; }};
}

RadialProfile square() {
  return {"square", [](double x) { return x * x; }, [](double x) { return 2.0 * x; },
          [](double) { return 2.0; }};
}

RadialProfile sqrt() {
  return {"sqrt", [](double x) { return std::sqrt(x); }, [](double x) { return 0.5 / std::sqrt(x); },
          [](double x) { return -0.25 / (x * std::sqrt(x)); }};
}

RadialProfile log1p() {
  return {"log1p", [](double x) { return std::log1p(x); }, [](double x) { return 1.0 / (1.0 + x); },
          [](double x) { return -1.0 / ((1.0 + x) * (1.0 + x)); }};
}

RadialProfile power(double p) {
  return {"power", [p](double x) { return std::pow(x, p); },
          [p](double x) { return p * std::pow(x, p - 1.0); },
          [p](double x) { return p * (p - 1.0) * std::pow(x, p - 2.0); }};
}

RadialProfile negated(RadialProfile inner) {
  RadialProfile out;
  out.name = "neg_" + inner.name;
  out.value = [f = inner.value](double x) { return -f(x); };
  out.d1 = [f = inner.d1](double x) { return -f(x); };
  out.d2 = [f = inner.d2](double x) { return -f(x); };
  return out;
}

RadialProfile by_name(const std::string& name, double p) {
  if (name == "linear") return linear();
  if (name == "square") return square();
  if (name == "sqrt") return sqrt();
  if (name == "log1p") return log1p();
  if (name == "power") return power(p);
  fail(ErrorKind::invalid_argument, "unknown radial profile '" + name + "'");
}

}  // namespace profiles

UtilityFunction::UtilityFunction(int dim, ValueFn value, GradFn grad, HessFn hess, std::string name)
    : dim_(dim), value_(std::move(value)), grad_(std::move(grad)), hess_(std::move(hess)), name_(std::move(name)) {
  require(dim_ >= 1, ErrorKind::invalid_argument, "utility: dimension must be positive");
  require(value_ && grad_ && hess_, ErrorKind::invalid_argument, "utility: missing evaluator");
}

namespace {

void require_symmetric(const Matrix& h, const char* who) {
  require(h.rows() == h.cols(), ErrorKind::shape, std::string(who) + ": H must be square");
  require(h.allFinite(), ErrorKind::numeric, std::string(who) + ": H has non-finite entries");
  const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
  require((h - h.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale, ErrorKind::invalid_argument,
          std::string(who) + ": H must be symmetric");
}

}  // namespace

UtilityFunction UtilityFunction::quadratic(const Matrix& h_mat, const Vector& h_vec) {
  require_symmetric(h_mat, "quadratic");
  require(h_vec.size() == h_mat.rows(), ErrorKind::shape, "quadratic: h has wrong length");
  const int dim = static_cast<int>(h_mat.rows());
  Eigen::MatrixXd h = h_mat;
  Vector lin = h_vec;
  return UtilityFunction(
      dim, [h, lin](const Vector& a) { return a.dot(h * a) + lin.dot(a); },
      [h, lin](const Vector& a) -> Vector { return 2.0 * h * a + lin; },
      [h](const Vector&) -> Matrix { return 2.0 * h; }, "quadratic");
}

UtilityFunction UtilityFunction::quadratic(const Matrix& h_mat) {
  return quadratic(h_mat, Vector::Zero(h_mat.rows()));
}

UtilityFunction UtilityFunction::neg_quadratic(const Matrix& h_mat, const Vector& h_vec) {
  auto w = quadratic(-h_mat, -h_vec);
  w.name_ = "neg_quadratic";
  return w;
}

UtilityFunction UtilityFunction::radial(RadialProfile phi, const Matrix& h_mat) {
  require_symmetric(h_mat, "radial");
  const int dim = static_cast<int>(h_mat.rows());
  Eigen::MatrixXd h = h_mat;
  auto value = [h, f = phi.value](const Vector& a) { return f(a.dot(h * a)); };
  auto grad = [h, f1 = phi.d1](const Vector& a) -> Vector {
    Vector ha = h * a;
    return 2.0 * f1(a.dot(ha)) * ha;
  };
  auto hess = [h, f1 = phi.d1, f2 = phi.d2](const Vector& a) -> Matrix {
    Vector ha = h * a;
    const double q = a.dot(ha);
    Matrix out = 4.0 * f2(q) * ha * ha.transpose() + 2.0 * f1(q) * h;
    return out;
  };
  return UtilityFunction(dim, value, grad, hess, "radial_" + phi.name);
}

void UtilityFunction::check_dim(const Vector& a) const {
  require(a.size() == dim_, ErrorKind::shape,
          "utility: expected dimension " + std::to_string(dim_) + ", got " + std::to_string(a.size()));
}

double UtilityFunction::value(const Vector& a) const {
  check_dim(a);
  return value_(a);
}

Vector UtilityFunction::grad(const Vector& a) const {
  check_dim(a);
  return grad_(a);
}

Matrix UtilityFunction::hess(const Vector& a) const {
  check_dim(a);
  return hess_(a);
}

}  // namespace bae
