#pragma once

#include <functional>
#include <string>

#include "bae/types.hpp"

namespace bae {

/// Scalar profile phi with first and second derivatives, for radial utilities
/// W(a) = phi(a' H a).
struct RadialProfile {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> d1;
  std::function<double(double)> d2;
};

namespace profiles {
RadialProfile linear();        // x
RadialProfile square();        // x^2
RadialProfile sqrt();          // sqrt(x)
RadialProfile log1p();         // log(1 + x)
RadialProfile power(double p); // x^p
RadialProfile negated(RadialProfile inner);

/// Lookup by name ("linear", "square", "sqrt", "log1p", "power"); p is used
/// only by "power".
RadialProfile by_name(const std::string& name, double p = 1.0);
}  // namespace profiles

/// Smooth utility W over R^L with analytic gradient and Hessian.
class UtilityFunction {
 public:
  using ValueFn = std::function<double(const Vector&)>;
  using GradFn = std::function<Vector(const Vector&)>;
  using HessFn = std::function<Matrix(const Vector&)>;

  UtilityFunction(int dim, ValueFn value, GradFn grad, HessFn hess, std::string name = "custom");

  /// W(a) = a' H a + h' a. H must be symmetric.
  static UtilityFunction quadratic(const Matrix& h_mat, const Vector& h_vec);
  static UtilityFunction quadratic(const Matrix& h_mat);
  /// W(a) = -(a' H a + h' a).
  static UtilityFunction neg_quadratic(const Matrix& h_mat, const Vector& h_vec);
  /// W(a) = phi(a' H a), with D_a W = 2 phi' H a and
  /// D_aa W = 4 phi'' H a a' H + 2 phi' H.
  static UtilityFunction radial(RadialProfile phi, const Matrix& h_mat);

  int dim() const noexcept { return dim_; }
  const std::string& name() const noexcept { return name_; }

  double value(const Vector& a) const;
  Vector grad(const Vector& a) const;
  Matrix hess(const Vector& a) const;

  double operator()(const Vector& a) const { return value(a); }

 private:
  void check_dim(const Vector& a) const;

  int dim_;
  ValueFn value_;
  GradFn grad_;
  HessFn hess_;
  std::string name_;
};

}  // namespace bae
