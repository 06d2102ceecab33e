#include "bae/linalg.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>

namespace bae {

EigenDecomposition sym_eigen(const Matrix& a) {
  require(a.rows() == a.cols(), ErrorKind::shape, "sym_eigen: matrix is not square");
  require(!a.hasNaN(), ErrorKind::numeric, "sym_eigen: NaN entry");
  require(a.allFinite(), ErrorKind::numeric, "sym_eigen: infinite entry");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  const double asym = (a - a.transpose()).cwiseAbs().maxCoeff();
  require(asym <= 1e-12 * scale, ErrorKind::invalid_argument, "sym_eigen: matrix is not symmetric");

  Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  require(solver.info() == Eigen::Success, ErrorKind::numeric, "sym_eigen: solver did not converge");
  return {solver.eigenvalues(), solver.eigenvectors()};
}

double sym_spectral_norm(const Matrix& a) {
  if (a.size() == 0) return 0.0;
  const auto ev = sym_eigen(a).eigenvalues;
  return std::max(std::abs(ev(0)), std::abs(ev(ev.size() - 1)));
}

double default_inertia_tol(const Matrix& a) { return 1e-9 * std::max(1.0, sym_spectral_norm(a)); }

Inertia inertia(const Matrix& a, double tol) {
  require(tol >= 0.0, ErrorKind::invalid_argument, "inertia: negative tolerance");
  const auto ev = sym_eigen(a).eigenvalues;
  Inertia out;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev(i) >= -tol) ++out.nu_plus;
    if (ev(i) <= tol) ++out.nu_minus;
    if (std::abs(ev(i)) <= tol) ++out.near_zero;
  }
  return out;
}

Inertia inertia(const Matrix& a) { return inertia(a, default_inertia_tol(a)); }

namespace {

Matrix spectral_map(const Matrix& a, double power) {
  const auto dec = sym_eigen(a);
  const double tol = 1e-10 * std::max(1.0, dec.eigenvalues.cwiseAbs().maxCoeff());
  require(dec.eigenvalues.minCoeff() > tol, ErrorKind::numeric,
          "matrix is not positive definite (consider reducing the dimension)");
  Vector mapped = dec.eigenvalues.array().pow(power);
  return dec.eigenvectors * mapped.asDiagonal() * dec.eigenvectors.transpose();
}

}  // namespace

Matrix sym_sqrt(const Matrix& a) { return spectral_map(a, 0.5); }
Matrix sym_inv_sqrt(const Matrix& a) { return spectral_map(a, -0.5); }

}  // namespace bae
