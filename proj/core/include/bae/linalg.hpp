#pragma once

#include "bae/types.hpp"

namespace bae {

struct EigenDecomposition {
  Vector eigenvalues;   // ascending
  Matrix eigenvectors;  // orthonormal columns, matching eigenvalues
};

/// Eigendecomposition of a symmetric matrix. Rejects non-square input, NaNs
/// and asymmetry above 1e-12 relative to the largest entry.
EigenDecomposition sym_eigen(const Matrix& a);

struct Inertia {
  int nu_plus = 0;   // #{lambda >= -tol}
  int nu_minus = 0;  // #{lambda <= +tol}
  int near_zero = 0; // #{|lambda| <= tol}
};

/// Default threshold for "non-negative": 1e-9 * max(1, ||A||_2).
double default_inertia_tol(const Matrix& a);

Inertia inertia(const Matrix& a, double tol);
Inertia inertia(const Matrix& a);

/// Principal square root and inverse square root of a symmetric positive
/// definite matrix.
Matrix sym_sqrt(const Matrix& a);
Matrix sym_inv_sqrt(const Matrix& a);

/// Spectral norm of a symmetric matrix (largest |eigenvalue|).
double sym_spectral_norm(const Matrix& a);

}  // namespace bae
