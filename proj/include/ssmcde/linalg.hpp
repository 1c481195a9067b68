#pragma once

#include <utility>

#include "ssmcde/path.hpp"

namespace ssmcde {

// Scaling-and-squaring Pade exponential.
Matrix expm(const Matrix& m);

// (e^x - 1)/x with the series near zero.
double phi1(double x);

// (e^M, phi1(M)) from one exponential of the block matrix [[M, I], [0, 0]].
std::pair<Matrix, Matrix> expm_phi1(const Matrix& m);

// e^M z + phi1(M) b via a Taylor action on [z; 1] with substep scaling.
// Needs only products with M, so M may be singular or nilpotent.
Vector exp_affine_action(const Matrix& m, const Vector& z, const Vector& b);

struct LstsqResult {
  Vector x;
  Eigen::Index rank = 0;
  double condition = 1.0;  // ratio of extreme singular values kept
};

// Least squares via Householder QR then a truncated SVD of R. Singular values
// below rcond * largest are dropped, giving the minimum-norm solution. With
// standardize set, columns are scaled to unit RMS first (and the minimum norm
// refers to the scaled problem).
LstsqResult lstsq(const Matrix& a, const Vector& b, double rcond = 1e-12, bool standardize = false);

// Upper bound on ||e^M||_inf from the infinity log-norm.
double exp_norm_bound(const Matrix& m);

}  // namespace ssmcde
