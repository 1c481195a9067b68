#include "ssmcde/linalg.hpp"

#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

#include "ssmcde/errors.hpp"

namespace ssmcde {

Matrix expm(const Matrix& m) {
  if (m.rows() != m.cols()) throw DomainError("expm needs a square matrix");
  if (m.size() == 0) return m;
  return m.exp();
}

double phi1(double x) {
  if (std::abs(x) < 1e-5) return 1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0;
  return std::expm1(x) / x;
}

std::pair<Matrix, Matrix> expm_phi1(const Matrix& m) {
  const Eigen::Index n = m.rows();
  Matrix big = Matrix::Zero(2 * n, 2 * n);
  big.topLeftCorner(n, n) = m;
  big.topRightCorner(n, n).setIdentity();
  const Matrix e = expm(big);
  return {e.topLeftCorner(n, n), e.topRightCorner(n, n)};
}

Vector exp_affine_action(const Matrix& m, const Vector& z, const Vector& b) {
  const double norm = m.cwiseAbs().colwise().sum().maxCoeff();
  // Keep ||h M||_1 <= 1/2 so every Taylor term shrinks by at least half.
  const int substeps = norm > 0.5 ? static_cast<int>(std::ceil(norm / 0.5)) : 1;
  const double h = 1.0 / substeps;
  Vector y = z;
  Vector term(z.size());
  for (int s = 0; s < substeps; ++s) {
    // Terms of exp(h [[M, b], [0, 0]]) [y; 1], first component.
    term = h * (m * y + b);
    Vector sum = y + term;
    for (int k = 2; k < 60; ++k) {
      term = (h / k) * (m * term);
      sum += term;
      const double tn = term.cwiseAbs().maxCoeff();
      if (tn == 0.0 || tn <= 1e-17 * sum.cwiseAbs().maxCoeff()) break;
    }
    y = std::move(sum);
  }
  return y;
}

LstsqResult lstsq(const Matrix& a, const Vector& b, double rcond, bool standardize) {
  if (a.rows() != b.size()) throw DomainError("lstsq: row count mismatch");
  Vector scale = Vector::Ones(a.cols());
  if (standardize && a.rows() > 0) {
    scale = (a.colwise().squaredNorm() / static_cast<double>(a.rows())).cwiseSqrt().transpose();
    for (Eigen::Index c = 0; c < scale.size(); ++c)
      if (!(scale(c) > 0.0)) scale(c) = 1.0;
  }
  Matrix g = a * scale.cwiseInverse().asDiagonal();
  Vector rhs = b;
  if (g.rows() > g.cols()) {
    Eigen::HouseholderQR<Matrix> qr(g);
    rhs = (qr.householderQ().transpose() * b).head(g.cols());
    g = qr.matrixQR().topRows(g.cols()).triangularView<Eigen::Upper>();
  }
  Eigen::BDCSVD<Matrix> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  svd.setThreshold(rcond);
  LstsqResult r;
  r.x = svd.solve(rhs).cwiseQuotient(scale);
  r.rank = svd.rank();
  const Vector& sv = svd.singularValues();
  r.condition = (r.rank > 0) ? sv(0) / sv(r.rank - 1) : INFINITY;
  return r;
}

double exp_norm_bound(const Matrix& m) {
  double mu = -INFINITY;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double off = m.row(i).cwiseAbs().sum() - std::abs(m(i, i));
    mu = std::max(mu, m(i, i) + off);
  }
  return m.rows() == 0 ? 1.0 : std::exp(mu);
}

}  // namespace ssmcde
