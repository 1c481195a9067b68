#include "ssmcde/rff_kernel.hpp"

#include <cmath>
#include <string>

#include "ssmcde/errors.hpp"
#include "ssmcde/linalg.hpp"
#include "ssmcde/random.hpp"

namespace ssmcde {

DenseCdeParams sample_lecun(const SeededInit& init) {
  if (init.N < 1) throw DomainError("width N must be positive");
  const auto N = static_cast<Eigen::Index>(init.N);
  const double sd = 1.0 / std::sqrt(static_cast<double>(init.N));
  DenseCdeParams p;
  for (std::size_t i = 0; i < init.d_omega; ++i) {
    const std::uint64_t tag = tag_of(("A" + std::to_string(i)).c_str());
    Matrix a(N, N);
    for (Eigen::Index r = 0; r < N; ++r)
      for (Eigen::Index c = 0; c < N; ++c)
        a(r, c) = sd * std_normal(init.seed, tag, static_cast<std::uint64_t>(r * N + c));
    p.A.push_back(std::move(a));
  }
  auto gaussian = [&](const char* name, Eigen::Index cols) {
    const std::uint64_t tag = tag_of(name);
    Matrix m(N, cols);
    for (Eigen::Index r = 0; r < N; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = std_normal(init.seed, tag, static_cast<std::uint64_t>(r * cols + c));
    return m;
  };
  p.B = gaussian("B", static_cast<Eigen::Index>(init.d_xi));
  p.C = gaussian("C", static_cast<Eigen::Index>(init.d0));
  p.v = Vector::Zero(N);
  return p;
}

Matrix kernel_goursat(const Path& omega_x, const Path& xi_x, const Vector& x0_x,
                      const Path& omega_y, const Path& xi_y, const Vector& x0_y, int refinement) {
  if (refinement < 1) throw DomainError("refinement must be positive");
  if (!(omega_x.grid() == xi_x.grid()) || !(omega_y.grid() == xi_y.grid()))
    throw DomainError("each input's omega and xi must share a grid");
  if (omega_x.channels() != omega_y.channels() || xi_x.channels() != xi_y.channels() ||
      x0_x.size() != x0_y.size())
    throw DomainError("kernel inputs have mismatched channel counts");
  const std::size_t LX = omega_x.num_steps(), LY = omega_y.num_steps();
  const auto r = static_cast<std::size_t>(refinement);
  const std::size_t P = LX * r, Q = LY * r;

  // Inner products of sub-cell increments: segment (k,l) is shared by r x r sub-cells.
  const double rr = static_cast<double>(r) * static_cast<double>(r);
  Matrix rho(LX, LY), kappa(LX, LY);
  for (std::size_t k = 0; k < LX; ++k) {
    const Vector wx = omega_x.increment(k), sx = xi_x.increment(k);
    for (std::size_t l = 0; l < LY; ++l) {
      rho(k, l) = wx.dot(omega_y.increment(l)) / rr;
      kappa(k, l) = sx.dot(xi_y.increment(l)) / rr;
    }
  }

  const double base = x0_x.dot(x0_y);
  // Rolling rows of the refined surface.
  std::vector<double> prev(Q + 1, base), cur(Q + 1, base);
  Matrix out(static_cast<Eigen::Index>(LX + 1), static_cast<Eigen::Index>(LY + 1));
  out.row(0).setConstant(base);
  for (std::size_t i = 0; i < P; ++i) {
    cur[0] = base;
    const std::size_t k = i / r;
    for (std::size_t j = 0; j < Q; ++j) {
      const std::size_t l = j / r;
      const double a = rho(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      const double c = kappa(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(l));
      const double k00 = prev[j], k01 = prev[j + 1], k10 = cur[j];
      // Trapezoid over the cell corners, solved for the new corner.
      const double denom = 1.0 - 0.25 * a;
      if (std::abs(denom) < 1e-12) throw DomainError("kernel grid too coarse: refine further");
      cur[j + 1] = (k10 + k01 - k00 + c + 0.25 * a * (k00 + k01 + k10)) / denom;
    }
    if ((i + 1) % r == 0) {
      const auto row = static_cast<Eigen::Index>((i + 1) / r);
      for (std::size_t l = 0; l <= LY; ++l) out(row, static_cast<Eigen::Index>(l)) = cur[l * r];
    }
    std::swap(prev, cur);
  }
  return out;
}

double default_ridge(const Matrix& S) {
  if (S.cols() == 0) return 0.0;
  return 1e-6 * S.squaredNorm() / static_cast<double>(S.cols());
}

ReadoutFit fit_readout(const Matrix& S, const Vector& y, std::optional<double> ridge) {
  if (S.rows() < 1) throw DomainError("fit_readout needs at least one sample");
  if (S.rows() != y.size()) throw DomainError("feature rows and targets differ in length");
  ReadoutFit fit;
  fit.ridge = ridge ? *ridge : default_ridge(S);
  if (fit.ridge < 0.0) throw DomainError("ridge must be non-negative");
  const Eigen::Index n = S.cols();
  Matrix gram = S.transpose() * S;
  gram.diagonal().array() += fit.ridge;
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double lmax = n ? eig.eigenvalues().maxCoeff() : 0.0;
  const double lmin = n ? std::max(eig.eigenvalues().minCoeff(), 0.0) : 0.0;
  fit.condition = lmin > 0.0 ? lmax / lmin : INFINITY;
  const double tol = 1e-12 * std::max(lmax, 1e-300);
  if (fit.ridge > 0.0 && lmin > tol) {
    fit.v = gram.ldlt().solve(S.transpose() * y);
  } else {
    // Rank-revealing route for the unregularized or near-singular case.
    if (fit.ridge > 0.0) {
      const LstsqResult r = lstsq(gram, S.transpose() * y, 1e-14);
      fit.v = r.x;
      fit.rank_deficient = r.rank < n;
    } else {
      const LstsqResult r = lstsq(S, y, 1e-12);
      fit.v = r.x;
      fit.rank_deficient = r.rank < n;
    }
  }
  fit.residual_mse = (S * fit.v - y).squaredNorm() / static_cast<double>(S.rows());
  return fit;
}

}  // namespace ssmcde
