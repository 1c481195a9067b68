#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>

#include "ssmcde/feature_tensor.hpp"
#include "ssmcde/linear_cde.hpp"

namespace ssmcde {

struct SeededInit {
  std::uint64_t seed = 0;
  std::size_t N = 1;
  std::size_t d0 = 1, d_omega = 1, d_xi = 1;
};

// A_i ~ N(0, 1/N) entrywise, B and C ~ N(0, 1), v = 0. Each entry depends only
// on (seed, matrix, index), so draws are reproducible in any order.
DenseCdeParams sample_lecun(const SeededInit& init);

// K(s,t) = <x0X, x0Y> + <xiX_s, xiY_t> + double integral of K <domegaX, domegaY>,
// on the product grid, with `refinement` sub-cells per grid cell along each axis.
// Returns the (LX+1) x (LY+1) surface at the original grid points.
Matrix kernel_goursat(const Path& omega_x, const Path& xi_x, const Vector& x0_x,
                      const Path& omega_y, const Path& xi_y, const Vector& x0_y,
                      int refinement = 1);

struct ReadoutFit {
  Vector v;
  double ridge = 0.0;
  double condition = 1.0;  // of S^T S + ridge I
  double residual_mse = 0.0;
  bool rank_deficient = false;
};

// Default ridge: 1e-6 trace(S^T S) / columns.
double default_ridge(const Matrix& S);

// Minimizes ||S v - y||^2 + ridge ||v||^2. ridge = 0 gives the minimum-norm least-squares fit.
ReadoutFit fit_readout(const Matrix& S, const Vector& y, std::optional<double> ridge = std::nullopt);

}  // namespace ssmcde
