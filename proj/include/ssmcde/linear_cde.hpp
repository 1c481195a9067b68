#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmcde/feature_tensor.hpp"
#include "ssmcde/path.hpp"

namespace ssmcde {

// dZ = sum_i A_i Z domega^i + B dxi,  Z_0 = C x0,  output <v, Z>.
struct DenseCdeParams {
  std::vector<Matrix> A;  // d_omega matrices, N x N
  Matrix B;               // N x d_xi
  Matrix C;               // N x d0
  Vector v;               // N

  std::size_t N() const { return static_cast<std::size_t>(C.rows()); }
  std::size_t d0() const { return static_cast<std::size_t>(C.cols()); }
  std::size_t d_omega() const { return A.size(); }
  std::size_t d_xi() const { return static_cast<std::size_t>(B.cols()); }
  void validate() const;
};

// A_i = diag(V.col(i)).
struct DiagonalCdeParams {
  Matrix V;  // N x d_omega
  Matrix B;  // N x d_xi
  Matrix C;  // N x d0
  Vector v;  // N

  std::size_t N() const { return static_cast<std::size_t>(V.rows()); }
  std::size_t d0() const { return static_cast<std::size_t>(C.cols()); }
  std::size_t d_omega() const { return static_cast<std::size_t>(V.cols()); }
  std::size_t d_xi() const { return static_cast<std::size_t>(B.cols()); }
  void validate() const;
  DenseCdeParams to_dense() const;
};

// Receives solver warnings (default: stderr). Pass nullptr to restore the default.
void set_warning_handler(std::function<void(const std::string&)> handler);

// Trajectories are (L+1) x N: row k is the state at grid time t_k.

// Exact for piecewise-linear drivers: per segment Z <- e^M Z + phi1(M) B dxi, M = sum_i A_i domega_i.
Matrix solve_dense(const DenseCdeParams& p, const Path& omega, const Path& xi, const Vector& x0);

// Forward Euler with `substeps` steps per segment.
Matrix solve_dense_euler(const DenseCdeParams& p, const Path& omega, const Path& xi,
                         const Vector& x0, int substeps);

Matrix solve_diagonal(const DiagonalCdeParams& p, const Path& omega, const Path& xi,
                      const Vector& x0);

// Final states (batch x N) of solve_dense for many drivers on one grid, stepping all
// paths together with matrix-matrix products. x0s is d0 x batch. Substeps come from
// a power-iteration estimate of each ||A_i||_2 rather than the 1-norm, which keeps
// wide random matrices cheap; the Taylor series still runs to full precision.
Matrix solve_dense_final(const DenseCdeParams& p, std::span<const Path> omegas, std::span<const Path> xis,
                         const Matrix& x0s);

struct ExpansionSolution {
  Matrix states;      // truncated expansion at each grid time
  Vector tail_bound;  // bound on the Euclidean truncation error at each grid time
};

// Truncated word expansion of the solution; words of length <= depth.
ExpansionSolution solve_via_signature(const DenseCdeParams& p, const Path& omega, const Path& xi,
                                      const Vector& x0, int depth);

// Transition matrix from s to t on grid-aligned times. For s > t this is the
// backward flow, built from e^{-M} factors (so it should invert the forward one).
Matrix wronskian(const DenseCdeParams& p, const Path& omega, double s, double t);

// W_{0,t} C x0 + sum over segments of W_{t_{k+1},t} phi1(M_k) B dxi_k, with dense exponentials.
Matrix variation_of_constants(const DenseCdeParams& p, const Path& omega, const Path& xi,
                              const Vector& x0);

// Truncated tensor algebra over letters [e_1..e_d0, xi_1..xi_dxi, omega_1..omega_domega]
// up to length depth+1; its state is the feature tensor of words up to length `depth`.
struct TensorAlgebraRealization {
  DenseCdeParams params;
  std::size_t d0 = 0, d_omega = 0, d_xi = 0;
  int depth = 0;

  std::size_t alphabet() const { return d0 + d_xi + d_omega; }
  std::size_t alpha_state(std::size_t i, const Word& w) const;
  std::size_t beta_state(const Word& w, std::size_t j) const;
  // Readout that pairs the state with the given coefficients (shapes as in FeatureTensor).
  Vector readout(const Matrix& alpha, const Matrix& beta) const;
};

TensorAlgebraRealization tensor_algebra_realization(std::size_t d0, std::size_t d_omega,
                                                    std::size_t d_xi, int depth,
                                                    std::size_t memory_budget_bytes = 1ull << 30);

struct StabilityReport {
  Matrix multipliers;                // L x N, diagonal of each segment's transition
  std::vector<bool> gate_ok;         // V * domega <= 0 on each segment
  std::size_t flagged = 0;           // multipliers outside (0, 1]
  bool gate_condition() const;
  bool stable() const { return gate_condition() && flagged == 0; }
};

StabilityReport stability_check(const DiagonalCdeParams& p, const Path& omega);

nlohmann::json to_json(const DenseCdeParams& p);
nlohmann::json to_json(const DiagonalCdeParams& p);
DenseCdeParams dense_params_from_json(const nlohmann::json& j);
DiagonalCdeParams diagonal_params_from_json(const nlohmann::json& j);

}  // namespace ssmcde
