#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/path.hpp"

namespace ssmcde {

// Token sequences are L x d matrices, one token per row. All recurrences start
// from z_0 = 0 and return L+1 rows so row l lines up with grid time l/L.

// One diagonal SSM per channel: z^i <- exp(step_i a^i) z^i + phi1(step_i a^i) step_i b x^i.
struct S4Params {
  Matrix a;        // N x d, column i is channel i's diagonal
  Vector b;        // N, shared input projection
  Vector step;     // d, positive
  Matrix readout;  // N x d
};

enum class DeltaGate { softplus, relu };

// S4 with a token-dependent step: step^i_l = gate(alpha_i x^i_l + beta_i) * delta.
struct S6Params {
  Matrix a;        // N x d
  Vector b;        // N
  Vector alpha;    // d
  Vector beta;     // d
  double delta = 1.0;
  DeltaGate gate = DeltaGate::softplus;
  Matrix readout;  // N x d
};

// A single diagonal recurrence over all channels jointly.
struct S5Params {
  Vector a;        // N
  Matrix B;        // N x d
  Vector step;     // N, positive
  Matrix readout;  // p x N
};

// Matrix-state recurrence z <- Abar(x) . z + W_key^T x x^T W_val,
// Abar(x) = tau^-2 sigmoid(W_alpha^T x + b_alpha) sigmoid(W_beta^T x + b_beta)^T.
struct GlaParams {
  Matrix W_key, W_val, W_alpha, W_beta;  // d x d
  Vector b_alpha, b_beta;                // d
  double tau = 1.0;
};

struct ChannelOutput {
  std::vector<Matrix> states;  // per channel, (L+1) x N
  Matrix outputs;              // (L+1) x d
};

struct JointOutput {
  Matrix states;   // (L+1) x N
  Matrix outputs;  // (L+1) x p
};

double softplus(double x);
double sigmoid(double x);
double apply_gate(DeltaGate g, double x);

ChannelOutput s4_forward(const S4Params& p, const Matrix& x);
ChannelOutput s6_forward(const S6Params& p, const Matrix& x);
JointOutput s5_forward(const S5Params& p, const Matrix& x);
std::vector<Matrix> gla_forward(const GlaParams& p, const Matrix& x);  // L+1 states, d x d
// Transition matrix used by gla_forward at token x.
Matrix gla_transition(const GlaParams& p, const Vector& x);

// Elementwise affine map z -> multiplier .* z + offset.
struct ScanElement {
  Vector multiplier;
  Vector offset;
};

// Apply `first`, then `second`.
ScanElement compose(const ScanElement& first, const ScanElement& second);

enum class ScanSchedule { sequential, tree };

// Inclusive prefix compositions. The tree schedule reassociates products, so on
// contractive elements it can differ from the sequential fold by rounding only.
std::vector<ScanElement> parallel_scan(std::span<const ScanElement> elements,
                                       ScanSchedule schedule = ScanSchedule::tree);

// Scan elements of an S5 recurrence on the given tokens.
std::vector<ScanElement> s5_scan_elements(const S5Params& p, const Matrix& x);

struct Gates {
  Path omega;
  Path xi;
  Vector x0;  // first token
};

struct GateOptions {
  double step = 0.0;  // time per token; 0 means 1/L
  Vector alpha;       // per-channel gate slope (default 1)
  Vector beta;        // per-channel gate shift (default 0)
};

// kind: "s4", "mamba-softplus", "mamba-relu" (L tokens -> L steps, tokens held
// constant on each step) or "linear-ncde" (tokens interpolated linearly, L-1 steps).
Gates make_gates(const std::string& kind, const Matrix& x, const GateOptions& opts = {});

// Pointwise [ReLU(W x_t + b); ReLU(-W x_t - b)] at the grid points, (L+1) x 2m.
Matrix relu_split_values(const Path& x, const Matrix& W, const Vector& b);

// Time integral of the split gate, segment-exact (kinks inside segments included).
Path relu_split(const Path& x, const Matrix& W, const Vector& b);

nlohmann::json to_json(const S4Params& p);
nlohmann::json to_json(const S6Params& p);
S4Params s4_params_from_json(const nlohmann::json& j);
S6Params s6_params_from_json(const nlohmann::json& j);

}  // namespace ssmcde
