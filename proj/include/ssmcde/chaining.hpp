#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "json.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/signature.hpp"

namespace ssmcde {

// Layer k reads omega = [Y^{k-1}; X] (just X for the first layer), xi = X and
// x0 = 1, where Y^{k-1} = W_{k-1} (Z^{k-1}_t - Z^{k-1}_0).
struct ChainLayer {
  DiagonalCdeParams params;
  Matrix W;  // m x N map into the next layer; empty on the last layer
};

struct ChainSpec {
  std::size_t input_channels = 0;
  std::vector<ChainLayer> layers;
  Vector readout;  // applied to Z^K_t - Z^K_0 of the last layer

  // Filled in by build_signature_chain.
  Word word;
  double tolerance = 0.0;
  double train_mse = 0.0;
  double test_mse = 0.0;
  bool attained = false;
  std::vector<double> layer_train_mse;

  std::size_t depth() const { return layers.size(); }
  void validate() const;
};

struct ChainTrajectories {
  std::vector<Matrix> states;   // per layer, (L+1) x N_k
  std::vector<Matrix> drivers;  // per inter-layer map, (L+1) x m
  Vector output;                // (L+1)
};

ChainTrajectories chain_forward(const ChainSpec& spec, const Path& x);

// int_0^t int_0^s domega^i dxi^j as omega^i_t xi^j_t - int_0^t (omega^i_t - omega^i_s) dxi^j_s.
// Needs xi to be a fixed linear combination of the omega channels and x0(0) = 1.
Vector recover_level2(const Path& omega, const Path& xi, const Vector& x0, int i, int j);

struct ChainBuildOptions {
  std::vector<Path> train;  // empty: 600 normalized random-walk paths from the dataset generator
  std::vector<Path> test;   // empty: 200 more from the same generator
  std::size_t width = 256;
  std::uint64_t seed = 0;
  std::size_t time_stride = 1;  // grid times used in the least-squares fits
};

// (|word|-1) chained diagonal layers whose readout tracks Sig(X)^word_{0,t}. Each
// inter-layer map is a least-squares fit to the next prefix of the word. When the
// tolerance is missed the chain still comes back, with attained = false.
ChainSpec build_signature_chain(const Word& word, double tolerance,
                                const ChainBuildOptions& opts = {});

// Mean squared error of the chain output against Sig^word over all grid times
// (or the final time only) of the given paths.
double chain_mse(const ChainSpec& spec, const std::vector<Path>& paths, bool final_time_only = false);

// Random diagonal layers for a single-layer baseline:
//   s4         omega = t, xi = int X ds
//   omega_only omega = X, no additive driver
//   full       omega = X, xi = X
enum class SingleLayerGates { s4, omega_only, full };

struct SingleLayerReport {
  double train_mse = 0.0;
  double test_mse = 0.0;
  double test_variance = 0.0;
};

// Fits an affine readout of the final state to the targets by least squares.
SingleLayerReport single_layer_fit(const std::vector<Path>& train, const std::vector<double>& y_train,
                                   const std::vector<Path>& test, const std::vector<double>& y_test,
                                   SingleLayerGates gates, std::size_t width, std::uint64_t seed);

nlohmann::json to_json(const ChainSpec& spec);
ChainSpec chain_from_json(const nlohmann::json& j);

}  // namespace ssmcde
