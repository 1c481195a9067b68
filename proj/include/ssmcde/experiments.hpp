#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmcde/dataset.hpp"
#include "ssmcde/path.hpp"

namespace ssmcde {

enum class ModelKind { s5, mamba, s5_stacked, mamba_stacked, linear_ncde };

ModelKind model_kind_from_string(const std::string& name);
std::string to_string(ModelKind kind);

struct TrainConfig {
  ModelKind model = ModelKind::mamba;
  std::size_t hidden = 64;  // width of the mixing layer between stacked recurrences
  std::size_t state = 64;   // recurrence state size (the random CDE width for linear-ncde)
  std::size_t batch = 32;
  double lr = 1e-3;
  std::size_t steps = 20000;
  std::uint64_t seed = 0;
  std::size_t log_every = 100;
  std::size_t eval_subset = 256;  // test samples scored at each log step
  double divergence = 1e6;        // abort when the standardized batch loss exceeds this
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);
// Hex FNV-1a of the canonical JSON dump.
std::string config_hash(const TrainConfig& c);

struct AdamState {
  Vector m, v;
  std::size_t t = 0;
};

// Bias-corrected Adam. Throws OverflowError naming the step on non-finite gradients.
void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

// Diagonal selective recurrences trained by backpropagation through the scan.
// One layer: z_l = lam_l * z_{l-1} + g_l * (B u_l), lam = exp(step a), g = (lam - 1)/a,
// a = -exp(theta_a). s5 uses step = exp(theta_step) per state; mamba uses
// step = softplus(W_step u_l + b_step). Stacked models mix the first layer's states
// with an affine map before the second layer. The readout is affine in the final state.
class RecurrentModel {
 public:
  RecurrentModel(ModelKind kind, std::size_t input_dim, std::size_t state, std::size_t hidden,
                 std::uint64_t seed);

  ModelKind kind() const { return kind_; }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }
  const Vector& params() const { return params_; }
  Vector& params() { return params_; }

  // Mean squared error over the batch; fills grad when given. Tokens are T x input_dim.
  double loss(const std::vector<const Matrix*>& tokens, const Vector& targets, Vector* grad) const;
  Vector predict(const std::vector<const Matrix*>& tokens) const;

 private:
  struct LayerLayout {
    std::size_t n, d;
    std::size_t theta_a, B, theta_step, W_step, b_step;
  };
  ModelKind kind_;
  bool selective_, stacked_;
  std::size_t input_dim_, state_, hidden_;
  LayerLayout l1_{}, l2_{};
  std::size_t mix_W_ = 0, mix_b_ = 0, readout_v_ = 0, readout_c_ = 0;
  Vector params_;

  double run(const std::vector<const Matrix*>& tokens, const Vector* targets, Vector* grad,
             Vector* predictions) const;
};

struct LogRow {
  std::size_t step = 0;
  double train_mse = 0.0;  // mean batch loss since the previous row
  double test_mse = 0.0;   // on the first eval_subset test samples
};

struct RunRecord {
  TrainConfig config;
  std::string hash;
  std::vector<LogRow> log;
  double final_train_mse = 0.0;
  double final_test_mse = 0.0;
  double target_variance = 0.0;  // of the test targets
  double wall_time = 0.0;        // seconds; left out of the JSON-lines output
  bool diverged = false;
  std::string error;

  double relative_test_mse() const {
    return target_variance > 0.0 ? final_test_mse / target_variance : final_test_mse;
  }
};

nlohmann::json to_json(const RunRecord& r);

RunRecord train_model(const TrainConfig& config, const Dataset& data);

struct SuiteReport {
  std::vector<RunRecord> runs;
  std::vector<std::string> failures;
  bool ok() const { return failures.empty(); }
};

// Manifest keys: "dataset" (binary file, relative to the manifest), "jsonl", "csv",
// "runs" (array of {"name", "config", "rel_mse_max", "rel_mse_min"}) and
// "order" (run names by strictly increasing final test MSE).
SuiteReport run_suite(const nlohmann::json& manifest, const std::string& base_dir);
SuiteReport run_suite(const std::string& manifest_file);

}  // namespace ssmcde
