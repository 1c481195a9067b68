#include "ssmcde/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ssmcde/errors.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/random.hpp"
#include "ssmcde/rff_kernel.hpp"
#include "ssmcde/ssm_layers.hpp"

namespace ssmcde {

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "s5") return ModelKind::s5;
  if (name == "mamba") return ModelKind::mamba;
  if (name == "s5-stacked") return ModelKind::s5_stacked;
  if (name == "mamba-stacked") return ModelKind::mamba_stacked;
  if (name == "linear-ncde") return ModelKind::linear_ncde;
  throw DomainError("unknown model kind: " + name);
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::s5: return "s5";
    case ModelKind::mamba: return "mamba";
    case ModelKind::s5_stacked: return "s5-stacked";
    case ModelKind::mamba_stacked: return "mamba-stacked";
    case ModelKind::linear_ncde: return "linear-ncde";
  }
  return "?";
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"model", to_string(c.model)}, {"hidden", c.hidden},       {"state", c.state},
          {"batch", c.batch},            {"lr", c.lr},               {"steps", c.steps},
          {"seed", c.seed},              {"log_every", c.log_every}, {"eval_subset", c.eval_subset},
          {"divergence", c.divergence}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  if (!j.is_object()) throw DomainError("train config must be a JSON object");
  if (j.contains("model")) c.model = model_kind_from_string(j.at("model").get<std::string>());
  auto size_field = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto v = j.at(key).get<long long>();
    if (v <= 0) throw DomainError(std::string("config field must be positive: ") + key);
    out = static_cast<std::size_t>(v);
  };
  size_field("hidden", c.hidden);
  size_field("state", c.state);
  size_field("batch", c.batch);
  size_field("log_every", c.log_every);
  size_field("eval_subset", c.eval_subset);
  if (j.contains("steps")) {
    const auto v = j.at("steps").get<long long>();
    if (v < 0) throw DomainError("steps must be non-negative");
    c.steps = static_cast<std::size_t>(v);
  }
  if (j.contains("lr")) c.lr = j.at("lr").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("divergence")) c.divergence = j.at("divergence").get<double>();
  if (!(c.lr > 0.0)) throw DomainError("lr must be positive");
  return c;
}

std::string config_hash(const TrainConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(tag_of(to_json(c).dump().c_str())));
  return buf;
}

void adam_step(Vector& params, const Vector& grads, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
  if (grads.size() != params.size()) throw DomainError("adam: gradient shape mismatch");
  if (state.m.size() == 0) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  if (state.m.size() != params.size()) throw DomainError("adam: state shape mismatch");
  if (!grads.allFinite())
    throw OverflowError("adam: non-finite gradient at step " + std::to_string(state.t + 1));
  ++state.t;
  state.m = beta1 * state.m + (1.0 - beta1) * grads;
  state.v = beta2 * state.v + (1.0 - beta2) * grads.cwiseAbs2();
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  params.array() -= lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json log = nlohmann::json::array();
  for (const auto& row : r.log)
    log.push_back({{"step", row.step}, {"train_mse", row.train_mse}, {"test_mse", row.test_mse}});
  nlohmann::json j = {{"hash", r.hash},
                      {"config", to_json(r.config)},
                      {"log", log},
                      {"final_train_mse", r.final_train_mse},
                      {"final_test_mse", r.final_test_mse},
                      {"target_variance", r.target_variance},
                      {"relative_test_mse", r.relative_test_mse()},
                      {"diverged", r.diverged}};
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

namespace {

double mse(const Vector& pred, const std::vector<double>& targets, std::size_t begin) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < pred.size(); ++i) {
    const double r = pred[i] - targets[begin + static_cast<std::size_t>(i)];
    s += r * r;
  }
  return pred.size() ? s / static_cast<double>(pred.size()) : 0.0;
}

RunRecord train_linear_ncde(RunRecord rec, const Dataset& data) {
  const auto& cfg = rec.config;
  const std::size_t d = static_cast<std::size_t>(data.spec.dim);
  const DenseCdeParams p = sample_lecun({cfg.seed, cfg.state, 1, d + 1, d + 1});
  const std::size_t total = data.size();
  Matrix features(static_cast<Eigen::Index>(total), static_cast<Eigen::Index>(cfg.state) + 1);
  const std::size_t chunk = 256;
  for (std::size_t begin = 0; begin < total; begin += chunk) {
    const std::size_t end = std::min(total, begin + chunk);
    std::vector<Path> drivers;
    for (std::size_t i = begin; i < end; ++i) drivers.push_back(make_gates("linear-ncde", data.samples[i]).omega);
    features.block(static_cast<Eigen::Index>(begin), 0, static_cast<Eigen::Index>(end - begin),
                   static_cast<Eigen::Index>(cfg.state)) =
        solve_dense_final(p, drivers, drivers, Matrix::Ones(1, static_cast<Eigen::Index>(end - begin)));
  }
  features.col(static_cast<Eigen::Index>(cfg.state)).setOnes();
  const Eigen::Index ntr = static_cast<Eigen::Index>(data.num_train);
  Vector ytr(ntr);
  for (Eigen::Index i = 0; i < ntr; ++i) ytr[i] = data.targets[static_cast<std::size_t>(i)];
  const ReadoutFit fit = fit_readout(features.topRows(ntr), ytr, 0.0);
  const Vector pred_tr = features.topRows(ntr) * fit.v;
  const Vector pred_te = features.bottomRows(static_cast<Eigen::Index>(total) - ntr) * fit.v;
  rec.final_train_mse = mse(pred_tr, data.targets, 0);
  rec.final_test_mse = mse(pred_te, data.targets, data.num_train);
  rec.log.push_back({0, rec.final_train_mse, rec.final_test_mse});
  return rec;
}

Vector predict_range(const RecurrentModel& model, const Dataset& data, std::size_t begin, std::size_t end) {
  Vector out(static_cast<Eigen::Index>(end - begin));
  const std::size_t chunk = 128;
  for (std::size_t s = begin; s < end; s += chunk) {
    const std::size_t e = std::min(end, s + chunk);
    std::vector<const Matrix*> batch;
    for (std::size_t i = s; i < e; ++i) batch.push_back(&data.samples[i]);
    out.segment(static_cast<Eigen::Index>(s - begin), static_cast<Eigen::Index>(e - s)) = model.predict(batch);
  }
  return out;
}

}  // namespace

RunRecord train_model(const TrainConfig& config, const Dataset& data) {
  if (config.hidden == 0 || config.state == 0 || config.batch == 0 || config.log_every == 0)
    throw DomainError("train config sizes must be positive");
  if (data.num_train == 0 || data.num_train >= data.size())
    throw DomainError("dataset needs non-empty train and test splits");
  const auto start = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.config = config;
  rec.hash = config_hash(config);
  rec.target_variance = data.target_variance(true);
  auto finish = [&](RunRecord r) {
    r.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  };
  if (config.model == ModelKind::linear_ncde) return finish(train_linear_ncde(std::move(rec), data));

  // Targets are scaled to unit train variance for optimization; losses are reported unscaled.
  const double var_tr = data.target_variance(false);
  const double sigma = var_tr > 0.0 ? std::sqrt(var_tr) : 1.0;
  RecurrentModel model(config.model, static_cast<std::size_t>(data.spec.dim), config.state, config.hidden,
                       config.seed);
  AdamState adam;
  Vector grad;
  const std::uint64_t batch_tag = tag_of("batch");
  const std::size_t test_n = data.size() - data.num_train;
  const std::size_t eval_end = data.num_train + std::min(config.eval_subset, test_n);
  std::vector<double> scaled_eval;
  double window = 0.0;
  std::size_t window_n = 0;
  std::vector<const Matrix*> batch(config.batch);
  Vector targets(static_cast<Eigen::Index>(config.batch));
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t b = 0; b < config.batch; ++b) {
      const auto idx = static_cast<std::size_t>(
          uniform01(config.seed, batch_tag, (step - 1) * config.batch + b) * static_cast<double>(data.num_train));
      const std::size_t i = std::min(idx, data.num_train - 1);
      batch[b] = &data.samples[i];
      targets[static_cast<Eigen::Index>(b)] = data.targets[i] / sigma;
    }
    const double loss = model.loss(batch, targets, &grad);
    if (!std::isfinite(loss) || loss > config.divergence) {
      rec.diverged = true;
      rec.error = "loss diverged at step " + std::to_string(step);
      break;
    }
    try {
      adam_step(model.params(), grad, adam, config.lr);
    } catch (const OverflowError& e) {
      rec.diverged = true;
      rec.error = e.what();
      break;
    }
    window += loss;
    ++window_n;
    if (step % config.log_every == 0 || step == config.steps) {
      const Vector pred = predict_range(model, data, data.num_train, eval_end) * sigma;
      rec.log.push_back({step, window / static_cast<double>(window_n) * var_tr, mse(pred, data.targets, data.num_train)});
      window = 0.0;
      window_n = 0;
    }
  }
  rec.final_train_mse = mse(predict_range(model, data, 0, data.num_train) * sigma, data.targets, 0);
  rec.final_test_mse = mse(predict_range(model, data, data.num_train, data.size()) * sigma, data.targets,
                           data.num_train);
  if (!std::isfinite(rec.final_test_mse) || !std::isfinite(rec.final_train_mse)) rec.diverged = true;
  return finish(std::move(rec));
}

SuiteReport run_suite(const nlohmann::json& manifest, const std::string& base_dir) {
  SuiteReport report;
  if (!manifest.is_object()) throw DomainError("manifest must be a JSON object");
  const auto runs = manifest.value("runs", nlohmann::json::array());
  namespace fs = std::filesystem;
  auto resolve = [&](const std::string& f) {
    const fs::path p(f);
    return p.is_absolute() || base_dir.empty() ? p : fs::path(base_dir) / p;
  };
  std::vector<std::string> names;
  if (!runs.empty()) {
    if (!manifest.contains("dataset")) throw DomainError("manifest lists runs but no dataset");
    const Dataset data = load_dataset(resolve(manifest.at("dataset").get<std::string>()).string());
    for (const auto& run : runs) {
      const TrainConfig cfg = train_config_from_json(run.value("config", nlohmann::json::object()));
      const std::string name = run.value("name", to_string(cfg.model));
      RunRecord rec = train_model(cfg, data);
      if (rec.diverged) report.failures.push_back(name + ": " + (rec.error.empty() ? "diverged" : rec.error));
      const double rel = rec.relative_test_mse();
      if (run.contains("rel_mse_max") && !(rel <= run.at("rel_mse_max").get<double>()))
        report.failures.push_back(name + ": relative test MSE " + std::to_string(rel) + " above " +
                                  std::to_string(run.at("rel_mse_max").get<double>()));
      if (run.contains("rel_mse_min") && !(rel >= run.at("rel_mse_min").get<double>()))
        report.failures.push_back(name + ": relative test MSE " + std::to_string(rel) + " below " +
                                  std::to_string(run.at("rel_mse_min").get<double>()));
      names.push_back(name);
      report.runs.push_back(std::move(rec));
    }
  }
  if (manifest.contains("order")) {
    const auto order = manifest.at("order").get<std::vector<std::string>>();
    double prev = -1.0;
    std::string prev_name;
    for (const auto& name : order) {
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) {
        report.failures.push_back("order names unknown run " + name);
        continue;
      }
      const double m = report.runs[static_cast<std::size_t>(it - names.begin())].final_test_mse;
      if (!prev_name.empty() && !(m > prev))
        report.failures.push_back("order violated: " + prev_name + " (" + std::to_string(prev) + ") < " + name +
                                  " (" + std::to_string(m) + ") does not hold");
      prev = m;
      prev_name = name;
    }
  }
  if (manifest.contains("jsonl")) {
    std::ofstream out(resolve(manifest.at("jsonl").get<std::string>()));
    if (!out) throw ResourceError("cannot write " + manifest.at("jsonl").get<std::string>());
    for (std::size_t i = 0; i < report.runs.size(); ++i) {
      nlohmann::json j = to_json(report.runs[i]);
      j["name"] = names[i];
      out << j.dump() << '\n';
    }
  }
  if (manifest.contains("csv")) {
    std::ofstream out(resolve(manifest.at("csv").get<std::string>()));
    if (!out) throw ResourceError("cannot write " + manifest.at("csv").get<std::string>());
    out << "model,step,train_mse,test_mse\n";
    out.precision(17);
    for (std::size_t i = 0; i < report.runs.size(); ++i)
      for (const auto& row : report.runs[i].log)
        out << names[i] << ',' << row.step << ',' << row.train_mse << ',' << row.test_mse << '\n';
  }
  return report;
}

SuiteReport run_suite(const std::string& manifest_file) {
  std::ifstream in(manifest_file);
  if (!in) throw ResourceError("cannot open manifest " + manifest_file);
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw DomainError(std::string("malformed manifest: ") + e.what());
  }
  return run_suite(manifest, std::filesystem::path(manifest_file).parent_path().string());
}

}  // namespace ssmcde
