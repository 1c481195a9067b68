// ssmcde: command line front end. JSON in, JSON (or JSON lines) out.
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssmcde/dataset.hpp"
#include "ssmcde/errors.hpp"
#include "ssmcde/experiments.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/rff_kernel.hpp"
#include "ssmcde/signature.hpp"
#include "ssmcde/ssm_layers.hpp"

using nlohmann::json;
using namespace ssmcde;

namespace {

json read_json(const std::string& file) {
  json j;
  if (file.empty() || file == "-") {
    std::cin >> j;
    return j;
  }
  std::ifstream in(file);
  if (!in) throw ResourceError("cannot open " + file);
  in >> j;
  return j;
}

// A path is given either as {"values": ...} samples or as a bare array of rows.
Path path_arg(const json& j) {
  if (j.is_array()) {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    if (rows.empty()) throw DomainError("empty path");
    Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != rows.front().size()) throw DomainError("ragged path rows");
      for (std::size_t c = 0; c < rows[r].size(); ++c)
        m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    }
    return Path::from_samples(m);
  }
  return Path::from_samples(samples_from_json(j));
}

Vector vector_arg(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective state-space models as linear CDEs: signatures, solvers, kernels, experiments"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen-data", "Generate a random-walk dataset with signature targets");
  DatasetSpec spec;
  std::string out_file;
  gen->add_option("--dim", spec.dim, "Channels (2 or 3)")->check(CLI::IsMember({2, 3}));
  gen->add_option("--samples", spec.num_samples, "Number of paths")->check(CLI::PositiveNumber);
  gen->add_option("--steps", spec.num_steps, "Steps per path")->check(CLI::PositiveNumber);
  gen->add_option("--seed", spec.seed, "Seed");
  gen->add_option("--out", out_file, "Output file (a .json sidecar is written next to it)")->required();

  auto* sig = app.add_subcommand("sig", "Truncated signature of a path read as JSON");
  int depth = 3;
  std::vector<double> interval{0.0, 1.0};
  std::string input = "-";
  sig->add_option("--depth", depth, "Truncation depth")->check(CLI::NonNegativeNumber);
  sig->add_option("--interval", interval, "Start and end time")->expected(2);
  sig->add_option("--input", input, "Path JSON file, '-' for stdin");

  auto* solve = app.add_subcommand("solve", "Solve a linear CDE or run an SSM layer");
  std::string model = "dense", params_file;
  solve->add_option("--model", model, "dense, diagonal, s4 or s6")
      ->check(CLI::IsMember({"dense", "diagonal", "s4", "s6"}));
  solve->add_option("--params", params_file, "Parameter JSON file")->required();
  solve->add_option("--input", input,
                    "Input JSON: {omega, xi, x0} for CDEs, token rows for layers; '-' for stdin");

  auto* train = app.add_subcommand("train", "Train one model configuration");
  std::string config_file, data_file;
  train->add_option("--config", config_file, "Train config JSON")->required();
  train->add_option("--data", data_file, "Dataset file from gen-data")->required();

  auto* suite = app.add_subcommand("suite", "Run an experiment manifest");
  std::string manifest_file;
  suite->add_option("--manifest", manifest_file, "Manifest JSON")->required();

  auto* kernel = app.add_subcommand("kernel", "Goursat kernel of a pair of paths");
  std::string pair_file;
  int refinement = 1;
  kernel->add_option("--pair", pair_file, "JSON {x, y} paths; gates are omega = xi = path, x0 = 1")->required();
  kernel->add_option("--refinement", refinement, "Sub-cells per grid cell")->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      const Dataset ds = gen_dataset(spec);
      save_dataset(out_file, ds);
      std::cout << ds.metadata().dump() << '\n';
    } else if (*sig) {
      const Path p = path_arg(read_json(input));
      std::cout << to_json(signature(p, interval[0], interval[1], depth)).dump() << '\n';
    } else if (*solve) {
      const json params = read_json(params_file);
      const json in = read_json(input);
      if (model == "dense" || model == "diagonal") {
        const Path omega = path_arg(in.at("omega"));
        const Path xi = path_arg(in.at("xi"));
        const Vector x0 = vector_arg(in.at("x0"));
        const Matrix states = model == "dense" ? solve_dense(dense_params_from_json(params), omega, xi, x0)
                                               : solve_diagonal(diagonal_params_from_json(params), omega, xi, x0);
        std::cout << matrix_to_json(states).dump() << '\n';
      } else {
        const Matrix x = samples_from_json(in);
        const ChannelOutput o =
            model == "s4" ? s4_forward(s4_params_from_json(params), x) : s6_forward(s6_params_from_json(params), x);
        std::cout << matrix_to_json(o.outputs).dump() << '\n';
      }
    } else if (*train) {
      const RunRecord r = train_model(train_config_from_json(read_json(config_file)), load_dataset(data_file));
      std::cout << to_json(r).dump() << '\n';
      std::cerr << "wall time " << r.wall_time << " s\n";
      return r.diverged ? 1 : 0;
    } else if (*suite) {
      const SuiteReport rep = run_suite(manifest_file);
      for (const auto& r : rep.runs)
        std::cerr << to_string(r.config.model) << ": relative test MSE " << r.relative_test_mse() << ", "
                  << r.wall_time << " s\n";
      for (const auto& f : rep.failures) std::cerr << "FAIL " << f << '\n';
      return rep.ok() ? 0 : 1;
    } else if (*kernel) {
      const json j = read_json(pair_file);
      const Path x = path_arg(j.at("x")), y = path_arg(j.at("y"));
      const Vector one = Vector::Ones(1);
      const Matrix k = kernel_goursat(x, x, one, y, y, one, refinement);
      std::cout << json{{"value", k(k.rows() - 1, k.cols() - 1)}, {"surface", matrix_to_json(k)}}.dump() << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
