#include "ssmcde/chaining.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "ssmcde/dataset.hpp"
#include "ssmcde/errors.hpp"
#include "ssmcde/linalg.hpp"
#include "ssmcde/random.hpp"

namespace ssmcde {

namespace {

const Vector kOne = Vector::Ones(1);

// Half the states start from C and take no additive input, the other half
// only integrate xi. Rates are Gaussian, divided by each driver's range and
// multiplied by a log-uniform gain.
DiagonalCdeParams random_layer(std::size_t width, const Vector& driver_range, std::size_t d_xi,
                               std::uint64_t seed, std::uint64_t layer) {
  const auto N = static_cast<Eigen::Index>(width);
  const auto c = driver_range.size();
  const std::uint64_t base = mix64(seed ^ (0x100 + layer));
  DiagonalCdeParams p;
  p.V.resize(N, c);
  p.B = Matrix::Zero(N, static_cast<Eigen::Index>(d_xi));
  p.C = Matrix::Zero(N, 1);
  p.v = Vector::Zero(N);
  const double lo = std::log(0.05), hi = std::log(1.0);
  for (Eigen::Index n = 0; n < N; ++n) {
    const auto un = static_cast<std::uint64_t>(n);
    const double gain = std::exp(lo + (hi - lo) * uniform01(base, tag_of("gain"), un));
    for (Eigen::Index k = 0; k < c; ++k)
      p.V(n, k) = gain * std_normal(base, tag_of("V"), un * 64 + static_cast<std::uint64_t>(k)) /
                  std::max(driver_range(k), 1e-12);
    if (n < N / 2) {
      p.C(n, 0) = std_normal(base, tag_of("C"), un);
    } else {
      for (Eigen::Index j = 0; j < p.B.cols(); ++j)
        p.B(n, j) = std_normal(base, tag_of("B"), un * 64 + static_cast<std::uint64_t>(j));
    }
  }
  return p;
}

Vector least_squares(const Matrix& F, const Vector& y) { return lstsq(F, y, 1e-10, true).x; }

Path layer_omega(const Path& x, const Matrix* driver) {
  if (!driver) return x;
  return hstack(Path(x.grid(), *driver), x);
}

Vector prefix_target(const Path& x, const Word& word, std::size_t len) {
  const Word prefix(word.begin(), word.begin() + static_cast<std::ptrdiff_t>(len));
  const auto stream = signature_stream(x, static_cast<int>(len));
  const std::size_t idx = word_index(prefix, x.channels(), static_cast<int>(len));
  Vector out(static_cast<Eigen::Index>(stream.size()));
  for (std::size_t k = 0; k < stream.size(); ++k) out(static_cast<Eigen::Index>(k)) = stream[k].coeffs()[idx];
  return out;
}

Path time_integral(const Path& x) {
  const double h = x.grid().step();
  Matrix v = Matrix::Zero(x.values().rows(), x.values().cols());
  for (Eigen::Index k = 1; k < v.rows(); ++k)
    v.row(k) = v.row(k - 1) + 0.5 * h * (x.values().row(k - 1) + x.values().row(k));
  return Path(x.grid(), std::move(v));
}

}  // namespace

void ChainSpec::validate() const {
  if (layers.empty()) throw DomainError("chain needs at least one layer");
  std::size_t extra = 0;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const auto& p = layers[k].params;
    p.validate();
    if (p.d_omega() != extra + input_channels || p.d_xi() != input_channels || p.d0() != 1)
      throw DomainError("chain layer " + std::to_string(k) + " has inconsistent driver shapes");
    if (k + 1 < layers.size()) {
      if (layers[k].W.cols() != static_cast<Eigen::Index>(p.N()) || layers[k].W.rows() < 1)
        throw DomainError("inter-layer map " + std::to_string(k) + " must be m x N");
      extra = static_cast<std::size_t>(layers[k].W.rows());
    }
  }
  if (readout.size() != static_cast<Eigen::Index>(layers.back().params.N()))
    throw DomainError("chain readout must match the last layer width");
}

ChainTrajectories chain_forward(const ChainSpec& spec, const Path& x) {
  spec.validate();
  if (x.channels() != spec.input_channels) throw DomainError("input path has the wrong channel count");
  ChainTrajectories out;
  for (std::size_t k = 0; k < spec.layers.size(); ++k) {
    const Path omega = layer_omega(x, out.drivers.empty() ? nullptr : &out.drivers.back());
    Matrix z = solve_diagonal(spec.layers[k].params, omega, x, kOne);
    const Matrix dz = z.rowwise() - z.row(0);
    if (k + 1 < spec.layers.size()) out.drivers.push_back(dz * spec.layers[k].W.transpose());
    else out.output = dz * spec.readout;
    out.states.push_back(std::move(z));
  }
  return out;
}

Vector recover_level2(const Path& omega, const Path& xi, const Vector& x0, int i, int j) {
  if (!(omega.grid() == xi.grid())) throw DomainError("omega and xi must share a grid");
  if (x0.size() < 1 || x0(0) != 1.0) throw DomainError("level-2 recovery needs x0 with first entry 1");
  if (i < 0 || static_cast<std::size_t>(i) >= omega.channels() || j < 0 ||
      static_cast<std::size_t>(j) >= xi.channels())
    throw DomainError("channel index out of range");
  // xi must lie in the column span of omega.
  const Matrix& W = omega.values();
  const Matrix& X = xi.values();
  const Matrix coef = W.completeOrthogonalDecomposition().solve(X);
  const double resid = (W * coef - X).cwiseAbs().maxCoeff();
  if (resid > 1e-9 * std::max(1.0, X.cwiseAbs().maxCoeff()))
    throw DomainError("xi is not a fixed linear combination of omega");

  const std::size_t L = omega.num_steps();
  Vector out(static_cast<Eigen::Index>(L + 1));
  out(0) = 0.0;
  double running = 0.0;  // int_0^t omega^i_s dxi^j_s, exact per linear segment
  for (std::size_t k = 0; k < L; ++k) {
    const auto a = static_cast<Eigen::Index>(k);
    running += 0.5 * (W(a, i) + W(a + 1, i)) * (X(a + 1, j) - X(a, j));
    const double product = W(a + 1, i) * X(a + 1, j);
    const double backward = product - running;  // int_0^t (omega^i_t - omega^i_s) dxi^j_s
    out(a + 1) = product - backward;
  }
  return out;
}

ChainSpec build_signature_chain(const Word& word, double tolerance, const ChainBuildOptions& opts) {
  if (word.size() < 2) throw DomainError("chained recovery needs a word of length >= 2");
  if (opts.width < 2) throw DomainError("chain width must be at least 2");
  const int max_letter = *std::max_element(word.begin(), word.end());
  if (*std::min_element(word.begin(), word.end()) < 0) throw DomainError("negative letter in word");
  std::vector<Path> train = opts.train, test = opts.test;
  const int dim = std::max(2, max_letter + 1);
  if (train.empty()) train = gen_normalized_paths(600, dim, 100, opts.seed);
  if (test.empty()) test = gen_normalized_paths(200, dim, 100, opts.seed + 1);
  const std::size_t d = train.front().channels();
  if (static_cast<std::size_t>(max_letter) >= d) throw DomainError("word letter exceeds input channels");
  const std::size_t stride = std::max<std::size_t>(1, opts.time_stride);

  ChainSpec spec;
  spec.input_channels = d;
  spec.word = word;
  spec.tolerance = tolerance;
  const std::size_t K = word.size() - 1;

  std::vector<Matrix> drivers(train.size());  // previous layer's Y per training path
  for (std::size_t k = 0; k < K; ++k) {
    // Scale each driver channel by its largest magnitude over the training set.
    Vector range = Vector::Zero(static_cast<Eigen::Index>((k ? 1 : 0) + d));
    for (std::size_t p = 0; p < train.size(); ++p) {
      const Path omega = layer_omega(train[p], k ? &drivers[p] : nullptr);
      range = range.cwiseMax(omega.values().cwiseAbs().colwise().maxCoeff().transpose());
    }
    ChainLayer layer;
    layer.params = random_layer(opts.width, range, d, opts.seed, k);

    const std::size_t L = train.front().num_steps();
    const std::size_t rows_per_path = L / stride + 1;
    Matrix F(static_cast<Eigen::Index>(train.size() * rows_per_path), static_cast<Eigen::Index>(opts.width));
    Vector y(F.rows());
    std::vector<Matrix> dz(train.size());
    Eigen::Index row = 0;
    for (std::size_t p = 0; p < train.size(); ++p) {
      const Path omega = layer_omega(train[p], k ? &drivers[p] : nullptr);
      const Matrix z = solve_diagonal(layer.params, omega, train[p], kOne);
      dz[p] = z.rowwise() - z.row(0);
      const Vector target = prefix_target(train[p], word, k + 2);
      for (std::size_t t = 0; t <= L; t += stride) {
        F.row(row) = dz[p].row(static_cast<Eigen::Index>(t));
        y(row) = target(static_cast<Eigen::Index>(t));
        ++row;
      }
    }
    F.conservativeResize(row, Eigen::NoChange);
    y.conservativeResize(row);
    const Vector w = least_squares(F, y);
    spec.layer_train_mse.push_back((F * w - y).squaredNorm() / static_cast<double>(row));
    if (k + 1 < K) {
      layer.W = w.transpose();
      for (std::size_t p = 0; p < train.size(); ++p) drivers[p] = dz[p] * w;
    } else {
      spec.readout = w;
    }
    spec.layers.push_back(std::move(layer));
  }
  spec.train_mse = spec.layer_train_mse.back();
  spec.test_mse = chain_mse(spec, test);
  spec.attained = spec.test_mse <= tolerance;
  return spec;
}

double chain_mse(const ChainSpec& spec, const std::vector<Path>& paths, bool final_time_only) {
  if (spec.word.empty()) throw DomainError("chain has no target word");
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& x : paths) {
    const Vector out = chain_forward(spec, x).output;
    const Vector target = prefix_target(x, spec.word, spec.word.size());
    if (final_time_only) {
      const double e = out(out.size() - 1) - target(target.size() - 1);
      sum += e * e;
      ++count;
    } else {
      sum += (out - target).squaredNorm();
      count += static_cast<std::size_t>(out.size());
    }
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

SingleLayerReport single_layer_fit(const std::vector<Path>& train, const std::vector<double>& y_train,
                                   const std::vector<Path>& test, const std::vector<double>& y_test,
                                   SingleLayerGates gates, std::size_t width, std::uint64_t seed) {
  if (train.empty() || train.size() != y_train.size() || test.size() != y_test.size())
    throw DomainError("single_layer_fit: paths and targets must pair up");
  auto drivers = [&](const Path& x) -> std::pair<Path, Path> {
    switch (gates) {
      case SingleLayerGates::s4: {
        Matrix t(x.values().rows(), 1);
        for (Eigen::Index k = 0; k < t.rows(); ++k) t(k, 0) = x.grid().time(static_cast<std::size_t>(k));
        return {Path(x.grid(), t), time_integral(x)};
      }
      case SingleLayerGates::omega_only:
        return {x, Path::zero(x.grid(), 1)};
      case SingleLayerGates::full:
        return {x, x};
    }
    throw DomainError("unknown gate choice");
  };
  auto [w0, s0] = drivers(train.front());
  Vector range = Vector::Zero(static_cast<Eigen::Index>(w0.channels()));
  for (const auto& x : train)
    range = range.cwiseMax(drivers(x).first.values().cwiseAbs().colwise().maxCoeff().transpose());
  DiagonalCdeParams p = random_layer(width, range, s0.channels(), seed, 0);
  if (gates == SingleLayerGates::omega_only)
    for (Eigen::Index n = 0; n < p.C.rows(); ++n)
      p.C(n, 0) = std_normal(seed, tag_of("C-only"), static_cast<std::uint64_t>(n));

  auto features = [&](const std::vector<Path>& paths) {
    Matrix F(static_cast<Eigen::Index>(paths.size()), static_cast<Eigen::Index>(width) + 1);
    for (std::size_t i = 0; i < paths.size(); ++i) {
      auto [w, s] = drivers(paths[i]);
      const Matrix z = solve_diagonal(p, w, s, kOne);
      F.row(static_cast<Eigen::Index>(i)) << 1.0, z.row(z.rows() - 1) - z.row(0);
    }
    return F;
  };
  const Matrix Ftr = features(train), Fte = features(test);
  const Vector ytr = Eigen::Map<const Vector>(y_train.data(), static_cast<Eigen::Index>(y_train.size()));
  const Vector yte = Eigen::Map<const Vector>(y_test.data(), static_cast<Eigen::Index>(y_test.size()));
  const Vector v = least_squares(Ftr, ytr);
  SingleLayerReport rep;
  rep.train_mse = (Ftr * v - ytr).squaredNorm() / static_cast<double>(ytr.size());
  rep.test_mse = yte.size() ? (Fte * v - yte).squaredNorm() / static_cast<double>(yte.size()) : 0.0;
  const double mean = yte.size() ? yte.mean() : 0.0;
  rep.test_variance = yte.size() ? (yte.array() - mean).square().mean() : 0.0;
  return rep;
}

nlohmann::json to_json(const ChainSpec& spec) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : spec.layers) layers.push_back({{"params", to_json(l.params)}, {"W", matrix_to_json(l.W)}});
  return {{"input_channels", spec.input_channels},
          {"layers", layers},
          {"readout", std::vector<double>(spec.readout.data(), spec.readout.data() + spec.readout.size())},
          {"word", spec.word},
          {"tolerance", spec.tolerance},
          {"train_mse", spec.train_mse},
          {"test_mse", spec.test_mse},
          {"attained", spec.attained},
          {"layer_train_mse", spec.layer_train_mse}};
}

ChainSpec chain_from_json(const nlohmann::json& j) {
  ChainSpec spec;
  spec.input_channels = j.at("input_channels").get<std::size_t>();
  for (const auto& l : j.at("layers"))
    spec.layers.push_back({diagonal_params_from_json(l.at("params")), matrix_from_json(l.at("W"))});
  const auto r = j.at("readout").get<std::vector<double>>();
  spec.readout = Eigen::Map<const Vector>(r.data(), static_cast<Eigen::Index>(r.size()));
  spec.word = j.value("word", Word{});
  spec.tolerance = j.value("tolerance", 0.0);
  spec.train_mse = j.value("train_mse", 0.0);
  spec.test_mse = j.value("test_mse", 0.0);
  spec.attained = j.value("attained", false);
  spec.layer_train_mse = j.value("layer_train_mse", std::vector<double>{});
  spec.validate();
  return spec;
}

}  // namespace ssmcde
