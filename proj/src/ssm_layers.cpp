#include "ssmcde/ssm_layers.hpp"

#include <cmath>

#include "ssmcde/errors.hpp"
#include "ssmcde/linalg.hpp"

namespace ssmcde {

namespace {

void check_tokens(const Matrix& x) {
  if (x.rows() < 1) throw DomainError("need at least one token");
  if (!x.allFinite()) throw DomainError("tokens must be finite");
}

Vector vec(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

// Integral over [0,h] of max(f,0) for f linear from f0 to f1.
double relu_segment_integral(double f0, double f1, double h) {
  if (f0 >= 0.0 && f1 >= 0.0) return 0.5 * h * (f0 + f1);
  if (f0 <= 0.0 && f1 <= 0.0) return 0.0;
  const double theta = f0 / (f0 - f1);  // crossing point in (0,1)
  return f0 > 0.0 ? 0.5 * h * f0 * theta : 0.5 * h * f1 * (1.0 - theta);
}

}  // namespace

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double apply_gate(DeltaGate g, double x) { return g == DeltaGate::softplus ? softplus(x) : std::max(x, 0.0); }

ChannelOutput s4_forward(const S4Params& p, const Matrix& x) {
  check_tokens(x);
  const Eigen::Index L = x.rows(), d = x.cols(), N = p.b.size();
  if (p.a.rows() != N || p.a.cols() != d || p.step.size() != d || p.readout.rows() != N ||
      p.readout.cols() != d)
    throw DomainError("S4 parameter shapes do not match the tokens");
  for (Eigen::Index i = 0; i < d; ++i)
    if (!(p.step(i) > 0.0)) throw DomainError("S4 step sizes must be positive");
  ChannelOutput out;
  out.outputs = Matrix::Zero(L + 1, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Vector abar(N), bbar(N);
    for (Eigen::Index n = 0; n < N; ++n) {
      const double m = p.step(i) * p.a(n, i);
      abar(n) = std::exp(m);
      bbar(n) = phi1(m) * p.step(i) * p.b(n);
    }
    Matrix z = Matrix::Zero(L + 1, N);
    for (Eigen::Index l = 0; l < L; ++l) {
      z.row(l + 1) = (abar.cwiseProduct(z.row(l).transpose()) + bbar * x(l, i)).transpose();
      out.outputs(l + 1, i) = z.row(l + 1).dot(p.readout.col(i));
    }
    out.states.push_back(std::move(z));
  }
  return out;
}

ChannelOutput s6_forward(const S6Params& p, const Matrix& x) {
  check_tokens(x);
  const Eigen::Index L = x.rows(), d = x.cols(), N = p.b.size();
  if (p.a.rows() != N || p.a.cols() != d || p.alpha.size() != d || p.beta.size() != d ||
      p.readout.rows() != N || p.readout.cols() != d)
    throw DomainError("S6 parameter shapes do not match the tokens");
  if (!(p.delta > 0.0)) throw DomainError("S6 base step must be positive");
  ChannelOutput out;
  out.outputs = Matrix::Zero(L + 1, d);
  for (Eigen::Index i = 0; i < d; ++i) {
    Matrix z = Matrix::Zero(L + 1, N);
    for (Eigen::Index l = 0; l < L; ++l) {
      const double step = apply_gate(p.gate, p.alpha(i) * x(l, i) + p.beta(i)) * p.delta;
      for (Eigen::Index n = 0; n < N; ++n) {
        const double m = step * p.a(n, i);
        z(l + 1, n) = std::exp(m) * z(l, n) + phi1(m) * step * p.b(n) * x(l, i);
      }
      out.outputs(l + 1, i) = z.row(l + 1).dot(p.readout.col(i));
    }
    out.states.push_back(std::move(z));
  }
  return out;
}

std::vector<ScanElement> s5_scan_elements(const S5Params& p, const Matrix& x) {
  check_tokens(x);
  const Eigen::Index N = p.a.size();
  if (p.B.rows() != N || p.B.cols() != x.cols() || p.step.size() != N)
    throw DomainError("S5 parameter shapes do not match the tokens");
  Vector abar(N), gain(N);
  for (Eigen::Index n = 0; n < N; ++n) {
    if (!(p.step(n) > 0.0)) throw DomainError("S5 step sizes must be positive");
    const double m = p.step(n) * p.a(n);
    abar(n) = std::exp(m);
    gain(n) = phi1(m) * p.step(n);
  }
  std::vector<ScanElement> el;
  el.reserve(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index l = 0; l < x.rows(); ++l)
    el.push_back({abar, gain.cwiseProduct(p.B * x.row(l).transpose())});
  return el;
}

JointOutput s5_forward(const S5Params& p, const Matrix& x) {
  const auto el = s5_scan_elements(p, x);
  const Eigen::Index L = x.rows(), N = p.a.size();
  if (p.readout.cols() != N) throw DomainError("S5 readout must have N columns");
  JointOutput out;
  out.states = Matrix::Zero(L + 1, N);
  Vector z = Vector::Zero(N);
  for (Eigen::Index l = 0; l < L; ++l) {
    const auto& e = el[static_cast<std::size_t>(l)];
    z = e.multiplier.cwiseProduct(z) + e.offset;
    out.states.row(l + 1) = z.transpose();
  }
  out.outputs = out.states * p.readout.transpose();
  return out;
}

Matrix gla_transition(const GlaParams& p, const Vector& x) {
  if (!(p.tau > 0.0)) throw DomainError("GLA temperature tau must be positive");
  Vector ga = p.W_alpha.transpose() * x + p.b_alpha;
  Vector gb = p.W_beta.transpose() * x + p.b_beta;
  for (Eigen::Index i = 0; i < ga.size(); ++i) ga(i) = sigmoid(ga(i));
  for (Eigen::Index i = 0; i < gb.size(); ++i) gb(i) = sigmoid(gb(i));
  return (ga * gb.transpose()) / (p.tau * p.tau);
}

std::vector<Matrix> gla_forward(const GlaParams& p, const Matrix& x) {
  check_tokens(x);
  if (!(p.tau > 0.0)) throw DomainError("GLA temperature tau must be positive");
  const Eigen::Index d = x.cols();
  for (const Matrix* m : {&p.W_key, &p.W_val, &p.W_alpha, &p.W_beta})
    if (m->rows() != d || m->cols() != d) throw DomainError("GLA weights must be d x d");
  if (p.b_alpha.size() != d || p.b_beta.size() != d) throw DomainError("GLA biases must have d entries");
  std::vector<Matrix> states{Matrix::Zero(d, d)};
  for (Eigen::Index l = 0; l < x.rows(); ++l) {
    const Vector xl = x.row(l).transpose();
    const Vector k = p.W_key.transpose() * xl;
    const Vector v = p.W_val.transpose() * xl;
    states.push_back(gla_transition(p, xl).cwiseProduct(states.back()) + k * v.transpose());
  }
  return states;
}

ScanElement compose(const ScanElement& first, const ScanElement& second) {
  if (first.multiplier.size() != second.multiplier.size())
    throw DomainError("scan elements of different widths");
  return {second.multiplier.cwiseProduct(first.multiplier),
          second.multiplier.cwiseProduct(first.offset) + second.offset};
}

namespace {

std::vector<ScanElement> tree_scan(std::vector<ScanElement> x) {
  const std::size_t n = x.size();
  if (n <= 1) return x;
  std::vector<ScanElement> pairs;
  pairs.reserve(n / 2);
  for (std::size_t i = 0; i + 1 < n; i += 2) pairs.push_back(compose(x[i], x[i + 1]));
  const std::vector<ScanElement> inner = tree_scan(std::move(pairs));
  std::vector<ScanElement> out(n);
  out[0] = x[0];
  for (std::size_t i = 1; i < n; ++i) {
    if (i % 2 == 1)
      out[i] = inner[i / 2];
    else
      out[i] = compose(inner[i / 2 - 1], x[i]);
  }
  return out;
}

}  // namespace

std::vector<ScanElement> parallel_scan(std::span<const ScanElement> elements,
                                       ScanSchedule schedule) {
  if (schedule == ScanSchedule::tree)
    return tree_scan(std::vector<ScanElement>(elements.begin(), elements.end()));
  std::vector<ScanElement> out;
  out.reserve(elements.size());
  for (const auto& e : elements) out.push_back(out.empty() ? e : compose(out.back(), e));
  return out;
}

Gates make_gates(const std::string& kind, const Matrix& x, const GateOptions& opts) {
  check_tokens(x);
  const Eigen::Index L = x.rows(), d = x.cols();
  const Vector x0 = x.row(0).transpose();
  if (kind == "linear-ncde") {
    if (L < 2) throw DomainError("linear-ncde gates need at least two tokens");
    Matrix v(L, d + 1);
    for (Eigen::Index l = 0; l < L; ++l) v(l, 0) = static_cast<double>(l) / static_cast<double>(L - 1);
    v(L - 1, 0) = 1.0;
    v.rightCols(d) = x.rowwise() - x.row(0);
    Path p(Grid(static_cast<std::size_t>(L - 1)), v);
    return {p, p, x0};
  }
  const double step = opts.step > 0.0 ? opts.step : 1.0 / static_cast<double>(L);
  if (kind == "s4") {
    Matrix w(L + 1, 1), s = Matrix::Zero(L + 1, d);
    w(0, 0) = 0.0;
    for (Eigen::Index l = 0; l < L; ++l) {
      w(l + 1, 0) = step * static_cast<double>(l + 1);
      s.row(l + 1) = s.row(l) + step * x.row(l);
    }
    const Grid g(static_cast<std::size_t>(L));
    return {Path(g, w), Path(g, s), x0};
  }
  DeltaGate gate;
  if (kind == "mamba-softplus")
    gate = DeltaGate::softplus;
  else if (kind == "mamba-relu")
    gate = DeltaGate::relu;
  else
    throw DomainError("unknown gate kind '" + kind + "'");
  const Vector alpha = opts.alpha.size() ? opts.alpha : Vector::Ones(d);
  const Vector beta = opts.beta.size() ? opts.beta : Vector::Zero(d);
  if (alpha.size() != d || beta.size() != d) throw DomainError("gate alpha/beta must have d entries");
  Matrix w = Matrix::Zero(L + 1, d), s = Matrix::Zero(L + 1, d);
  for (Eigen::Index l = 0; l < L; ++l)
    for (Eigen::Index i = 0; i < d; ++i) {
      const double dt = apply_gate(gate, alpha(i) * x(l, i) + beta(i)) * step;
      w(l + 1, i) = w(l, i) + dt;
      s(l + 1, i) = s(l, i) + dt * x(l, i);
    }
  const Grid g(static_cast<std::size_t>(L));
  return {Path(g, w), Path(g, s), x0};
}

Matrix relu_split_values(const Path& x, const Matrix& W, const Vector& b) {
  if (W.cols() != static_cast<Eigen::Index>(x.channels()) || b.size() != W.rows())
    throw DomainError("relu_split: W must be m x d and b must have m entries");
  const Matrix pre = (x.values() * W.transpose()).rowwise() + b.transpose();
  Matrix out(pre.rows(), 2 * pre.cols());
  out.leftCols(pre.cols()) = pre.cwiseMax(0.0);
  out.rightCols(pre.cols()) = (-pre).cwiseMax(0.0);
  return out;
}

Path relu_split(const Path& x, const Matrix& W, const Vector& b) {
  if (W.cols() != static_cast<Eigen::Index>(x.channels()) || b.size() != W.rows())
    throw DomainError("relu_split: W must be m x d and b must have m entries");
  const Matrix pre = (x.values() * W.transpose()).rowwise() + b.transpose();
  const Eigen::Index m = pre.cols();
  const double h = x.grid().step();
  Matrix out = Matrix::Zero(pre.rows(), 2 * m);
  for (Eigen::Index k = 0; k + 1 < pre.rows(); ++k)
    for (Eigen::Index c = 0; c < m; ++c) {
      const double f0 = pre(k, c), f1 = pre(k + 1, c);
      out(k + 1, c) = out(k, c) + relu_segment_integral(f0, f1, h);
      out(k + 1, m + c) = out(k, m + c) + relu_segment_integral(-f0, -f1, h);
    }
  return Path(x.grid(), std::move(out));
}

nlohmann::json to_json(const S4Params& p) {
  return {{"kind", "s4"}, {"a", matrix_to_json(p.a)}, {"b", to_std(p.b)},
          {"step", to_std(p.step)}, {"readout", matrix_to_json(p.readout)}};
}

nlohmann::json to_json(const S6Params& p) {
  return {{"kind", "s6"},
          {"a", matrix_to_json(p.a)},
          {"b", to_std(p.b)},
          {"alpha", to_std(p.alpha)},
          {"beta", to_std(p.beta)},
          {"delta", p.delta},
          {"gate", p.gate == DeltaGate::softplus ? "softplus" : "relu"},
          {"readout", matrix_to_json(p.readout)}};
}

S4Params s4_params_from_json(const nlohmann::json& j) {
  S4Params p;
  p.a = matrix_from_json(j.at("a"));
  p.b = vec(j.at("b"));
  p.step = vec(j.at("step"));
  p.readout = matrix_from_json(j.at("readout"));
  return p;
}

S6Params s6_params_from_json(const nlohmann::json& j) {
  S6Params p;
  p.a = matrix_from_json(j.at("a"));
  p.b = vec(j.at("b"));
  p.alpha = vec(j.at("alpha"));
  p.beta = vec(j.at("beta"));
  p.delta = j.at("delta").get<double>();
  const std::string g = j.value("gate", "softplus");
  if (g == "softplus")
    p.gate = DeltaGate::softplus;
  else if (g == "relu")
    p.gate = DeltaGate::relu;
  else
    throw DomainError("unknown delta gate '" + g + "'");
  p.readout = matrix_from_json(j.at("readout"));
  return p;
}

}  // namespace ssmcde
