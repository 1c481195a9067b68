// One PASS/FAIL line per acceptance criterion. Exit status is the number of failures.
// With --digest, prints a hash of seeded outputs instead (used for the cross-process check).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmcde/chaining.hpp"
#include "ssmcde/dataset.hpp"
#include "ssmcde/experiments.hpp"
#include "ssmcde/feature_tensor.hpp"
#include "ssmcde/linalg.hpp"
#include "ssmcde/linear_cde.hpp"
#include "ssmcde/random.hpp"
#include "ssmcde/rff_kernel.hpp"
#include "ssmcde/signature.hpp"
#include "ssmcde/ssm_layers.hpp"

using namespace ssmcde;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  std::ostringstream s;
  s << std::setprecision(3) << x;
  return s.str();
}

Matrix gauss(Eigen::Index r, Eigen::Index c, std::uint64_t seed, const char* tag, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = sd * std_normal(seed, tag_of(tag), static_cast<std::uint64_t>(i * c + j));
  return m;
}

// Random walk with N(0, scale^2 / L) increments.
Path walk(std::size_t d, std::size_t L, std::uint64_t seed, double scale = 1.0) {
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(L + 1), static_cast<Eigen::Index>(d));
  const double sd = scale / std::sqrt(static_cast<double>(L));
  const Matrix g = gauss(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(d), seed, "walk", sd);
  for (Eigen::Index k = 1; k <= static_cast<Eigen::Index>(L); ++k) v.row(k) = v.row(k - 1) + g.row(k - 1);
  return Path(Grid(L), v);
}

Path time_path(std::size_t L) {
  Matrix v(static_cast<Eigen::Index>(L + 1), 1);
  for (std::size_t k = 0; k <= L; ++k) v(static_cast<Eigen::Index>(k), 0) = Grid(L).time(k);
  return Path(Grid(L), v);
}

Path column(const Path& p, Eigen::Index c) { return Path(p.grid(), p.values().col(c)); }

double rel(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

DenseCdeParams random_dense(std::size_t N, std::size_t dw, std::size_t dx, std::size_t d0, std::uint64_t seed,
                            double a_sd) {
  DenseCdeParams p;
  const auto n = static_cast<Eigen::Index>(N);
  const char* tags[] = {"A0", "A1", "A2", "A3"};
  for (std::size_t i = 0; i < dw; ++i) p.A.push_back(gauss(n, n, seed, tags[i], a_sd));
  p.B = gauss(n, static_cast<Eigen::Index>(dx), seed, "B");
  p.C = gauss(n, static_cast<Eigen::Index>(d0), seed, "C");
  p.v = Vector::Zero(n);
  return p;
}

// Single-channel CDE matching one S4/S6 channel.
DenseCdeParams channel_cde(const Vector& a, const Vector& b) {
  DenseCdeParams q;
  q.A = {a.asDiagonal().toDenseMatrix()};
  q.B = b;
  q.C = Matrix::Zero(a.size(), 1);
  q.v = Vector::Zero(a.size());
  return q;
}

double fitted_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
  return sxy / sxx;
}

Outcome signature_oracle() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  int count = 0;
  for (std::size_t d = 1; d <= 3; ++d)
    for (std::size_t L : {1, 2, 5, 10})
      for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const Path p = walk(d, L, 100 * d + 10 * L + seed);
        const TruncatedTensor brute = brute_force_signature(p, 0.0, 1.0, 4, 200);
        const TruncatedTensor exact = signature(p, 4);
        for (int depth = 1; depth <= 4; ++depth) {
          const std::size_t n = tensor_size(d, depth);
          double num = 0, den = 0;
          for (std::size_t i = 0; i < n; ++i) {
            num += std::pow(brute.coeffs()[i] - exact.coeffs()[i], 2);
            den += exact.coeffs()[i] * exact.coeffs()[i];
          }
          worst = std::max(worst, std::sqrt(num / den));
          ++count;
        }
      }
  const double secs = seconds_since(t0);
  return {worst <= 1e-6 && secs < 10.0,
          std::to_string(count) + " comparisons, worst rel err " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome s4_closed_form() {
  const std::size_t L = 10;
  const Path tp = time_path(L);
  double worst_level = 0.0;
  for (std::size_t a = 0; a < L; ++a)
    for (std::size_t b = a + 1; b <= L; ++b) {
      const double s = tp.grid().time(a), t = tp.grid().time(b);
      const TruncatedTensor sig = signature(tp, s, t, 8);
      double fact = 1.0;
      for (int k = 0; k <= 8; ++k) {
        if (k > 0) fact *= k;
        const double expect = std::pow(t - s, k) / fact;
        worst_level = std::max(worst_level, std::abs(sig.level(k)[0] - expect));
      }
    }

  // General dense A, S4 gates on d tokens: omega = t, xi = int X ds.
  double worst_state = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::Index N = 5, d = 3;
    const Matrix x = gauss(static_cast<Eigen::Index>(L), d, seed, "tokens");
    DenseCdeParams p;
    p.A = {gauss(N, N, seed, "A", 0.7) - 1.5 * Matrix::Identity(N, N)};
    p.B = gauss(N, d, seed, "B");
    p.C = Matrix::Zero(N, 1);
    p.v = Vector::Zero(N);
    const Gates g = make_gates("s4", x);
    const Matrix z = solve_dense(p, g.omega, g.xi, Vector::Zero(1));
    const double h = 1.0 / static_cast<double>(L);
    const Matrix Ainv = p.A[0].inverse();
    const Matrix eh = expm(p.A[0] * h);
    for (std::size_t k = 0; k <= L; ++k) {
      const double t = static_cast<double>(k) * h;
      Vector ref = Vector::Zero(N);
      for (std::size_t l = 0; l < k; ++l) {
        const double t1 = static_cast<double>(l + 1) * h;
        // int_{t0}^{t1} e^{A(t-s)} ds = e^{A(t-t1)} A^{-1} (e^{Ah} - I)
        ref += expm(p.A[0] * (t - t1)) * Ainv * (eh - Matrix::Identity(N, N)) * p.B *
               x.row(static_cast<Eigen::Index>(l)).transpose();
      }
      const double e = (z.row(static_cast<Eigen::Index>(k)).transpose() - ref).norm() / std::max(ref.norm(), 1e-300);
      if (k > 0) worst_state = std::max(worst_state, e);
    }
    // the diagonal recurrence against the same quadrature, per channel
    S4Params s4;
    s4.a = -gauss(N, d, seed, "a").cwiseAbs();
    s4.b = gauss(N, 1, seed, "b").col(0);
    s4.step = Vector::Constant(d, h);
    s4.readout = Matrix::Ones(N, d);
    const auto out = s4_forward(s4, x);
    for (Eigen::Index c = 0; c < d; ++c) {
      Vector ref = Vector::Zero(N);
      for (std::size_t l = 0; l < L; ++l)
        for (Eigen::Index n = 0; n < N; ++n) {
          const double an = s4.a(n, c), t1 = static_cast<double>(l + 1) * h, t0 = t1 - h;
          ref[n] += s4.b[n] * x(static_cast<Eigen::Index>(l), c) * (std::exp(an * (1.0 - t1)) - std::exp(an * (1.0 - t0))) / -an;
        }
      worst_state = std::max(worst_state, (out.states[static_cast<std::size_t>(c)].row(static_cast<Eigen::Index>(L)).transpose() - ref).norm() / ref.norm());
    }
  }
  return {worst_level <= 1e-12 && worst_state <= 1e-8,
          "level err " + fmt(worst_level) + ", state rel err " + fmt(worst_state)};
}

Outcome wronskian_laws() {
  double cocycle = 0, inverse = 0, liouville = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const std::size_t N = 3 + seed % 4, dw = 1 + seed % 3;
    const DenseCdeParams p = random_dense(N, dw, 1, 1, seed, 0.6);
    const std::size_t L = 10;
    const Path w = walk(dw, L, 1000 + seed);
    const double r = 0.1 * static_cast<double>(seed % 3), s = 0.5, t = 0.7 + 0.1 * static_cast<double>(seed % 4);
    const Matrix wrs = wronskian(p, w, r, s), wst = wronskian(p, w, s, t), wrt = wronskian(p, w, r, t);
    cocycle = std::max(cocycle, rel(wst * wrs, wrt));
    inverse = std::max(inverse, rel(wronskian(p, w, t, s) * wst, Matrix::Identity(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(N))));
    double trace = 0;
    const Vector inc = eval_at(w, t) - eval_at(w, r);
    for (std::size_t i = 0; i < dw; ++i) trace += p.A[i].trace() * inc[static_cast<Eigen::Index>(i)];
    liouville = std::max(liouville, std::abs(wrt.determinant() / std::exp(trace) - 1.0));
  }
  return {std::max({cocycle, inverse, liouville}) <= 1e-8,
          "cocycle " + fmt(cocycle) + ", inverse " + fmt(inverse) + ", determinant " + fmt(liouville)};
}

Outcome zoh_equivalence() {
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Eigen::Index N = 4, d = 3, L = 25;
    const Matrix x = gauss(L, d, seed, "tokens");
    S4Params s4;
    s4.a = -gauss(N, d, seed, "a").cwiseAbs();
    s4.b = gauss(N, 1, seed, "b").col(0);
    s4.step = Vector::LinSpaced(d, 0.02, 0.08);
    s4.readout = gauss(N, d, seed, "r");
    const auto o4 = s4_forward(s4, x);
    S6Params s6;
    s6.a = s4.a;
    s6.b = s4.b;
    s6.alpha = gauss(d, 1, seed, "alpha").col(0);
    s6.beta = gauss(d, 1, seed, "beta").col(0);
    s6.delta = 0.05;
    s6.readout = s4.readout;
    const auto o6 = s6_forward(s6, x);
    for (Eigen::Index c = 0; c < d; ++c) {
      GateOptions g4;
      g4.step = s4.step[c];
      const Gates a = make_gates("s4", x, g4);
      worst = std::max(worst, rel(o4.states[static_cast<std::size_t>(c)],
                                  solve_dense(channel_cde(s4.a.col(c), s4.b), a.omega, column(a.xi, c), Vector::Zero(1))));
      GateOptions g6;
      g6.step = s6.delta;
      g6.alpha = s6.alpha;
      g6.beta = s6.beta;
      const Gates b = make_gates("mamba-softplus", x, g6);
      worst = std::max(worst, rel(o6.states[static_cast<std::size_t>(c)],
                                  solve_dense(channel_cde(s6.a.col(c), s6.b), column(b.omega, c), column(b.xi, c),
                                              Vector::Zero(1))));
    }
  }

  // X_t = 1 + sin(2 pi t)/2 with a unit ReLU gate: domega = X dt, dxi = X^2 dt, known in closed form.
  const double a = -1.5, b = 0.8;
  const std::size_t fine = 1 << 15;
  Matrix w(fine + 1, 1), s(fine + 1, 1);
  for (std::size_t k = 0; k <= fine; ++k) {
    const double t = static_cast<double>(k) / fine, c = std::cos(2.0 * M_PI * t) - 1.0;
    w(static_cast<Eigen::Index>(k), 0) = t - c / (4.0 * M_PI);
    s(static_cast<Eigen::Index>(k), 0) = t - c / (2.0 * M_PI) + 0.25 * (t / 2.0 - std::sin(4.0 * M_PI * t) / (8.0 * M_PI));
  }
  const double target = solve_dense(channel_cde(Vector::Constant(1, a), Vector::Constant(1, b)), Path(Grid(fine), w),
                                    Path(Grid(fine), s), Vector::Zero(1))(static_cast<Eigen::Index>(fine), 0);
  std::vector<double> lx, ly;
  for (int n : {50, 100, 200, 400, 800}) {
    S6Params p;
    p.a = Matrix::Constant(1, 1, a);
    p.b = Vector::Constant(1, b);
    p.alpha = Vector::Ones(1);
    p.beta = Vector::Zero(1);
    p.delta = 1.0 / n;
    p.gate = DeltaGate::relu;
    p.readout = Matrix::Ones(1, 1);
    Matrix x(n, 1);
    for (int l = 0; l < n; ++l) x(l, 0) = 1.0 + 0.5 * std::sin(2.0 * M_PI * l / n);
    lx.push_back(std::log(p.delta));
    ly.push_back(std::log(std::abs(s6_forward(p, x).states[0](n, 0) - target)));
  }
  const double order = fitted_slope(lx, ly);
  return {worst <= 1e-8 && std::abs(order - 1.0) <= 0.2,
          "worst rel err " + fmt(worst) + ", convergence order " + fmt(order)};
}

Outcome expansion_truncation() {
  int violations = 0, checks = 0;
  double min_margin = 1e300;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    DenseCdeParams p = random_dense(4, 2, 2, 1, seed, 1.0);
    const double target = 0.2 + 0.05 * static_cast<double>(seed);
    for (auto& m : p.A) m *= target / m.norm();
    const Path w = walk(2, 8, 2000 + seed, 0.5), x = walk(2, 8, 3000 + seed);
    const Matrix exact = solve_dense(p, w, x, Vector::Ones(1));
    for (int M = 0; M <= 10; ++M) {
      const auto sol = solve_via_signature(p, w, x, Vector::Ones(1), M);
      for (Eigen::Index k = 0; k <= 8; ++k) {
        const double err = (sol.states.row(k) - exact.row(k)).norm();
        // rounding floor: the bound can fall below double precision of the state
        const double floor = 1e-13 * exact.row(k).norm();
        ++checks;
        if (err > sol.tail_bound[k] + floor) ++violations;
        if (sol.tail_bound[k] > 0) min_margin = std::min(min_margin, (sol.tail_bound[k] + floor) / std::max(err, 1e-300));
      }
    }
  }
  return {violations == 0, std::to_string(checks) + " checks, " + std::to_string(violations) +
                               " above the bound, tightest bound/err ratio " + fmt(min_margin)};
}

Outcome realization() {
  double worst = 0;
  struct Shape {
    std::size_t d0, dw, dx;
    int M;
  };
  for (const Shape sh : {Shape{1, 2, 1, 3}, Shape{2, 2, 2, 2}, Shape{1, 3, 2, 2}}) {
    const auto real = tensor_algebra_realization(sh.d0, sh.dw, sh.dx, sh.M);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Path w = walk(sh.dw, 7, 4000 + seed), x = walk(sh.dx, 7, 5000 + seed);
      const Vector x0 = gauss(static_cast<Eigen::Index>(sh.d0), 1, seed, "x0").col(0);
      const auto words = static_cast<Eigen::Index>(tensor_size(sh.dw, sh.M));
      const Matrix alpha = gauss(static_cast<Eigen::Index>(sh.d0), words, seed, "alpha");
      const Matrix beta = gauss(static_cast<Eigen::Index>(sh.dx), words, seed, "beta");
      const Vector v = real.readout(alpha, beta);
      const Matrix z = solve_dense(real.params, w, x, x0);
      const auto stream = feature_stream(w, x, x0, sh.M);
      for (std::size_t k = 0; k <= 7; ++k) {
        const double ref = (alpha.array() * stream[k].alpha_block().array()).sum() +
                           (beta.array() * stream[k].beta_block().array()).sum();
        const double got = z.row(static_cast<Eigen::Index>(k)).dot(v);
        worst = std::max(worst, std::abs(got - ref) / std::max(1.0, std::abs(ref)));
      }
    }
  }
  return {worst <= 1e-10, "worst rel err " + fmt(worst)};
}

Outcome kernel_consistency() {
  double worst_trunc = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Path wx = walk(2, 5, 6000 + seed, 0.8), xx = walk(2, 5, 6100 + seed, 0.8);
    const Path wy = walk(2, 5, 6200 + seed, 0.8), xy = walk(2, 5, 6300 + seed, 0.8);
    const Vector ax = gauss(2, 1, seed, "ax").col(0), ay = gauss(2, 1, seed, "ay").col(0);
    const double k = kernel_goursat(wx, xx, ax, wy, xy, ay, 64)(5, 5);
    const double f = feature_tensor(wx, xx, ax, 1.0, 6).dot(feature_tensor(wy, xy, ay, 1.0, 6));
    worst_trunc = std::max(worst_trunc, std::abs(f - k) / std::abs(k));
  }

  const Path wx = walk(2, 4, 7000), xx = walk(2, 4, 7001), wy = walk(2, 4, 7002), xy = walk(2, 4, 7003);
  const Vector ax = Vector::Ones(1), ay = Vector::Ones(1);
  const double K = kernel_goursat(wx, xx, ax, wy, xy, ay, 32)(4, 4);
  const std::vector<Path> omegas{wx, wy}, xis{xx, xy};
  const Matrix x0s = Matrix::Ones(1, 2);
  std::vector<double> lx, ly;
  std::string curve;
  for (std::size_t N : {64, 256, 1024, 4096}) {
    double ms = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const DenseCdeParams p = sample_lecun({seed, N, 1, 2, 2});
      const Matrix zs = solve_dense_final(p, omegas, xis, x0s);
      const double est = zs.row(0).dot(zs.row(1)) / static_cast<double>(N);
      ms += (est - K) * (est - K) / 10.0;
    }
    lx.push_back(std::log(static_cast<double>(N)));
    ly.push_back(0.5 * std::log(ms));
    curve += (curve.empty() ? "" : " ") + fmt(std::sqrt(ms) / std::abs(K));
  }
  const double slope = fitted_slope(lx, ly);
  return {worst_trunc <= 1e-4 && std::abs(slope + 0.5) <= 0.15,
          "truncation rel err " + fmt(worst_trunc) + ", Monte Carlo rel rms [" + curve + "], slope " + fmt(slope)};
}

Outcome chaining_recovery() {
  ChainBuildOptions opts;
  opts.time_stride = 2;
  const ChainSpec c12 = build_signature_chain(Word{0, 1}, 1e-3, opts);
  const ChainSpec c123 = build_signature_chain(Word{0, 1, 2}, 1e-2, opts);

  DatasetSpec spec;
  spec.num_samples = 2000;
  const Dataset ds = gen_dataset(spec);
  std::vector<Path> train, test;
  std::vector<double> ytr, yte;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Path p = ds.path(i);
    const TruncatedTensor sig = signature(p, 2);
    const double area = sig[Word{0, 1}] - sig[Word{1, 0}];
    (i < ds.num_train ? train : test).push_back(p);
    (i < ds.num_train ? ytr : yte).push_back(area);
  }
  const auto single = single_layer_fit(train, ytr, test, yte, SingleLayerGates::s4, 256, 0);
  const double frac = single.test_mse / single.test_variance;
  return {c12.test_mse <= 1e-3 && c123.test_mse <= 1e-2 && frac >= 0.5,
          "Sig^(01) mse " + fmt(c12.test_mse) + ", Sig^(012) mse " + fmt(c123.test_mse) +
              ", single layer on the area " + fmt(frac) + " of variance"};
}

Outcome desk_suite() {
  const auto t0 = Clock::now();
  std::ifstream in(SSMCDE_DESK_MANIFEST);
  if (!in) return {false, std::string("cannot open ") + SSMCDE_DESK_MANIFEST};
  nlohmann::json manifest = nlohmann::json::parse(in);
  const auto dir = std::filesystem::current_path();
  manifest["dataset"] = (dir / "desk_dataset.bin").string();
  manifest["jsonl"] = (dir / "desk_results.jsonl").string();
  manifest["csv"] = (dir / "desk_curves.csv").string();
  save_dataset(manifest["dataset"].get<std::string>(), gen_dataset(DatasetSpec{}));
  const SuiteReport rep = run_suite(manifest, dir.string());
  const double secs = seconds_since(t0);
  std::string detail;
  for (const auto& r : rep.runs)
    detail += to_string(r.config.model) + " " + fmt(r.relative_test_mse()) + ", ";
  for (const auto& f : rep.failures) detail += "[" + f + "] ";
  detail += fmt(secs / 60.0) + " min";
  return {rep.ok() && secs < 1800.0, detail};
}

Outcome gradient_check() {
  double worst = 0;
  std::string detail;
  for (ModelKind kind : {ModelKind::s5, ModelKind::mamba, ModelKind::s5_stacked, ModelKind::mamba_stacked}) {
    RecurrentModel m(kind, 2, 4, 4, 11);
    std::vector<Matrix> xs;
    std::vector<const Matrix*> batch;
    Vector y(4);
    for (int i = 0; i < 4; ++i) {
      xs.push_back(gauss(8, 2, 80 + static_cast<std::uint64_t>(i), "x"));
      y[i] = 0.3 * i - 0.5;
    }
    for (const auto& x : xs) batch.push_back(&x);
    Vector g;
    m.loss(batch, y, &g);
    Vector fd(g.size());
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double keep = m.params()[i];
      m.params()[i] = keep + 1e-5;
      const double up = m.loss(batch, y, nullptr);
      m.params()[i] = keep - 1e-5;
      const double down = m.loss(batch, y, nullptr);
      m.params()[i] = keep;
      fd[i] = (up - down) / 2e-5;
    }
    const double e = (g - fd).norm() / g.norm();
    worst = std::max(worst, e);
    detail += to_string(kind) + " " + fmt(e) + ", ";
  }
  return {worst <= 1e-4, detail + "worst " + fmt(worst)};
}

Outcome stability() {
  std::size_t unstable = 0, flagged = 0;
  double lo = 1e300, hi = -1e300;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const std::size_t N = 1 + seed % 8, dw = 1 + seed % 3, L = 5 + seed % 11;
    DiagonalCdeParams q;
    const Vector v = gauss(static_cast<Eigen::Index>(N), 1, seed, "v").col(0).cwiseAbs();
    q.V = -v * Eigen::RowVectorXd::Ones(static_cast<Eigen::Index>(dw));
    q.B = gauss(static_cast<Eigen::Index>(N), 1, seed, "B");
    q.C = gauss(static_cast<Eigen::Index>(N), 1, seed, "C");
    q.v = Vector::Zero(static_cast<Eigen::Index>(N));
    Matrix wv = gauss(static_cast<Eigen::Index>(L + 1), static_cast<Eigen::Index>(dw), seed, "inc").cwiseAbs();
    wv.row(0).setZero();
    for (Eigen::Index k = 1; k < wv.rows(); ++k) wv.row(k) += wv.row(k - 1);
    const auto rep = stability_check(q, Path(Grid(L), wv));
    if (!rep.stable()) ++unstable;
    flagged += rep.flagged;
    lo = std::min(lo, rep.multipliers.minCoeff());
    hi = std::max(hi, rep.multipliers.maxCoeff());
  }
  return {unstable == 0 && flagged == 0 && lo > 0.0 && hi <= 1.0,
          "1000 instances, multipliers in [" + fmt(lo) + ", " + fmt(hi) + "], " + std::to_string(unstable) + " unstable"};
}

// FNV-1a over raw bytes.
struct Digest {
  std::uint64_t h = 1469598103934665603ull;
  void add(const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ull;
  }
  void add(const Matrix& m) { add(m.data(), sizeof(double) * static_cast<std::size_t>(m.size())); }
  void add(const std::string& s) { add(s.data(), s.size()); }
};

std::uint64_t seeded_digest() {
  Digest d;
  const DenseCdeParams p = sample_lecun({5, 48, 2, 2, 3});
  for (const auto& a : p.A) d.add(a);
  d.add(p.B);
  d.add(p.C);
  DatasetSpec spec;
  spec.num_samples = 300;
  spec.seed = 4;
  const Dataset ds = gen_dataset(spec);
  std::ostringstream bytes;
  write_dataset(bytes, ds);
  d.add(bytes.str());
  TrainConfig cfg;
  cfg.model = ModelKind::mamba_stacked;
  cfg.hidden = 8;
  cfg.state = 8;
  cfg.steps = 30;
  cfg.log_every = 10;
  d.add(to_json(train_model(cfg, ds)).dump());
  ChainBuildOptions opts;
  opts.train = gen_normalized_paths(60, 2, 20, 1);
  opts.test = gen_normalized_paths(20, 2, 20, 2);
  opts.width = 24;
  d.add(to_json(build_signature_chain(Word{0, 1, 0}, 1.0, opts)).dump());
  d.add(kernel_goursat(ds.path(0), ds.path(1), Vector::Ones(1), ds.path(2), ds.path(3), Vector::Ones(1), 2));
  return d.h;
}

std::string self_path;

Outcome determinism() {
  const std::uint64_t a = seeded_digest(), b = seeded_digest();
  std::uint64_t child = 0;
  bool child_ok = false;
  if (FILE* f = popen(("\"" + self_path + "\" --digest").c_str(), "r")) {
    unsigned long long v = 0;
    child_ok = std::fscanf(f, "%llx", &v) == 1;
    child = v;
    child_ok = (pclose(f) == 0) && child_ok;
  }

  std::vector<Path> paths;
  for (std::uint64_t s = 0; s < 64; ++s) paths.push_back(walk(3, 20, 8000 + s));
  const auto par = batch_signature(paths, 4, 4), seq = batch_signature(paths, 4, 1);
  double batch_diff = 0;
  for (std::size_t i = 0; i < paths.size(); ++i)
    for (std::size_t j = 0; j < par[i].size(); ++j)
      batch_diff = std::max(batch_diff, std::abs(par[i].coeffs()[j] - seq[i].coeffs()[j]));

  S5Params s5;
  s5.a = -gauss(16, 1, 1, "a").col(0).cwiseAbs();
  s5.B = gauss(16, 3, 1, "B");
  s5.step = Vector::Constant(16, 0.1);
  s5.readout = gauss(2, 16, 1, "r");
  const auto elems = s5_scan_elements(s5, gauss(257, 3, 1, "x"));
  const auto tree = parallel_scan(elems, ScanSchedule::tree), fold = parallel_scan(elems, ScanSchedule::sequential);
  double scan_diff = 0;
  for (std::size_t i = 0; i < tree.size(); ++i)
    scan_diff = std::max({scan_diff, (tree[i].multiplier - fold[i].multiplier).cwiseAbs().maxCoeff(),
                          (tree[i].offset - fold[i].offset).cwiseAbs().maxCoeff()});

  const DenseCdeParams p = sample_lecun({9, 32, 1, 3, 3});
  Matrix x0s = Matrix::Ones(1, 16);
  const std::vector<Path> ws(paths.begin(), paths.begin() + 16);
  const Matrix finals = solve_dense_final(p, ws, ws, x0s);
  double solve_diff = 0;
  for (std::size_t i = 0; i < ws.size(); ++i) {
    const Matrix z = solve_dense(p, ws[i], ws[i], Vector::Ones(1));
    solve_diff = std::max(solve_diff, (finals.row(static_cast<Eigen::Index>(i)) - z.row(z.rows() - 1)).norm() /
                                          z.row(z.rows() - 1).norm());
  }

  const bool pass = a == b && child_ok && child == a && batch_diff <= 1e-12 && scan_diff <= 1e-12 && solve_diff <= 1e-12;
  std::ostringstream s;
  s << "digest " << std::hex << a << (a == b ? " repeated" : " changed") << ", child process "
    << (child_ok ? (child == a ? "matches" : "differs") : "failed") << std::dec << ", batch diff " << fmt(batch_diff)
    << ", scan diff " << fmt(scan_diff) << ", batched solve rel diff " << fmt(solve_diff);
  return {pass, s.str()};
}

}  // namespace

int main(int argc, char** argv) {
  self_path = std::filesystem::absolute(argv[0]).string();
  set_warning_handler([](const std::string&) {});
  if (argc > 1 && std::string(argv[1]) == "--digest") {
    std::printf("%llx\n", static_cast<unsigned long long>(seeded_digest()));
    return 0;
  }
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"signature vs brute-force quadrature", signature_oracle},
      {"S4 closed form", s4_closed_form},
      {"Wronskian laws", wronskian_laws},
      {"zero-order-hold equivalence", zoh_equivalence},
      {"signature-expansion truncation bound", expansion_truncation},
      {"tensor-algebra realization", realization},
      {"kernel consistency", kernel_consistency},
      {"chaining recovery", chaining_recovery},
      {"desk-scale ordering", desk_suite},
      {"gradient check", gradient_check},
      {"stability", stability},
      {"determinism", determinism},
  };
  // A single criterion can be selected by number, e.g. `acceptance 7`.
  int only = argc > 1 ? std::atoi(argv[1]) : 0;
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only && static_cast<int>(i + 1) != only) continue;
    Outcome o;
    const auto t0 = Clock::now();
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail << " ("
              << fmt(seconds_since(t0)) << " s)" << std::endl;
  }
  return failures;
}
