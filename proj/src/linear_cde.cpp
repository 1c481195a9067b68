#include "ssmcde/linear_cde.hpp"

#include <cmath>
#include <iostream>
#include <mutex>

#include "ssmcde/errors.hpp"
#include "ssmcde/linalg.hpp"

namespace ssmcde {

namespace {

std::mutex g_warn_mutex;
std::function<void(const std::string&)> g_warn;

void warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  if (g_warn)
    g_warn(msg);
  else
    std::cerr << "warning: " << msg << '\n';
}

void check_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) throw DomainError(std::string(what) + " has non-finite entries");
}

void check_drivers(std::size_t d_omega, std::size_t d_xi, std::size_t d0, const Path& omega,
                   const Path& xi, const Vector& x0) {
  if (!(omega.grid() == xi.grid())) throw DomainError("omega and xi must share a grid");
  if (omega.channels() != d_omega)
    throw DomainError("omega has " + std::to_string(omega.channels()) + " channels, params expect " +
                      std::to_string(d_omega));
  if (xi.channels() != d_xi)
    throw DomainError("xi has " + std::to_string(xi.channels()) + " channels, params expect " +
                      std::to_string(d_xi));
  if (static_cast<std::size_t>(x0.size()) != d0)
    throw DomainError("x0 has wrong dimension for params");
}

Matrix segment_generator(const DenseCdeParams& p, const Vector& dw) {
  const auto n = static_cast<Eigen::Index>(p.N());
  Matrix m = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < p.A.size(); ++i) {
    const double w = dw(static_cast<Eigen::Index>(i));
    if (w != 0.0) m.noalias() += w * p.A[i];
  }
  return m;
}

void guard_state(const Vector& z, std::size_t segment) {
  if (!z.allFinite())
    throw OverflowError("non-finite state after segment " + std::to_string(segment));
}

double exp_tail(double y, int depth) {
  // sum_{m > depth} y^m / m!
  double term = 1.0;
  for (int m = 1; m <= depth + 1; ++m) term *= y / m;
  double sum = 0.0;
  for (int m = depth + 1; m < depth + 400; ++m) {
    sum += term;
    term *= y / (m + 1);
    if (term <= 1e-20 * sum) break;
  }
  return sum;
}

}  // namespace

void DenseCdeParams::validate() const {
  const Eigen::Index n = C.rows();
  for (const auto& a : A) {
    if (a.rows() != n || a.cols() != n) throw DomainError("each A_i must be N x N");
    check_finite(a, "A");
  }
  if (B.rows() != n) throw DomainError("B must have N rows");
  if (v.size() != n) throw DomainError("readout v must have N entries");
  check_finite(B, "B");
  check_finite(C, "C");
  check_finite(v, "v");
}

void DiagonalCdeParams::validate() const {
  const Eigen::Index n = V.rows();
  if (B.rows() != n || C.rows() != n || v.size() != n)
    throw DomainError("V, B, C and v must all have N rows");
  check_finite(V, "V");
  check_finite(B, "B");
  check_finite(C, "C");
  check_finite(v, "v");
}

DenseCdeParams DiagonalCdeParams::to_dense() const {
  DenseCdeParams d;
  for (Eigen::Index i = 0; i < V.cols(); ++i) d.A.push_back(V.col(i).asDiagonal().toDenseMatrix());
  d.B = B;
  d.C = C;
  d.v = v;
  return d;
}

void set_warning_handler(std::function<void(const std::string&)> handler) {
  std::lock_guard<std::mutex> lock(g_warn_mutex);
  g_warn = std::move(handler);
}

Matrix solve_dense(const DenseCdeParams& p, const Path& omega, const Path& xi, const Vector& x0) {
  p.validate();
  check_drivers(p.d_omega(), p.d_xi(), p.d0(), omega, xi, x0);
  const std::size_t L = omega.num_steps();
  Matrix out(static_cast<Eigen::Index>(L + 1), static_cast<Eigen::Index>(p.N()));
  Vector z = p.C * x0;
  out.row(0) = z.transpose();
  bool warned = false;
  for (std::size_t k = 0; k < L; ++k) {
    const Matrix m = segment_generator(p, omega.increment(k));
    if (!warned && exp_norm_bound(m) > 1e3) {
      warn("segment " + std::to_string(k) + " multiplier norm may exceed 1e3");
      warned = true;
    }
    z = exp_affine_action(m, z, p.B * xi.increment(k));
    guard_state(z, k);
    out.row(static_cast<Eigen::Index>(k + 1)) = z.transpose();
  }
  return out;
}

namespace {

// Upper estimate of ||a||_2: power iteration on a^T a, padded by 10%, capped by the 1-norm bound.
double spectral_norm_estimate(const Matrix& a) {
  const double one = a.cwiseAbs().colwise().sum().maxCoeff();
  if (a.rows() < 8 || one == 0.0) return one;
  Vector v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i));
  v.normalize();
  double sigma = 0.0;
  for (int it = 0; it < 15; ++it) {
    const Vector w = a.transpose() * (a * v);
    const double n = w.norm();
    if (n == 0.0) break;
    sigma = std::sqrt(n);
    v = w / n;
  }
  return std::min(one, 1.1 * sigma);
}

}  // namespace

Matrix solve_dense_final(const DenseCdeParams& p, std::span<const Path> omegas, std::span<const Path> xis,
                         const Matrix& x0s) {
  p.validate();
  if (omegas.size() != xis.size() || static_cast<std::size_t>(x0s.cols()) != omegas.size())
    throw DomainError("solve_dense_final: batch sizes differ");
  const Eigen::Index n = static_cast<Eigen::Index>(p.N());
  const Eigen::Index bs = static_cast<Eigen::Index>(omegas.size());
  if (bs == 0) return Matrix(0, n);
  const std::size_t steps = omegas.front().num_steps();
  for (std::size_t b = 0; b < omegas.size(); ++b) {
    check_drivers(p.d_omega(), p.d_xi(), p.d0(), omegas[b], xis[b], x0s.col(static_cast<Eigen::Index>(b)));
    if (omegas[b].num_steps() != steps) throw DomainError("solve_dense_final: drivers must share a grid");
  }
  const std::size_t dw = p.d_omega();
  std::vector<double> a_norm(dw);
  for (std::size_t i = 0; i < dw; ++i) a_norm[i] = spectral_norm_estimate(p.A[i]);
  Matrix stacked(n * static_cast<Eigen::Index>(dw), n);
  for (std::size_t i = 0; i < dw; ++i) stacked.middleRows(static_cast<Eigen::Index>(i) * n, n) = p.A[i];

  Matrix z = p.C * x0s;
  Matrix dom(static_cast<Eigen::Index>(dw), bs), dxi(static_cast<Eigen::Index>(p.d_xi()), bs);
  Matrix term, next, sum, prod;
  for (std::size_t k = 0; k < steps; ++k) {
    double norm = 0.0;
    for (Eigen::Index b = 0; b < bs; ++b) {
      dom.col(b) = omegas[static_cast<std::size_t>(b)].increment(k);
      dxi.col(b) = xis[static_cast<std::size_t>(b)].increment(k);
      double nb = 0.0;
      for (std::size_t i = 0; i < dw; ++i) nb += std::abs(dom(static_cast<Eigen::Index>(i), b)) * a_norm[i];
      norm = std::max(norm, nb);
    }
    // Wide products are memory bound, so take long Taylor steps: at ||hM|| <= 2 the
    // series needs ~25 terms and loses at most e^2 to cancellation.
    const int substeps = std::max(1, static_cast<int>(std::ceil(norm / 2.0)));
    const double h = 1.0 / substeps;
    const Matrix forcing = p.B * dxi;
    for (int s = 0; s < substeps; ++s) {
      // Taylor terms of exp(h [[M, f], [0, 0]]) [z; 1], one column per path.
      sum = z;
      term = z;
      for (int j = 1; j < 60; ++j) {
        if (dw > 0) {
          if (bs <= 4) {
            // gemv per column skips the panel packing that gemm does on every call
            prod.resize(stacked.rows(), bs);
            for (Eigen::Index b = 0; b < bs; ++b) prod.col(b).noalias() = stacked * term.col(b);
          } else {
            prod.noalias() = stacked * term;
          }
          next = prod.topRows(n) * dom.row(0).asDiagonal();
          for (std::size_t i = 1; i < dw; ++i)
            next.noalias() += prod.middleRows(static_cast<Eigen::Index>(i) * n, n) *
                              dom.row(static_cast<Eigen::Index>(i)).asDiagonal();
        } else {
          next = Matrix::Zero(n, bs);
        }
        if (j == 1) next += forcing;
        next *= h / j;
        term.swap(next);
        sum += term;
        const double tn = term.cwiseAbs().maxCoeff();
        if (tn == 0.0 || tn <= 1e-17 * sum.cwiseAbs().maxCoeff()) break;
      }
      z.swap(sum);
    }
    if (!z.allFinite()) throw OverflowError("non-finite state after segment " + std::to_string(k));
  }
  return z.transpose();
}

Matrix solve_dense_euler(const DenseCdeParams& p, const Path& omega, const Path& xi,
                         const Vector& x0, int substeps) {
  p.validate();
  check_drivers(p.d_omega(), p.d_xi(), p.d0(), omega, xi, x0);
  if (substeps < 1) throw DomainError("substeps must be positive");
  const std::size_t L = omega.num_steps();
  Matrix out(static_cast<Eigen::Index>(L + 1), static_cast<Eigen::Index>(p.N()));
  Vector z = p.C * x0;
  out.row(0) = z.transpose();
  for (std::size_t k = 0; k < L; ++k) {
    const Matrix m = segment_generator(p, omega.increment(k)) / substeps;
    const Vector push = p.B * xi.increment(k) / substeps;
    for (int s = 0; s < substeps; ++s) z += m * z + push;
    guard_state(z, k);
    out.row(static_cast<Eigen::Index>(k + 1)) = z.transpose();
  }
  return out;
}

Matrix solve_diagonal(const DiagonalCdeParams& p, const Path& omega, const Path& xi,
                      const Vector& x0) {
  p.validate();
  check_drivers(p.d_omega(), p.d_xi(), p.d0(), omega, xi, x0);
  const std::size_t L = omega.num_steps();
  const auto n = static_cast<Eigen::Index>(p.N());
  Matrix out(static_cast<Eigen::Index>(L + 1), n);
  Vector z = p.C * x0;
  out.row(0) = z.transpose();
  bool warned = false;
  for (std::size_t k = 0; k < L; ++k) {
    const Vector m = p.V * omega.increment(k);
    const Vector push = p.B * xi.increment(k);
    if (!warned && n > 0 && m.maxCoeff() > std::log(1e3)) {
      warn("segment " + std::to_string(k) + " multiplier exceeds 1e3");
      warned = true;
    }
    for (Eigen::Index i = 0; i < n; ++i) z(i) = std::exp(m(i)) * z(i) + phi1(m(i)) * push(i);
    guard_state(z, k);
    out.row(static_cast<Eigen::Index>(k + 1)) = z.transpose();
  }
  return out;
}

ExpansionSolution solve_via_signature(const DenseCdeParams& p, const Path& omega, const Path& xi,
                                      const Vector& x0, int depth) {
  p.validate();
  check_drivers(p.d_omega(), p.d_xi(), p.d0(), omega, xi, x0);
  if (depth < 0) throw DomainError("depth must be non-negative");
  const std::size_t dw = p.d_omega();
  const auto n = static_cast<Eigen::Index>(p.N());
  const auto words = static_cast<Eigen::Index>(tensor_size(dw, depth));

  // Columns hold A_I u for every word I, where A_{I k} = A_k A_I.
  auto word_images = [&](const Vector& u) {
    Matrix img(n, words);
    img.col(0) = u;
    for (int lvl = 1; lvl <= depth; ++lvl) {
      const std::size_t prev = level_offset(dw, lvl - 1), cur = level_offset(dw, lvl);
      const std::size_t count = cur - prev;
      for (std::size_t r = 0; r < count; ++r)
        for (std::size_t k = 0; k < dw; ++k)
          img.col(static_cast<Eigen::Index>(cur + r * dw + k)) =
              p.A[k] * img.col(static_cast<Eigen::Index>(prev + r));
    }
    return img;
  };
  std::vector<Matrix> from_c, from_b;
  for (Eigen::Index i = 0; i < p.C.cols(); ++i) from_c.push_back(word_images(p.C.col(i)));
  for (Eigen::Index j = 0; j < p.B.cols(); ++j) from_b.push_back(word_images(p.B.col(j)));

  const auto stream = feature_stream(omega, xi, x0, depth);
  const std::size_t L = omega.num_steps();
  ExpansionSolution sol;
  sol.states.resize(static_cast<Eigen::Index>(L + 1), n);
  sol.tail_bound.resize(static_cast<Eigen::Index>(L + 1));

  double a = 0.0;
  for (const auto& m : p.A)
    a = std::max(a, Eigen::JacobiSVD<Matrix>(m).singularValues().maxCoeff());
  const double cx0 = (p.C * x0).norm();
  double var_w = 0.0;
  Vector var_xi = Vector::Zero(static_cast<Eigen::Index>(p.d_xi()));

  for (std::size_t k = 0; k <= L; ++k) {
    if (k > 0) {
      var_w += omega.increment(k - 1).cwiseAbs().sum();
      var_xi += xi.increment(k - 1).cwiseAbs();
    }
    const FeatureTensor& f = stream[k];
    Vector z = Vector::Zero(n);
    for (std::size_t i = 0; i < from_c.size(); ++i)
      z.noalias() += from_c[i] * f.alpha_block().row(static_cast<Eigen::Index>(i)).transpose();
    for (std::size_t j = 0; j < from_b.size(); ++j)
      z.noalias() += from_b[j] * f.beta_block().row(static_cast<Eigen::Index>(j)).transpose();
    sol.states.row(static_cast<Eigen::Index>(k)) = z.transpose();

    double scale = cx0;
    for (Eigen::Index j = 0; j < p.B.cols(); ++j) scale += p.B.col(j).norm() * var_xi(j);
    sol.tail_bound(static_cast<Eigen::Index>(k)) = scale * exp_tail(a * var_w, depth);
  }
  return sol;
}

Matrix wronskian(const DenseCdeParams& p, const Path& omega, double s, double t) {
  p.validate();
  if (omega.channels() != p.d_omega()) throw DomainError("omega channel count mismatch");
  const std::size_t a = omega.grid().aligned_index(s);
  const std::size_t b = omega.grid().aligned_index(t);
  const auto n = static_cast<Eigen::Index>(p.N());
  Matrix w = Matrix::Identity(n, n);
  if (a <= b) {
    for (std::size_t k = a; k < b; ++k) w = expm(segment_generator(p, omega.increment(k))) * w;
  } else {
    for (std::size_t k = a; k-- > b;) w = expm(-segment_generator(p, omega.increment(k))) * w;
  }
  if (!w.allFinite()) throw OverflowError("non-finite transition matrix");
  return w;
}

Matrix variation_of_constants(const DenseCdeParams& p, const Path& omega, const Path& xi,
                              const Vector& x0) {
  p.validate();
  check_drivers(p.d_omega(), p.d_xi(), p.d0(), omega, xi, x0);
  const std::size_t L = omega.num_steps();
  const auto n = static_cast<Eigen::Index>(p.N());
  std::vector<Matrix> e(L);
  std::vector<Vector> forced(L);
  for (std::size_t k = 0; k < L; ++k) {
    auto [ek, phik] = expm_phi1(segment_generator(p, omega.increment(k)));
    e[k] = std::move(ek);
    forced[k] = phik * (p.B * xi.increment(k));
  }
  const Vector z0 = p.C * x0;
  Matrix out(static_cast<Eigen::Index>(L + 1), n);
  for (std::size_t k = 0; k <= L; ++k) {
    Matrix w = Matrix::Identity(n, n);  // W_{t_m, t_k}, built right to left
    Vector acc = Vector::Zero(n);
    for (std::size_t m = k; m-- > 0;) {
      acc += w * forced[m];
      w = w * e[m];
    }
    out.row(static_cast<Eigen::Index>(k)) = (w * z0 + acc).transpose();
  }
  return out;
}

std::size_t TensorAlgebraRealization::alpha_state(std::size_t i, const Word& w) const {
  if (i >= d0) throw DomainError("alpha row out of range");
  Word full{static_cast<int>(i)};
  for (int l : w) {
    if (l < 0 || static_cast<std::size_t>(l) >= d_omega) throw DomainError("omega letter out of range");
    full.push_back(static_cast<int>(d0 + d_xi) + l);
  }
  return word_index(full, alphabet(), depth + 1);
}

std::size_t TensorAlgebraRealization::beta_state(const Word& w, std::size_t j) const {
  if (j >= d_xi) throw DomainError("beta row out of range");
  Word full{static_cast<int>(d0 + j)};
  for (int l : w) {
    if (l < 0 || static_cast<std::size_t>(l) >= d_omega) throw DomainError("omega letter out of range");
    full.push_back(static_cast<int>(d0 + d_xi) + l);
  }
  return word_index(full, alphabet(), depth + 1);
}

Vector TensorAlgebraRealization::readout(const Matrix& alpha, const Matrix& beta) const {
  const auto words = static_cast<Eigen::Index>(tensor_size(d_omega, depth));
  if (alpha.rows() != static_cast<Eigen::Index>(d0) || alpha.cols() != words ||
      beta.rows() != static_cast<Eigen::Index>(d_xi) || beta.cols() != words)
    throw DomainError("readout coefficients have the wrong shape");
  Vector v = Vector::Zero(static_cast<Eigen::Index>(params.N()));
  for (Eigen::Index c = 0; c < words; ++c) {
    const Word w = word_at(static_cast<std::size_t>(c), d_omega, depth);
    for (std::size_t i = 0; i < d0; ++i)
      v(static_cast<Eigen::Index>(alpha_state(i, w))) += alpha(static_cast<Eigen::Index>(i), c);
    for (std::size_t j = 0; j < d_xi; ++j)
      v(static_cast<Eigen::Index>(beta_state(w, j))) += beta(static_cast<Eigen::Index>(j), c);
  }
  return v;
}

TensorAlgebraRealization tensor_algebra_realization(std::size_t d0, std::size_t d_omega,
                                                    std::size_t d_xi, int depth,
                                                    std::size_t memory_budget_bytes) {
  if (depth < 0) throw DomainError("depth must be non-negative");
  const std::size_t D = d0 + d_xi + d_omega;
  const int full_depth = depth + 1;
  // Overflow-safe size check before allocating anything.
  long double mu = 0, pw = 1;
  for (int k = 0; k <= full_depth; ++k) {
    mu += pw;
    pw *= static_cast<long double>(D);
  }
  const long double bytes = mu * mu * 8.0L * static_cast<long double>(d_omega + 1);
  if (bytes > static_cast<long double>(memory_budget_bytes))
    throw ResourceError("tensor algebra of size " + std::to_string(static_cast<double>(mu)) +
                        " exceeds the memory budget");

  TensorAlgebraRealization r;
  r.d0 = d0;
  r.d_omega = d_omega;
  r.d_xi = d_xi;
  r.depth = depth;
  const std::size_t n = tensor_size(D, full_depth);
  const auto N = static_cast<Eigen::Index>(n);
  for (std::size_t k = 0; k < d_omega; ++k) {
    Matrix lam = Matrix::Zero(N, N);
    const std::size_t letter = d0 + d_xi + k;
    for (int lvl = 0; lvl < full_depth; ++lvl) {
      const std::size_t from = level_offset(D, lvl), to = level_offset(D, lvl + 1);
      for (std::size_t rnk = 0; rnk < to - from; ++rnk)
        lam(static_cast<Eigen::Index>(to + rnk * D + letter), static_cast<Eigen::Index>(from + rnk)) = 1.0;
    }
    r.params.A.push_back(std::move(lam));
  }
  r.params.B = Matrix::Zero(N, static_cast<Eigen::Index>(d_xi));
  for (std::size_t j = 0; j < d_xi; ++j) r.params.B(static_cast<Eigen::Index>(1 + d0 + j), static_cast<Eigen::Index>(j)) = 1.0;
  r.params.C = Matrix::Zero(N, static_cast<Eigen::Index>(d0));
  for (std::size_t i = 0; i < d0; ++i) r.params.C(static_cast<Eigen::Index>(1 + i), static_cast<Eigen::Index>(i)) = 1.0;
  r.params.v = Vector::Zero(N);
  return r;
}

bool StabilityReport::gate_condition() const {
  for (bool ok : gate_ok)
    if (!ok) return false;
  return true;
}

StabilityReport stability_check(const DiagonalCdeParams& p, const Path& omega) {
  if (omega.channels() != p.d_omega()) throw DomainError("omega channel count mismatch");
  const std::size_t L = omega.num_steps();
  StabilityReport rep;
  rep.multipliers.resize(static_cast<Eigen::Index>(L), static_cast<Eigen::Index>(p.N()));
  for (std::size_t k = 0; k < L; ++k) {
    const Vector m = p.V * omega.increment(k);
    rep.gate_ok.push_back(p.N() == 0 || m.maxCoeff() <= 0.0);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      const double mult = std::exp(m(i));
      rep.multipliers(static_cast<Eigen::Index>(k), i) = mult;
      if (!(mult > 0.0 && mult <= 1.0)) ++rep.flagged;
    }
  }
  return rep;
}

nlohmann::json to_json(const DenseCdeParams& p) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& m : p.A) a.push_back(matrix_to_json(m));
  return {{"kind", "dense"}, {"N", p.N()},     {"d0", p.d0()},
          {"d_omega", p.d_omega()}, {"d_xi", p.d_xi()}, {"A", a},
          {"B", matrix_to_json(p.B)}, {"C", matrix_to_json(p.C)},
          {"v", std::vector<double>(p.v.data(), p.v.data() + p.v.size())}};
}

nlohmann::json to_json(const DiagonalCdeParams& p) {
  return {{"kind", "diagonal"}, {"N", p.N()},     {"d0", p.d0()},
          {"d_omega", p.d_omega()}, {"d_xi", p.d_xi()}, {"V", matrix_to_json(p.V)},
          {"B", matrix_to_json(p.B)}, {"C", matrix_to_json(p.C)},
          {"v", std::vector<double>(p.v.data(), p.v.data() + p.v.size())}};
}

namespace {
Vector vector_from_json(const nlohmann::json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

DenseCdeParams dense_params_from_json(const nlohmann::json& j) {
  if (j.value("kind", "dense") != "dense") throw DomainError("expected dense params");
  DenseCdeParams p;
  for (const auto& a : j.at("A")) p.A.push_back(matrix_from_json(a));
  p.B = matrix_from_json(j.at("B"));
  p.C = matrix_from_json(j.at("C"));
  p.v = vector_from_json(j.at("v"));
  p.validate();
  if (p.A.size() != j.at("d_omega").get<std::size_t>() || p.N() != j.at("N").get<std::size_t>())
    throw DomainError("dense params: shape metadata disagrees with matrices");
  return p;
}

DiagonalCdeParams diagonal_params_from_json(const nlohmann::json& j) {
  if (j.value("kind", "diagonal") != "diagonal") throw DomainError("expected diagonal params");
  DiagonalCdeParams p;
  p.V = matrix_from_json(j.at("V"));
  p.B = matrix_from_json(j.at("B"));
  p.C = matrix_from_json(j.at("C"));
  p.v = vector_from_json(j.at("v"));
  p.validate();
  if (p.N() != j.at("N").get<std::size_t>()) throw DomainError("diagonal params: N mismatch");
  return p;
}

}  // namespace ssmcde
