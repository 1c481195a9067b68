#include <cmath>
#include <string>

#include "ssmcde/errors.hpp"
#include "ssmcde/experiments.hpp"
#include "ssmcde/random.hpp"

namespace ssmcde {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using ConstVecMap = Eigen::Map<const Vector>;
using MatMap = Eigen::Map<Matrix>;
using VecMap = Eigen::Map<Vector>;

double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// d/dx (expm1(x)/x)
double dphi1(double x) {
  if (std::abs(x) < 1e-3) return 0.5 + x / 3.0 + x * x / 8.0 + x * x * x / 30.0;
  return (x * std::exp(x) - std::expm1(x)) / (x * x);
}

struct Cache {
  std::vector<Matrix> pre, step, lam, g, q, z;  // z holds T+1 entries, z[0] = 0
};

struct LayerRef {
  std::size_t n, d;
  std::size_t theta_a, B, theta_step, W_step, b_step;
  bool selective;
};

Vector decay_rates(const double* p, const LayerRef& L) {
  return -ConstVecMap(p + L.theta_a, L.n).array().exp().matrix();
}

void layer_forward(const double* p, const LayerRef& L, const std::vector<Matrix>& u, Cache& c) {
  const std::size_t T = u.size();
  const Eigen::Index n = L.n, d = L.d, bs = u.front().cols();
  const Vector a = decay_rates(p, L);
  const ConstMap B(p + L.B, n, d);
  Vector fixed_step;
  if (!L.selective) fixed_step = ConstVecMap(p + L.theta_step, n).array().exp().matrix();
  c.pre.assign(L.selective ? T : 0, Matrix());
  c.step.assign(T, Matrix());
  c.lam.assign(T, Matrix());
  c.g.assign(T, Matrix());
  c.q.assign(T, Matrix());
  c.z.assign(T + 1, Matrix());
  c.z[0] = Matrix::Zero(n, bs);
  for (std::size_t l = 0; l < T; ++l) {
    c.q[l].noalias() = B * u[l];
    if (L.selective) {
      const ConstMap W(p + L.W_step, n, d);
      const ConstVecMap b(p + L.b_step, n);
      c.pre[l].noalias() = W * u[l];
      c.pre[l].colwise() += b;
      c.step[l] = c.pre[l].unaryExpr([](double x) { return softplus(x); });
    } else {
      c.step[l] = fixed_step.replicate(1, bs);
    }
    Matrix x = c.step[l].array().colwise() * a.array();
    c.lam[l] = x.array().exp().matrix();
    c.g[l] = x.unaryExpr([](double v) { return std::expm1(v); }).array().colwise() / a.array();
    c.z[l + 1] = c.lam[l].cwiseProduct(c.z[l]) + c.g[l].cwiseProduct(c.q[l]);
  }
}

// dz: external gradients on z[0..T]; du (optional) receives gradients on the inputs.
void layer_backward(const double* p, const LayerRef& L, const std::vector<Matrix>& u, const Cache& c,
                    const std::vector<Matrix>& dz, double* grad, std::vector<Matrix>* du) {
  const std::size_t T = u.size();
  const Eigen::Index n = L.n, d = L.d, bs = u.front().cols();
  const Vector a = decay_rates(p, L);
  const ConstMap B(p + L.B, n, d);
  Vector da = Vector::Zero(n), dstep_fixed = Vector::Zero(n), db = Vector::Zero(n);
  MatMap dB(grad + L.B, n, d);
  Matrix carry = Matrix::Zero(n, bs);
  if (du) du->assign(T, Matrix());
  for (std::size_t l = T; l-- > 0;) {
    const Matrix G = dz[l + 1] + carry;
    const Matrix dlam = G.cwiseProduct(c.z[l]);
    const Matrix dg = G.cwiseProduct(c.q[l]);
    const Matrix dq = G.cwiseProduct(c.g[l]);
    carry = c.lam[l].cwiseProduct(G);

    const Matrix x = c.step[l].array().colwise() * a.array();
    const Matrix h = x.unaryExpr([](double v) { return dphi1(v); });
    const Matrix dstep =
        (dlam.cwiseProduct(c.lam[l]).array().colwise() * a.array()).matrix() + dg.cwiseProduct(c.lam[l]);
    da += (dlam.cwiseProduct(c.lam[l]).cwiseProduct(c.step[l]) +
           dg.cwiseProduct(c.step[l]).cwiseProduct(c.step[l]).cwiseProduct(h))
              .rowwise()
              .sum();
    dB.noalias() += dq * u[l].transpose();
    if (du) (*du)[l].noalias() = B.transpose() * dq;
    if (L.selective) {
      const ConstMap W(p + L.W_step, n, d);
      const Matrix dpre = dstep.cwiseProduct(c.pre[l].unaryExpr([](double v) { return sigmoid(v); }));
      MatMap(grad + L.W_step, n, d).noalias() += dpre * u[l].transpose();
      db += dpre.rowwise().sum();
      if (du) (*du)[l].noalias() += W.transpose() * dpre;
    } else {
      dstep_fixed += dstep.rowwise().sum();
    }
  }
  VecMap(grad + L.theta_a, n) += da.cwiseProduct(a);
  if (L.selective) {
    VecMap(grad + L.b_step, n) += db;
  } else {
    const Vector step = ConstVecMap(p + L.theta_step, n).array().exp().matrix();
    VecMap(grad + L.theta_step, n) += dstep_fixed.cwiseProduct(step);
  }
}

}  // namespace

RecurrentModel::RecurrentModel(ModelKind kind, std::size_t input_dim, std::size_t state, std::size_t hidden,
                               std::uint64_t seed)
    : kind_(kind), input_dim_(input_dim), state_(state), hidden_(hidden) {
  if (kind == ModelKind::linear_ncde) throw DomainError("linear-ncde has no trainable recurrence");
  if (input_dim == 0 || state == 0 || hidden == 0) throw DomainError("model sizes must be positive");
  selective_ = kind == ModelKind::mamba || kind == ModelKind::mamba_stacked;
  stacked_ = kind == ModelKind::s5_stacked || kind == ModelKind::mamba_stacked;

  std::size_t off = 0;
  auto layout = [&](std::size_t n, std::size_t d) {
    LayerLayout L{n, d, 0, 0, 0, 0, 0};
    L.theta_a = off, off += n;
    L.B = off, off += n * d;
    if (selective_) {
      L.W_step = off, off += n * d;
      L.b_step = off, off += n;
    } else {
      L.theta_step = off, off += n;
    }
    return L;
  };
  l1_ = layout(state, input_dim);
  if (stacked_) {
    mix_W_ = off, off += hidden * state;
    mix_b_ = off, off += hidden;
    l2_ = layout(state, hidden);
  }
  readout_v_ = off, off += state;
  readout_c_ = off, off += 1;
  params_ = Vector::Zero(static_cast<Eigen::Index>(off));

  auto init_layer = [&](const LayerLayout& L, const std::string& name) {
    const auto tag = [&](const char* what) { return tag_of((name + what).c_str()); };
    for (std::size_t i = 0; i < L.n; ++i) {
      const double frac = L.n > 1 ? static_cast<double>(i) / static_cast<double>(L.n - 1) : 0.0;
      params_[L.theta_a + i] = std::log(0.5 + 4.5 * frac);
      const double step = std::exp(std::log(1e-3) + std::log(100.0) * uniform01(seed, tag(".step"), i));
      if (selective_)
        params_[L.b_step + i] = std::log(std::expm1(step));
      else
        params_[L.theta_step + i] = std::log(step);
    }
    const double sd = 1.0 / std::sqrt(static_cast<double>(L.d));
    for (std::size_t k = 0; k < L.n * L.d; ++k) {
      params_[L.B + k] = sd * std_normal(seed, tag(".B"), k);
      if (selective_) params_[L.W_step + k] = sd * std_normal(seed, tag(".W_step"), k);
    }
  };
  init_layer(l1_, "layer1");
  if (stacked_) {
    init_layer(l2_, "layer2");
    const double sd = 1.0 / std::sqrt(static_cast<double>(state));
    for (std::size_t k = 0; k < hidden * state; ++k) params_[mix_W_ + k] = sd * std_normal(seed, tag_of("mix"), k);
  }
  for (std::size_t k = 0; k < state; ++k)
    params_[readout_v_ + k] = std_normal(seed, tag_of("readout"), k) / std::sqrt(static_cast<double>(state));
}

double RecurrentModel::run(const std::vector<const Matrix*>& tokens, const Vector* targets, Vector* grad,
                           Vector* predictions) const {
  if (tokens.empty()) throw DomainError("empty batch");
  const Eigen::Index bs = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index T = tokens.front()->rows();
  if (T < 1) throw DomainError("sequences need at least one token");
  for (const Matrix* x : tokens)
    if (x->rows() != T || x->cols() != static_cast<Eigen::Index>(input_dim_))
      throw DomainError("token shape mismatch in batch");
  if (targets && targets->size() != bs) throw DomainError("targets do not match batch");

  std::vector<Matrix> u(static_cast<std::size_t>(T), Matrix(input_dim_, bs));
  for (Eigen::Index b = 0; b < bs; ++b)
    for (Eigen::Index l = 0; l < T; ++l) u[static_cast<std::size_t>(l)].col(b) = tokens[static_cast<std::size_t>(b)]->row(l).transpose();

  const double* p = params_.data();
  const LayerRef r1{l1_.n, l1_.d, l1_.theta_a, l1_.B, l1_.theta_step, l1_.W_step, l1_.b_step, selective_};
  const LayerRef r2{l2_.n, l2_.d, l2_.theta_a, l2_.B, l2_.theta_step, l2_.W_step, l2_.b_step, selective_};
  Cache c1, c2;
  std::vector<Matrix> u2;
  layer_forward(p, r1, u, c1);
  const ConstMap Wmix(p + mix_W_, hidden_, state_);
  if (stacked_) {
    const ConstVecMap bmix(p + mix_b_, hidden_);
    u2.resize(static_cast<std::size_t>(T));
    for (std::size_t l = 0; l < u2.size(); ++l) {
      u2[l].noalias() = Wmix * c1.z[l + 1];
      u2[l].colwise() += bmix;
    }
    layer_forward(p, r2, u2, c2);
  }
  const Matrix& final_state = stacked_ ? c2.z.back() : c1.z.back();
  const ConstVecMap v(p + readout_v_, state_);
  const Vector y = (final_state.transpose() * v).array() + p[readout_c_];
  if (predictions) *predictions = y;
  if (!targets) return 0.0;

  const Vector r = y - *targets;
  const double loss = r.squaredNorm() / static_cast<double>(bs);
  if (!grad) return loss;

  grad->setZero(params_.size());
  double* gp = grad->data();
  const Vector dy = 2.0 * r / static_cast<double>(bs);
  VecMap(gp + readout_v_, state_) = final_state * dy;
  gp[readout_c_] = dy.sum();
  std::vector<Matrix> dz(static_cast<std::size_t>(T) + 1, Matrix::Zero(state_, bs));
  dz.back() = v * dy.transpose();
  if (stacked_) {
    std::vector<Matrix> du2;
    layer_backward(p, r2, u2, c2, dz, gp, &du2);
    MatMap dW(gp + mix_W_, hidden_, state_);
    VecMap dbmix(gp + mix_b_, hidden_);
    dz.back().setZero();
    for (std::size_t l = 0; l < du2.size(); ++l) {
      dW.noalias() += du2[l] * c1.z[l + 1].transpose();
      dbmix += du2[l].rowwise().sum();
      dz[l + 1].noalias() = Wmix.transpose() * du2[l];
    }
  }
  layer_backward(p, r1, u, c1, dz, gp, nullptr);
  return loss;
}

double RecurrentModel::loss(const std::vector<const Matrix*>& tokens, const Vector& targets, Vector* grad) const {
  return run(tokens, &targets, grad, nullptr);
}

Vector RecurrentModel::predict(const std::vector<const Matrix*>& tokens) const {
  Vector out;
  run(tokens, nullptr, nullptr, &out);
  return out;
}

}  // namespace ssmcde
