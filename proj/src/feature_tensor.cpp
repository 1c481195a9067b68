#include "ssmcde/feature_tensor.hpp"

#include "ssmcde/errors.hpp"

namespace ssmcde {

FeatureTensor::FeatureTensor(std::size_t d0, std::size_t d_omega, std::size_t d_xi, int depth)
    : d_omega_(d_omega), depth_(depth) {
  const auto words = static_cast<Eigen::Index>(tensor_size(d_omega, depth));
  alpha_ = Matrix::Zero(static_cast<Eigen::Index>(d0), words);
  beta_ = Matrix::Zero(static_cast<Eigen::Index>(d_xi), words);
}

double FeatureTensor::alpha(std::size_t i, const Word& w) const {
  if (i >= d0()) throw DomainError("alpha row out of range");
  return alpha_(static_cast<Eigen::Index>(i),
                static_cast<Eigen::Index>(word_index(w, d_omega_, depth_)));
}

double FeatureTensor::beta(const Word& w, std::size_t j) const {
  if (j >= d_xi()) throw DomainError("beta row out of range");
  return beta_(static_cast<Eigen::Index>(j),
               static_cast<Eigen::Index>(word_index(w, d_omega_, depth_)));
}

double FeatureTensor::dot(const FeatureTensor& other) const {
  if (other.d0() != d0() || other.d_xi() != d_xi() || other.d_omega_ != d_omega_ ||
      other.depth_ != depth_)
    throw DomainError("feature tensor shape mismatch");
  return alpha_.cwiseProduct(other.alpha_).sum() + beta_.cwiseProduct(other.beta_).sum();
}

Vector FeatureTensor::flatten() const {
  Vector out(alpha_.size() + beta_.size());
  Eigen::Index n = 0;
  for (Eigen::Index r = 0; r < alpha_.rows(); ++r)
    for (Eigen::Index c = 0; c < alpha_.cols(); ++c) out(n++) = alpha_(r, c);
  for (Eigen::Index r = 0; r < beta_.rows(); ++r)
    for (Eigen::Index c = 0; c < beta_.cols(); ++c) out(n++) = beta_(r, c);
  return out;
}

std::vector<FeatureTensor> feature_stream(const Path& omega, const Path& xi, const Vector& x0,
                                          int depth) {
  if (!(omega.grid() == xi.grid())) throw DomainError("omega and xi must share a grid");
  if (depth < 0) throw DomainError("depth must be non-negative");
  const std::size_t dw = omega.channels(), dx = xi.channels();
  const auto d0 = static_cast<std::size_t>(x0.size());

  TruncatedTensor sig = TruncatedTensor::unit(dw, depth);
  std::vector<TruncatedTensor> g(dx, TruncatedTensor(dw, depth));

  auto snapshot = [&]() {
    FeatureTensor f(d0, dw, dx, depth);
    const Eigen::Map<const Eigen::RowVectorXd> s(sig.coeffs().data(),
                                                 static_cast<Eigen::Index>(sig.size()));
    f.alpha_block() = x0 * s;
    for (std::size_t j = 0; j < dx; ++j)
      f.beta_block().row(static_cast<Eigen::Index>(j)) =
          Eigen::Map<const Eigen::RowVectorXd>(g[j].coeffs().data(),
                                               static_cast<Eigen::Index>(g[j].size()));
    return f;
  };

  std::vector<FeatureTensor> out;
  out.reserve(omega.grid().num_points());
  out.push_back(snapshot());
  for (std::size_t k = 0; k < omega.num_steps(); ++k) {
    const Vector dwk = omega.increment(k);
    const Vector dxk = xi.increment(k);
    const TruncatedTensor e = tensor_exp(dwk, depth);
    mul_tensor_exp(sig, dwk);
    // G^j <- G^j (x) exp(dw) + dxi^j * (exp(dw)_n / (n+1))_n : both drivers are linear on the segment.
    for (std::size_t j = 0; j < dx; ++j) {
      mul_tensor_exp(g[j], dwk);
      const double dxj = dxk(static_cast<Eigen::Index>(j));
      if (dxj == 0.0) continue;
      for (int n = 0; n <= depth; ++n) {
        auto src = e.level(n);
        auto dst = g[j].level(n);
        const double scale = dxj / (n + 1);
        for (std::size_t q = 0; q < src.size(); ++q) dst[q] += scale * src[q];
      }
    }
    out.push_back(snapshot());
  }
  return out;
}

FeatureTensor feature_tensor(const Path& omega, const Path& xi, const Vector& x0, double t,
                             int depth) {
  const std::size_t k = omega.grid().aligned_index(t);
  return std::move(feature_stream(omega, xi, x0, depth)[k]);
}

}  // namespace ssmcde
