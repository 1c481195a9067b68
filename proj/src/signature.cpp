#include "ssmcde/signature.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <thread>

#include "ssmcde/errors.hpp"

namespace ssmcde {

namespace {

std::size_t ipow(std::size_t d, int k) {
  std::size_t r = 1;
  for (int i = 0; i < k; ++i) r *= d;
  return r;
}

void check_depth(int depth) {
  if (depth < 0) throw DomainError("depth must be non-negative, got " + std::to_string(depth));
}

}  // namespace

std::size_t tensor_size(std::size_t d, int depth) {
  check_depth(depth);
  return level_offset(d, depth + 1);
}

std::size_t level_offset(std::size_t d, int k) {
  std::size_t off = 0, p = 1;
  for (int i = 0; i < k; ++i) {
    off += p;
    p *= d;
  }
  return off;
}

std::size_t word_index(std::span<const int> w, std::size_t d, int depth) {
  check_depth(depth);
  if (w.size() > static_cast<std::size_t>(depth))
    throw DomainError("word longer than truncation depth");
  std::size_t rank = 0;
  for (int letter : w) {
    if (letter < 0 || static_cast<std::size_t>(letter) >= d)
      throw DomainError("letter " + std::to_string(letter) + " outside alphabet of size " +
                        std::to_string(d));
    rank = rank * d + static_cast<std::size_t>(letter);
  }
  return level_offset(d, static_cast<int>(w.size())) + rank;
}

Word word_at(std::size_t index, std::size_t d, int depth) {
  if (index >= tensor_size(d, depth)) throw DomainError("flat index out of range");
  int k = 0;
  while (index >= level_offset(d, k + 1)) ++k;
  std::size_t rank = index - level_offset(d, k);
  Word w(static_cast<std::size_t>(k));
  for (int i = k - 1; i >= 0; --i) {
    w[static_cast<std::size_t>(i)] = static_cast<int>(rank % d);
    rank /= d;
  }
  return w;
}

TruncatedTensor::TruncatedTensor(std::size_t d, int depth)
    : d_(d), depth_(depth), coeffs_(tensor_size(d, depth), 0.0) {}

TruncatedTensor::TruncatedTensor(std::size_t d, int depth, std::vector<double> coeffs)
    : d_(d), depth_(depth), coeffs_(std::move(coeffs)) {
  if (coeffs_.size() != tensor_size(d, depth))
    throw DomainError("coefficient count does not match alphabet and depth");
}

TruncatedTensor TruncatedTensor::unit(std::size_t d, int depth) {
  TruncatedTensor x(d, depth);
  x.coeffs_[0] = 1.0;
  return x;
}

std::span<const double> TruncatedTensor::level(int k) const {
  if (k < 0 || k > depth_) throw DomainError("level out of range");
  return {coeffs_.data() + level_offset(d_, k), ipow(d_, k)};
}

std::span<double> TruncatedTensor::level(int k) {
  if (k < 0 || k > depth_) throw DomainError("level out of range");
  return {coeffs_.data() + level_offset(d_, k), ipow(d_, k)};
}

double TruncatedTensor::level_norm(int k) const {
  double s = 0.0;
  for (double c : level(k)) s += c * c;
  return std::sqrt(s);
}

TruncatedTensor chen_product(const TruncatedTensor& a, const TruncatedTensor& b) {
  if (a.dim() != b.dim() || a.depth() != b.depth())
    throw DomainError("chen_product: alphabet or depth mismatch");
  const std::size_t d = a.dim();
  TruncatedTensor out(d, a.depth());
  for (int n = 0; n <= a.depth(); ++n) {
    auto o = out.level(n);
    for (int i = 0; i <= n; ++i) {
      auto x = a.level(i);
      auto y = b.level(n - i);
      const std::size_t ny = y.size();
      for (std::size_t p = 0; p < x.size(); ++p) {
        const double xp = x[p];
        if (xp == 0.0) continue;
        double* dst = o.data() + p * ny;
        for (std::size_t q = 0; q < ny; ++q) dst[q] += xp * y[q];
      }
    }
  }
  return out;
}

TruncatedTensor tensor_exp(const Vector& x, int depth) {
  check_depth(depth);
  const auto d = static_cast<std::size_t>(x.size());
  TruncatedTensor out = TruncatedTensor::unit(d, depth);
  for (int k = 1; k <= depth; ++k) {
    auto prev = out.level(k - 1);
    auto cur = out.level(k);
    for (std::size_t p = 0; p < prev.size(); ++p)
      for (std::size_t j = 0; j < d; ++j)
        cur[p * d + j] = prev[p] * x(static_cast<Eigen::Index>(j)) / k;
  }
  return out;
}

void mul_tensor_exp(TruncatedTensor& sig, const Vector& x) {
  if (static_cast<std::size_t>(x.size()) != sig.dim())
    throw DomainError("increment dimension does not match tensor alphabet");
  const TruncatedTensor e = tensor_exp(x, sig.depth());
  // Top level first: level n only reads lower levels, which are still unchanged.
  for (int n = sig.depth(); n >= 1; --n) {
    auto o = sig.level(n);
    for (int i = 0; i < n; ++i) {
      auto a = std::as_const(sig).level(i);
      auto b = e.level(n - i);
      const std::size_t nb = b.size();
      for (std::size_t p = 0; p < a.size(); ++p) {
        const double ap = a[p];
        if (ap == 0.0) continue;
        double* dst = o.data() + p * nb;
        for (std::size_t q = 0; q < nb; ++q) dst[q] += ap * b[q];
      }
    }
  }
}

TruncatedTensor signature(const Path& p, double s, double t, int depth) {
  check_depth(depth);
  if (s > t) throw DomainError("signature needs s <= t");
  const std::size_t a = p.grid().aligned_index(s);
  const std::size_t b = p.grid().aligned_index(t);
  TruncatedTensor sig = TruncatedTensor::unit(p.channels(), depth);
  for (std::size_t k = a; k < b; ++k) mul_tensor_exp(sig, p.increment(k));
  return sig;
}

std::vector<TruncatedTensor> signature_stream(const Path& p, int depth) {
  std::vector<TruncatedTensor> out;
  out.reserve(p.grid().num_points());
  out.push_back(TruncatedTensor::unit(p.channels(), depth));
  for (std::size_t k = 0; k < p.num_steps(); ++k) {
    TruncatedTensor next = out.back();
    mul_tensor_exp(next, p.increment(k));
    out.push_back(std::move(next));
  }
  return out;
}

TruncatedTensor brute_force_signature(const Path& p, double s, double t, int depth,
                                      int refinement, Quadrature rule) {
  check_depth(depth);
  if (refinement < 1) throw DomainError("refinement must be positive");
  if (s > t) throw DomainError("signature needs s <= t");
  const std::size_t a = p.grid().aligned_index(s);
  const std::size_t b = p.grid().aligned_index(t);
  const std::size_t d = p.channels();
  TruncatedTensor cur = TruncatedTensor::unit(d, depth);
  TruncatedTensor old = cur;
  const double half = rule == Quadrature::trapezoid ? 0.5 : 0.0;
  for (std::size_t k = a; k < b; ++k) {
    const Vector dw = p.increment(k) / refinement;
    for (int r = 0; r < refinement; ++r) {
      old = cur;
      // S^{Ij}(u') = S^{Ij}(u) + (quadrature of S^I on [u,u']) * dw_j, level by level upward.
      // The trapezoid rule gets the Euler-Maclaurin end correction -(f'(u') - f'(u))/12, with
      // f' = S^{I-} dw_{last letter of I}; this is exact for cubic integrands.
      for (int n = 1; n <= depth; ++n) {
        auto lo_old = old.level(n - 1);
        auto lo_new = std::as_const(cur).level(n - 1);
        auto dst = cur.level(n);
        const bool correct = rule == Quadrature::trapezoid && n >= 2;
        const auto pre_old = old.level(correct ? n - 2 : 0);
        const auto pre_new = std::as_const(cur).level(correct ? n - 2 : 0);
        for (std::size_t q = 0; q < lo_old.size(); ++q) {
          double avg = (1.0 - half) * lo_old[q] + half * lo_new[q];
          if (correct)
            avg -= (pre_new[q / d] - pre_old[q / d]) * dw(static_cast<Eigen::Index>(q % d)) / 12.0;
          for (std::size_t j = 0; j < d; ++j)
            dst[q * d + j] += avg * dw(static_cast<Eigen::Index>(j));
        }
      }
    }
  }
  return cur;
}

TruncatedTensor sym_signature(const Path& p, double s, double t, int depth) {
  check_depth(depth);
  if (s > t) throw DomainError("signature needs s <= t");
  const std::size_t a = p.grid().aligned_index(s);
  const std::size_t b = p.grid().aligned_index(t);
  return tensor_exp(p.value(b) - p.value(a), depth);
}

DecayReport factorial_decay_check(const Path& p, int depth) {
  const TruncatedTensor sig = signature(p, depth);
  const double var = one_variation(p);
  DecayReport rep;
  double bound = 1.0;
  for (int k = 0; k <= depth; ++k) {
    if (k > 0) bound *= var / k;
    const double n = sig.level_norm(k);
    rep.level_norms.push_back(n);
    rep.bounds.push_back(bound);
    rep.margins.push_back(bound - n);
    // Equality is attained by monotone one-dimensional paths; allow rounding.
    if (n > bound * (1.0 + 1e-12) + 1e-300) rep.holds = false;
  }
  return rep;
}

std::vector<TruncatedTensor> batch_signature(std::span<const Path> paths, int depth,
                                             unsigned threads) {
  check_depth(depth);
  std::vector<TruncatedTensor> out(paths.size(), TruncatedTensor(1, 0));
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(paths.size(), 1)));
  auto work = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < paths.size(); i += stride) out[i] = signature(paths[i], depth);
  };
  if (threads <= 1) {
    work(0, 1);
    return out;
  }
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work, w, threads);
  for (auto& th : pool) th.join();
  return out;
}

nlohmann::json to_json(const TruncatedTensor& x) {
  return {{"d", x.dim()}, {"depth", x.depth()}, {"coeffs", x.coeffs()}};
}

TruncatedTensor tensor_from_json(const nlohmann::json& j) {
  return TruncatedTensor(j.at("d").get<std::size_t>(), j.at("depth").get<int>(),
                         j.at("coeffs").get<std::vector<double>>());
}

}  // namespace ssmcde
