#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "ssmcde/path.hpp"

namespace ssmcde {

// Letters are 0-based channel indices.
using Word = std::vector<int>;

// Number of words of length <= depth over an alphabet of size d.
std::size_t tensor_size(std::size_t d, int depth);
// Flat index of the first word of length k.
std::size_t level_offset(std::size_t d, int k);
// Length-major, then lexicographic.
std::size_t word_index(std::span<const int> w, std::size_t d, int depth);
inline std::size_t word_index(const Word& w, std::size_t d, int depth) {
  return word_index(std::span<const int>(w), d, depth);
}
Word word_at(std::size_t index, std::size_t d, int depth);

// Coefficients of every word up to `depth`, stored flat in word_index order.
class TruncatedTensor {
 public:
  TruncatedTensor(std::size_t d, int depth);  // all zero
  TruncatedTensor(std::size_t d, int depth, std::vector<double> coeffs);
  static TruncatedTensor unit(std::size_t d, int depth);

  std::size_t dim() const { return d_; }
  int depth() const { return depth_; }
  std::size_t size() const { return coeffs_.size(); }

  const std::vector<double>& coeffs() const { return coeffs_; }
  std::vector<double>& coeffs() { return coeffs_; }

  double operator[](const Word& w) const { return coeffs_[word_index(w, d_, depth_)]; }
  double& operator[](const Word& w) { return coeffs_[word_index(w, d_, depth_)]; }

  std::span<const double> level(int k) const;
  std::span<double> level(int k);
  double level_norm(int k) const;  // Euclidean

 private:
  std::size_t d_;
  int depth_;
  std::vector<double> coeffs_;
};

TruncatedTensor chen_product(const TruncatedTensor& a, const TruncatedTensor& b);

// (x^{\otimes k} / k!)_{k <= depth}.
TruncatedTensor tensor_exp(const Vector& x, int depth);

// In place: sig <- sig (x) exp(x). Also valid when level 0 of sig is not 1.
void mul_tensor_exp(TruncatedTensor& sig, const Vector& x);

// Exact signature of the piecewise-linear path over the grid-aligned interval [s,t].
TruncatedTensor signature(const Path& p, double s, double t, int depth);
inline TruncatedTensor signature(const Path& p, int depth) { return signature(p, 0.0, 1.0, depth); }

// Signatures over [0, t_k] for every grid point k.
std::vector<TruncatedTensor> signature_stream(const Path& p, int depth);

// trapezoid carries the end-point derivative correction (exact on cubic integrands,
// so through level 4 on each linear piece); left_point is the plain first-order rule.
enum class Quadrature { trapezoid, left_point };

// Iterated integrals by nested quadrature on a grid with `refinement` sub-steps per segment.
TruncatedTensor brute_force_signature(const Path& p, double s, double t, int depth, int refinement,
                                      Quadrature rule = Quadrature::trapezoid);

// Permutation-averaged signature. Equals the tensor exponential of the increment.
TruncatedTensor sym_signature(const Path& p, double s, double t, int depth);

struct DecayReport {
  std::vector<double> level_norms;
  std::vector<double> bounds;   // ||p||_1^k / k!
  std::vector<double> margins;  // bound - norm
  bool holds = true;
};
DecayReport factorial_decay_check(const Path& p, int depth);

// One signature per path over [0,1]. threads == 0 picks hardware concurrency.
std::vector<TruncatedTensor> batch_signature(std::span<const Path> paths, int depth,
                                             unsigned threads = 0);

nlohmann::json to_json(const TruncatedTensor& x);
TruncatedTensor tensor_from_json(const nlohmann::json& j);

}  // namespace ssmcde
