#pragma once

#include <cstddef>
#include <vector>

#include "ssmcde/signature.hpp"

namespace ssmcde {

// Coefficients x0^i Sig(omega)^I_{0,t} ("alpha" block, d0 rows) and
// int_0^t Sig(omega)^I_{s,t} dxi^j_s ("beta" block, d_xi rows) for all |I| <= depth.
// Columns follow word_index over the omega alphabet.
class FeatureTensor {
 public:
  FeatureTensor(std::size_t d0, std::size_t d_omega, std::size_t d_xi, int depth);

  std::size_t d0() const { return static_cast<std::size_t>(alpha_.rows()); }
  std::size_t d_omega() const { return d_omega_; }
  std::size_t d_xi() const { return static_cast<std::size_t>(beta_.rows()); }
  int depth() const { return depth_; }
  std::size_t num_words() const { return static_cast<std::size_t>(alpha_.cols()); }

  double alpha(std::size_t i, const Word& w) const;
  double beta(const Word& w, std::size_t j) const;

  const Matrix& alpha_block() const { return alpha_; }
  const Matrix& beta_block() const { return beta_; }
  Matrix& alpha_block() { return alpha_; }
  Matrix& beta_block() { return beta_; }

  double dot(const FeatureTensor& other) const;
  // alpha block then beta block, each row-major.
  Vector flatten() const;

 private:
  std::size_t d_omega_;
  int depth_;
  Matrix alpha_;
  Matrix beta_;
};

// Feature tensor at every grid point, by a segment-exact forward recursion.
std::vector<FeatureTensor> feature_stream(const Path& omega, const Path& xi, const Vector& x0,
                                          int depth);

FeatureTensor feature_tensor(const Path& omega, const Path& xi, const Vector& x0, double t,
                             int depth);

}  // namespace ssmcde
