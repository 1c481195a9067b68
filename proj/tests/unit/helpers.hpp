#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ssmcde/path.hpp"
#include "ssmcde/random.hpp"
#include "ssmcde/signature.hpp"

namespace testutil {

using ssmcde::Matrix;
using ssmcde::Path;
using ssmcde::Vector;

// Gaussian random walk with increments of standard deviation `scale`.
inline Path random_path(std::size_t d, std::size_t L, std::uint64_t seed, double scale = 1.0) {
  Matrix v = Matrix::Zero(static_cast<Eigen::Index>(L + 1), static_cast<Eigen::Index>(d));
  for (std::size_t k = 1; k <= L; ++k)
    for (std::size_t c = 0; c < d; ++c)
      v(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(c)) =
          v(static_cast<Eigen::Index>(k - 1), static_cast<Eigen::Index>(c)) +
          scale * ssmcde::std_normal(seed, 99, k * d + c);
  return Path(ssmcde::Grid(L), v);
}

inline Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t seed, std::uint64_t tag, double sd = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j)
      m(i, j) = sd * ssmcde::std_normal(seed, tag, static_cast<std::uint64_t>(i * c + j));
  return m;
}

inline Path from_rows(std::size_t L, std::initializer_list<std::initializer_list<double>> rows) {
  Matrix v(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double x : row) v(r, c++) = x;
    ++r;
  }
  return Path(ssmcde::Grid(L), v);
}

inline Path l_shape() { return from_rows(2, {{0, 0}, {1, 0}, {1, 1}}); }

inline double rel_err(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-300);
}

inline double rel_err(const Matrix& a, const Matrix& b) { return (a - b).norm() / std::max(b.norm(), 1e-300); }

}  // namespace testutil
