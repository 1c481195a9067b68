#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>

#include <Eigen/Dense>

#include "json.hpp"

namespace ssmcde {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Uniform grid 0 = t_0 < ... < t_L = 1.
class Grid {
 public:
  explicit Grid(std::size_t num_steps);

  std::size_t num_steps() const { return steps_; }
  std::size_t num_points() const { return steps_ + 1; }
  double step() const { return 1.0 / static_cast<double>(steps_); }
  double time(std::size_t k) const;

  // Index of the grid point closest to t (ties go left). Throws outside [0,1].
  std::size_t nearest_index(double t) const;
  // Like nearest_index but rejects t that is not within 1e-9 steps of a grid point.
  std::size_t aligned_index(double t) const;

  bool operator==(const Grid& other) const { return steps_ == other.steps_; }

 private:
  std::size_t steps_;
};

// Piecewise-linear path through (t_k, values.row(k)), starting at the origin.
class Path {
 public:
  // values must have L+1 rows and a zero first row.
  Path(Grid grid, Matrix values);

  // Shifts the samples so the first row is zero. The number of steps is rows-1.
  static Path from_samples(const Matrix& samples);
  static Path zero(Grid grid, std::size_t channels);

  const Grid& grid() const { return grid_; }
  std::size_t channels() const { return static_cast<std::size_t>(values_.cols()); }
  std::size_t num_steps() const { return grid_.num_steps(); }
  const Matrix& values() const { return values_; }

  Vector value(std::size_t k) const { return values_.row(static_cast<Eigen::Index>(k)).transpose(); }
  // Change over segment [t_k, t_{k+1}].
  Vector increment(std::size_t k) const;

 private:
  Grid grid_;
  Matrix values_;
};

Vector eval_at(const Path& p, double t);

// Zero before s, p_u - p_s on [s,t], frozen after t. s and t snap to the grid.
Path restrict(const Path& p, double s, double t);

// Prepends a t channel, and a t^2 channel when with_t2 is set.
Path time_augment(const Path& p, bool with_t2);

double one_variation(const Path& p);

// Runs p on [0,1/2] and q on [1/2,1]. Both need the same grid; the result has twice the steps.
Path concat(const Path& p, const Path& q);

// t -> p_{1-t} - p_1.
Path reverse(const Path& p);

// Stacks the channels of two paths on the same grid.
Path hstack(const Path& a, const Path& b);

// Samples the rows of a matrix (a_0 ... a_L) into the binary layout below.
// Header: "SSMPATH1", u32 L, u32 d, then (L+1)*d little-endian doubles, row-major.
void write_samples_binary(std::ostream& out, const Matrix& samples);
Matrix read_samples_binary(std::istream& in);

void write_path_binary(std::ostream& out, const Path& p);
Path read_path_binary(std::istream& in);

nlohmann::json samples_to_json(const Matrix& samples);
Matrix samples_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Path& p);
Path path_from_json(const nlohmann::json& j);

// Row-major flat copy, handy for bindings and serialization.
nlohmann::json matrix_to_json(const Matrix& m);
Matrix matrix_from_json(const nlohmann::json& j);

}  // namespace ssmcde
