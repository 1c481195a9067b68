#include "ssmcde/path.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "ssmcde/errors.hpp"

namespace ssmcde {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'P', 'A', 'T', 'H', '1'};

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char bytes[sizeof(T)];
    std::memcpy(bytes, &v, sizeof(T));
    std::reverse(bytes, bytes + sizeof(T));
    std::memcpy(&v, bytes, sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = to_little(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ResourceError("truncated path binary");
  return to_little(v);
}

}  // namespace

Grid::Grid(std::size_t num_steps) : steps_(num_steps) {
  if (num_steps == 0) throw DomainError("grid needs at least one step");
}

double Grid::time(std::size_t k) const {
  if (k > steps_) throw DomainError("grid index out of range");
  if (k == steps_) return 1.0;
  return static_cast<double>(k) / static_cast<double>(steps_);
}

std::size_t Grid::nearest_index(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0,1]");
  const double x = t * static_cast<double>(steps_);
  auto k = static_cast<std::size_t>(std::floor(x));
  if (x - static_cast<double>(k) > 0.5) ++k;
  return std::min(k, steps_);
}

std::size_t Grid::aligned_index(double t) const {
  const std::size_t k = nearest_index(t);
  if (std::abs(t * static_cast<double>(steps_) - static_cast<double>(k)) > 1e-9)
    throw DomainError("time " + std::to_string(t) + " is not on the grid");
  return k;
}

Path::Path(Grid grid, Matrix values) : grid_(grid), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.rows()) != grid_.num_points())
    throw DomainError("path needs " + std::to_string(grid_.num_points()) + " rows, got " +
                      std::to_string(values_.rows()));
  if (!values_.allFinite()) throw DomainError("path values must be finite");
  if (values_.cols() > 0 && values_.row(0).cwiseAbs().maxCoeff() != 0.0)
    throw DomainError("path must start at the origin");
}

Path Path::from_samples(const Matrix& samples) {
  if (samples.rows() < 2) throw DomainError("need at least two samples");
  Matrix v = samples.rowwise() - samples.row(0);
  return Path(Grid(static_cast<std::size_t>(samples.rows() - 1)), std::move(v));
}

Path Path::zero(Grid grid, std::size_t channels) {
  return Path(grid, Matrix::Zero(static_cast<Eigen::Index>(grid.num_points()),
                                 static_cast<Eigen::Index>(channels)));
}

Vector Path::increment(std::size_t k) const {
  if (k >= grid_.num_steps()) throw DomainError("segment index out of range");
  const auto i = static_cast<Eigen::Index>(k);
  return (values_.row(i + 1) - values_.row(i)).transpose();
}

Vector eval_at(const Path& p, double t) {
  const Grid& g = p.grid();
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time " + std::to_string(t) + " outside [0,1]");
  const double x = t * static_cast<double>(g.num_steps());
  auto k = static_cast<std::size_t>(std::floor(x));
  if (k >= g.num_steps()) return p.value(g.num_steps());
  const double w = x - static_cast<double>(k);
  if (w == 0.0) return p.value(k);
  return (1.0 - w) * p.value(k) + w * p.value(k + 1);
}

Path restrict(const Path& p, double s, double t) {
  if (s > t) throw DomainError("restrict needs s <= t");
  const std::size_t a = p.grid().nearest_index(s);
  const std::size_t b = p.grid().nearest_index(t);
  Matrix v(p.values().rows(), p.values().cols());
  const Eigen::RowVectorXd ps = p.values().row(static_cast<Eigen::Index>(a));
  for (Eigen::Index k = 0; k < v.rows(); ++k) {
    const auto kk = static_cast<std::size_t>(k);
    if (kk <= a)
      v.row(k).setZero();
    else if (kk <= b)
      v.row(k) = p.values().row(k) - ps;
    else
      v.row(k) = p.values().row(static_cast<Eigen::Index>(b)) - ps;
  }
  return Path(p.grid(), std::move(v));
}

Path time_augment(const Path& p, bool with_t2) {
  const Eigen::Index extra = with_t2 ? 2 : 1;
  Matrix v(p.values().rows(), p.values().cols() + extra);
  for (Eigen::Index k = 0; k < v.rows(); ++k) {
    const double t = p.grid().time(static_cast<std::size_t>(k));
    v(k, 0) = t;
    if (with_t2) v(k, 1) = t * t;
  }
  v.rightCols(p.values().cols()) = p.values();
  return Path(p.grid(), std::move(v));
}

double one_variation(const Path& p) {
  const Matrix& v = p.values();
  if (v.rows() < 2) return 0.0;
  return (v.bottomRows(v.rows() - 1) - v.topRows(v.rows() - 1)).cwiseAbs().sum();
}

Path concat(const Path& p, const Path& q) {
  if (p.channels() != q.channels()) throw DomainError("concat: channel mismatch");
  if (!(p.grid() == q.grid())) throw DomainError("concat: grid mismatch");
  const Eigen::Index L = static_cast<Eigen::Index>(p.num_steps());
  Matrix v(2 * L + 1, p.values().cols());
  v.topRows(L + 1) = p.values();
  v.bottomRows(L + 1) = q.values().rowwise() + p.values().row(L);
  return Path(Grid(2 * p.num_steps()), std::move(v));
}

Path reverse(const Path& p) {
  const Matrix& src = p.values();
  const Eigen::Index L = src.rows() - 1;
  Matrix v(src.rows(), src.cols());
  for (Eigen::Index k = 0; k <= L; ++k) v.row(k) = src.row(L - k) - src.row(L);
  return Path(p.grid(), std::move(v));
}

Path hstack(const Path& a, const Path& b) {
  if (!(a.grid() == b.grid())) throw DomainError("hstack: grid mismatch");
  Matrix v(a.values().rows(), a.values().cols() + b.values().cols());
  v << a.values(), b.values();
  return Path(a.grid(), std::move(v));
}

void write_samples_binary(std::ostream& out, const Matrix& samples) {
  if (samples.rows() < 1) throw DomainError("nothing to write");
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(samples.rows() - 1));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(samples.cols()));
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c) put<double>(out, samples(r, c));
  if (!out) throw ResourceError("failed writing path binary");
}

Matrix read_samples_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw ResourceError("not an SSMPATH1 stream");
  const auto L = get<std::uint32_t>(in);
  const auto d = get<std::uint32_t>(in);
  Matrix m(static_cast<Eigen::Index>(L) + 1, static_cast<Eigen::Index>(d));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in);
  return m;
}

void write_path_binary(std::ostream& out, const Path& p) { write_samples_binary(out, p.values()); }

Path read_path_binary(std::istream& in) {
  Matrix m = read_samples_binary(in);
  if (m.rows() < 2) throw DomainError("path binary needs at least one step");
  const Grid grid(static_cast<std::size_t>(m.rows() - 1));
  return Path(grid, std::move(m));
}

nlohmann::json samples_to_json(const Matrix& samples) {
  nlohmann::json values = nlohmann::json::array();
  for (Eigen::Index r = 0; r < samples.rows(); ++r)
    for (Eigen::Index c = 0; c < samples.cols(); ++c) values.push_back(samples(r, c));
  return {{"grid_steps", samples.rows() - 1}, {"channels", samples.cols()}, {"values", values}};
}

Matrix samples_from_json(const nlohmann::json& j) {
  const auto L = j.at("grid_steps").get<std::int64_t>();
  const auto d = j.at("channels").get<std::int64_t>();
  const auto& values = j.at("values");
  if (L < 0 || d < 0) throw DomainError("negative shape in path json");
  if (values.size() != static_cast<std::size_t>((L + 1) * d))
    throw DomainError("path json: values length does not match (grid_steps+1)*channels");
  Matrix m(L + 1, d);
  std::size_t n = 0;
  for (Eigen::Index r = 0; r <= L; ++r)
    for (Eigen::Index c = 0; c < d; ++c) m(r, c) = values[n++].get<double>();
  return m;
}

nlohmann::json to_json(const Path& p) { return samples_to_json(p.values()); }

Path path_from_json(const nlohmann::json& j) {
  Matrix m = samples_from_json(j);
  if (m.rows() < 2) throw DomainError("path json needs at least one step");
  const Grid grid(static_cast<std::size_t>(m.rows() - 1));
  return Path(grid, std::move(m));
}

nlohmann::json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (rows < 0 || cols < 0 || data.size() != static_cast<std::size_t>(rows * cols))
    throw DomainError("matrix json: data length does not match rows*cols");
  Matrix m(rows, cols);
  std::size_t n = 0;
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[n++].get<double>();
  return m;
}

}  // namespace ssmcde
