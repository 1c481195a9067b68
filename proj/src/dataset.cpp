#include "ssmcde/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "ssmcde/errors.hpp"
#include "ssmcde/random.hpp"

namespace ssmcde {

namespace {

constexpr char kMagic[8] = {'S', 'S', 'M', 'D', 'A', 'T', 'A', '1'};

template <typename T>
void put(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host expected");
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ResourceError("truncated dataset file");
  return v;
}

}  // namespace

Word dataset_target_word(int dim) {
  if (dim == 2) return {0, 1};
  if (dim == 3) return {0, 1, 2};
  throw DomainError("dataset dim must be 2 or 3");
}

Word Dataset::target_word() const { return dataset_target_word(spec.dim); }

double Dataset::target_variance(bool test_split) const {
  const std::size_t a = test_split ? num_train : 0;
  const std::size_t b = test_split ? targets.size() : num_train;
  if (b <= a) return 0.0;
  double mean = 0.0;
  for (std::size_t i = a; i < b; ++i) mean += targets[i];
  mean /= static_cast<double>(b - a);
  double var = 0.0;
  for (std::size_t i = a; i < b; ++i) var += (targets[i] - mean) * (targets[i] - mean);
  return var / static_cast<double>(b - a);
}

nlohmann::json Dataset::metadata() const {
  return {{"num_samples", samples.size()},
          {"dim", spec.dim},
          {"num_steps", spec.num_steps},
          {"seed", spec.seed},
          {"normalization", "global affine over all samples and channels"},
          {"bounds", {spec.lower, spec.upper}},
          {"scale", scale},
          {"shift", shift},
          {"train_fraction", spec.train_fraction},
          {"num_train", num_train},
          {"target_word", target_word()}};
}

Dataset dataset_from_walks(DatasetSpec spec, std::vector<Matrix> walks) {
  if (walks.empty()) throw DomainError("dataset needs at least one sample");
  if (!(spec.lower < spec.upper)) throw DomainError("normalization bounds must satisfy lower < upper");
  if (!(spec.train_fraction >= 0.0 && spec.train_fraction <= 1.0))
    throw DomainError("train_fraction must lie in [0,1]");
  spec.num_samples = walks.size();
  spec.num_steps = static_cast<std::size_t>(walks[0].rows() - 1);
  spec.dim = static_cast<int>(walks[0].cols());
  const Word word = dataset_target_word(spec.dim);
  double lo = INFINITY, hi = -INFINITY;
  for (const auto& w : walks) {
    if (w.rows() != walks[0].rows() || w.cols() != walks[0].cols())
      throw DomainError("all walks must have the same shape");
    lo = std::min(lo, w.minCoeff());
    hi = std::max(hi, w.maxCoeff());
  }
  Dataset ds;
  ds.spec = spec;
  if (hi > lo) {
    ds.scale = (spec.upper - spec.lower) / (hi - lo);
    ds.shift = spec.lower - ds.scale * lo;
  } else {
    ds.scale = 1.0;
    ds.shift = 0.0;
  }
  ds.samples.reserve(walks.size());
  ds.targets.reserve(walks.size());
  for (auto& w : walks) {
    Matrix v = (ds.scale * w.array() + ds.shift).matrix();
    v = v.cwiseMax(spec.lower).cwiseMin(spec.upper);  // rounding guard at the extremes
    const Path p = Path::from_samples(v);
    ds.targets.push_back(signature(p, static_cast<int>(word.size()))[word]);
    ds.samples.push_back(std::move(v));
  }
  ds.num_train = static_cast<std::size_t>(std::floor(spec.train_fraction * static_cast<double>(walks.size())));
  return ds;
}

std::vector<Matrix> gen_walks(std::size_t count, int dim, std::size_t steps, std::uint64_t seed) {
  if (dim < 1 || steps == 0) throw DomainError("walk sizes must be positive");
  const auto L = static_cast<Eigen::Index>(steps);
  const Eigen::Index d = dim;
  const std::uint64_t tag = tag_of("increments");
  std::vector<Matrix> walks;
  walks.reserve(count);
  for (std::size_t s = 0; s < count; ++s) {
    Matrix w = Matrix::Zero(L + 1, d);
    for (Eigen::Index k = 0; k < L; ++k)
      for (Eigen::Index c = 0; c < d; ++c) {
        const auto idx = (static_cast<std::uint64_t>(s) * static_cast<std::uint64_t>(L) +
                          static_cast<std::uint64_t>(k)) * static_cast<std::uint64_t>(d) +
                         static_cast<std::uint64_t>(c);
        w(k + 1, c) = w(k, c) + std::nearbyint(std_normal(seed, tag, idx));
      }
    walks.push_back(std::move(w));
  }
  return walks;
}

std::vector<Path> gen_normalized_paths(std::size_t count, int dim, std::size_t steps, std::uint64_t seed) {
  const auto walks = gen_walks(count, dim, steps, seed);
  double lo = 0.0, hi = 0.0;
  for (const auto& w : walks) {
    lo = std::min(lo, w.minCoeff());
    hi = std::max(hi, w.maxCoeff());
  }
  const double scale = hi > lo ? 2.0 / (hi - lo) : 1.0;
  std::vector<Path> out;
  out.reserve(walks.size());
  for (const auto& w : walks) out.push_back(Path::from_samples(scale * w));
  return out;
}

Dataset gen_dataset(const DatasetSpec& spec) {
  if (spec.num_samples == 0 || spec.num_steps == 0) throw DomainError("dataset sizes must be positive");
  dataset_target_word(spec.dim);
  return dataset_from_walks(spec, gen_walks(spec.num_samples, spec.dim, spec.num_steps, spec.seed));
}

void write_dataset(std::ostream& out, const Dataset& ds) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.samples.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.spec.num_steps));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.spec.dim));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ds.num_train));
  put<std::uint64_t>(out, ds.spec.seed);
  put<double>(out, ds.spec.lower);
  put<double>(out, ds.spec.upper);
  put<double>(out, ds.spec.train_fraction);
  put<double>(out, ds.scale);
  put<double>(out, ds.shift);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const Matrix& m = ds.samples[i];
    for (Eigen::Index r = 0; r < m.rows(); ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) put<double>(out, m(r, c));
    put<double>(out, ds.targets[i]);
  }
  if (!out) throw ResourceError("failed writing dataset");
}

Dataset read_dataset(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw ResourceError("not an SSMDATA1 file");
  Dataset ds;
  const auto n = get<std::uint32_t>(in);
  ds.spec.num_samples = n;
  ds.spec.num_steps = get<std::uint32_t>(in);
  ds.spec.dim = static_cast<int>(get<std::uint32_t>(in));
  ds.num_train = get<std::uint32_t>(in);
  ds.spec.seed = get<std::uint64_t>(in);
  ds.spec.lower = get<double>(in);
  ds.spec.upper = get<double>(in);
  ds.spec.train_fraction = get<double>(in);
  ds.scale = get<double>(in);
  ds.shift = get<double>(in);
  const auto rows = static_cast<Eigen::Index>(ds.spec.num_steps + 1);
  for (std::uint32_t i = 0; i < n; ++i) {
    Matrix m(rows, ds.spec.dim);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get<double>(in);
    ds.samples.push_back(std::move(m));
    ds.targets.push_back(get<double>(in));
  }
  return ds;
}

void save_dataset(const std::string& file, const Dataset& ds) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw ResourceError("cannot open " + file + " for writing");
  write_dataset(out, ds);
  std::ofstream meta(file + ".json");
  if (!meta) throw ResourceError("cannot open " + file + ".json for writing");
  meta << ds.metadata().dump(2) << '\n';
}

Dataset load_dataset(const std::string& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw ResourceError("dataset not found: " + file);
  return read_dataset(in);
}

}  // namespace ssmcde
