#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "ssmcde/path.hpp"
#include "ssmcde/signature.hpp"

namespace ssmcde {

// Random walks with integer-rounded standard normal increments, rescaled by one
// global affine map so every value lies in [lower, upper]. The target is the
// iterated integral over letters 0,1 (dim 2) or 0,1,2 (dim 3).
struct DatasetSpec {
  std::size_t num_samples = 10000;
  int dim = 2;
  std::size_t num_steps = 100;
  std::uint64_t seed = 0;
  double lower = -1.0;
  double upper = 1.0;
  double train_fraction = 0.9;
};

struct Dataset {
  DatasetSpec spec;
  std::vector<Matrix> samples;  // (num_steps+1) x dim, normalized values
  std::vector<double> targets;
  double scale = 1.0;           // normalized = scale * raw + shift
  double shift = 0.0;
  std::size_t num_train = 0;    // first num_train samples train, rest test

  Word target_word() const;
  Path path(std::size_t i) const { return Path::from_samples(samples[i]); }
  std::size_t size() const { return samples.size(); }
  double target_variance(bool test_split) const;
  nlohmann::json metadata() const;
};

Word dataset_target_word(int dim);

Dataset gen_dataset(const DatasetSpec& spec);

// Raw integer random walks, (steps+1) x dim each, starting at 0.
std::vector<Matrix> gen_walks(std::size_t count, int dim, std::size_t steps, std::uint64_t seed);

// Walks mapped by one global affine map into [-1, 1], then basepointed. Any dim >= 1.
std::vector<Path> gen_normalized_paths(std::size_t count, int dim, std::size_t steps, std::uint64_t seed);

// Builds a dataset from given raw walks (each starting anywhere); the DatasetSpec's
// num_samples, num_steps and dim are taken from the walks.
Dataset dataset_from_walks(DatasetSpec spec, std::vector<Matrix> walks);

void write_dataset(std::ostream& out, const Dataset& ds);
Dataset read_dataset(std::istream& in);

// Writes <file> and a JSON sidecar <file>.json with the metadata.
void save_dataset(const std::string& file, const Dataset& ds);
Dataset load_dataset(const std::string& file);  // ResourceError when missing

}  // namespace ssmcde
