#pragma once

#include <stdexcept>
#include <string>

namespace ssmcde {

// Invalid argument: out-of-range times, shape mismatches, bad enum names.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A state or loss became non-finite.
class OverflowError : public std::overflow_error {
 public:
  using std::overflow_error::overflow_error;
};

// Missing files or a requested allocation over budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ssmcde
