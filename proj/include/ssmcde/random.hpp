#pragma once

#include <cstdint>

namespace ssmcde {

// Counter-based draws: the value depends only on (seed, tag, index).
std::uint64_t mix64(std::uint64_t x);
double uniform01(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);  // in (0,1)
double std_normal(std::uint64_t seed, std::uint64_t tag, std::uint64_t index);

// Stable tag from a short name, e.g. tag_of("A0").
std::uint64_t tag_of(const char* name);

}  // namespace ssmcde
