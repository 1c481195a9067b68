#include "ssmcde/random.hpp"

#include <cmath>
#include <numbers>

namespace ssmcde {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

namespace {

double to_open_unit(std::uint64_t bits) {
  // 53 random bits, shifted off zero.
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t key(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return mix64(mix64(mix64(seed) ^ tag) ^ index);
}

}  // namespace

double uniform01(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return to_open_unit(key(seed, tag, index));
}

double std_normal(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  const std::uint64_t k = key(seed, tag, index);
  const double u1 = to_open_unit(k);
  const double u2 = to_open_unit(mix64(k ^ 0x5851f42d4c957f2dULL));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t tag_of(const char* name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (const char* c = name; *c; ++c) {
    h ^= static_cast<unsigned char>(*c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ssmcde
