#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace bandforge {

// Error taxonomy. The CLI maps ValidationError/ConfigError to exit code 1
// and NumericError to exit code 2.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// SplitMix64: used to derive independent, order-free substream seeds from
// (seed, index) pairs so per-sample work is reproducible regardless of
// evaluation order.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d649bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(seed ^ splitmix64(index + 0x51ed2700215fULL));
}

inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t index) {
  return std::mt19937_64(substream_seed(seed, index));
}

}  // namespace bandforge
