#ifndef USC_COMMON_HPP
#define USC_COMMON_HPP

#include <cstdint>
#include <cstring>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace usc {

/// Thrown when an operation receives arguments that violate its contract.
class InvalidParameter : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Thrown when an estimation problem is underdetermined (e.g. < 2 arrivals).
class InsufficientData : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Thrown on malformed or incompatible on-disk artifacts.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for content hashes of geometries, dictionaries and configs.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t hash_combine(std::uint64_t h, const void* data, std::size_t n) {
  return fnv1a64(data, n, h);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::uint64_t v) {
  return fnv1a64(&v, sizeof v, h);
}

inline std::uint64_t hash_combine(std::uint64_t h, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  return hash_combine(h, bits);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::string_view s) {
  return fnv1a64(s.data(), s.size(), h);
}

inline std::uint64_t hash_combine(std::uint64_t h, std::span<const double> v) {
  for (double x : v) h = hash_combine(h, x);
  return h;
}

/// Derives a named RNG substream from one master seed, so that e.g. phantom
/// draws and dictionary initialization stay independent and reproducible.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = hash_combine(0xcbf29ce484222325ull, master);
  h = hash_combine(h, name);
  return h;
}

inline std::mt19937_64 substream_rng(std::uint64_t master, std::string_view name) {
  return std::mt19937_64(substream_seed(master, name));
}

}  // namespace usc

#endif
