// Shared plumbing: error types, hashing, deterministic RNG, small helpers.
#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <string_view>

namespace minimt {

// Bad run configuration (unresolved corpus, invalid experiment file, ...).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Failure inside the optimization loop; carries step and tensor context in the message.
struct TrainError : std::runtime_error {
  explicit TrainError(const std::string& msg) : std::runtime_error(msg) {}
};

// FNV-1a, used for config/input fingerprints and run directory names.
inline std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string to_hex(std::uint64_t v);

// Fingerprint of a file's raw bytes. Throws ConfigError if the file cannot be read.
std::uint64_t fingerprint_file(const std::string& path);

namespace detail {
// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}
}  // namespace detail

// Counter-based generator: draw i of a stream is mix64(key + i*golden), so
// independently derived streams are reproducible regardless of evaluation
// order. Integer-only state; identical output on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t key) : key_(key) {}

  // Derives an independent stream from a seed plus structural indices
  // (e.g. {sentence_index} or {pass, batch}).
  static Rng derive(std::uint64_t seed, std::initializer_list<std::uint64_t> stream) {
    std::uint64_t k = detail::mix64(seed);
    for (std::uint64_t s : stream) k = detail::mix64(k ^ detail::mix64(s ^ 0x517cc1b727220a95ull));
    return Rng(k);
  }

  std::uint64_t next_u64() { return detail::mix64(key_ + counter_++ * 0x9e3779b97f4a7c15ull); }

  // Uniform in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Lemire multiply-shift; bias is O(n / 2^64).
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller (cosine branch only, two draws per call).
  double next_gauss() {
    const double u1 = 1.0 - next_double();
    const double u2 = next_double();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace minimt
