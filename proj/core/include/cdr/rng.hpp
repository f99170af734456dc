#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cdr {

// splitmix64 finalizer; used for seed derivation and stateless hashing.
constexpr uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// FNV-1a over a label, for naming seed streams.
uint64_t stream_id(std::string_view name);

// Child seed for a named stream of a root seed.
inline uint64_t derive_seed(uint64_t root, uint64_t stream) {
  return mix64(root ^ mix64(stream));
}
inline uint64_t derive_seed(uint64_t root, std::string_view name) {
  return derive_seed(root, stream_id(name));
}

// Map 64 random bits to [0,1). Used everywhere instead of
// std::uniform_real_distribution so sampled values do not depend on the
// standard library implementation.
inline double bits_to_unit(uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

// Deterministic generator: mt19937_64 engine with hand-rolled mappings.
class Rng {
 public:
  explicit Rng(uint64_t seed) : eng_(seed) {}

  uint64_t bits() { return eng_(); }
  double uniform() { return bits_to_unit(bits()); }  // [0,1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, n); n >= 1. Rejection-free modulo is fine here,
  // n is tiny compared to 2^64.
  int uniform_int(int n) { return static_cast<int>(bits() % static_cast<uint64_t>(n)); }
  double normal();  // standard normal, Box-Muller with cached spare

 private:
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

// Stateless per-index standard normal, for order-independent pixel noise.
double hash_normal(uint64_t seed, uint64_t index);

}  // namespace cdr
