#include "cdr/rng.hpp"

#include <cmath>
#include <numbers>

namespace cdr {

uint64_t stream_id(std::string_view name) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  // u1 in (0,1] keeps the log finite.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

double hash_normal(uint64_t seed, uint64_t index) {
  uint64_t h = mix64(seed ^ mix64(index));
  double u1 = 1.0 - bits_to_unit(h);
  double u2 = bits_to_unit(mix64(h + 0x9e3779b97f4a7c15ull));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace cdr
