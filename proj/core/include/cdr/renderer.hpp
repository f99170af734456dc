#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cdr/rng.hpp"
#include "cdr/worldsim.hpp"

namespace cdr {

enum class TextureFamily : uint8_t {
  Solid = 0,
  HStripes = 1,
  DStripes = 2,
  Checker = 3,
  Dots = 4,
  Rings = 5,
  Gradient = 6,
  ValueNoise = 7,
};
inline constexpr int kTextureFamilyCount = 8;
const char* family_name(TextureFamily f);

struct Rgb {
  double r = 0.0, g = 0.0, b = 0.0;
};

struct TextureSpec {
  TextureFamily family = TextureFamily::Solid;
  // frequency, phase, rotation, mix; all in [0,1].
  std::array<double, 4> params{};
  std::array<Rgb, 2> palette{};
};

// The irrelevant scene properties e: what things look like, never where they are.
struct DomainParams {
  TextureSpec background;
  std::vector<TextureSpec> body_textures;  // one per body
  double light = 1.0;            // multiplicative, [0.5, 1.5]
  double pixel_noise_std = 0.0;  // Gaussian sensor noise, [0, 0.05]
  uint64_t noise_seed = 0;
};

inline constexpr double kLightMin = 0.5, kLightMax = 1.5;
inline constexpr double kPixelNoiseMax = 0.05;

struct Observation {
  int height = 0, width = 0;
  std::vector<double> pixels;  // H*W*3 row-major, values in [0,1]

  double& at(int y, int x, int c) { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
  double at(int y, int x, int c) const { return pixels[(static_cast<size_t>(y) * width + x) * 3 + c]; }
};

struct Mask {
  int height = 0, width = 0;
  std::vector<uint8_t> bits;  // 1 = any object pixel

  bool at(int y, int x) const { return bits[static_cast<size_t>(y) * width + x] != 0; }
  int64_t count() const;
};

using FamilyPool = std::vector<TextureFamily>;

// Overhead orthographic rasterization of (state, domain). Pixel membership is
// by center test, later bodies draw on top, light scales colors, pixel noise
// is seeded Gaussian; the result is bitwise deterministic.
Observation render(const WorldState& state, const DomainParams& domain, int resolution);

// Object-pixel mask; depends on the state only.
Mask render_mask(const WorldState& state, int resolution);

// Sample e: families from the pool, texture params and palettes uniform,
// light in [kLightMin, kLightMax], noise std in [0, kPixelNoiseMax].
DomainParams sample_domain(Rng& rng, const FamilyPool& pool, int body_count);

// Deterministic (train, held-out) partition of all families.
std::pair<FamilyPool, FamilyPool> split_families(int holdout_count, uint64_t split_seed);

// Procedural color lookup; exposed for texture tests.
Rgb texture_color(const TextureSpec& spec, Vec2 uv);

// Stable fingerprint over all fields, for same-domain contract checks and
// collision tests.
uint64_t domain_fingerprint(const DomainParams& domain);

}  // namespace cdr
