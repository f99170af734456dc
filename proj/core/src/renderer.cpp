#include "cdr/renderer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>

#include "cdr/util.hpp"

namespace cdr {
namespace {

constexpr double kTau = 2.0 * std::numbers::pi;

double frac(double v) { return v - std::floor(v); }

double lerp(double a, double b, double t) { return a + (b - a) * t; }

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {lerp(a.r, b.r, t), lerp(a.g, b.g, t), lerp(a.b, b.b, t)};
}

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

// Cycles per world unit; keeps patterns resolvable at 16 px and coarse at 64.
double spatial_freq(double f01) { return 1.0 + 7.0 * f01; }

double square_wave(double s) { return frac(s) < 0.5 ? 0.0 : 1.0; }

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

uint64_t quantize(double v) { return static_cast<uint64_t>(v * 9007199254740992.0); }

double lattice_value(uint64_t salt, int64_t ix, int64_t iy) {
  uint64_t h = mix64(salt ^ mix64(static_cast<uint64_t>(ix) * 0x9e3779b97f4a7c15ull ^
                                  static_cast<uint64_t>(iy)));
  return bits_to_unit(h);
}

double value_noise(const TextureSpec& spec, Vec2 p, double f) {
  uint64_t salt = mix64(quantize(spec.params[1]) ^ mix64(quantize(spec.params[2])));
  double sx = p.x * f, sy = p.y * f;
  double fx = std::floor(sx), fy = std::floor(sy);
  auto ix = static_cast<int64_t>(fx), iy = static_cast<int64_t>(fy);
  double tx = smoothstep(sx - fx), ty = smoothstep(sy - fy);
  double v00 = lattice_value(salt, ix, iy), v10 = lattice_value(salt, ix + 1, iy);
  double v01 = lattice_value(salt, ix, iy + 1), v11 = lattice_value(salt, ix + 1, iy + 1);
  return lerp(lerp(v00, v10, tx), lerp(v01, v11, tx), ty);
}

double pattern_value(const TextureSpec& spec, Vec2 p) {
  const double freq = spatial_freq(spec.params[0]);
  const double phase = spec.params[1];
  const double rot = spec.params[2];

  // Gradients keep their identity under any rotation; the oriented families
  // only get jitter so stripes stay distinguishable from diagonal stripes.
  double theta = (rot - 0.5) * (std::numbers::pi / 5.0);
  if (spec.family == TextureFamily::Gradient) theta = rot * kTau;
  const double c = std::cos(theta), s = std::sin(theta);
  const Vec2 q{c * p.x + s * p.y, -s * p.x + c * p.y};

  switch (spec.family) {
    case TextureFamily::Solid:
      return 0.0;
    case TextureFamily::HStripes:
      return square_wave(q.y * freq + phase);
    case TextureFamily::DStripes:
      return square_wave((q.x + q.y) * freq / kSqrt2 + phase);
    case TextureFamily::Checker: {
      double a = std::floor(q.x * freq + phase) + std::floor(q.y * freq + phase);
      return std::fmod(std::fabs(a), 2.0) < 0.5 ? 0.0 : 1.0;
    }
    case TextureFamily::Dots: {
      double u = frac(q.x * freq + phase) - 0.5;
      double v = frac(q.y * freq + phase) - 0.5;
      return u * u + v * v < 0.3 * 0.3 ? 1.0 : 0.0;
    }
    case TextureFamily::Rings:
      return square_wave(q.norm() * freq + phase);
    case TextureFamily::Gradient:
      return clamp01(0.5 + q.x * freq * 0.25 + (phase - 0.5) * 0.5);
    case TextureFamily::ValueNoise:
      return value_noise(spec, q, freq);
  }
  throw std::invalid_argument(str_cat("pattern_value: bad texture family ",
                                      static_cast<int>(spec.family)));
}

void check_resolution(int resolution) {
  CDR_REQUIRE(resolution == 16 || resolution == 32 || resolution == 64,
              "resolution must be one of {16, 32, 64}, got ", resolution);
}

void hash_accumulate(uint64_t& h, uint64_t v) {
  h ^= v;
  h *= 0x100000001b3ull;
  h = mix64(h);
}

void hash_accumulate(uint64_t& h, double v) { hash_accumulate(h, std::bit_cast<uint64_t>(v)); }

void hash_accumulate(uint64_t& h, const TextureSpec& t) {
  hash_accumulate(h, static_cast<uint64_t>(t.family));
  for (double p : t.params) hash_accumulate(h, p);
  for (const Rgb& color : t.palette) {
    hash_accumulate(h, color.r);
    hash_accumulate(h, color.g);
    hash_accumulate(h, color.b);
  }
}

TextureSpec sample_texture(Rng& rng, const FamilyPool& pool) {
  TextureSpec spec;
  spec.family = pool[rng.uniform_int(static_cast<int>(pool.size()))];
  for (double& p : spec.params) p = rng.uniform();
  for (Rgb& color : spec.palette) {
    color.r = rng.uniform();
    color.g = rng.uniform();
    color.b = rng.uniform();
  }
  return spec;
}

}  // namespace

const char* family_name(TextureFamily f) {
  switch (f) {
    case TextureFamily::Solid: return "solid";
    case TextureFamily::HStripes: return "hstripes";
    case TextureFamily::DStripes: return "dstripes";
    case TextureFamily::Checker: return "checker";
    case TextureFamily::Dots: return "dots";
    case TextureFamily::Rings: return "rings";
    case TextureFamily::Gradient: return "gradient";
    case TextureFamily::ValueNoise: return "valuenoise";
  }
  return "unknown";
}

int64_t Mask::count() const {
  int64_t n = 0;
  for (uint8_t b : bits) n += b != 0;
  return n;
}

Rgb texture_color(const TextureSpec& spec, Vec2 uv) {
  double t = pattern_value(spec, uv);
  if (spec.family == TextureFamily::Solid) {
    return lerp(spec.palette[0], spec.palette[1], spec.params[3]);
  }
  // mix sets contrast; patterns never collapse to a flat color.
  double contrast = 0.3 + 0.7 * spec.params[3];
  return lerp(spec.palette[0], spec.palette[1], 0.5 + (t - 0.5) * contrast);
}

Observation render(const WorldState& state, const DomainParams& domain, int resolution) {
  check_resolution(resolution);
  CDR_REQUIRE(domain.body_textures.size() == state.bodies.size(),
              "domain has ", domain.body_textures.size(), " body textures for ",
              state.bodies.size(), " bodies");
  CDR_REQUIRE(domain.light >= kLightMin && domain.light <= kLightMax,
              "light ", domain.light, " outside [", kLightMin, ", ", kLightMax, "]");
  CDR_REQUIRE(domain.pixel_noise_std >= 0.0 && domain.pixel_noise_std <= kPixelNoiseMax,
              "pixel noise std ", domain.pixel_noise_std, " outside [0, ", kPixelNoiseMax, "]");

  const int n = resolution;
  const double half = state.frame_half_extent;
  const double px = 2.0 * half / n;

  Observation obs;
  obs.height = obs.width = n;
  obs.pixels.assign(static_cast<size_t>(n) * n * 3, 0.0);

  for (int y = 0; y < n; ++y) {
    const double wy = half - (y + 0.5) * px;
    for (int x = 0; x < n; ++x) {
      const double wx = -half + (x + 0.5) * px;
      const Vec2 center{wx, wy};

      Rgb color = texture_color(domain.background, center);
      for (size_t b = 0; b < state.bodies.size(); ++b) {
        if (state.bodies[b].contains(center)) {
          color = texture_color(domain.body_textures[b], center - state.bodies[b].position);
        }
      }

      const size_t base = (static_cast<size_t>(y) * n + x) * 3;
      const double ch[3] = {color.r, color.g, color.b};
      for (int c = 0; c < 3; ++c) {
        double v = ch[c] * domain.light;
        if (domain.pixel_noise_std > 0.0) {
          v += domain.pixel_noise_std * hash_normal(domain.noise_seed, base + c);
        }
        obs.pixels[base + c] = clamp01(v);
      }
    }
  }
  return obs;
}

Mask render_mask(const WorldState& state, int resolution) {
  check_resolution(resolution);
  const int n = resolution;
  const double half = state.frame_half_extent;
  const double px = 2.0 * half / n;

  Mask mask;
  mask.height = mask.width = n;
  mask.bits.assign(static_cast<size_t>(n) * n, 0);
  for (int y = 0; y < n; ++y) {
    const double wy = half - (y + 0.5) * px;
    for (int x = 0; x < n; ++x) {
      const Vec2 center{-half + (x + 0.5) * px, wy};
      for (const Body& body : state.bodies) {
        if (body.contains(center)) {
          mask.bits[static_cast<size_t>(y) * n + x] = 1;
          break;
        }
      }
    }
  }
  return mask;
}

DomainParams sample_domain(Rng& rng, const FamilyPool& pool, int body_count) {
  CDR_REQUIRE(!pool.empty(), "sample_domain: empty family pool");
  CDR_REQUIRE(body_count >= 1, "sample_domain: body_count must be positive, got ", body_count);
  DomainParams domain;
  domain.background = sample_texture(rng, pool);
  domain.body_textures.reserve(body_count);
  for (int b = 0; b < body_count; ++b) domain.body_textures.push_back(sample_texture(rng, pool));
  domain.light = rng.uniform(kLightMin, kLightMax);
  domain.pixel_noise_std = rng.uniform(0.0, kPixelNoiseMax);
  domain.noise_seed = rng.bits();
  return domain;
}

std::pair<FamilyPool, FamilyPool> split_families(int holdout_count, uint64_t split_seed) {
  CDR_REQUIRE(holdout_count >= 0 && holdout_count < kTextureFamilyCount,
              "holdout_count must be in [0, ", kTextureFamilyCount - 1, "], got ", holdout_count);
  std::array<TextureFamily, kTextureFamilyCount> all{};
  for (int i = 0; i < kTextureFamilyCount; ++i) all[i] = static_cast<TextureFamily>(i);

  Rng rng(derive_seed(split_seed, "family_split"));
  for (int i = kTextureFamilyCount - 1; i > 0; --i) {
    std::swap(all[i], all[rng.uniform_int(i + 1)]);
  }

  FamilyPool train(all.begin(), all.end() - holdout_count);
  FamilyPool held(all.end() - holdout_count, all.end());
  std::sort(train.begin(), train.end());
  std::sort(held.begin(), held.end());
  return {train, held};
}

uint64_t domain_fingerprint(const DomainParams& domain) {
  uint64_t h = 0xcbf29ce484222325ull;
  hash_accumulate(h, domain.background);
  hash_accumulate(h, static_cast<uint64_t>(domain.body_textures.size()));
  for (const TextureSpec& t : domain.body_textures) hash_accumulate(h, t);
  hash_accumulate(h, domain.light);
  hash_accumulate(h, domain.pixel_noise_std);
  hash_accumulate(h, domain.noise_seed);
  return h;
}

}  // namespace cdr
