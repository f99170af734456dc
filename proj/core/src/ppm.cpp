#include "cdr/ppm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "cdr/util.hpp"

namespace cdr {
namespace {

uint8_t to_byte(double v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

void write_p6(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open ", path, " for writing"));
  out << "P6\n" << width << " " << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
  if (!out) throw std::runtime_error(str_cat("short write to ", path));
}

}  // namespace

void write_ppm(const std::string& path, const Observation& obs) {
  CDR_REQUIRE(obs.width > 0 && obs.height > 0, "write_ppm: empty observation");
  CDR_REQUIRE(obs.pixels.size() == static_cast<size_t>(obs.width) * obs.height * 3,
              "write_ppm: pixel buffer size mismatch");
  std::vector<uint8_t> rgb(obs.pixels.size());
  for (size_t i = 0; i < obs.pixels.size(); ++i) rgb[i] = to_byte(obs.pixels[i]);
  write_p6(path, obs.width, obs.height, rgb);
}

void write_ppm(const std::string& path, const Mask& mask) {
  CDR_REQUIRE(mask.width > 0 && mask.height > 0, "write_ppm: empty mask");
  std::vector<uint8_t> rgb(static_cast<size_t>(mask.width) * mask.height * 3);
  for (size_t i = 0; i < mask.bits.size(); ++i) {
    uint8_t v = mask.bits[i] ? 255 : 0;
    rgb[i * 3] = rgb[i * 3 + 1] = rgb[i * 3 + 2] = v;
  }
  write_p6(path, mask.width, mask.height, rgb);
}

}  // namespace cdr
