#pragma once

#include <string>

#include "cdr/renderer.hpp"

namespace cdr {

// Binary P6, 8 bits per channel. Throws std::runtime_error on I/O failure.
void write_ppm(const std::string& path, const Observation& obs);

// Mask preview: object pixels white, background black.
void write_ppm(const std::string& path, const Mask& mask);

}  // namespace cdr
