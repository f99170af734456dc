#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "cdr/autodiff.hpp"

namespace cdr {

using ConfigHash = std::array<uint8_t, 32>;

std::string hash_hex(const ConfigHash& hash);

struct CheckpointManifest {
  std::string arch;
  ConfigHash config_hash{};
};

// Little-endian binary container for a ParamStore: magic "CDRW", format
// version, manifest, then one record per tensor. Adam moments ride along as
// "<name>.adam_m" / "<name>.adam_v" records plus an "adam.step" scalar, so a
// reloaded run resumes the optimizer exactly.
void save_checkpoint(const std::string& path, const ParamStore& store,
                     const CheckpointManifest& manifest);

// Loads records into `store` (replacing any same-named tensors) and returns
// the manifest. Throws std::runtime_error on malformed files.
CheckpointManifest load_checkpoint(const std::string& path, ParamStore& store);

}  // namespace cdr
