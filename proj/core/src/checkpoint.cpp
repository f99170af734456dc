#include "cdr/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "cdr/util.hpp"

namespace cdr {
namespace {

constexpr char kMagic[4] = {'C', 'D', 'R', 'W'};
constexpr uint16_t kVersion = 1;
constexpr const char* kAdamMomentM = ".adam_m";
constexpr const char* kAdamMomentV = ".adam_v";
constexpr const char* kAdamStep = "adam.step";

void put_bytes(std::ostream& out, const void* p, size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void put_le(std::ostream& out, T v) {
  static_assert(std::is_unsigned_v<T>);
  uint8_t buf[sizeof(T)];
  for (size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<uint8_t>(v >> (8 * i));
  put_bytes(out, buf, sizeof(T));
}

void put_f64(std::ostream& out, double v) { put_le(out, std::bit_cast<uint64_t>(v)); }

void get_bytes(std::istream& in, void* p, size_t n, const std::string& path) {
  in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (static_cast<size_t>(in.gcount()) != n)
    throw std::runtime_error(str_cat("truncated checkpoint ", path));
}

template <class T>
T get_le(std::istream& in, const std::string& path) {
  uint8_t buf[sizeof(T)];
  get_bytes(in, buf, sizeof(T), path);
  T v = 0;
  for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(buf[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& in, const std::string& path) {
  return std::bit_cast<double>(get_le<uint64_t>(in, path));
}

void put_record(std::ostream& out, const std::string& name, const Tensor& t) {
  put_le(out, static_cast<uint32_t>(name.size()));
  put_bytes(out, name.data(), name.size());
  put_le(out, static_cast<uint32_t>(t.rank()));
  for (int d : t.shape) put_le(out, static_cast<uint32_t>(d));
  for (double v : t.data) put_f64(out, v);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

std::string hash_hex(const ConfigHash& hash) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (uint8_t b : hash) {
    out.push_back(digits[b >> 4]);
    out.push_back(digits[b & 0xf]);
  }
  return out;
}

void save_checkpoint(const std::string& path, const ParamStore& store,
                     const CheckpointManifest& manifest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(str_cat("cannot open ", path, " for writing"));

  uint64_t records = 0;
  for (const std::string& name : store.names()) {
    records += 1 + (store.has_adam_state(name) ? 2 : 0);
  }
  if (store.adam_step() > 0) ++records;

  put_bytes(out, kMagic, 4);
  put_le(out, kVersion);
  put_le(out, static_cast<uint32_t>(manifest.arch.size()));
  put_bytes(out, manifest.arch.data(), manifest.arch.size());
  put_bytes(out, manifest.config_hash.data(), manifest.config_hash.size());
  put_le(out, records);

  for (const std::string& name : store.names()) {
    put_record(out, name, store.value(name));
    if (store.has_adam_state(name)) {
      put_record(out, name + kAdamMomentM, store.adam_m(name));
      put_record(out, name + kAdamMomentV, store.adam_v(name));
    }
  }
  if (store.adam_step() > 0) {
    put_record(out, kAdamStep, Tensor::scalar(static_cast<double>(store.adam_step())));
  }
  if (!out) throw std::runtime_error(str_cat("short write to ", path));
}

CheckpointManifest load_checkpoint(const std::string& path, ParamStore& store) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(str_cat("cannot open checkpoint ", path));

  char magic[4];
  get_bytes(in, magic, 4, path);
  if (std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error(str_cat(path, " is not a CDRW checkpoint"));
  const uint16_t version = get_le<uint16_t>(in, path);
  if (version != kVersion)
    throw std::runtime_error(str_cat(path, ": unsupported checkpoint version ", version));

  CheckpointManifest manifest;
  const uint32_t arch_len = get_le<uint32_t>(in, path);
  if (arch_len > 4096) throw std::runtime_error(str_cat(path, ": implausible arch length"));
  manifest.arch.resize(arch_len);
  get_bytes(in, manifest.arch.data(), arch_len, path);
  get_bytes(in, manifest.config_hash.data(), manifest.config_hash.size(), path);

  const uint64_t records = get_le<uint64_t>(in, path);
  std::map<std::string, Tensor> loaded;
  for (uint64_t r = 0; r < records; ++r) {
    const uint32_t name_len = get_le<uint32_t>(in, path);
    if (name_len == 0 || name_len > 4096)
      throw std::runtime_error(str_cat(path, ": implausible record name length"));
    std::string name(name_len, '\0');
    get_bytes(in, name.data(), name_len, path);

    const uint32_t rank = get_le<uint32_t>(in, path);
    if (rank == 0 || rank > 8)
      throw std::runtime_error(str_cat(path, ": implausible tensor rank ", rank));
    std::vector<int> shape(rank);
    int64_t size = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      const uint32_t dim = get_le<uint32_t>(in, path);
      if (dim == 0 || dim > (1u << 24))
        throw std::runtime_error(str_cat(path, ": implausible dim ", dim, " in ", name));
      shape[d] = static_cast<int>(dim);
      size *= dim;
    }
    std::vector<double> data(static_cast<size_t>(size));
    for (double& v : data) v = get_f64(in, path);
    if (!loaded.emplace(name, Tensor(std::move(shape), std::move(data))).second)
      throw std::runtime_error(str_cat(path, ": duplicate record ", name));
  }

  // Plain tensors first so the moment records can validate against them.
  for (auto& [name, tensor] : loaded) {
    if (name == kAdamStep || ends_with(name, kAdamMomentM) || ends_with(name, kAdamMomentV))
      continue;
    store.set(name, tensor);
  }
  for (auto& [name, tensor] : loaded) {
    if (!ends_with(name, kAdamMomentM)) continue;
    const std::string base = name.substr(0, name.size() - std::strlen(kAdamMomentM));
    auto v_it = loaded.find(base + kAdamMomentV);
    if (!store.contains(base) || v_it == loaded.end())
      throw std::runtime_error(str_cat(path, ": orphan optimizer record ", name));
    store.set_adam_state(base, tensor, v_it->second);
  }
  if (auto it = loaded.find(kAdamStep); it != loaded.end()) {
    if (it->second.size() != 1)
      throw std::runtime_error(str_cat(path, ": malformed adam.step record"));
    store.set_adam_step(static_cast<int64_t>(it->second.data[0]));
  }
  return manifest;
}

}  // namespace cdr
