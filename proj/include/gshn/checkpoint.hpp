#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gshn/param.hpp"

namespace gshn {

// Single-file checkpoint: magic, version, config blob, then named parameter
// blobs in registration order. All integers and doubles little-endian.
constexpr std::uint32_t kCheckpointMagic = 0x4E485347;  // "GSHN"
constexpr std::uint32_t kCheckpointVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace detail {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}
inline std::uint32_t read_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}
inline void write_str(std::ostream& out, const std::string& s) {
  write_u32(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
inline std::string read_str(std::istream& in) {
  std::uint32_t n = read_u32(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw std::runtime_error("checkpoint: truncated string");
  return s;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path,
                            const std::vector<Parameter*>& params,
                            const std::string& config_blob) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  detail::write_u32(out, kCheckpointMagic);
  detail::write_u32(out, kCheckpointVersion);
  detail::write_str(out, config_blob);
  detail::write_u32(out, static_cast<std::uint32_t>(params.size()));
  for (const Parameter* p : params) {
    detail::write_str(out, p->name);
    detail::write_u32(out, static_cast<std::uint32_t>(p->value.ndim()));
    for (std::size_t i = 0; i < p->value.ndim(); ++i)
      detail::write_u64(out, p->value.dim(i));
    out.write(reinterpret_cast<const char*>(p->value.data()),
              static_cast<std::streamsize>(p->value.size() * sizeof(double)));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

// Reads only the embedded config blob (to rebuild a model before loading).
inline std::string read_checkpoint_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  if (detail::read_u32(in) != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (detail::read_u32(in) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  return detail::read_str(in);
}

// Loads into the given parameters; names, order, and shapes must match.
// Returns the stored config blob.
inline std::string load_checkpoint(const std::string& path,
                                   const std::vector<Parameter*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot read " + path);
  if (detail::read_u32(in) != kCheckpointMagic)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  if (detail::read_u32(in) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version in " + path);
  std::string config_blob = detail::read_str(in);
  std::uint32_t count = detail::read_u32(in);
  if (count != params.size())
    throw std::runtime_error("checkpoint: parameter count mismatch");
  for (Parameter* p : params) {
    std::string name = detail::read_str(in);
    if (name != p->name)
      throw std::runtime_error("checkpoint: expected parameter " + p->name +
                               ", found " + name);
    std::uint32_t ndim = detail::read_u32(in);
    std::vector<std::size_t> shape(ndim);
    for (auto& d : shape) d = detail::read_u64(in);
    if (shape != p->value.shape())
      throw std::runtime_error("checkpoint: shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p->value.data()),
            static_cast<std::streamsize>(p->value.size() * sizeof(double)));
    if (!in) throw std::runtime_error("checkpoint: truncated data for " + name);
  }
  return config_blob;
}

}  // namespace gshn
