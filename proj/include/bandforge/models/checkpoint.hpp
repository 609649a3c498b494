#pragma once
// Versioned binary checkpoint: magic, version, model kind, config
// fingerprint, normalization statistics, then named parameter blobs.
// Native little-endian layout (x86 target). Round-trips parameters bitwise.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "bandforge/models/normalizer.hpp"
#include "bandforge/nn/optim.hpp"

namespace bandforge::models {

enum class ModelKind : std::uint8_t { forward = 0, inverse = 1 };

namespace detail {

template <typename T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}
template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw ConfigError("checkpoint: truncated file");
  return v;
}
inline void put_str(std::ostream& os, const std::string& s) {
  put(os, std::uint32_t(s.size()));
  os.write(s.data(), long(s.size()));
}
inline std::string get_str(std::istream& is) {
  auto n = get<std::uint32_t>(is);
  if (n > (1u << 20)) throw ConfigError("checkpoint: corrupt string length");
  std::string s(n, '\0');
  is.read(s.data(), long(n));
  if (!is) throw ConfigError("checkpoint: truncated file");
  return s;
}

}  // namespace detail

constexpr std::uint32_t kCheckpointVersion = 1;

template <typename T>
void save_checkpoint(const std::string& path, ModelKind kind,
                     const std::string& fingerprint, const NormStats& norm,
                     const nn::ParamStore<T>& ps) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("checkpoint: cannot write " + path);
  os.write("BFCK", 4);
  detail::put(os, kCheckpointVersion);
  detail::put(os, std::uint8_t(kind));
  detail::put_str(os, fingerprint);
  detail::put(os, norm.spec_db_min);
  detail::put(os, norm.spec_db_max);
  detail::put(os, std::uint32_t(ps.entries.size()));
  for (const auto& e : ps.entries) {
    detail::put_str(os, e.name);
    detail::put(os, std::uint8_t(sizeof(T) == 4 ? 0 : 1));
    detail::put(os, std::uint8_t(e.w.shape.size()));
    for (int d : e.w.shape) detail::put(os, std::uint32_t(d));
    detail::put(os, std::uint64_t(e.w.numel()));
    os.write(reinterpret_cast<const char*>(e.w.data()),
             long(e.w.numel() * sizeof(T)));
  }
  if (!os) throw ConfigError("checkpoint: write failed for " + path);
}

// Loads parameter values into an already-constructed store (shapes fixed by
// the model config). Every mismatch is an explicit error.
template <typename T>
NormStats load_checkpoint(const std::string& path, ModelKind expected_kind,
                          const std::string& expected_fingerprint,
                          nn::ParamStore<T>& ps) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("checkpoint: cannot read " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "BFCK", 4) != 0)
    throw ConfigError("checkpoint: bad magic in " + path);
  auto version = detail::get<std::uint32_t>(is);
  if (version != kCheckpointVersion)
    throw ConfigError("checkpoint: unsupported version " +
                      std::to_string(version));
  auto kind = detail::get<std::uint8_t>(is);
  if (kind != std::uint8_t(expected_kind))
    throw ConfigError("checkpoint: wrong model kind in " + path);
  std::string fp = detail::get_str(is);
  if (fp != expected_fingerprint)
    throw ConfigError("checkpoint: config fingerprint mismatch (file " + fp +
                      ", expected " + expected_fingerprint + ")");
  NormStats norm;
  norm.spec_db_min = detail::get<double>(is);
  norm.spec_db_max = detail::get<double>(is);
  auto nparams = detail::get<std::uint32_t>(is);
  if (nparams != ps.entries.size())
    throw ConfigError("checkpoint: parameter count mismatch");
  for (std::uint32_t i = 0; i < nparams; ++i) {
    std::string name = detail::get_str(is);
    auto dtype = detail::get<std::uint8_t>(is);
    if (dtype != (sizeof(T) == 4 ? 0 : 1))
      throw ConfigError("checkpoint: dtype mismatch for " + name);
    auto rank = detail::get<std::uint8_t>(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = int(detail::get<std::uint32_t>(is));
    auto count = detail::get<std::uint64_t>(is);
    auto& e = ps.at(name);  // throws on unknown name
    if (e.w.shape != shape || e.w.numel() != count)
      throw ConfigError("checkpoint: shape mismatch for " + name);
    is.read(reinterpret_cast<char*>(e.w.data()), long(count * sizeof(T)));
    if (!is) throw ConfigError("checkpoint: truncated parameter " + name);
  }
  return norm;
}

}  // namespace bandforge::models
