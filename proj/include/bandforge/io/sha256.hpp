#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bandforge/common.hpp"

namespace bandforge::io {

inline std::string sha256_hex(const void* data, std::size_t len) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int dlen = 0;
  if (!EVP_Digest(data, len, digest, &dlen, EVP_sha256(), nullptr))
    throw NumericError("sha256: digest failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(2 * dlen);
  for (unsigned int i = 0; i < dlen; ++i) {
    out.push_back(hex[digest[i] >> 4]);
    out.push_back(hex[digest[i] & 0xf]);
  }
  return out;
}

inline std::string sha256_hex(const std::string& s) {
  return sha256_hex(s.data(), s.size());
}

inline std::string sha256_file(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ValidationError("sha256: cannot open " + p.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(f)),
                        std::istreambuf_iterator<char>());
  return sha256_hex(buf.data(), buf.size());
}

}  // namespace bandforge::io
