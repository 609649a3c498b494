#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "bandforge/common.hpp"

// Minimal deterministic 8-bit grayscale PNG codec (fixed zlib level, filter 0
// on encode; decoder handles the standard filter set).

namespace bandforge::io {

namespace detail {

inline void be32(std::string& s, std::uint32_t v) {
  s.push_back(char((v >> 24) & 0xff));
  s.push_back(char((v >> 16) & 0xff));
  s.push_back(char((v >> 8) & 0xff));
  s.push_back(char(v & 0xff));
}

inline std::uint32_t rd32(const unsigned char* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

inline void chunk(std::string& out, const char type[4], const std::string& data) {
  be32(out, std::uint32_t(data.size()));
  std::string td(type, 4);
  td += data;
  std::uint32_t crc =
      ::crc32(0L, reinterpret_cast<const Bytef*>(td.data()), uInt(td.size()));
  out += td;
  be32(out, crc);
}

}  // namespace detail

inline std::string encode_png_gray8(const std::vector<std::uint8_t>& pix,
                                    int width, int height) {
  if (int(pix.size()) != width * height)
    throw ValidationError("png: pixel buffer size mismatch");
  std::string out("\x89PNG\r\n\x1a\n", 8);

  std::string ihdr;
  detail::be32(ihdr, std::uint32_t(width));
  detail::be32(ihdr, std::uint32_t(height));
  ihdr += '\x08';  // bit depth
  ihdr += '\x00';  // color type: gray
  ihdr += '\x00';  // compression
  ihdr += '\x00';  // filter
  ihdr += '\x00';  // interlace
  detail::chunk(out, "IHDR", ihdr);

  std::vector<std::uint8_t> raw;
  raw.reserve(std::size_t(height) * (width + 1));
  for (int r = 0; r < height; ++r) {
    raw.push_back(0);  // filter type 0
    raw.insert(raw.end(), pix.begin() + std::size_t(r) * width,
               pix.begin() + std::size_t(r + 1) * width);
  }
  uLongf zlen = compressBound(uLong(raw.size()));
  std::vector<std::uint8_t> z(zlen);
  if (compress2(z.data(), &zlen, raw.data(), uLong(raw.size()), 6) != Z_OK)
    throw NumericError("png: deflate failed");
  detail::chunk(out, "IDAT",
                std::string(reinterpret_cast<char*>(z.data()), zlen));
  detail::chunk(out, "IEND", "");
  return out;
}

inline void write_png_gray8(const std::filesystem::path& p,
                            const std::vector<std::uint8_t>& pix, int width,
                            int height) {
  std::string data = encode_png_gray8(pix, width, height);
  std::ofstream f(p, std::ios::binary);
  if (!f) throw ValidationError("png: cannot write " + p.string());
  f.write(data.data(), std::streamsize(data.size()));
}

// Decodes an 8-bit grayscale PNG. Throws ValidationError on anything else.
inline std::vector<std::uint8_t> decode_png_gray8(const std::string& file,
                                                  int& width, int& height) {
  const auto* p = reinterpret_cast<const unsigned char*>(file.data());
  if (file.size() < 8 || std::memcmp(p, "\x89PNG\r\n\x1a\n", 8) != 0)
    throw ValidationError("png: bad signature");
  std::size_t off = 8;
  width = height = 0;
  std::vector<std::uint8_t> idat;
  while (off + 8 <= file.size()) {
    std::uint32_t len = detail::rd32(p + off);
    std::string type(file.substr(off + 4, 4));
    if (off + 12 + len > file.size())
      throw ValidationError("png: truncated chunk");
    const unsigned char* data = p + off + 8;
    if (type == "IHDR") {
      width = int(detail::rd32(data));
      height = int(detail::rd32(data + 4));
      if (data[8] != 8 || data[9] != 0)
        throw ValidationError("png: expected 8-bit grayscale");
      if (data[12] != 0) throw ValidationError("png: interlace unsupported");
    } else if (type == "IDAT") {
      idat.insert(idat.end(), data, data + len);
    } else if (type == "IEND") {
      break;
    }
    off += 12 + len;
  }
  if (width <= 0 || height <= 0) throw ValidationError("png: missing IHDR");

  std::vector<std::uint8_t> raw(std::size_t(height) * (width + 1));
  uLongf rlen = uLongf(raw.size());
  if (uncompress(raw.data(), &rlen, idat.data(), uLong(idat.size())) != Z_OK ||
      rlen != raw.size())
    throw ValidationError("png: inflate failed");

  std::vector<std::uint8_t> pix(std::size_t(height) * width);
  std::vector<std::uint8_t> prev(width, 0);
  for (int r = 0; r < height; ++r) {
    std::uint8_t filt = raw[std::size_t(r) * (width + 1)];
    const std::uint8_t* src = raw.data() + std::size_t(r) * (width + 1) + 1;
    std::uint8_t* dst = pix.data() + std::size_t(r) * width;
    for (int c = 0; c < width; ++c) {
      int a = c > 0 ? dst[c - 1] : 0;     // left
      int b = prev[c];                    // up
      int cc = c > 0 ? prev[c - 1] : 0;   // up-left
      int x = src[c];
      switch (filt) {
        case 0: dst[c] = std::uint8_t(x); break;
        case 1: dst[c] = std::uint8_t(x + a); break;
        case 2: dst[c] = std::uint8_t(x + b); break;
        case 3: dst[c] = std::uint8_t(x + (a + b) / 2); break;
        case 4: {
          int pp = a + b - cc, pa = std::abs(pp - a), pb = std::abs(pp - b),
              pc = std::abs(pp - cc);
          int pred = (pa <= pb && pa <= pc) ? a : (pb <= pc ? b : cc);
          dst[c] = std::uint8_t(x + pred);
          break;
        }
        default: throw ValidationError("png: bad filter type");
      }
    }
    std::memcpy(prev.data(), dst, std::size_t(width));
  }
  return pix;
}

inline std::vector<std::uint8_t> read_png_gray8(const std::filesystem::path& p,
                                                int& width, int& height) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ValidationError("png: cannot open " + p.string());
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return decode_png_gray8(data, width, height);
}

}  // namespace bandforge::io
