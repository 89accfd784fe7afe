#pragma once

// Minimal 8-bit RGB PNG writer (zlib for the IDAT stream). Write-only: the
// pipeline never needs to read images back from PNG.

#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "copa/errors.hpp"
#include "copa/render.hpp"

namespace copa {

namespace png_detail {

inline void put_u32_be(std::vector<unsigned char>& out, std::uint32_t v) {
  out.push_back(static_cast<unsigned char>(v >> 24));
  out.push_back(static_cast<unsigned char>(v >> 16));
  out.push_back(static_cast<unsigned char>(v >> 8));
  out.push_back(static_cast<unsigned char>(v));
}

inline void write_chunk(std::ofstream& f, const char type[4],
                        const std::vector<unsigned char>& data) {
  std::vector<unsigned char> head;
  put_u32_be(head, static_cast<std::uint32_t>(data.size()));
  f.write(reinterpret_cast<const char*>(head.data()), 4);
  f.write(type, 4);
  if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  uLong crc = crc32(0L, Z_NULL, 0);
  crc = crc32(crc, reinterpret_cast<const Bytef*>(type), 4);
  if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
  std::vector<unsigned char> tail;
  put_u32_be(tail, static_cast<std::uint32_t>(crc));
  f.write(reinterpret_cast<const char*>(tail.data()), 4);
}

}  // namespace png_detail

inline void write_png_rgb8(const std::string& path, int height, int width,
                           const std::vector<unsigned char>& rgb) {
  using namespace png_detail;
  if (static_cast<std::size_t>(height) * width * 3 != rgb.size())
    throw ShapeError("write_png_rgb8: buffer size does not match dimensions");
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_png_rgb8: cannot open " + path + " for writing");

  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  f.write(reinterpret_cast<const char*>(sig), 8);

  std::vector<unsigned char> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(width));
  put_u32_be(ihdr, static_cast<std::uint32_t>(height));
  ihdr.push_back(8);   // bit depth
  ihdr.push_back(2);   // color type: truecolor
  ihdr.push_back(0);   // compression
  ihdr.push_back(0);   // filter
  ihdr.push_back(0);   // interlace
  write_chunk(f, "IHDR", ihdr);

  // Filter byte 0 (None) per scanline.
  std::vector<unsigned char> raw;
  raw.reserve(static_cast<std::size_t>(height) * (static_cast<std::size_t>(width) * 3 + 1));
  for (int y = 0; y < height; ++y) {
    raw.push_back(0);
    const unsigned char* row = rgb.data() + static_cast<std::size_t>(y) * width * 3;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(width) * 3);
  }
  uLongf dest_len = compressBound(static_cast<uLong>(raw.size()));
  std::vector<unsigned char> compressed(dest_len);
  if (compress2(compressed.data(), &dest_len, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
    throw IoError("write_png_rgb8: zlib compression failed");
  compressed.resize(dest_len);
  write_chunk(f, "IDAT", compressed);
  write_chunk(f, "IEND", {});
  if (!f) throw IoError("write_png_rgb8: write failed for " + path);
}

inline void write_png(const std::string& path, const ProjectedImage& image) {
  std::vector<unsigned char> rgb;
  rgb.reserve(image.pixels.size());
  for (const double v : image.pixels) {
    const double clamped = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
    rgb.push_back(static_cast<unsigned char>(clamped * 255.0 + 0.5));
  }
  write_png_rgb8(path, image.height, image.width, rgb);
}

}  // namespace copa
