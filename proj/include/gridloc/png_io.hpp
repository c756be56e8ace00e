#pragma once

#include <png.h>
#include <zlib.h>

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "gridloc/error.hpp"
#include "gridloc/image.hpp"

// Decoding goes through libpng (handles bit depths, palettes, filters,
// anything a real radiograph export might use). Encoding is done by hand:
// filter-0 scanlines deflated at a fixed level, so identical pixels always
// produce identical bytes. Golden-file tests depend on that.

namespace gridloc {

namespace detail {

struct MemReader {
  const unsigned char* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_mem_read(png_structp png, png_bytep out, png_size_t n) {
  auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
  if (r->pos + n > r->size) {
    png_error(png, "png: truncated stream");
  }
  std::memcpy(out, r->data + r->pos, n);
  r->pos += n;
}

inline void append_be32(std::string& s, std::uint32_t v) {
  s.push_back(static_cast<char>((v >> 24) & 0xff));
  s.push_back(static_cast<char>((v >> 16) & 0xff));
  s.push_back(static_cast<char>((v >> 8) & 0xff));
  s.push_back(static_cast<char>(v & 0xff));
}

inline void append_chunk(std::string& s, const char type[4],
                         const std::string& payload) {
  append_be32(s, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = s.size();
  s.append(type, 4);
  s.append(payload);
  const auto crc = crc32(
      0, reinterpret_cast<const Bytef*>(s.data() + crc_start),
      static_cast<uInt>(4 + payload.size()));
  append_be32(s, static_cast<std::uint32_t>(crc));
}

}  // namespace detail

/// Decodes a PNG byte stream to 8-bit gray or RGB. 16-bit input is reduced,
/// palettes expanded, alpha stripped.
inline Image8 decode_png(const void* bytes, std::size_t size) {
  if (size < 8 || png_sig_cmp(static_cast<png_const_bytep>(bytes), 0, 8) != 0) {
    throw Error("not a PNG stream");
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png: allocation failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png: allocation failed");
  }

  detail::MemReader reader{static_cast<const unsigned char*>(bytes), size, 0};
  std::vector<png_bytep> row_ptrs;
  Image8 out;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("png: decode failed");
  }

  png_set_read_fn(png, &reader, detail::png_mem_read);
  png_read_info(png, info);

  const png_uint_32 w = png_get_image_width(png, info);
  const png_uint_32 h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info);
  const int depth = png_get_bit_depth(png, info);

  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) {
    png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
  }
  png_set_interlace_handling(png);
  png_read_update_info(png, info);

  const int out_channels = png_get_channels(png, info);
  if (out_channels != 1 && out_channels != 3) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error("png: unsupported channel layout after normalization");
  }

  out = Image8(static_cast<int>(w), static_cast<int>(h), out_channels);
  row_ptrs.resize(h);
  const std::size_t stride = static_cast<std::size_t>(w) * out_channels;
  for (png_uint_32 y = 0; y < h; ++y) {
    row_ptrs[y] = reinterpret_cast<png_bytep>(&out.pixels[y * stride]);
  }
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return out;
}

inline Image8 decode_png(const std::string& bytes) {
  return decode_png(bytes.data(), bytes.size());
}

inline std::string read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline Image8 read_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file_bytes(path));
  } catch (const Error& e) {
    throw Error(std::string(e.what()) + " (" + path.string() + ")");
  }
}

/// Reads only the IHDR dimensions; cheap existence/shape probe.
inline std::pair<int, int> read_png_dims(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open file: " + path.string());
  unsigned char head[24];
  in.read(reinterpret_cast<char*>(head), sizeof(head));
  static const unsigned char sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (in.gcount() != sizeof(head) || std::memcmp(head, sig, 8) != 0 ||
      std::memcmp(head + 12, "IHDR", 4) != 0) {
    throw Error("not a PNG file: " + path.string());
  }
  const auto be32 = [&](int off) {
    return (static_cast<std::uint32_t>(head[off]) << 24) |
           (static_cast<std::uint32_t>(head[off + 1]) << 16) |
           (static_cast<std::uint32_t>(head[off + 2]) << 8) |
           static_cast<std::uint32_t>(head[off + 3]);
  };
  return {static_cast<int>(be32(16)), static_cast<int>(be32(20))};
}

/// Encodes gray or RGB as PNG bytes. Fixed filter (none) and zlib level, so
/// output is a pure function of the pixels.
inline std::string encode_png(const Image8& img) {
  if (img.width < 1 || img.height < 1) throw Error("png: empty image");
  const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
  std::string raw;
  raw.reserve((stride + 1) * img.height);
  for (int y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter type 0
    raw.append(reinterpret_cast<const char*>(&img.pixels[y * stride]), stride);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::string compressed(bound, '\0');
  if (compress2(reinterpret_cast<Bytef*>(compressed.data()), &bound,
                reinterpret_cast<const Bytef*>(raw.data()),
                static_cast<uLong>(raw.size()), 6) != Z_OK) {
    throw Error("png: deflate failed");
  }
  compressed.resize(bound);

  std::string ihdr;
  detail::append_be32(ihdr, static_cast<std::uint32_t>(img.width));
  detail::append_be32(ihdr, static_cast<std::uint32_t>(img.height));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(img.channels == 1 ? 0 : 2);  // gray / truecolor
  ihdr.push_back(0);
  ihdr.push_back(0);
  ihdr.push_back(0);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  detail::append_chunk(out, "IHDR", ihdr);
  detail::append_chunk(out, "IDAT", compressed);
  detail::append_chunk(out, "IEND", "");
  return out;
}

inline void write_file_bytes(const std::filesystem::path& path,
                             const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write file: " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed: " + path.string());
}

inline void write_png(const std::filesystem::path& path, const Image8& img) {
  write_file_bytes(path, encode_png(img));
}

}  // namespace gridloc
