// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <png.h>

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/image.hpp"

namespace camforge {

/// Decoded PNG: 8- or 16-bit samples, always expanded to RGB.
struct RasterImage {
  int width = 0;
  int height = 0;
  int bit_depth = 8;
  std::vector<std::uint16_t> samples;  // interleaved RGB

  bool operator==(const RasterImage&) const = default;
};

namespace detail {

struct PngReadState {
  const std::uint8_t* data;
  std::size_t size;
  std::size_t pos;
};

inline void png_read_from_memory(png_structp png, png_bytep out, png_size_t count) {
  auto* st = static_cast<PngReadState*>(png_get_io_ptr(png));
  if (st->pos + count > st->size) png_error(png, "unexpected end of PNG data");
  std::memcpy(out, st->data + st->pos, count);
  st->pos += count;
}

inline void png_write_to_vector(png_structp png, png_bytep in, png_size_t count) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), in, in + count);
}

inline void png_flush_noop(png_structp) {}

struct PngErrorSink {
  char* buf;
  std::size_t len;
};

inline void png_error_to_sink(png_structp png, png_const_charp msg) {
  if (auto* sink = static_cast<PngErrorSink*>(png_get_error_ptr(png)); sink && sink->buf) {
    std::snprintf(sink->buf, sink->len, "corrupt PNG data: %s", msg);
  }
  png_longjmp(png, 1);
}

inline void png_warning_silent(png_structp, png_const_charp) {}

// Runs with no C++ objects alive across setjmp; returns false on libpng error.
inline bool decode_png_raw(PngReadState* st, png_uint_32* w, png_uint_32* h, int* depth,
                           std::vector<std::uint8_t>* pixels, char* err, std::size_t err_len) {
  PngErrorSink sink{err, err_len};
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_to_sink,
                                           png_warning_silent);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    return false;
  }
  std::vector<png_bytep>* volatile rows = nullptr;
  if (setjmp(png_jmpbuf(png))) {
    delete rows;
    png_destroy_read_struct(&png, &info, nullptr);
    return false;
  }
  png_set_read_fn(png, st, png_read_from_memory);
  png_read_info(png, info);
  int color = png_get_color_type(png, info);
  int bits = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && bits < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (bits == 16) png_set_swap(png);  // little-endian uint16 in memory
  png_read_update_info(png, info);
  *w = png_get_image_width(png, info);
  *h = png_get_image_height(png, info);
  *depth = png_get_bit_depth(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  pixels->resize(rowbytes * *h);
  rows = new std::vector<png_bytep>(*h);
  for (png_uint_32 y = 0; y < *h; ++y) (*rows)[y] = pixels->data() + y * rowbytes;
  png_read_image(png, rows->data());
  png_read_end(png, nullptr);
  delete rows;
  png_destroy_read_struct(&png, &info, nullptr);
  return true;
}

inline bool encode_png_raw(const RasterImage* img, std::vector<std::uint8_t>* out,
                           const std::vector<png_bytep>* rows) {
  PngErrorSink sink{nullptr, 0};
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &sink, png_error_to_sink,
                                            png_warning_silent);
  if (!png) return false;
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    return false;
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    return false;
  }
  png_set_write_fn(png, out, png_write_to_vector, png_flush_noop);
  png_set_compression_level(png, 6);
  png_set_IHDR(png, info, static_cast<png_uint_32>(img->width),
               static_cast<png_uint_32>(img->height), img->bit_depth, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  if (img->bit_depth == 16) png_set_swap(png);
  png_write_image(png, const_cast<png_bytepp>(rows->data()));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return true;
}

}  // namespace detail

inline RasterImage decode_png(std::string_view bytes) {
  detail::PngReadState st{reinterpret_cast<const std::uint8_t*>(bytes.data()), bytes.size(), 0};
  if (bytes.size() < 8 || png_sig_cmp(st.data, 0, 8) != 0) {
    throw Error(ErrorCode::Io, "not a PNG file");
  }
  png_uint_32 w = 0, h = 0;
  int depth = 0;
  std::vector<std::uint8_t> pixels;
  char err[128] = "PNG decode failed";
  if (!detail::decode_png_raw(&st, &w, &h, &depth, &pixels, err, sizeof err)) {
    throw Error(ErrorCode::Io, err);
  }
  RasterImage img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.bit_depth = depth;
  const std::size_t n = static_cast<std::size_t>(w) * h * 3;
  img.samples.resize(n);
  if (depth == 16) {
    for (std::size_t i = 0; i < n; ++i) {
      img.samples[i] = static_cast<std::uint16_t>(pixels[2 * i] | (pixels[2 * i + 1] << 8));
    }
  } else {
    std::copy(pixels.begin(), pixels.begin() + static_cast<std::ptrdiff_t>(n), img.samples.begin());
  }
  return img;
}

inline std::vector<std::uint8_t> encode_png(const RasterImage& img) {
  if (img.bit_depth != 8 && img.bit_depth != 16) {
    throw Error(ErrorCode::Io, "PNG output supports 8 or 16 bits");
  }
  const std::size_t row_samples = static_cast<std::size_t>(img.width) * 3;
  const std::size_t bps = img.bit_depth / 8;
  std::vector<std::uint8_t> packed(row_samples * bps * img.height);
  for (std::size_t i = 0; i < img.samples.size(); ++i) {
    if (bps == 2) {
      packed[2 * i] = static_cast<std::uint8_t>(img.samples[i] & 0xff);
      packed[2 * i + 1] = static_cast<std::uint8_t>(img.samples[i] >> 8);
    } else {
      packed[i] = static_cast<std::uint8_t>(img.samples[i]);
    }
  }
  std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
  for (int y = 0; y < img.height; ++y) rows[y] = packed.data() + y * row_samples * bps;
  std::vector<std::uint8_t> out;
  if (!detail::encode_png_raw(&img, &out, &rows)) throw Error(ErrorCode::Io, "PNG encode failed");
  return out;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::Io, "short write to " + path.string());
}

inline RasterImage load_png(const std::filesystem::path& path) {
  try {
    return decode_png(read_file(path));
  } catch (const Error& e) {
    throw Error(ErrorCode::Io, path.string() + ": " + e.what());
  }
}

inline void save_png(const RasterImage& img, const std::filesystem::path& path) {
  auto bytes = encode_png(img);
  write_file(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline ImageBuffer to_buffer(const RasterImage& raster) {
  ImageBuffer img(raster.width, raster.height, ColorSpace::SrgbEncoded);
  const float scale = raster.bit_depth == 16 ? 65535.0f : 255.0f;
  for (std::size_t i = 0; i < raster.samples.size(); ++i) img.data[i] = raster.samples[i] / scale;
  return img;
}

inline RasterImage to_raster(const ImageBuffer& img, int bit_depth) {
  require_space(img, ColorSpace::SrgbEncoded, "to_raster");
  RasterImage r;
  r.width = img.width;
  r.height = img.height;
  r.bit_depth = bit_depth;
  const double scale = bit_depth == 16 ? 65535.0 : 255.0;
  r.samples.resize(img.data.size());
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    r.samples[i] = static_cast<std::uint16_t>(
        std::lround(std::clamp(static_cast<double>(img.data[i]), 0.0, 1.0) * scale));
  }
  return r;
}

/// Foreground mask from the first channel of a PNG.
inline Mask to_mask(const RasterImage& raster) {
  Mask m(raster.width, raster.height);
  const float scale = raster.bit_depth == 16 ? 65535.0f : 255.0f;
  for (std::size_t i = 0; i < m.alpha.size(); ++i) m.alpha[i] = raster.samples[i * 3] / scale;
  return m;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error(ErrorCode::Io, "SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out += kHex[digest[i] >> 4];
    out += kHex[digest[i] & 0xf];
  }
  return out;
}

/// SHA-256 over the decoded pixel raster (dimensions, depth, big-endian
/// samples), so equal pixels hash equal regardless of PNG encoder settings.
inline std::string raster_checksum(const RasterImage& img) {
  std::string buf = "camforge-raster-v1";
  auto put32 = [&buf](std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) buf += static_cast<char>((v >> s) & 0xff);
  };
  put32(static_cast<std::uint32_t>(img.width));
  put32(static_cast<std::uint32_t>(img.height));
  put32(static_cast<std::uint32_t>(img.bit_depth));
  buf.reserve(buf.size() + img.samples.size() * 2);
  for (std::uint16_t s : img.samples) {
    buf += static_cast<char>(s >> 8);
    buf += static_cast<char>(s & 0xff);
  }
  return sha256_hex(buf);
}

}  // namespace camforge
