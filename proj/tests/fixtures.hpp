// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Shared test images: a gradient ramp, seeded noise and the bundled photo.

#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "camforge/image.hpp"
#include "camforge/png_io.hpp"

namespace camforge::testing {

inline std::filesystem::path source_dir() { return CAMFORGE_SOURCE_DIR; }

inline RasterImage ramp_raster(int w = 96, int h = 64) {
  RasterImage r;
  r.width = w;
  r.height = h;
  r.bit_depth = 8;
  r.samples.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t o = (static_cast<std::size_t>(y) * w + x) * 3;
      r.samples[o] = static_cast<std::uint16_t>(255 * x / (w - 1));
      r.samples[o + 1] = static_cast<std::uint16_t>(255 * y / (h - 1));
      r.samples[o + 2] = static_cast<std::uint16_t>(255 - 255 * x / (w - 1));
    }
  }
  return r;
}

inline RasterImage noise_raster(std::uint32_t seed, int w = 96, int h = 64) {
  RasterImage r;
  r.width = w;
  r.height = h;
  r.bit_depth = 8;
  r.samples.resize(static_cast<std::size_t>(w) * h * 3);
  std::mt19937 rng(seed);
  std::uniform_int_distribution<int> d(0, 255);
  for (auto& s : r.samples) s = static_cast<std::uint16_t>(d(rng));
  return r;
}

inline RasterImage photo_raster() { return load_png(source_dir() / "tests/data/photo.png"); }

inline ImageBuffer uniform(int w, int h, float r, float g, float b,
                           ColorSpace space = ColorSpace::SrgbEncoded) {
  ImageBuffer img(w, h, space);
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    img.data[i] = r;
    img.data[i + 1] = g;
    img.data[i + 2] = b;
  }
  return img;
}

inline std::string png_string(const RasterImage& r) {
  const auto bytes = encode_png(r);
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

inline std::filesystem::path temp_dir(const std::string& tag) {
  std::random_device rd;
  auto p = std::filesystem::temp_directory_path() /
           ("camforge-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace camforge::testing
