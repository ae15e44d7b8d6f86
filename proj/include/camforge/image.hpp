// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/error.hpp"

namespace camforge {

enum class ColorSpace { Linear, SrgbEncoded };

constexpr std::string_view to_string(ColorSpace s) {
  return s == ColorSpace::Linear ? "linear" : "srgb-encoded";
}

/// Interleaved RGB float raster.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  ColorSpace space = ColorSpace::SrgbEncoded;
  std::vector<float> data;

  ImageBuffer() = default;
  ImageBuffer(int w, int h, ColorSpace s, float fill = 0.0f)
      : width(w), height(h), space(s), data(static_cast<std::size_t>(w) * h * 3, fill) {}

  std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

  float& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  float at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool operator==(const ImageBuffer&) const = default;
};

/// Single-channel foreground coverage in [0, 1]; 1 marks in-focus subject.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<float> alpha;

  Mask() = default;
  Mask(int w, int h, float fill = 0.0f)
      : width(w), height(h), alpha(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const { return alpha[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return alpha[static_cast<std::size_t>(y) * width + x]; }
};

inline void require_space(const ImageBuffer& img, ColorSpace expected, std::string_view op) {
  if (img.space != expected) {
    throw Error(ErrorCode::SpaceMismatch, std::string(op) + " expects " +
                                              std::string(to_string(expected)) + " input, got " +
                                              std::string(to_string(img.space)));
  }
}

inline void require_same_size(const ImageBuffer& a, const ImageBuffer& b, std::string_view op) {
  if (a.width != b.width || a.height != b.height) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(op) + ": " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                    " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

}  // namespace camforge
