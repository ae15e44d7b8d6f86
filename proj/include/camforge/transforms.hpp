// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Deterministic camera-function transforms. Photometric operations (exposure,
// color temperature, zoom, bokeh) run in linear light; appearance operations
// (contrast, saturation, film LUT) run on sRGB-encoded values.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/image.hpp"
#include "camforge/lut.hpp"

namespace camforge {

inline double srgb_to_linear(double v) {
  return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

inline double linear_to_srgb(double v) {
  v = std::clamp(v, 0.0, 1.0);
  return v <= 0.0031308 ? v * 12.92 : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

inline ImageBuffer srgb_decode(const ImageBuffer& img) {
  require_space(img, ColorSpace::SrgbEncoded, "srgb_decode");
  ImageBuffer out = img;
  out.space = ColorSpace::Linear;
  for (float& v : out.data) v = static_cast<float>(srgb_to_linear(v));
  return out;
}

inline ImageBuffer srgb_encode(const ImageBuffer& img) {
  require_space(img, ColorSpace::Linear, "srgb_encode");
  ImageBuffer out = img;
  out.space = ColorSpace::SrgbEncoded;
  for (float& v : out.data) v = static_cast<float>(linear_to_srgb(v));
  return out;
}

inline ImageBuffer apply_exposure(const ImageBuffer& img, double ev) {
  require_space(img, ColorSpace::Linear, "apply_exposure");
  ImageBuffer out = img;
  const double gain = std::exp2(ev);
  for (float& v : out.data) v = static_cast<float>(v * gain);
  return out;
}

// Blackbody color approximation: piecewise fit in ln(K/100), 8-bit scale.
inline std::array<double, 3> blackbody_rgb(double kelvin) {
  const double t = kelvin / 100.0;
  double r, g, b;
  if (t <= 66.0) {
    r = 255.0;
    g = 99.4708025861 * std::log(t) - 161.1195681661;
  } else {
    r = 329.698727446 * std::pow(t - 60.0, -0.1332047592);
    g = 288.1221695283 * std::pow(t - 60.0, -0.0755148492);
  }
  if (t >= 66.0) {
    b = 255.0;
  } else if (t <= 19.0) {
    b = 0.0;
  } else {
    b = 138.5177312231 * std::log(t - 10.0) - 305.0447927307;
  }
  return {std::clamp(r, 0.0, 255.0), std::clamp(g, 0.0, 255.0), std::clamp(b, 0.0, 255.0)};
}

/// Channel gains relative to the 6500K reference, normalized so green is 1.
inline std::array<double, 3> cct_gains(double kelvin) {
  if (!(kelvin >= kCctMinK && kelvin <= kCctMaxK)) {
    throw Error(ErrorCode::Range, "color temperature " + detail::format_decimal(kelvin) +
                                      "K outside [2000, 10000]");
  }
  const auto ref = blackbody_rgb(kCctNeutralK);
  const auto rgb = blackbody_rgb(kelvin);
  const double r = rgb[0] / ref[0];
  const double g = rgb[1] / ref[1];
  const double b = rgb[2] / ref[2];
  return {r / g, 1.0, b / g};
}

inline ImageBuffer apply_cct(const ImageBuffer& img, double kelvin) {
  const auto gains = cct_gains(kelvin);
  require_space(img, ColorSpace::Linear, "apply_cct");
  ImageBuffer out = img;
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    for (int c = 0; c < 3; ++c) out.data[i + c] = static_cast<float>(out.data[i + c] * gains[c]);
  }
  return out;
}

inline constexpr std::array<double, 4> kContrastSlopes = {0.60, 0.85, 1.15, 1.40};
inline constexpr std::array<double, 4> kSaturationFactors = {0.50, 0.80, 1.20, 1.50};

namespace detail {

// Position of level n/of on the four-entry table, interpolated for grids
// other than 4. Levels of a 4-grid land exactly on table entries.
inline double level_table_value(const std::array<double, 4>& table, const Level& level) {
  if (level.of < 2 || level.n < 1 || level.n > level.of) {
    throw Error(ErrorCode::Range, "level " + std::to_string(level.n) + "/" +
                                      std::to_string(level.of) + " out of range");
  }
  if (level.of == 4) return table[static_cast<std::size_t>(level.n - 1)];
  const double pos = 3.0 * (level.n - 1) / (level.of - 1);
  const int i0 = std::min(static_cast<int>(pos), 2);
  const double t = pos - i0;
  return table[i0] * (1 - t) + table[i0 + 1] * t;
}

}  // namespace detail

inline ImageBuffer apply_contrast_slope(const ImageBuffer& img, double k) {
  require_space(img, ColorSpace::SrgbEncoded, "apply_contrast");
  if (k == 1.0) return img;
  ImageBuffer out = img;
  for (float& v : out.data) v = static_cast<float>(std::clamp((v - 0.5) * k + 0.5, 0.0, 1.0));
  return out;
}

inline ImageBuffer apply_contrast(const ImageBuffer& img, const Level& level) {
  return apply_contrast_slope(img, detail::level_table_value(kContrastSlopes, level));
}

inline ImageBuffer apply_saturation_factor(const ImageBuffer& img, double f) {
  require_space(img, ColorSpace::SrgbEncoded, "apply_saturation");
  if (f == 1.0) return img;
  ImageBuffer out = img;
  for (std::size_t i = 0; i < out.data.size(); i += 3) {
    const double r = img.data[i], g = img.data[i + 1], b = img.data[i + 2];
    if (r == g && g == b) continue;
    const double luma = 0.2126 * r + 0.7152 * g + 0.0722 * b;
    for (int c = 0; c < 3; ++c) {
      out.data[i + c] =
          static_cast<float>(std::clamp(luma + f * (img.data[i + c] - luma), 0.0, 1.0));
    }
  }
  return out;
}

inline ImageBuffer apply_saturation(const ImageBuffer& img, const Level& level) {
  return apply_saturation_factor(img, detail::level_table_value(kSaturationFactors, level));
}

namespace detail {

// Keys cubic kernel, a = -0.5.
inline double cubic_weight(double x) {
  x = std::abs(x);
  if (x < 1.0) return (1.5 * x - 2.5) * x * x + 1.0;
  if (x < 2.0) return ((-0.5 * x + 2.5) * x - 4.0) * x + 2.0;
  return 0.0;
}

}  // namespace detail

struct CropRect {
  int x = 0, y = 0, width = 0, height = 0;
};

/// Centered crop for a field-of-view ratio, each side rounded to an even
/// pixel count.
inline CropRect zoom_crop(int width, int height, double factor) {
  if (!(factor >= 1.0 && factor <= kZoomMax)) {
    throw Error(ErrorCode::Range, "zoom factor " + detail::format_decimal(factor) +
                                      "x outside [1, 4]");
  }
  auto even = [](double v) { return 2 * static_cast<int>(std::lround(v / 2.0)); };
  CropRect r;
  r.width = std::min(width, even(width / factor));
  r.height = std::min(height, even(height / factor));
  if (r.width < 8 || r.height < 8) {
    throw Error(ErrorCode::TooSmall, "zoom crop " + std::to_string(r.width) + "x" +
                                         std::to_string(r.height) + " is under 8px");
  }
  r.x = (width - r.width) / 2;
  r.y = (height - r.height) / 2;
  return r;
}

inline ImageBuffer apply_zoom(const ImageBuffer& img, double factor) {
  const CropRect crop = zoom_crop(img.width, img.height, factor);
  if (factor == 1.0) return img;
  ImageBuffer out(img.width, img.height, img.space);
  const double sx = static_cast<double>(crop.width) / img.width;
  const double sy = static_cast<double>(crop.height) / img.height;
  const double hi = img.space == ColorSpace::Linear ? HUGE_VAL : 1.0;

  // Separable taps, precomputed per output column / row.
  struct Taps {
    std::array<int, 4> idx;
    std::array<double, 4> w;
  };
  auto make_taps = [](int n_out, int n_in, int origin, double scale) {
    std::vector<Taps> taps(static_cast<std::size_t>(n_out));
    for (int o = 0; o < n_out; ++o) {
      const double src = origin + (o + 0.5) * scale - 0.5;
      const int base = static_cast<int>(std::floor(src));
      double sum = 0.0;
      for (int k = 0; k < 4; ++k) {
        const int i = base - 1 + k;
        taps[o].idx[k] = std::clamp(i, 0, n_in - 1);
        taps[o].w[k] = detail::cubic_weight(src - i);
        sum += taps[o].w[k];
      }
      for (double& w : taps[o].w) w /= sum;
    }
    return taps;
  };
  const auto xt = make_taps(img.width, img.width, crop.x, sx);
  const auto yt = make_taps(img.height, img.height, crop.y, sy);

  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int j = 0; j < 4; ++j) {
          double row = 0.0;
          for (int i = 0; i < 4; ++i) row += xt[x].w[i] * img.at(xt[x].idx[i], yt[y].idx[j], c);
          acc += yt[y].w[j] * row;
        }
        out.at(x, y, c) = static_cast<float>(std::clamp(acc, 0.0, hi));
      }
    }
  }
  return out;
}

inline constexpr std::array<int, 5> kBokehRadii = {0, 2, 4, 8, 16};

/// Disc radius in pixels for a bokeh level, scaled from the 1024px reference.
inline int bokeh_radius(int level, int width, int height) {
  if (level < 0 || level > 4) {
    throw Error(ErrorCode::Range, "bokeh level " + std::to_string(level) + " outside 0..4");
  }
  const int base = kBokehRadii[static_cast<std::size_t>(level)];
  if (base == 0) return 0;
  const double scale = std::max(width, height) / 1024.0;
  return std::max(1, static_cast<int>(std::lround(base * scale)));
}

/// Background defocus: a uniform disc blur over background pixels only
/// (weights 1 - mask), then the subject composited back through the mask.
inline ImageBuffer apply_bokeh(const ImageBuffer& img, const Mask& mask, int level) {
  if (mask.width != img.width || mask.height != img.height) {
    throw Error(ErrorCode::DimensionMismatch, "bokeh mask size does not match image");
  }
  const int radius = bokeh_radius(level, img.width, img.height);
  if (radius == 0) return img;
  const int w = img.width, h = img.height;

  // Row prefix sums of background-weighted color and of the weight itself.
  const std::size_t stride = static_cast<std::size_t>(w) + 1;
  std::vector<double> wsum(stride * h, 0.0);
  std::vector<double> csum(stride * h * 3, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double bg = 1.0 - std::clamp(static_cast<double>(mask.at(x, y)), 0.0, 1.0);
      const std::size_t p = y * stride + x;
      wsum[p + 1] = wsum[p] + bg;
      for (int c = 0; c < 3; ++c) csum[(p + 1) * 3 + c] = csum[p * 3 + c] + bg * img.at(x, y, c);
    }
  }
  std::vector<int> half(static_cast<std::size_t>(radius) + 1);
  for (int dy = 0; dy <= radius; ++dy) {
    half[dy] = static_cast<int>(std::floor(std::sqrt(radius * (radius + 1.0) - dy * dy)));
  }

  ImageBuffer out = img;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double m = std::clamp(static_cast<double>(mask.at(x, y)), 0.0, 1.0);
      if (m >= 1.0) continue;
      double wt = 0.0;
      double acc[3] = {0.0, 0.0, 0.0};
      for (int dy = -radius; dy <= radius; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        const int hw = half[static_cast<std::size_t>(std::abs(dy))];
        const int x0 = std::max(0, x - hw);
        const int x1 = std::min(w - 1, x + hw);
        const std::size_t a = yy * stride + x0;
        const std::size_t b = yy * stride + x1 + 1;
        wt += wsum[b] - wsum[a];
        for (int c = 0; c < 3; ++c) acc[c] += csum[b * 3 + c] - csum[a * 3 + c];
      }
      if (wt <= 1e-12) continue;
      for (int c = 0; c < 3; ++c) {
        const double blurred = acc[c] / wt;
        out.at(x, y, c) = static_cast<float>(m * img.at(x, y, c) + (1.0 - m) * blurred);
      }
    }
  }
  return out;
}

/// Raw transform settings resolved from a Directive or CameraVector.
struct RenderSettings {
  std::optional<double> exposure_ev;
  std::optional<double> kelvin;
  std::optional<Level> contrast;
  std::optional<double> contrast_slope;
  std::optional<Level> saturation;
  std::optional<double> saturation_factor;
  std::optional<double> zoom;
  int bokeh_level = 0;
  std::optional<std::size_t> style_index;

  static RenderSettings from_directive(const Directive& d, const StyleRegistry& registry) {
    RenderSettings s;
    for (const auto& [param, value] : d.pairs) {
      switch (param) {
        case Param::Exposure: s.exposure_ev = std::get<Ev>(value).stops; break;
        case Param::Cct: s.kelvin = std::get<Kelvin>(value).kelvin; break;
        case Param::Contrast: s.contrast = std::get<Level>(value); break;
        case Param::Saturation: s.saturation = std::get<Level>(value); break;
        case Param::Zoom: s.zoom = std::get<ZoomFactor>(value).factor; break;
        case Param::Bokeh: {
          const auto& l = std::get<Level>(value);
          const double pos = 1.0 + 3.0 * (l.n - 1) / std::max(1, l.of - 1);
          s.bokeh_level = static_cast<int>(std::lround(pos));
          break;
        }
        case Param::Style:
          s.style_index = registry.index_of(std::get<StyleName>(value).name);
          break;
      }
    }
    return s;
  }

  // Inverts the calibration analytically. Ordinal axes map to continuous
  // positions on the 4-level tables; bokeh snaps to the nearest level.
  static RenderSettings from_vector(const CameraVector& v) {
    RenderSettings s;
    auto table_at = [](const std::array<double, 4>& table, double cal) {
      const double pos = std::clamp((cal + 1.0) * 1.5, 0.0, 3.0);
      const int i0 = std::min(static_cast<int>(pos), 2);
      const double t = pos - i0;
      return table[i0] * (1 - t) + table[i0 + 1] * t;
    };
    if (v.has(Param::Exposure)) s.exposure_ev = exposure_from_calibrated(v.exposure);
    if (v.has(Param::Cct)) s.kelvin = kelvin_from_calibrated(v.cct);
    if (v.has(Param::Contrast)) s.contrast_slope = table_at(kContrastSlopes, v.contrast);
    if (v.has(Param::Saturation)) s.saturation_factor = table_at(kSaturationFactors, v.saturation);
    if (v.has(Param::Zoom)) s.zoom = zoom_from_calibrated(v.zoom);
    if (v.has(Param::Bokeh)) {
      s.bokeh_level = static_cast<int>(std::lround(1.0 + (v.bokeh + 1.0) * 1.5));
    }
    if (v.has(Param::Style) && v.style_index() >= 0) {
      s.style_index = static_cast<std::size_t>(v.style_index());
    }
    return s;
  }

  bool needs_linear(bool has_mask) const {
    return (exposure_ev && *exposure_ev != 0.0) || (kelvin && *kelvin != kCctNeutralK) ||
           (zoom && *zoom != 1.0) || (has_mask && bokeh_level > 0);
  }
};

/// Names of the operations a chain will run, in order.
inline std::vector<std::string> chain_ops(const RenderSettings& s, bool has_mask) {
  std::vector<std::string> ops;
  if (s.needs_linear(has_mask)) {
    ops.push_back("decode");
    if (s.exposure_ev && *s.exposure_ev != 0.0) ops.push_back("exposure");
    if (s.kelvin && *s.kelvin != kCctNeutralK) ops.push_back("cct");
    if (s.zoom && *s.zoom != 1.0) ops.push_back("zoom");
    if (has_mask && s.bokeh_level > 0) ops.push_back("bokeh");
    ops.push_back("encode");
  }
  if (s.contrast || s.contrast_slope) ops.push_back("contrast");
  if (s.saturation || s.saturation_factor) ops.push_back("saturation");
  if (s.style_index) ops.push_back("style");
  return ops;
}

/// Fixed-order composition: decode, exposure, cct, zoom, bokeh, encode,
/// contrast, saturation, style. Identity stages are skipped, so a neutral
/// chain returns its input bit-for-bit. Bokeh only runs when a mask is given.
inline ImageBuffer apply_chain(const ImageBuffer& img, const RenderSettings& s,
                               const StyleLibrary* styles = nullptr, const Mask* mask = nullptr) {
  require_space(img, ColorSpace::SrgbEncoded, "apply_chain");
  // Validate ranges up front so errors never depend on which stages run.
  if (s.kelvin) cct_gains(*s.kelvin);
  if (s.zoom) zoom_crop(img.width, img.height, *s.zoom);
  if (mask && (mask->width != img.width || mask->height != img.height)) {
    throw Error(ErrorCode::DimensionMismatch, "bokeh mask size does not match image");
  }
  if (s.bokeh_level < 0 || s.bokeh_level > 4) {
    throw Error(ErrorCode::Range, "bokeh level outside 0..4");
  }
  if (s.style_index && !styles) {
    throw Error(ErrorCode::Config, "style requested without a style library");
  }

  ImageBuffer cur = img;
  if (s.needs_linear(mask != nullptr)) {
    cur = srgb_decode(cur);
    if (s.exposure_ev && *s.exposure_ev != 0.0) cur = apply_exposure(cur, *s.exposure_ev);
    if (s.kelvin && *s.kelvin != kCctNeutralK) cur = apply_cct(cur, *s.kelvin);
    if (s.zoom && *s.zoom != 1.0) cur = apply_zoom(cur, *s.zoom);
    if (mask && s.bokeh_level > 0) cur = apply_bokeh(cur, *mask, s.bokeh_level);
    cur = srgb_encode(cur);
  }
  if (s.contrast) cur = apply_contrast(cur, *s.contrast);
  if (s.contrast_slope) cur = apply_contrast_slope(cur, *s.contrast_slope);
  if (s.saturation) cur = apply_saturation(cur, *s.saturation);
  if (s.saturation_factor) cur = apply_saturation_factor(cur, *s.saturation_factor);
  if (s.style_index) cur = apply_style(cur, styles->lut(*s.style_index));
  return cur;
}

inline ImageBuffer apply_chain(const ImageBuffer& img, const Directive& d,
                               const StyleLibrary& styles, const Mask* mask = nullptr) {
  return apply_chain(img, RenderSettings::from_directive(d, styles.registry()), &styles, mask);
}

inline ImageBuffer apply_chain(const ImageBuffer& img, const CameraVector& v,
                               const StyleLibrary& styles, const Mask* mask = nullptr) {
  return apply_chain(img, RenderSettings::from_vector(v), &styles, mask);
}

}  // namespace camforge
