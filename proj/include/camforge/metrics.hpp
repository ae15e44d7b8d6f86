// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Classical fidelity metrics over sRGB-encoded images in [0, 1].

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "camforge/error.hpp"
#include "camforge/image.hpp"

namespace camforge {

inline constexpr double kPsnrCapDb = 100.0;

struct MetricReport {
  double psnr = kPsnrCapDb;
  double ssim = 1.0;
  double delta_e = 0.0;
};

/// Peak signal-to-noise ratio on an 8-bit scale; identical inputs give the cap.
inline double psnr(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_size(a, b, "psnr");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = (static_cast<double>(a.data[i]) - b.data[i]) * 255.0;
    sse += d * d;
  }
  if (sse == 0.0 || a.data.empty()) return kPsnrCapDb;
  const double mse = sse / static_cast<double>(a.data.size());
  return std::min(kPsnrCapDb, 10.0 * std::log10(255.0 * 255.0 / mse));
}

namespace detail {

inline std::vector<double> luma_plane(const ImageBuffer& img) {
  std::vector<double> y(img.pixel_count());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 255.0 * (0.2126 * img.data[3 * i] + 0.7152 * img.data[3 * i + 1] +
                    0.0722 * img.data[3 * i + 2]);
  }
  return y;
}

}  // namespace detail

/// SSIM on luma with an 11x11 Gaussian window (sigma 1.5), K1 = 0.01,
/// K2 = 0.03, L = 255, averaged over every fully-contained window.
inline double ssim(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_size(a, b, "ssim");
  constexpr int kWin = 11;
  if (a.width < kWin || a.height < kWin) {
    throw Error(ErrorCode::TooSmall, "ssim needs at least 11x11 pixels");
  }
  if (a.data == b.data) return 1.0;

  std::array<double, kWin> g{};
  double gsum = 0.0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - kWin / 2;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (double& v : g) v /= gsum;

  const auto ya = detail::luma_plane(a);
  const auto yb = detail::luma_plane(b);
  const int w = a.width, h = a.height;
  const int ow = w - kWin + 1;

  // Horizontal pass over the five moment planes, then vertical per window.
  std::vector<std::array<double, 5>> horiz(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      std::array<double, 5> m{};
      for (int k = 0; k < kWin; ++k) {
        const double p = ya[static_cast<std::size_t>(y) * w + x + k];
        const double q = yb[static_cast<std::size_t>(y) * w + x + k];
        m[0] += g[k] * p;
        m[1] += g[k] * q;
        m[2] += g[k] * p * p;
        m[3] += g[k] * q * q;
        m[4] += g[k] * p * q;
      }
      horiz[static_cast<std::size_t>(y) * ow + x] = m;
    }
  }

  constexpr double c1 = (0.01 * 255.0) * (0.01 * 255.0);
  constexpr double c2 = (0.03 * 255.0) * (0.03 * 255.0);
  double total = 0.0;
  std::size_t count = 0;
  for (int y = 0; y + kWin <= h; ++y) {
    for (int x = 0; x < ow; ++x) {
      std::array<double, 5> m{};
      for (int k = 0; k < kWin; ++k) {
        const auto& r = horiz[static_cast<std::size_t>(y + k) * ow + x];
        for (int j = 0; j < 5; ++j) m[j] += g[k] * r[j];
      }
      const double mu_a = m[0], mu_b = m[1];
      const double var_a = std::max(0.0, m[2] - mu_a * mu_a);
      const double var_b = std::max(0.0, m[3] - mu_b * mu_b);
      const double cov = m[4] - mu_a * mu_b;
      total += ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) /
               ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
      ++count;
    }
  }
  return total / static_cast<double>(count);
}

namespace detail {

inline std::array<double, 3> srgb_to_lab(double r, double g, double b) {
  auto lin = [](double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
  };
  const double lr = lin(r), lg = lin(g), lb = lin(b);
  // sRGB primaries, D65 white.
  const double x = 0.4124564 * lr + 0.3575761 * lg + 0.1804375 * lb;
  const double y = 0.2126729 * lr + 0.7151522 * lg + 0.0721750 * lb;
  const double z = 0.0193339 * lr + 0.1191920 * lg + 0.9503041 * lb;
  constexpr double xn = 0.4124564 + 0.3575761 + 0.1804375;
  constexpr double yn = 0.2126729 + 0.7151522 + 0.0721750;
  constexpr double zn = 0.0193339 + 0.1191920 + 0.9503041;
  auto f = [](double t) {
    constexpr double d = 6.0 / 29.0;
    return t > d * d * d ? std::cbrt(t) : t / (3 * d * d) + 4.0 / 29.0;
  };
  const double fx = f(x / xn), fy = f(y / yn), fz = f(z / zn);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

}  // namespace detail

/// Mean CIE76 color difference in CIELAB (D65).
inline double delta_e(const ImageBuffer& a, const ImageBuffer& b) {
  require_same_size(a, b, "delta_e");
  if (a.pixel_count() == 0) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < a.data.size(); i += 3) {
    const auto la = detail::srgb_to_lab(a.data[i], a.data[i + 1], a.data[i + 2]);
    const auto lb = detail::srgb_to_lab(b.data[i], b.data[i + 1], b.data[i + 2]);
    const double dl = la[0] - lb[0], da = la[1] - lb[1], db = la[2] - lb[2];
    total += std::sqrt(dl * dl + da * da + db * db);
  }
  return total / static_cast<double>(a.pixel_count());
}

inline MetricReport compare(const ImageBuffer& ref, const ImageBuffer& test) {
  return {psnr(ref, test), ssim(ref, test), delta_e(ref, test)};
}

}  // namespace camforge
