// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/error.hpp"
#include "camforge/image.hpp"

namespace camforge {

/// 3D lattice over encoded RGB, red varying fastest (the `.cube` order).
struct Lut3D {
  int size = 17;
  std::string title;
  std::vector<float> table;  // size^3 * 3

  std::size_t offset(int r, int g, int b) const {
    return ((static_cast<std::size_t>(b) * size + g) * size + r) * 3;
  }

  static Lut3D identity(int n = 17) {
    Lut3D lut;
    lut.size = n;
    lut.title = "identity";
    lut.table.resize(static_cast<std::size_t>(n) * n * n * 3);
    for (int b = 0; b < n; ++b)
      for (int g = 0; g < n; ++g)
        for (int r = 0; r < n; ++r) {
          auto o = lut.offset(r, g, b);
          lut.table[o] = static_cast<float>(r) / static_cast<float>(n - 1);
          lut.table[o + 1] = static_cast<float>(g) / static_cast<float>(n - 1);
          lut.table[o + 2] = static_cast<float>(b) / static_cast<float>(n - 1);
        }
    return lut;
  }
};

inline Lut3D parse_cube(std::istream& in) {
  Lut3D lut;
  lut.size = 0;
  std::string line;
  std::size_t expected = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream row(line.substr(first));
    if (line.compare(first, 5, "TITLE") == 0) {
      auto q0 = line.find('"');
      auto q1 = line.rfind('"');
      if (q0 != std::string::npos && q1 > q0) lut.title = line.substr(q0 + 1, q1 - q0 - 1);
      continue;
    }
    if (line.compare(first, 11, "LUT_3D_SIZE") == 0) {
      std::string kw;
      row >> kw >> lut.size;
      if (lut.size < 2 || lut.size > 256) throw Error(ErrorCode::Io, "bad LUT_3D_SIZE");
      expected = static_cast<std::size_t>(lut.size) * lut.size * lut.size;
      lut.table.reserve(expected * 3);
      continue;
    }
    if (line.compare(first, 10, "DOMAIN_MIN") == 0 || line.compare(first, 10, "DOMAIN_MAX") == 0) {
      std::string kw;
      double a = 0, b = 0, c = 0;
      row >> kw >> a >> b >> c;
      const double want = line.compare(first, 10, "DOMAIN_MIN") == 0 ? 0.0 : 1.0;
      if (a != want || b != want || c != want) {
        throw Error(ErrorCode::Io, "only the unit LUT domain is supported");
      }
      continue;
    }
    if (line.compare(first, 11, "LUT_1D_SIZE") == 0) {
      throw Error(ErrorCode::Io, "1D LUTs are not supported");
    }
    double r, g, b;
    if (!(row >> r >> g >> b)) throw Error(ErrorCode::Io, "malformed LUT entry: " + line);
    lut.table.push_back(static_cast<float>(r));
    lut.table.push_back(static_cast<float>(g));
    lut.table.push_back(static_cast<float>(b));
  }
  if (lut.size == 0) throw Error(ErrorCode::Io, "missing LUT_3D_SIZE");
  if (lut.table.size() != expected * 3) {
    throw Error(ErrorCode::Io, "LUT lattice incomplete: " + std::to_string(lut.table.size() / 3) +
                                   " of " + std::to_string(expected) + " entries");
  }
  for (float v : lut.table) {
    if (!(v >= 0.0f && v <= 1.0f)) throw Error(ErrorCode::Io, "LUT entry outside [0,1]");
  }
  return lut;
}

inline Lut3D load_cube(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read LUT " + path.string());
  return parse_cube(in);
}

inline std::string format_cube(const Lut3D& lut) {
  std::string out = "TITLE \"" + lut.title + "\"\nLUT_3D_SIZE " + std::to_string(lut.size) + "\n";
  char buf[96];
  for (std::size_t i = 0; i < lut.table.size(); i += 3) {
    std::snprintf(buf, sizeof buf, "%.9g %.9g %.9g\n", lut.table[i], lut.table[i + 1],
                  lut.table[i + 2]);
    out += buf;
  }
  return out;
}

inline void save_cube(const Lut3D& lut, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write LUT " + path.string());
  out << format_cube(lut);
}

inline std::array<float, 3> lut_sample(const Lut3D& lut, float r, float g, float b) {
  const int n = lut.size;
  auto locate = [n](float v, int& i0, double& t) {
    double x = std::clamp(static_cast<double>(v), 0.0, 1.0) * (n - 1);
    i0 = std::min(static_cast<int>(x), n - 2);
    t = x - i0;
  };
  int r0, g0, b0;
  double tr, tg, tb;
  locate(r, r0, tr);
  locate(g, g0, tg);
  locate(b, b0, tb);
  std::array<float, 3> out{};
  for (int c = 0; c < 3; ++c) {
    auto e = [&](int dr, int dg, int db) {
      return static_cast<double>(lut.table[lut.offset(r0 + dr, g0 + dg, b0 + db) + c]);
    };
    double c00 = e(0, 0, 0) * (1 - tr) + e(1, 0, 0) * tr;
    double c10 = e(0, 1, 0) * (1 - tr) + e(1, 1, 0) * tr;
    double c01 = e(0, 0, 1) * (1 - tr) + e(1, 0, 1) * tr;
    double c11 = e(0, 1, 1) * (1 - tr) + e(1, 1, 1) * tr;
    double c0 = c00 * (1 - tg) + c10 * tg;
    double c1 = c01 * (1 - tg) + c11 * tg;
    out[c] = static_cast<float>(c0 * (1 - tb) + c1 * tb);
  }
  return out;
}

inline ImageBuffer apply_style(const ImageBuffer& img, const Lut3D& lut) {
  require_space(img, ColorSpace::SrgbEncoded, "apply_style");
  ImageBuffer out = img;
  for (std::size_t i = 0; i < img.data.size(); i += 3) {
    auto v = lut_sample(lut, img.data[i], img.data[i + 1], img.data[i + 2]);
    out.data[i] = v[0];
    out.data[i + 1] = v[1];
    out.data[i + 2] = v[2];
  }
  return out;
}

// Parametric film looks. These are hand-tuned stand-ins for real emulations:
// a 3x3 crosstalk matrix, a saturation mix, then a per-channel tone curve
// (lift, gain, S-curve strength, gamma), all in encoded space.
struct FilmLook {
  std::array<double, 9> matrix;
  double saturation;
  std::array<double, 3> lift;
  std::array<double, 3> gain;
  double s_curve;
  double gamma;
  bool monochrome = false;
};

inline constexpr std::array<FilmLook, kStyleCount> kFilmLooks = {{
    // ClassicNeg: muted, cool shadows, firm mids
    {{0.92, 0.06, 0.02, 0.04, 0.90, 0.06, 0.02, 0.10, 0.88}, 0.85, {0.02, 0.03, 0.05},
     {0.96, 0.97, 0.95}, 0.35, 1.05},
    // Velvia: saturated, punchy
    {{1.10, -0.06, -0.04, -0.05, 1.12, -0.07, -0.03, -0.08, 1.11}, 1.35, {0.0, 0.0, 0.01},
     {1.0, 1.0, 0.99}, 0.45, 1.08},
    // KodakGold: warm, golden highlights
    {{1.04, 0.0, -0.04, 0.02, 1.0, -0.02, -0.02, 0.0, 0.94}, 1.08, {0.03, 0.02, 0.0},
     {1.0, 0.98, 0.90}, 0.20, 0.97},
    // CineStill: tungsten cast, lifted blacks
    {{0.95, 0.03, 0.02, 0.0, 0.97, 0.03, 0.02, 0.05, 1.04}, 1.05, {0.04, 0.04, 0.06},
     {0.97, 0.98, 1.0}, 0.25, 1.0},
    // Portra: soft contrast, gentle skin tones
    {{1.02, 0.0, -0.02, 0.01, 0.99, 0.0, -0.01, 0.02, 0.97}, 0.92, {0.03, 0.025, 0.02},
     {0.98, 0.97, 0.94}, 0.10, 0.98},
    // Ektar: vivid, clean
    {{1.08, -0.05, -0.03, -0.03, 1.07, -0.04, -0.02, -0.05, 1.07}, 1.25, {0.0, 0.0, 0.0},
     {1.0, 0.99, 0.98}, 0.30, 1.02},
    // ClassicChrome: desaturated, hard shoulders
    {{0.96, 0.04, 0.0, 0.03, 0.95, 0.02, 0.01, 0.04, 0.95}, 0.75, {0.015, 0.015, 0.02},
     {0.95, 0.95, 0.93}, 0.40, 1.06},
    // Provia: neutral slide film
    {{1.03, -0.02, -0.01, -0.01, 1.03, -0.02, -0.01, -0.02, 1.03}, 1.12, {0.0, 0.0, 0.0},
     {1.0, 1.0, 1.0}, 0.30, 1.03},
    // Superia: green-leaning shadows
    {{0.98, 0.02, 0.0, 0.01, 1.02, -0.03, 0.0, 0.03, 0.97}, 1.05, {0.01, 0.03, 0.02},
     {0.99, 1.0, 0.96}, 0.22, 1.0},
    // TriX: high-contrast monochrome
    {{1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0}, 0.0, {0.02, 0.02, 0.02},
     {0.98, 0.98, 0.98}, 0.55, 1.04, true},
}};

inline Lut3D bake_film_lut(std::size_t index, std::string_view name, int n = 17) {
  const FilmLook& look = kFilmLooks.at(index);
  Lut3D lut = Lut3D::identity(n);
  lut.title = "camforge parametric approximation: " + std::string(name);
  auto tone = [&](double x, int c) {
    x = std::clamp(x, 0.0, 1.0);
    double s = x + look.s_curve * x * (1 - x) * (x - 0.5) * 2.0;  // S-curve around 0.5
    s = std::pow(std::clamp(s, 0.0, 1.0), look.gamma);
    return std::clamp(look.lift[c] + (look.gain[c] - look.lift[c]) * s, 0.0, 1.0);
  };
  for (std::size_t i = 0; i < lut.table.size(); i += 3) {
    const double in[3] = {lut.table[i], lut.table[i + 1], lut.table[i + 2]};
    double m[3];
    for (int r = 0; r < 3; ++r) {
      m[r] = look.matrix[r * 3] * in[0] + look.matrix[r * 3 + 1] * in[1] +
             look.matrix[r * 3 + 2] * in[2];
    }
    const double luma = 0.2126 * m[0] + 0.7152 * m[1] + 0.0722 * m[2];
    for (int c = 0; c < 3; ++c) {
      double v = look.monochrome ? luma : luma + look.saturation * (m[c] - luma);
      lut.table[i + c] = static_cast<float>(tone(v, c));
    }
  }
  return lut;
}

/// The registry's LUTs, loaded from disk when the files exist and otherwise
/// baked from the built-in parametric looks (by registry index).
class StyleLibrary {
 public:
  explicit StyleLibrary(StyleRegistry registry) : registry_(std::move(registry)) {
    for (const auto& e : registry_.entries()) {
      auto path = registry_.lut_file(e.index);
      if (!registry_.base_dir().empty() && std::filesystem::exists(path)) {
        luts_.push_back(load_cube(path));
      } else {
        luts_.push_back(bake_film_lut(e.index, e.name));
      }
    }
  }

  const StyleRegistry& registry() const { return registry_; }
  const Lut3D& lut(std::size_t index) const { return luts_.at(index); }

 private:
  StyleRegistry registry_;
  std::vector<Lut3D> luts_;
};

}  // namespace camforge
