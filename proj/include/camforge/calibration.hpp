// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/directive.hpp"
#include "camforge/error.hpp"

namespace camforge {

inline constexpr double kExposureRangeEv = 3.0;
inline constexpr double kCctMinK = 2000.0;
inline constexpr double kCctMaxK = 10000.0;
inline constexpr double kCctNeutralK = 6500.0;
inline constexpr double kZoomMax = 4.0;
inline constexpr std::size_t kStyleCount = 10;
// exposure, cct, contrast, saturation, zoom, bokeh, then the style one-hot.
inline constexpr std::size_t kCameraVectorWidth = 6 + kStyleCount;

inline double calibrate_exposure(double ev) {
  return std::clamp(ev / kExposureRangeEv, -1.0, 1.0);
}

/// Log-domain normalization of color temperature onto [0, 1].
inline double calibrate_cct(double kelvin) {
  if (!(kelvin >= kCctMinK && kelvin <= kCctMaxK)) {
    throw Error(ErrorCode::Range, "color temperature " + detail::format_decimal(kelvin) +
                                      "K outside [2000, 10000]");
  }
  return (std::log(kelvin) - std::log(kCctMinK)) / (std::log(kCctMaxK) - std::log(kCctMinK));
}

inline double calibrate_ordinal(int n, int of) {
  if (of < 2 || n < 1 || n > of) {
    throw Error(ErrorCode::Range, "ordinal level " + std::to_string(n) + "/" +
                                      std::to_string(of) + " out of range");
  }
  return -1.0 + 2.0 * static_cast<double>(n - 1) / static_cast<double>(of - 1);
}

inline double calibrate_zoom(double factor, double max_factor = kZoomMax) {
  if (!(factor >= 1.0 && factor <= max_factor)) {
    throw Error(ErrorCode::Range, "zoom factor " + detail::format_decimal(factor) +
                                      "x outside [1, " + detail::format_decimal(max_factor) + "]");
  }
  return std::log2(factor) / std::log2(max_factor);
}

inline const double kCctNeutral = calibrate_cct(kCctNeutralK);

// Exact analytic inverses, used when a transform chain is driven by a vector.
inline double exposure_from_calibrated(double s) { return s * kExposureRangeEv; }
inline double kelvin_from_calibrated(double s) {
  return std::exp(std::log(kCctMinK) + s * (std::log(kCctMaxK) - std::log(kCctMinK)));
}
inline double zoom_from_calibrated(double s, double max_factor = kZoomMax) {
  return std::exp2(s * std::log2(max_factor));
}

struct StyleEntry {
  std::string name;
  std::size_t index = 0;
  std::string lut_path;
};

/// Ordered film-style names. Lookup is case-insensitive; LUT paths are
/// resolved relative to the registry file's directory.
class StyleRegistry {
 public:
  static constexpr std::string_view kHeader = "camforge-styles v1";

  StyleRegistry() = default;

  explicit StyleRegistry(std::vector<StyleEntry> entries, std::filesystem::path base_dir = {})
      : entries_(std::move(entries)), base_dir_(std::move(base_dir)) {
    validate();
  }

  static StyleRegistry builtin();

  static StyleRegistry parse(std::string_view text, std::filesystem::path base_dir = {}) {
    std::vector<StyleEntry> entries;
    std::istringstream in{std::string(text)};
    std::string line;
    bool seen_header = false;
    while (std::getline(in, line)) {
      auto first = line.find_first_not_of(" \t\r");
      if (first == std::string::npos || line[first] == '#') continue;
      auto last = line.find_last_not_of(" \t\r");
      line = line.substr(first, last - first + 1);
      if (!seen_header) {
        if (line != kHeader) {
          throw Error(ErrorCode::Config, "style registry must start with '" +
                                             std::string(kHeader) + "'");
        }
        seen_header = true;
        continue;
      }
      std::array<std::string, 3> fields;
      std::istringstream row(line);
      for (auto& f : fields) {
        if (!std::getline(row, f, ',')) {
          throw Error(ErrorCode::Config, "malformed registry line: " + line);
        }
        auto a = f.find_first_not_of(' ');
        auto b = f.find_last_not_of(' ');
        f = a == std::string::npos ? "" : f.substr(a, b - a + 1);
      }
      StyleEntry e;
      e.name = fields[0];
      try {
        e.index = static_cast<std::size_t>(std::stoul(fields[1]));
      } catch (const std::exception&) {
        throw Error(ErrorCode::Config, "bad registry index: " + fields[1]);
      }
      e.lut_path = fields[2];
      entries.push_back(std::move(e));
    }
    if (!seen_header) throw Error(ErrorCode::Config, "empty style registry");
    return StyleRegistry(std::move(entries), std::move(base_dir));
  }

  static StyleRegistry load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot read style registry " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path.parent_path());
  }

  std::string serialize() const {
    std::string out = std::string(kHeader) + "\n# name,index,lut_path\n";
    for (const auto& e : entries_) {
      out += e.name + "," + std::to_string(e.index) + "," + e.lut_path + "\n";
    }
    return out;
  }

  const std::vector<StyleEntry>& entries() const { return entries_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }

  std::filesystem::path lut_file(std::size_t index) const {
    std::filesystem::path p = entries_.at(index).lut_path;
    return p.is_absolute() || base_dir_.empty() ? p : base_dir_ / p;
  }

  std::size_t index_of(std::string_view name) const {
    for (const auto& e : entries_) {
      if (iequals(e.name, name)) return e.index;
    }
    throw Error(ErrorCode::UnknownStyle, "unknown style '" + std::string(name) + "'");
  }

 private:
  static bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() &&
           std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
             return std::tolower(static_cast<unsigned char>(x)) ==
                    std::tolower(static_cast<unsigned char>(y));
           });
  }

  void validate() {
    if (entries_.size() != kStyleCount) {
      throw Error(ErrorCode::Config, "style registry needs exactly 10 entries, got " +
                                         std::to_string(entries_.size()));
    }
    std::sort(entries_.begin(), entries_.end(),
              [](const StyleEntry& a, const StyleEntry& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < entries_.size(); ++i) {
      if (entries_[i].index != i) {
        throw Error(ErrorCode::Config, "style registry indices must be 0..9 without gaps");
      }
      for (std::size_t j = 0; j < i; ++j) {
        if (iequals(entries_[i].name, entries_[j].name)) {
          throw Error(ErrorCode::Config, "duplicate style name '" + entries_[i].name + "'");
        }
      }
    }
  }

  std::vector<StyleEntry> entries_;
  std::filesystem::path base_dir_;
};

inline constexpr std::array<std::string_view, kStyleCount> kBuiltinStyleNames = {
    "ClassicNeg", "Velvia",        "KodakGold", "CineStill", "Portra",
    "Ektar",      "ClassicChrome", "Provia",    "Superia",   "TriX"};

inline StyleRegistry StyleRegistry::builtin() {
  std::vector<StyleEntry> entries;
  for (std::size_t i = 0; i < kStyleCount; ++i) {
    std::string name(kBuiltinStyleNames[i]);
    std::string lower = name;
    for (char& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    entries.push_back({name, i, lower + ".cube"});
  }
  return StyleRegistry(std::move(entries));
}

inline std::array<double, kStyleCount> encode_style(std::string_view name,
                                                    const StyleRegistry& registry) {
  std::array<double, kStyleCount> onehot{};
  onehot[registry.index_of(name)] = 1.0;
  return onehot;
}

/// Calibrated camera vector. Absent parameters hold neutral values and a
/// cleared mask bit; mask bit i corresponds to kAllParams[i].
struct CameraVector {
  double exposure = 0.0;
  double cct = kCctNeutral;
  double contrast = 0.0;
  double saturation = 0.0;
  double zoom = 0.0;
  double bokeh = 0.0;
  std::array<double, kStyleCount> style{};
  std::uint8_t mask = 0;

  bool has(Param p) const { return (mask >> static_cast<unsigned>(p)) & 1u; }
  void set(Param p) { mask |= static_cast<std::uint8_t>(1u << static_cast<unsigned>(p)); }

  std::array<double, kCameraVectorWidth> flatten() const {
    std::array<double, kCameraVectorWidth> v{};
    v[0] = exposure;
    v[1] = cct;
    v[2] = contrast;
    v[3] = saturation;
    v[4] = zoom;
    v[5] = bokeh;
    std::copy(style.begin(), style.end(), v.begin() + 6);
    return v;
  }

  static CameraVector unflatten(const std::array<double, kCameraVectorWidth>& v,
                                std::uint8_t mask) {
    CameraVector c;
    c.exposure = v[0];
    c.cct = v[1];
    c.contrast = v[2];
    c.saturation = v[3];
    c.zoom = v[4];
    c.bokeh = v[5];
    std::copy(v.begin() + 6, v.end(), c.style.begin());
    c.mask = mask;
    return c;
  }

  int style_index() const {
    for (std::size_t i = 0; i < kStyleCount; ++i) {
      if (style[i] == 1.0) return static_cast<int>(i);
    }
    return -1;
  }

  bool operator==(const CameraVector&) const = default;
};

inline CameraVector calibrate(const Directive& d, const StyleRegistry& registry) {
  CameraVector v;
  for (const auto& [param, value] : d.pairs) {
    switch (param) {
      case Param::Exposure: v.exposure = calibrate_exposure(std::get<Ev>(value).stops); break;
      case Param::Cct: v.cct = calibrate_cct(std::get<Kelvin>(value).kelvin); break;
      case Param::Contrast: {
        const auto& l = std::get<Level>(value);
        v.contrast = calibrate_ordinal(l.n, l.of);
        break;
      }
      case Param::Saturation: {
        const auto& l = std::get<Level>(value);
        v.saturation = calibrate_ordinal(l.n, l.of);
        break;
      }
      case Param::Bokeh: {
        const auto& l = std::get<Level>(value);
        v.bokeh = calibrate_ordinal(l.n, l.of);
        break;
      }
      case Param::Zoom: v.zoom = calibrate_zoom(std::get<ZoomFactor>(value).factor); break;
      case Param::Style:
        v.style = encode_style(std::get<StyleName>(value).name, registry);
        break;
    }
    v.set(param);
  }
  return v;
}

}  // namespace camforge
