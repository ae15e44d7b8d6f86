// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// JSON shapes shared by the CLI and the HTTP service.

#pragma once

#include "json.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>
#include <variant>

#include "camforge/calibration.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/metrics.hpp"

#ifndef CAMFORGE_DEFAULT_REGISTRY
#define CAMFORGE_DEFAULT_REGISTRY ""
#endif

namespace camforge {

using ojson = nlohmann::ordered_json;

inline ojson pair_to_json(const DirectivePair& pair) {
  ojson j;
  j["param"] = std::string(param_name(pair.param));
  j["value"] = render_value(pair.value);
  std::visit(
      [&j](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Ev>) {
          j["unit"] = "EV";
          j["number"] = v.stops;
        } else if constexpr (std::is_same_v<T, Kelvin>) {
          j["unit"] = "K";
          j["number"] = v.kelvin;
        } else if constexpr (std::is_same_v<T, Level>) {
          j["unit"] = "level";
          j["n"] = v.n;
          j["of"] = v.of;
        } else if constexpr (std::is_same_v<T, ZoomFactor>) {
          j["unit"] = "x";
          j["number"] = v.factor;
        } else {
          j["unit"] = "style";
          j["name"] = v.name;
        }
      },
      pair.value);
  return j;
}

inline ojson directive_to_json(const Directive& d) {
  ojson j;
  j["directive"] = render_directive(d);
  j["pairs"] = ojson::array();
  for (const auto& p : d.pairs) j["pairs"].push_back(pair_to_json(p));
  return j;
}

inline ojson vector_to_json(const CameraVector& v) {
  ojson j;
  const auto flat = v.flatten();
  j["values"] = std::vector<double>(flat.begin(), flat.end());
  j["mask"] = v.mask;
  ojson present = ojson::array();
  for (Param p : kAllParams) {
    if (v.has(p)) present.push_back(std::string(param_name(p)));
  }
  j["present"] = present;
  j["fields"] = {{"exposure", v.exposure}, {"cct", v.cct},   {"contrast", v.contrast},
                 {"saturation", v.saturation}, {"zoom", v.zoom}, {"bokeh", v.bokeh},
                 {"style", std::vector<double>(v.style.begin(), v.style.end())}};
  return j;
}

inline ojson metrics_to_json(const MetricReport& m) {
  return {{"psnr", m.psnr}, {"ssim", m.ssim}, {"delta_e", m.delta_e}};
}

inline ojson error_to_json(const Error& e) {
  ojson j{{"error", std::string(to_string(e.code()))}, {"message", e.what()}};
  if (e.position() != Error::npos) j["position"] = e.position();
  return j;
}

/// CAMFORGE_REGISTRY, then the registry installed with the build, then the
/// built-in names with parametric looks.
inline StyleRegistry resolve_registry(const std::string& explicit_path = {}) {
  if (!explicit_path.empty()) return StyleRegistry::load(explicit_path);
  if (const char* env = std::getenv("CAMFORGE_REGISTRY"); env && *env) return StyleRegistry::load(env);
  const std::filesystem::path fallback(CAMFORGE_DEFAULT_REGISTRY);
  if (!fallback.empty() && std::filesystem::exists(fallback)) return StyleRegistry::load(fallback);
  return StyleRegistry::builtin();
}

}  // namespace camforge
