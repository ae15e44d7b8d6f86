// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// PNG in, directive applied, PNG out. The CLI and the HTTP service both go
// through render_png, which is what keeps their output bytes identical.

#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/directive.hpp"
#include "camforge/lut.hpp"
#include "camforge/png_io.hpp"
#include "camforge/transforms.hpp"

namespace camforge {

struct RenderOutput {
  std::vector<std::uint8_t> png;
  Directive directive;
  CameraVector vector;
  std::vector<std::string> chain;
  double timing_ms = 0.0;
};

inline RenderOutput render_png(std::string_view png_bytes, const Directive& directive, const StyleLibrary& styles,
                               std::optional<std::string_view> mask_png = std::nullopt) {
  const auto start = std::chrono::steady_clock::now();
  RenderOutput out;
  out.directive = directive;
  out.vector = calibrate(directive, styles.registry());
  const RasterImage raster = decode_png(png_bytes);
  std::optional<Mask> mask;
  if (mask_png) mask = to_mask(decode_png(*mask_png));
  const RenderSettings settings = RenderSettings::from_directive(directive, styles.registry());
  out.chain = chain_ops(settings, mask.has_value());
  const ImageBuffer result = apply_chain(to_buffer(raster), settings, &styles, mask ? &*mask : nullptr);
  out.png = encode_png(to_raster(result, raster.bit_depth));
  out.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return out;
}

inline std::string_view as_view(const std::vector<std::uint8_t>& bytes) {
  return {reinterpret_cast<const char*>(bytes.data()), bytes.size()};
}

}  // namespace camforge
