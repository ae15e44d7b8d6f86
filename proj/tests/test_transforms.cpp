// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "camforge/transforms.hpp"
#include "fixtures.hpp"

using namespace camforge;
using camforge::testing::uniform;

namespace {

std::vector<RasterImage> identity_images() {
  return {camforge::testing::ramp_raster(), camforge::testing::photo_raster(),
          camforge::testing::noise_raster(5)};
}

double mean_channel(const ImageBuffer& img, int c) {
  double s = 0.0;
  for (std::size_t i = c; i < img.data.size(); i += 3) s += img.data[i];
  return s / static_cast<double>(img.pixel_count());
}

double mean_luminance(const ImageBuffer& lin) {
  return 0.2126 * mean_channel(lin, 0) + 0.7152 * mean_channel(lin, 1) + 0.0722 * mean_channel(lin, 2);
}

const StyleLibrary& library() {
  static const StyleLibrary lib(StyleRegistry::builtin());
  return lib;
}

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::State;
}

}  // namespace

TEST(Transforms, SrgbTransfer) {
  EXPECT_EQ(srgb_to_linear(0.0), 0.0);
  EXPECT_EQ(srgb_to_linear(1.0), 1.0);
  EXPECT_NEAR(linear_to_srgb(0.18), 1.055 * std::pow(0.18, 1 / 2.4) - 0.055, 1e-15);
  EXPECT_NEAR(linear_to_srgb(0.18), 0.4613, 1e-3);
  for (int i = 0; i <= 1000; ++i) {
    const double v = i / 1000.0;
    EXPECT_NEAR(srgb_to_linear(linear_to_srgb(v)), v, 1e-6);
  }
  const ImageBuffer enc = uniform(4, 4, 0.2f, 0.5f, 0.9f);
  EXPECT_EQ(code_of([&] { srgb_encode(enc); }), ErrorCode::SpaceMismatch);
  EXPECT_EQ(code_of([&] { apply_exposure(enc, 1.0); }), ErrorCode::SpaceMismatch);
}

TEST(Transforms, Exposure) {
  const ImageBuffer lin = uniform(4, 4, 0.18f, 0.18f, 0.18f, ColorSpace::Linear);
  EXPECT_EQ(apply_exposure(lin, 0.0), lin);
  const ImageBuffer up = apply_exposure(lin, 1.0);
  for (float v : up.data) EXPECT_NEAR(v, 0.36f, 1e-7);
  const ImageBuffer hot = apply_exposure(uniform(4, 4, 0.6f, 0.6f, 0.6f, ColorSpace::Linear), 1.0);
  for (float v : hot.data) EXPECT_NEAR(v, 1.2f, 1e-6);
  for (float v : srgb_encode(hot).data) EXPECT_EQ(v, 1.0f);
}

TEST(Transforms, CctGains) {
  const auto g = cct_gains(6500.0);
  EXPECT_EQ(g[0], 1.0);
  EXPECT_EQ(g[1], 1.0);
  EXPECT_EQ(g[2], 1.0);
  const auto warm = cct_gains(3200.0);
  EXPECT_GT(warm[0], 1.0);
  EXPECT_LT(warm[2], 1.0);
  EXPECT_EQ(warm[1], 1.0);
  const auto cool = cct_gains(10000.0);
  EXPECT_GT(cool[2], cool[0]);
  EXPECT_EQ(code_of([] { cct_gains(1500.0); }), ErrorCode::Range);

  const ImageBuffer gray = uniform(8, 8, 0.2f, 0.2f, 0.2f, ColorSpace::Linear);
  const ImageBuffer w = apply_cct(gray, 3200.0);
  EXPECT_GT(mean_channel(w, 0), mean_channel(w, 2));
  EXPECT_EQ(apply_cct(gray, 6500.0), gray);
  const ImageBuffer black(8, 8, ColorSpace::Linear);
  EXPECT_EQ(apply_cct(black, 2000.0), black);
}

TEST(Transforms, ContrastAndSaturation) {
  const ImageBuffer mid = uniform(4, 4, 0.5f, 0.5f, 0.5f);
  for (int n = 1; n <= 4; ++n) EXPECT_EQ(apply_contrast(mid, Level{n, 4}), mid);
  const ImageBuffer p = uniform(4, 4, 0.7f, 0.2f, 0.9f);
  EXPECT_EQ(apply_contrast_slope(p, 1.0), p);
  const ImageBuffer c4 = apply_contrast(p, Level{4, 4});
  EXPECT_NEAR(c4.data[0], 0.78f, 1e-6);
  EXPECT_NEAR(c4.data[1], 0.08f, 1e-6);
  EXPECT_NEAR(c4.data[2], 1.0f, 0.0);

  EXPECT_EQ(apply_saturation_factor(p, 1.0), p);
  const ImageBuffer g0 = apply_saturation_factor(p, 0.0);
  const double luma = 0.2126 * 0.7 + 0.7152 * 0.2 + 0.0722 * 0.9;
  for (float v : g0.data) EXPECT_NEAR(v, luma, 1e-6);
  const ImageBuffer gray = uniform(4, 4, 0.3f, 0.3f, 0.3f);
  for (int n = 1; n <= 4; ++n) EXPECT_EQ(apply_saturation(gray, Level{n, 4}), gray);
  EXPECT_EQ(code_of([&] { apply_contrast(p, Level{5, 4}); }), ErrorCode::Range);
}

TEST(Transforms, ZoomGeometry) {
  const CropRect r = zoom_crop(1024, 1024, 2.0);
  EXPECT_EQ(r.width, 512);
  EXPECT_EQ(r.height, 512);
  EXPECT_EQ(r.x, 256);
  EXPECT_EQ(r.y, 256);
  const ImageBuffer u = uniform(64, 48, 0.25f, 0.5f, 0.75f, ColorSpace::Linear);
  for (double f : {1.3, 2.0, 3.7, 4.0}) {
    const ImageBuffer z = apply_zoom(u, f);
    EXPECT_EQ(z.width, 64);
    EXPECT_EQ(z.height, 48);
    for (std::size_t i = 0; i < z.data.size(); ++i) EXPECT_NEAR(z.data[i], u.data[i], 1e-6);
  }
  EXPECT_EQ(code_of([] { zoom_crop(20, 20, 4.0); }), ErrorCode::TooSmall);
  EXPECT_EQ(code_of([] { zoom_crop(64, 64, 5.0); }), ErrorCode::Range);
}

TEST(Transforms, Bokeh) {
  const ImageBuffer img = to_buffer(camforge::testing::noise_raster(3));
  Mask bg(img.width, img.height, 0.0f);
  for (int y = 20; y < 40; ++y)
    for (int x = 30; x < 60; ++x) bg.at(x, y) = 1.0f;
  EXPECT_EQ(apply_bokeh(img, bg, 0), img);
  const Mask all(img.width, img.height, 1.0f);
  for (int n = 0; n <= 4; ++n) EXPECT_EQ(apply_bokeh(img, all, n), img);

  const ImageBuffer blurred = apply_bokeh(img, bg, 4);
  EXPECT_NE(blurred, img);
  for (int y = 20; y < 40; ++y)
    for (int x = 30; x < 60; ++x)
      for (int c = 0; c < 3; ++c) EXPECT_EQ(blurred.at(x, y, c), img.at(x, y, c));

  const ImageBuffer flat = uniform(img.width, img.height, 0.4f, 0.4f, 0.4f);
  const ImageBuffer fb = apply_bokeh(flat, bg, 4);
  for (std::size_t i = 0; i < fb.data.size(); ++i) EXPECT_NEAR(fb.data[i], 0.4f, 1e-6);

  EXPECT_EQ(bokeh_radius(4, 1024, 768), 16);
  EXPECT_EQ(bokeh_radius(1, 96, 64), 1);
  EXPECT_EQ(code_of([&] { apply_bokeh(img, Mask(3, 3), 2); }), ErrorCode::DimensionMismatch);
}

TEST(Transforms, IdentitiesAreBitExact) {
  for (const RasterImage& raster : identity_images()) {
    const ImageBuffer enc = to_buffer(raster);
    const ImageBuffer lin = srgb_decode(enc);
    EXPECT_EQ(apply_exposure(lin, 0.0), lin);
    EXPECT_EQ(apply_cct(lin, 6500.0), lin);
    EXPECT_EQ(apply_zoom(lin, 1.0), lin);
    EXPECT_EQ(apply_bokeh(lin, Mask(lin.width, lin.height, 0.3f), 0), lin);
    EXPECT_EQ(to_raster(apply_style(enc, Lut3D::identity()), 8), raster);
    const Directive neutral = parse_directive(
        "[CONTROL: exposure=0EV, cct=6500K, zoom=1x, bokeh=1/4]");
    EXPECT_EQ(apply_chain(enc, neutral, library()), enc);
    EXPECT_EQ(apply_chain(enc, CameraVector{}, library()), enc);
    EXPECT_EQ(to_raster(apply_chain(enc, parse_directive("[CONTROL:]"), library()), 8), raster);
  }
}

TEST(Transforms, ChainComposition) {
  const ImageBuffer enc = to_buffer(camforge::testing::photo_raster());
  const ImageBuffer viaChain = apply_chain(enc, parse_directive("[CONTROL: exposure=+1EV]"), library());
  const ImageBuffer manual = srgb_encode(apply_exposure(srgb_decode(enc), 1.0));
  EXPECT_EQ(viaChain, manual);

  const ImageBuffer dark = uniform(16, 16, 0.1f, 0.15f, 0.2f);
  const ImageBuffer twice = apply_chain(apply_chain(dark, parse_directive("[CONTROL: exposure=+1EV]"), library()),
                                        parse_directive("[CONTROL: exposure=+1EV]"), library());
  const ImageBuffer once = apply_chain(dark, parse_directive("[CONTROL: exposure=+2EV]"), library());
  for (std::size_t i = 0; i < once.data.size(); ++i) EXPECT_NEAR(twice.data[i], once.data[i], 1e-5);

  const auto ops = chain_ops(RenderSettings::from_directive(
                                 parse_directive("[CONTROL: style=Velvia, contrast=2/4, exposure=-1EV, bokeh=3/4]"),
                                 library().registry()),
                             true);
  const std::vector<std::string> want = {"decode", "exposure", "bokeh", "encode", "contrast", "style"};
  EXPECT_EQ(ops, want);
}

TEST(Transforms, EvMonotonicity) {
  for (const RasterImage& raster : identity_images()) {
    const ImageBuffer lin = srgb_decode(to_buffer(raster));
    float peak = 0.0f;
    for (float v : lin.data) peak = std::max(peak, v);
    // Scale so +2 EV still leaves headroom below 1.
    ImageBuffer base = lin;
    for (float& v : base.data) v *= 0.2f / std::max(peak, 1e-6f);
    double prev = -1.0;
    for (double ev : {-2.0, -1.0, 0.0, 1.0, 2.0}) {
      const double m = mean_luminance(apply_exposure(base, ev));
      EXPECT_GT(m, prev);
      prev = m;
    }
  }
}

TEST(Transforms, CctMonotonicity) {
  const ImageBuffer gray = uniform(16, 16, 0.18f, 0.18f, 0.18f, ColorSpace::Linear);
  double prev = 0.0;
  for (double k : {2500.0, 4000.0, 6500.0, 8500.0, 10000.0}) {
    const ImageBuffer out = apply_cct(gray, k);
    const double ratio = mean_channel(out, 2) / mean_channel(out, 0);
    EXPECT_GT(ratio, prev) << k;
    prev = ratio;
  }
}

TEST(Transforms, ShippedStylesStayInRange) {
  const ImageBuffer noise = to_buffer(camforge::testing::noise_raster(9));
  for (std::size_t i = 0; i < kStyleCount; ++i) {
    const ImageBuffer out = apply_style(noise, library().lut(i));
    for (float v : out.data) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
    EXPECT_NE(out, noise);
  }
}

TEST(Transforms, Deterministic) {
  const ImageBuffer enc = to_buffer(camforge::testing::photo_raster());
  const Directive d = parse_directive(
      "[CONTROL: exposure=+0.5EV, cct=4000K, contrast=3/4, saturation=2/4, zoom=1.5x, style=Portra]");
  EXPECT_EQ(apply_chain(enc, d, library()), apply_chain(enc, d, library()));
}
