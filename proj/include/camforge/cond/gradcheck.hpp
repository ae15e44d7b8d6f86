// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Central-difference check of the analytic backward pass. The scalar loss is
// a fixed random projection of every output (F_ctx, t_ctx, z_cam, g_cam), so
// each output path contributes to every gradient.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "camforge/cond/params.hpp"
#include "camforge/cond/stack.hpp"

namespace camforge::cond {

struct GradcheckOptions {
  double epsilon = 1e-3;
  // Denominator floor, so a gradient that is essentially zero is judged on
  // absolute error instead.
  double floor = 1e-8;
  std::uint64_t seed = 7;
  bool check_inputs = true;
};

struct TensorCheck {
  std::string name;
  std::size_t count = 0;
  double rel = 0.0;          // ||a - n|| / max(||a||, ||n||, floor)
  double max_elem_rel = 0.0; // worst single entry, same floor
  double max_abs = 0.0;
  double err_sq = 0.0, a_sq = 0.0, n_sq = 0.0;

  void finish(double floor) {
    rel = std::sqrt(err_sq) / std::max({std::sqrt(a_sq), std::sqrt(n_sq), floor});
  }
};

struct GradcheckReport {
  std::vector<TensorCheck> tensors;
  double max_rel = 0.0;  // worst per-tensor relative error
  double seconds = 0.0;
};

inline double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Loss weights with the same shapes as the forward outputs.
struct LossProjection {
  std::vector<ItemUpstream> weights;

  static LossProjection random(const CondConfig& cfg, std::size_t batch, std::uint64_t seed) {
    UniformSource u(seed);
    LossProjection lp;
    for (std::size_t b = 0; b < batch; ++b) {
      ItemUpstream up;
      up.d_f_ctx = MatrixXd::NullaryExpr(cfg.l_content + cfg.l_dir_compact, cfg.d_model, [&] { return u(); });
      up.d_t_ctx = VectorXd::NullaryExpr(cfg.d_time, [&] { return u(); });
      up.d_z_cam = VectorXd::NullaryExpr(cfg.d_z, [&] { return u(); });
      up.d_g_cam = u();
      lp.weights.push_back(std::move(up));
    }
    return lp;
  }

  double operator()(const CondContext& ctx) const {
    double total = 0.0;
    for (std::size_t b = 0; b < ctx.items.size(); ++b) {
      const auto& st = ctx.items[b];
      const auto& w = weights[b];
      total += w.d_f_ctx.cwiseProduct(st.f_ctx).sum() + w.d_t_ctx.dot(st.t_ctx) +
               w.d_z_cam.dot(st.z_cam) + w.d_g_cam * st.g_cam;
    }
    return total;
  }
};

/// Batch of toy inputs with distinct cameras and texts.
inline std::vector<ItemInput> toy_batch(const CondConfig& cfg, std::uint64_t seed) {
  static const char* kDirectives[] = {"[CONTROL: exposure=+1EV, cct=3200K, style=Velvia]",
                                      "[CONTROL: zoom=2x, bokeh=3/4, contrast=2/4]",
                                      "[CONTROL: saturation=4/4, cct=8000K]"};
  static const char* kCaptions[] = {"a red tram crossing a bridge at dusk",
                                    "portrait of a dog on a wooden porch",
                                    "mountain lake under heavy clouds"};
  UniformSource u(seed);
  std::vector<ItemInput> batch;
  for (int b = 0; b < cfg.batch; ++b) {
    ItemInput in;
    in.camera.exposure = u();
    in.camera.cct = 0.5 + 0.5 * u();
    in.camera.zoom = 0.5 + 0.5 * u();
    in.camera.contrast = u();
    in.camera.bokeh = 0.5 + 0.5 * u();
    in.camera.style[static_cast<std::size_t>(b) % kStyleCount] = 1.0;
    for (Param p : {Param::Exposure, Param::Cct, Param::Zoom, Param::Contrast, Param::Bokeh, Param::Style}) {
      in.camera.set(p);
    }
    in.directive_text = kDirectives[b % 3];
    in.content_text = kCaptions[b % 3];
    in.t = timestep_embedding(100.0 + 250.0 * b, cfg.d_time);
    batch.push_back(std::move(in));
  }
  return batch;
}

/// Compares backward() against central differences for every parameter
/// tensor, and optionally the inputs s, C_raw, D_raw, t.
inline GradcheckReport gradcheck(const CondParams& params_in, std::vector<ItemInput> batch,
                                 const GradcheckOptions& opt = {}) {
  CondParams params = params_in;
  const CondConfig& cfg = params.cfg;
  // Pin the embeddings so input gradients are taken with respect to them.
  for (auto& in : batch) {
    in.s = camera_vector_values(in.camera);
    in.c_raw = toy_embed(in.content_text, TextKind::Content, cfg);
    in.d_raw = toy_embed(in.directive_text, TextKind::Directive, cfg);
  }
  const LossProjection loss = LossProjection::random(cfg, batch.size(), opt.seed);
  const CondContext ctx = forward(batch, params);
  const Gradients grads = backward(ctx, loss.weights, params);

  GradcheckReport report;
  auto check = [&](TensorCheck& tc, double& value, double analytic, auto&& evaluate) {
    const double saved = value;
    value = saved + opt.epsilon;
    const double up = evaluate();
    value = saved - opt.epsilon;
    const double down = evaluate();
    value = saved;
    const double numeric = (up - down) / (2.0 * opt.epsilon);
    tc.max_elem_rel = std::max(tc.max_elem_rel, relative_error(analytic, numeric, opt.floor));
    tc.max_abs = std::max(tc.max_abs, std::abs(analytic - numeric));
    tc.err_sq += (analytic - numeric) * (analytic - numeric);
    tc.a_sq += analytic * analytic;
    tc.n_sq += numeric * numeric;
    ++tc.count;
  };
  auto eval_params = [&] { return loss(forward(batch, params)); };

  std::vector<std::pair<std::string, const MatrixXd*>> analytic;
  grads.params.for_each([&](std::string_view name, const MatrixXd& m) {
    analytic.emplace_back(std::string(name), &m);
  });
  std::size_t idx = 0;
  params.for_each([&](std::string_view name, MatrixXd& m) {
    TensorCheck tc{std::string(name)};
    const MatrixXd& g = *analytic[idx++].second;
    for (Eigen::Index i = 0; i < m.size(); ++i) check(tc, m.data()[i], g.data()[i], eval_params);
    report.tensors.push_back(tc);
  });

  if (opt.check_inputs) {
    auto eval_inputs = [&] { return loss(forward(batch, params)); };
    TensorCheck ts{"input.s"}, tc{"input.C_raw"}, td{"input.D_raw"}, tt{"input.t"};
    for (std::size_t b = 0; b < batch.size(); ++b) {
      auto& in = batch[b];
      const auto& g = grads.inputs[b];
      for (Eigen::Index i = 0; i < in.s.size(); ++i) check(ts, in.s(i), g.d_s(i), eval_inputs);
      for (Eigen::Index i = 0; i < in.c_raw.size(); ++i) check(tc, in.c_raw.data()[i], g.d_c_raw.data()[i], eval_inputs);
      for (Eigen::Index i = 0; i < in.d_raw.size(); ++i) check(td, in.d_raw.data()[i], g.d_d_raw.data()[i], eval_inputs);
      for (Eigen::Index i = 0; i < in.t.size(); ++i) check(tt, in.t(i), g.d_t(i), eval_inputs);
    }
    for (auto* t : {&ts, &tc, &td, &tt}) report.tensors.push_back(*t);
  }
  for (auto& t : report.tensors) {
    t.finish(opt.floor);
    report.max_rel = std::max(report.max_rel, t.rel);
  }
  return report;
}

}  // namespace camforge::cond
