// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Information-flow smoke test: a linear probe trained by plain gradient
// descent to read the continuous camera entries back out of t_ctx.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/cond/params.hpp"
#include "camforge/cond/stack.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"

namespace camforge::cond {

// Probe targets: the vector entries that take continuous values.
inline constexpr std::array<int, 3> kProbeEntries = {0, 1, 4};  // exposure, cct, zoom

struct ProbeSample {
  ItemInput input;
  Eigen::Vector3d target;
};

/// Random exposure / cct / zoom settings, rendered to directive text and
/// calibrated, with rotating captions and one shared timestep.
inline std::vector<ProbeSample> probe_dataset(const CondConfig& cfg, std::size_t count, std::uint64_t seed) {
  static const char* kCaptions[] = {"a quiet harbor at sunrise", "street market with umbrellas",
                                    "close portrait in window light", "pine forest after rain",
                                    "city skyline at night", "bowl of fruit on a table"};
  UniformSource u(seed);
  const StyleRegistry registry = StyleRegistry::builtin();
  const VectorXd t = timestep_embedding(500.0, cfg.d_time);
  std::vector<ProbeSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    Directive d;
    d.pairs.emplace_back(Param::Exposure, Ev{std::round(300.0 * u()) / 100.0});
    d.pairs.emplace_back(Param::Cct, Kelvin{std::round(6000.0 + 4000.0 * u())});
    d.pairs.emplace_back(Param::Zoom, ZoomFactor{std::round(250.0 + 150.0 * u()) / 100.0});
    ProbeSample s;
    s.input.camera = calibrate(d, registry);
    s.input.directive_text = render_directive(d);
    s.input.content_text = kCaptions[i % 6];
    s.input.t = t;
    const auto flat = s.input.camera.flatten();
    for (int k = 0; k < 3; ++k) s.target(k) = flat[kProbeEntries[k]];
    out.push_back(std::move(s));
  }
  return out;
}

/// Features t_ctx, standardized per column (constant columns become zero).
inline MatrixXd probe_features(const std::vector<ProbeSample>& samples, const CondParams& p) {
  MatrixXd x(static_cast<Eigen::Index>(samples.size()), p.cfg.d_time);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = forward_item(samples[i].input, p).t_ctx.transpose();
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    x.col(c).array() -= mean;
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(x.rows()));
    if (sd > 1e-12) {
      x.col(c) /= sd;
    } else {
      x.col(c).setZero();
    }
  }
  return x;
}

struct ProbeResult {
  std::vector<double> loss;  // per step, before the update
  double final_mse = 0.0;
};

/// Mean squared error over samples and targets, minimized by plain gradient
/// descent on weights and bias from zero.
inline ProbeResult probe_train(const MatrixXd& x, const MatrixXd& y, int steps, double lr) {
  if (x.rows() < 64 || x.rows() != y.rows()) {
    throw Error(ErrorCode::Shape, "probe needs at least 64 samples with one target row each");
  }
  const double n = static_cast<double>(x.rows() * y.cols());
  MatrixXd w = MatrixXd::Zero(x.cols(), y.cols());
  Eigen::RowVectorXd b = Eigen::RowVectorXd::Zero(y.cols());
  ProbeResult r;
  r.loss.reserve(static_cast<std::size_t>(steps) + 1);
  for (int step = 0; step <= steps; ++step) {
    MatrixXd resid = x * w;
    resid.rowwise() += b;
    resid -= y;
    const double mse = resid.squaredNorm() / n;
    if (!std::isfinite(mse)) {
      throw Error(ErrorCode::Divergence, "probe loss became non-finite at step " + std::to_string(step));
    }
    r.loss.push_back(mse);
    if (step == steps) break;
    w -= lr * (2.0 / n) * (x.transpose() * resid);
    b -= lr * (2.0 / n) * resid.colwise().sum();
  }
  r.final_mse = r.loss.back();
  return r;
}

inline MatrixXd probe_targets(const std::vector<ProbeSample>& samples) {
  MatrixXd y(static_cast<Eigen::Index>(samples.size()), 3);
  for (std::size_t i = 0; i < samples.size(); ++i) y.row(static_cast<Eigen::Index>(i)) = samples[i].target.transpose();
  return y;
}

/// Row permutation from a seeded Fisher-Yates shuffle.
inline MatrixXd shuffle_rows(const MatrixXd& y, std::uint64_t seed) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(y.rows()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<Eigen::Index>(i);
  UniformSource u(seed);
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(u.bits() % i);
    std::swap(order[i - 1], order[j]);
  }
  MatrixXd out(y.rows(), y.cols());
  for (std::size_t i = 0; i < order.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = y.row(order[i]);
  return out;
}

/// 1.5 / L, where L is the largest curvature of the probe loss (features
/// plus bias column). Anything below 2 / L is a stable descent step.
inline double probe_step_size(const MatrixXd& x, Eigen::Index targets) {
  MatrixXd xa(x.rows(), x.cols() + 1);
  xa << x, VectorXd::Ones(x.rows());
  const double n = static_cast<double>(x.rows() * targets);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es((2.0 / n) * xa.transpose() * xa, Eigen::EigenvaluesOnly);
  return 1.5 / es.eigenvalues().maxCoeff();
}

struct ProbeReport {
  ProbeResult probe;
  ProbeResult shuffled;
  std::size_t samples = 0;
  double lr = 0.0;
};

struct ProbeOptions {
  std::size_t samples = 64;
  int steps = 2000;
  double lr = 0.0;  // <= 0 selects probe_step_size
  std::uint64_t seed = 2024;
};

/// Stack with every head active, 64 samples, real and shuffled labels.
inline ProbeReport run_probe(const ProbeOptions& opt = {}) {
  CondConfig cfg;
  CondParams p = CondParams::init(cfg, opt.seed);
  p.randomize_heads(opt.seed + 1);
  const auto data = probe_dataset(cfg, opt.samples, opt.seed + 2);
  const MatrixXd x = probe_features(data, p);
  const MatrixXd y = probe_targets(data);
  ProbeReport r;
  r.samples = data.size();
  r.lr = opt.lr > 0.0 ? opt.lr : probe_step_size(x, y.cols());
  r.probe = probe_train(x, y, opt.steps, r.lr);
  r.shuffled = probe_train(x, shuffle_rows(y, opt.seed + 3), opt.steps, r.lr);
  return r;
}

}  // namespace camforge::cond
