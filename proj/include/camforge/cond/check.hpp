// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// The condcheck suite: structural invariants, gradient check and probe, as
// one JSON report.

#pragma once

#include "json.hpp"

#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>

#include "camforge/cond/gradcheck.hpp"
#include "camforge/cond/params.hpp"
#include "camforge/cond/probe.hpp"
#include "camforge/cond/stack.hpp"

namespace camforge::cond {

struct CondcheckOptions {
  std::uint64_t seed = 2024;
  bool gradcheck = true;
  bool probe = true;
};

namespace detail {

inline bool bitwise_equal(const MatrixXd& a, const MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  return std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
}

}  // namespace detail

inline nlohmann::ordered_json run_condcheck(const CondcheckOptions& opt = {}) {
  using nlohmann::ordered_json;
  const CondConfig cfg;
  CondParams params = CondParams::init(cfg, opt.seed);
  params.randomize_heads(opt.seed + 1);
  ordered_json checks = ordered_json::array();
  bool all = true;
  auto record = [&](const std::string& name, bool pass, ordered_json detail) {
    all = all && pass;
    checks.push_back({{"name", name}, {"pass", pass}, {"detail", std::move(detail)}});
  };

  {
    UniformSource u(opt.seed + 10);
    double lo = 1.0, hi = 0.0;
    for (int i = 0; i < 1000; ++i) {
      MatrixXd d = MatrixXd::NullaryExpr(cfg.l_directive, cfg.d_enc, [&] { return 4.0 * u(); });
      const double g = predict_gate(d, params);
      lo = std::min(lo, g);
      hi = std::max(hi, g);
    }
    record("gate_open_interval", lo > 0.0 && hi < 1.0, {{"min", lo}, {"max", hi}, {"samples", 1000}});
  }

  const auto batch = toy_batch(cfg, opt.seed + 20);
  {
    ForwardOptions closed;
    closed.forced_gate = 0.0;
    const CondContext ctx = forward(batch, params, closed);
    bool ok = true;
    for (const auto& st : ctx.items) {
      ok = ok && detail::bitwise_equal(st.c_ctx, st.c_ref) && detail::bitwise_equal(st.t_ctx, st.t) &&
           detail::bitwise_equal(st.f_ctx.bottomRows(cfg.l_dir_compact),
                                 MatrixXd::Zero(cfg.l_dir_compact, cfg.d_model));
    }
    record("zero_gate_identity", ok, {{"items", ctx.items.size()}});
  }

  const CondContext ctx = forward(batch, params);
  {
    double worst = 0.0;
    bool nonneg = true;
    for (const auto& st : ctx.items) {
      for (Eigen::Index r = 0; r < st.attn.rows(); ++r) worst = std::max(worst, std::abs(st.attn.row(r).sum() - 1.0));
      nonneg = nonneg && (st.attn.array() >= 0.0).all();
    }
    record("attention_rows_stochastic", worst <= 1e-6 && nonneg, {{"max_row_error", worst}});
  }
  {
    bool ok = true;
    for (const auto& st : ctx.items) {
      ok = ok && st.id_ctx.size() == static_cast<std::size_t>(st.f_ctx.rows());
      for (std::size_t i = 0; i < st.id_ctx.size(); ++i) ok = ok && st.id_ctx[i] == static_cast<int>(i);
    }
    record("id_ctx_contiguous", ok, {{"length", cfg.l_content + cfg.l_dir_compact}});
  }
  {
    const auto want = declared_shapes(cfg);
    bool ok = true;
    for (const auto& st : ctx.items) {
      const auto got = observed_shapes(st);
      for (std::size_t i = 0; i < want.size(); ++i) {
        ok = ok && got[i].name == want[i].name && got[i].rows == want[i].rows && got[i].cols == want[i].cols;
      }
    }
    record("shape_audit", ok, {{"tensors", want.size()}});
  }
  {
    const CondContext again = forward(batch, params);
    bool ok = true;
    for (std::size_t b = 0; b < ctx.items.size(); ++b) {
      ok = ok && detail::bitwise_equal(ctx.items[b].f_ctx, again.items[b].f_ctx) &&
           detail::bitwise_equal(ctx.items[b].t_ctx, again.items[b].t_ctx);
    }
    record("deterministic_forward", ok, ordered_json::object());
  }

  if (opt.gradcheck) {
    const auto t0 = std::chrono::steady_clock::now();
    const GradcheckReport gc = gradcheck(params, batch);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    ordered_json tensors = ordered_json::object();
    for (const auto& t : gc.tensors) tensors[t.name] = t.rel;
    record("gradcheck", gc.max_rel < 1e-4,
           {{"max_relative_error", gc.max_rel}, {"epsilon", 1e-3}, {"seconds", secs}, {"tensors", tensors}});
  }

  if (opt.probe) {
    ProbeOptions po;
    po.seed = opt.seed;
    const ProbeReport pr = run_probe(po);
    const double mse = pr.probe.final_mse;
    const double shuffled = pr.shuffled.final_mse;
    record("probe", mse < 0.01 && shuffled > 5.0 * mse && pr.probe.loss.front() > mse,
           {{"final_mse", mse},
            {"initial_mse", pr.probe.loss.front()},
            {"shuffled_mse", shuffled},
            {"steps", static_cast<int>(pr.probe.loss.size()) - 1},
            {"lr", pr.lr}});
  }

  return {{"seed", opt.seed}, {"pass", all}, {"checks", checks}};
}

}  // namespace camforge::cond
