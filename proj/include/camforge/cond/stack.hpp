// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Conditioning stack: camera-parameter encoder, adapters, Camera-FiLM,
// semantic cross-attention, gated residual, compact directive context with
// positional ids, and time-embedding modulation. Double precision, with a
// hand-written backward pass.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/cond/params.hpp"
#include "camforge/error.hpp"

namespace camforge::cond {

enum class TextKind { Content, Directive };

// ---------------------------------------------------------------------------
// Toy text embedder

namespace detail {

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::vector<std::string> tokenize(std::string_view text, TextKind kind) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      if (!(kind == TextKind::Directive && cur == "control")) tokens.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char c : text) {
    if (std::isalnum(c) || c == '.' || c == '+' || c == '-' || c == '_' || c == '/' || c >= 0x80) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
      // Punctuation is meaningful in captions; directive structure is not.
      if (kind == TextKind::Content && !std::isspace(c)) tokens.emplace_back(1, static_cast<char>(c));
    }
  }
  flush();
  return tokens;
}

}  // namespace detail

/// Hash-seeded token vectors with unit-variance entries. The first L-1
/// tokens fill one row each; any overflow is summed into the last row so no
/// token is dropped. Missing rows are zero padding.
inline MatrixXd toy_embed(std::string_view text, TextKind kind, const CondConfig& cfg) {
  const int rows = kind == TextKind::Content ? cfg.l_content : cfg.l_directive;
  MatrixXd out = MatrixXd::Zero(rows, cfg.d_enc);
  const auto tokens = detail::tokenize(text, kind);
  const std::uint64_t salt = kind == TextKind::Content ? 0x636f6e74656e74ull : 0x646972656374ull;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    const int row = std::min<int>(static_cast<int>(i), rows - 1);
    UniformSource u(detail::fnv1a(tokens[i], salt ^ (0x9e3779b97f4a7c15ull * (i + 1))));
    for (int j = 0; j < cfg.d_enc; ++j) out(row, j) += std::sqrt(3.0) * u();
  }
  return out;
}

// ---------------------------------------------------------------------------
// Camera vector projection

/// Fixed 16 -> 3 reduction applied before the spatial broadcast:
///   tone   = exposure + 0.25 contrast
///   color  = cct + 0.25 saturation + 0.1 sum_k cos(2 pi k / 10) style_k
///   optics = zoom + 0.25 bokeh + 0.1 sum_k sin(2 pi k / 10) style_k
inline Eigen::Matrix<double, 3, kCameraVectorWidth> camera_projection() {
  Eigen::Matrix<double, 3, kCameraVectorWidth> p = Eigen::Matrix<double, 3, kCameraVectorWidth>::Zero();
  p(0, 0) = 1.0;
  p(0, 2) = 0.25;
  p(1, 1) = 1.0;
  p(1, 3) = 0.25;
  p(2, 4) = 1.0;
  p(2, 5) = 0.25;
  constexpr double kTwoPi = 6.283185307179586;
  for (std::size_t k = 0; k < kStyleCount; ++k) {
    p(1, 6 + k) = 0.1 * std::cos(kTwoPi * k / kStyleCount);
    p(2, 6 + k) = 0.1 * std::sin(kTwoPi * k / kStyleCount);
  }
  return p;
}

inline VectorXd camera_vector_values(const CameraVector& v) {
  const auto flat = v.flatten();
  VectorXd s(kCameraVectorWidth);
  for (std::size_t i = 0; i < kCameraVectorWidth; ++i) s(static_cast<Eigen::Index>(i)) = flat[i];
  return s;
}

/// Camera tensor S for a batch, laid out [B][3][H][W] (spatially constant).
inline std::vector<double> camera_tensor(const std::vector<VectorXd>& s, const CondConfig& cfg) {
  const auto proj = camera_projection();
  std::vector<double> out;
  out.reserve(s.size() * 3 * cfg.height * cfg.width);
  for (const auto& item : s) {
    const Eigen::Vector3d c = proj * item;
    for (int ch = 0; ch < 3; ++ch) out.insert(out.end(), static_cast<std::size_t>(cfg.height) * cfg.width, c(ch));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Layer primitives

namespace detail {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double silu(double x) { return x * sigmoid(x); }
inline double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

inline MatrixXd silu(const MatrixXd& x) { return x.unaryExpr([](double v) { return silu(v); }); }

inline MatrixXd silu_backward(const MatrixXd& pre, const MatrixXd& grad) {
  return grad.cwiseProduct(pre.unaryExpr([](double v) { return silu_grad(v); }));
}

inline MatrixXd softmax_rows(const MatrixXd& x) {
  MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return out;
}

inline MatrixXd softmax_rows_backward(const MatrixXd& y, const MatrixXd& dy) {
  MatrixXd dx(y.rows(), y.cols());
  for (Eigen::Index r = 0; r < y.rows(); ++r) {
    const double dot = y.row(r).dot(dy.row(r));
    dx.row(r) = y.row(r).array() * (dy.row(r).array() - dot);
  }
  return dx;
}

struct LayerNormCache {
  MatrixXd xhat;
  VectorXd inv_std;
};

inline MatrixXd layer_norm(const MatrixXd& x, const MatrixXd& gain, const MatrixXd& beta,
                           double eps, LayerNormCache& cache) {
  const Eigen::Index n = x.cols();
  cache.xhat.resize(x.rows(), n);
  cache.inv_std.resize(x.rows());
  MatrixXd out(x.rows(), n);
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const Eigen::RowVectorXd centered = x.row(r).array() - mean;
    const double var = centered.squaredNorm() / static_cast<double>(n);
    cache.inv_std(r) = 1.0 / std::sqrt(var + eps);
    cache.xhat.row(r) = centered * cache.inv_std(r);
    out.row(r) = cache.xhat.row(r).cwiseProduct(gain.col(0).transpose()) + beta.col(0).transpose();
  }
  return out;
}

inline MatrixXd layer_norm_backward(const LayerNormCache& cache, const MatrixXd& gain,
                                    const MatrixXd& dy, MatrixXd& dgain, MatrixXd& dbeta) {
  const Eigen::Index n = dy.cols();
  MatrixXd dx(dy.rows(), n);
  for (Eigen::Index r = 0; r < dy.rows(); ++r) {
    dgain.col(0) += dy.row(r).cwiseProduct(cache.xhat.row(r)).transpose();
    dbeta.col(0) += dy.row(r).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(r).cwiseProduct(gain.col(0).transpose());
    const double mean_d = dxhat.mean();
    const double mean_dx = dxhat.dot(cache.xhat.row(r)) / static_cast<double>(n);
    dx.row(r) = cache.inv_std(r) *
                (dxhat.array() - mean_d - cache.xhat.row(r).array() * mean_dx).matrix();
  }
  return dx;
}

struct ConvShape {
  int cin, cout, h, w, stride, ho, wo;
};

inline ConvShape conv_shape(int cin, int cout, int h, int w, int stride) {
  return {cin, cout, h, w, stride, (h + 2 - 3) / stride + 1, (w + 2 - 3) / stride + 1};
}

// 3x3 convolution, zero padding 1, as im2col: cols is [cin*9, ho*wo].
inline MatrixXd im2col(const MatrixXd& x, const ConvShape& s) {
  MatrixXd cols = MatrixXd::Zero(static_cast<Eigen::Index>(s.cin) * 9, static_cast<Eigen::Index>(s.ho) * s.wo);
  for (int c = 0; c < s.cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = (c * 3 + ky) * 3 + kx;
        for (int oy = 0; oy < s.ho; ++oy) {
          const int iy = oy * s.stride + ky - 1;
          if (iy < 0 || iy >= s.h) continue;
          for (int ox = 0; ox < s.wo; ++ox) {
            const int ix = ox * s.stride + kx - 1;
            if (ix < 0 || ix >= s.w) continue;
            cols(row, oy * s.wo + ox) = x(c, iy * s.w + ix);
          }
        }
      }
  return cols;
}

inline MatrixXd col2im(const MatrixXd& dcols, const ConvShape& s) {
  MatrixXd dx = MatrixXd::Zero(s.cin, static_cast<Eigen::Index>(s.h) * s.w);
  for (int c = 0; c < s.cin; ++c)
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = (c * 3 + ky) * 3 + kx;
        for (int oy = 0; oy < s.ho; ++oy) {
          const int iy = oy * s.stride + ky - 1;
          if (iy < 0 || iy >= s.h) continue;
          for (int ox = 0; ox < s.wo; ++ox) {
            const int ix = ox * s.stride + kx - 1;
            if (ix < 0 || ix >= s.w) continue;
            dx(c, iy * s.w + ix) += dcols(row, oy * s.wo + ox);
          }
        }
      }
  return dx;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Forward

struct ItemInput {
  CameraVector camera;
  std::string directive_text;
  std::string content_text;
  VectorXd t;  // d_time
  // Optional overrides, used by gradient checks on the inputs.
  VectorXd s;
  MatrixXd c_raw, d_raw;
};

/// Per-item forward state. Sequences are [tokens, features].
struct ItemState {
  // parameter stream
  VectorXd s;
  Eigen::Vector3d projected;
  std::array<detail::ConvShape, 4> conv_shapes{};
  std::array<MatrixXd, 4> conv_cols, conv_pre, conv_out;
  VectorXd pooled, enc_pre1, enc_act1, z_cam;
  // semantic stream
  MatrixXd c_raw, d_raw;
  MatrixXd c_lin, c_soft, c;
  MatrixXd d_lin, d_soft, d;
  detail::LayerNormCache c_ln, d_ln;
  VectorXd d_raw_mean;
  double gate_logit = 0.0;
  double g_cam = 0.5;
  bool gate_forced = false;
  // modulation and fusion
  VectorXd film_q, film_kv;  // [gamma; beta]
  VectorXd gamma_q, beta_q, gamma_kv, beta_kv;
  MatrixXd q, kv, attn, c_fuse, c_ref, c_ctx;
  // injection
  MatrixXd d_pool, d_dir, f_ctx;
  std::vector<int> id_content, id_dir, id_ctx;
  VectorXd psi_pre1, psi_act1, psi_out, t, t_ctx;

  const MatrixXd& k() const { return kv; }
  const MatrixXd& v() const { return kv; }
};

struct CondContext {
  CondConfig cfg;
  std::vector<ItemState> items;
  bool has_intermediates = false;

  /// Drops the tensors backward needs, keeping only the outputs.
  void release_intermediates() {
    for (auto& it : items) {
      for (auto& m : it.conv_cols) m.resize(0, 0);
      for (auto& m : it.conv_pre) m.resize(0, 0);
      it.c_lin.resize(0, 0);
      it.d_lin.resize(0, 0);
    }
    has_intermediates = false;
  }
};

struct ForwardOptions {
  std::optional<double> forced_gate;  // ablation / test hook
};

namespace detail {

inline void check_inputs(const ItemInput& in, const CondConfig& cfg) {
  if (in.t.size() != cfg.d_time) {
    throw Error(ErrorCode::Shape, "time embedding width " + std::to_string(in.t.size()) +
                                      " != d_time " + std::to_string(cfg.d_time));
  }
}

inline void encode_camera(const CondParams& p, ItemState& st) {
  const CondConfig& cfg = p.cfg;
  st.projected = camera_projection() * st.s;
  MatrixXd x(3, static_cast<Eigen::Index>(cfg.height) * cfg.width);
  for (int c = 0; c < 3; ++c) x.row(c).setConstant(st.projected(c));
  int cin = 3, h = cfg.height, w = cfg.width;
  for (int i = 0; i < 4; ++i) {
    const auto shape = conv_shape(cin, cfg.conv_channels[i], h, w, cfg.conv_strides[i]);
    st.conv_shapes[i] = shape;
    st.conv_cols[i] = im2col(x, shape);
    st.conv_pre[i] = p.conv_w[i] * st.conv_cols[i];
    st.conv_pre[i].colwise() += p.conv_b[i].col(0);
    st.conv_out[i] = silu(st.conv_pre[i]);
    x = st.conv_out[i];
    cin = shape.cout;
    h = shape.ho;
    w = shape.wo;
  }
  st.pooled = x.rowwise().mean();
  st.enc_pre1 = p.enc_w1 * st.pooled + p.enc_b1.col(0);
  st.enc_act1 = silu(MatrixXd(st.enc_pre1)).col(0);
  st.z_cam = p.enc_w2 * st.enc_act1 + p.enc_b2.col(0);
}

inline void adapt(const MatrixXd& raw, const MatrixXd& w, const MatrixXd& b, const MatrixXd& gain,
                  const MatrixXd& beta, double eps, MatrixXd& lin, MatrixXd& soft, MatrixXd& out,
                  LayerNormCache& ln) {
  if (raw.cols() != w.cols()) {
    throw Error(ErrorCode::Shape, "adapter input width " + std::to_string(raw.cols()) +
                                      " != " + std::to_string(w.cols()));
  }
  lin = raw * w.transpose();
  lin.rowwise() += b.col(0).transpose();
  soft = softmax_rows(lin);
  out = layer_norm(soft, gain, beta, eps, ln);
}

}  // namespace detail

/// Camera-parameter embedding z_cam for one calibrated vector.
inline VectorXd encode_params(const CameraVector& v, const CondParams& p) {
  ItemState st;
  st.s = camera_vector_values(v);
  detail::encode_camera(p, st);
  return st.z_cam;
}

/// Sigmoid gate from the mean directive token.
inline double predict_gate(const MatrixXd& d_raw, const CondParams& p) {
  const VectorXd mean = d_raw.colwise().mean().transpose();
  return detail::sigmoid((p.gate_w * mean)(0, 0) + p.gate_b(0, 0));
}

/// Adapter: linear, softmax over features, LayerNorm.
inline MatrixXd adapt(const MatrixXd& raw, TextKind kind, const CondParams& p) {
  MatrixXd lin, soft, out;
  detail::LayerNormCache ln;
  if (kind == TextKind::Content) {
    detail::adapt(raw, p.con_w, p.con_b, p.con_gain, p.con_beta, p.cfg.ln_eps, lin, soft, out, ln);
  } else {
    detail::adapt(raw, p.dir_w, p.dir_b, p.dir_gain, p.dir_beta, p.cfg.ln_eps, lin, soft, out, ln);
  }
  return out;
}

/// Q = (1 + gamma_q) * C + beta_q, K = V = (1 + gamma_kv) * D + beta_kv.
inline MatrixXd film_apply(const MatrixXd& x, const VectorXd& gamma, const VectorXd& beta) {
  if (gamma.size() != x.cols() || beta.size() != x.cols()) {
    throw Error(ErrorCode::Shape, "FiLM width mismatch");
  }
  MatrixXd out = x.array().rowwise() * (1.0 + gamma.array()).transpose();
  out.rowwise() += beta.transpose();
  return out;
}

struct FilmOutput {
  MatrixXd q, k, v;
  VectorXd gamma_q, beta_q, gamma_kv, beta_kv;
};

inline FilmOutput film_modulate(const MatrixXd& c, const MatrixXd& d, const VectorXd& z_cam,
                                const CondParams& p) {
  const int dm = p.cfg.d_model;
  const VectorXd fq = p.film_q_w * z_cam + p.film_q_b.col(0);
  const VectorXd fkv = p.film_kv_w * z_cam + p.film_kv_b.col(0);
  FilmOutput out;
  out.gamma_q = fq.head(dm);
  out.beta_q = fq.tail(dm);
  out.gamma_kv = fkv.head(dm);
  out.beta_kv = fkv.tail(dm);
  out.q = film_apply(c, out.gamma_q, out.beta_q);
  out.k = film_apply(d, out.gamma_kv, out.beta_kv);
  out.v = out.k;
  return out;
}

/// Row-softmax(Q K^T / sqrt(d_K)); the weights are written to `attn` if given.
inline MatrixXd fuse(const MatrixXd& q, const MatrixXd& k, const MatrixXd& v, MatrixXd* attn = nullptr) {
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    throw Error(ErrorCode::Shape, "attention operand shapes disagree");
  }
  const MatrixXd a = detail::softmax_rows(q * k.transpose() / std::sqrt(static_cast<double>(k.cols())));
  if (attn) *attn = a;
  return a * v;
}

inline MatrixXd gate_residual(const MatrixXd& c_ref, const MatrixXd& c_fuse, double g) {
  if (c_ref.rows() != c_fuse.rows() || c_ref.cols() != c_fuse.cols()) {
    throw Error(ErrorCode::Shape, "residual shapes disagree");
  }
  return c_ref + g * c_fuse;
}

struct ContextBlock {
  MatrixXd d_pool, d_dir, f_ctx;
  std::vector<int> id_content, id_dir, id_ctx;
};

/// F_ctx = [C_ctx ; g * D_dir] with positional ids continuing past the content.
inline ContextBlock build_context(const MatrixXd& c_ctx, const MatrixXd& d, double g,
                                  const CondParams& p) {
  if (d.rows() != p.cmp_tok_w.cols() || d.cols() != p.cmp_feat_w.cols() || c_ctx.cols() != d.cols()) {
    throw Error(ErrorCode::Shape, "context block operand shapes disagree");
  }
  ContextBlock out;
  out.d_pool = p.cmp_tok_w * d;
  out.d_pool.colwise() += p.cmp_tok_b.col(0);
  out.d_dir = out.d_pool * p.cmp_feat_w.transpose();
  out.d_dir.rowwise() += p.cmp_feat_b.col(0).transpose();
  out.f_ctx.resize(c_ctx.rows() + out.d_dir.rows(), c_ctx.cols());
  out.f_ctx.topRows(c_ctx.rows()) = c_ctx;
  // "+ 0.0" folds -0 so a closed gate yields bitwise-zero rows.
  out.f_ctx.bottomRows(out.d_dir.rows()) = (g * out.d_dir).array() + 0.0;
  const int lc = static_cast<int>(c_ctx.rows());
  const int ld = static_cast<int>(out.d_dir.rows());
  for (int i = 0; i < lc; ++i) out.id_content.push_back(i);
  for (int i = 0; i < ld; ++i) out.id_dir.push_back(lc + i);
  out.id_ctx = out.id_content;
  out.id_ctx.insert(out.id_ctx.end(), out.id_dir.begin(), out.id_dir.end());
  return out;
}

/// t_ctx = t + g * psi(z_cam), psi a two-layer SiLU MLP.
inline VectorXd modulate_time(const VectorXd& t, const VectorXd& z_cam, double g, const CondParams& p) {
  if (t.size() != p.cfg.d_time) throw Error(ErrorCode::Shape, "time embedding width mismatch");
  const VectorXd pre = p.psi_w1 * z_cam + p.psi_b1.col(0);
  const VectorXd act = detail::silu(MatrixXd(pre)).col(0);
  const VectorXd psi = p.psi_w2 * act + p.psi_b2.col(0);
  return t + g * psi;
}

inline ItemState forward_item(const ItemInput& in, const CondParams& p, const ForwardOptions& opt = {}) {
  const CondConfig& cfg = p.cfg;
  detail::check_inputs(in, cfg);
  ItemState st;
  st.s = in.s.size() ? in.s : camera_vector_values(in.camera);
  if (st.s.size() != static_cast<Eigen::Index>(kCameraVectorWidth)) {
    throw Error(ErrorCode::Shape, "camera vector must have 16 entries");
  }
  detail::encode_camera(p, st);

  st.c_raw = in.c_raw.size() ? in.c_raw : toy_embed(in.content_text, TextKind::Content, cfg);
  st.d_raw = in.d_raw.size() ? in.d_raw : toy_embed(in.directive_text, TextKind::Directive, cfg);
  if (st.c_raw.rows() != cfg.l_content || st.d_raw.rows() != cfg.l_directive) {
    throw Error(ErrorCode::Shape, "text embeddings must have L_c and L_d rows");
  }
  detail::adapt(st.c_raw, p.con_w, p.con_b, p.con_gain, p.con_beta, cfg.ln_eps, st.c_lin, st.c_soft,
                st.c, st.c_ln);
  detail::adapt(st.d_raw, p.dir_w, p.dir_b, p.dir_gain, p.dir_beta, cfg.ln_eps, st.d_lin, st.d_soft,
                st.d, st.d_ln);

  st.d_raw_mean = st.d_raw.colwise().mean().transpose();
  st.gate_logit = (p.gate_w * st.d_raw_mean)(0, 0) + p.gate_b(0, 0);
  st.gate_forced = opt.forced_gate.has_value();
  st.g_cam = st.gate_forced ? *opt.forced_gate : detail::sigmoid(st.gate_logit);

  const int dm = cfg.d_model;
  st.film_q = p.film_q_w * st.z_cam + p.film_q_b.col(0);
  st.film_kv = p.film_kv_w * st.z_cam + p.film_kv_b.col(0);
  st.gamma_q = st.film_q.head(dm);
  st.beta_q = st.film_q.tail(dm);
  st.gamma_kv = st.film_kv.head(dm);
  st.beta_kv = st.film_kv.tail(dm);
  st.q = film_apply(st.c, st.gamma_q, st.beta_q);
  st.kv = film_apply(st.d, st.gamma_kv, st.beta_kv);
  st.c_fuse = fuse(st.q, st.kv, st.kv, &st.attn);

  // The residual reference is the content adapter's linear projection of
  // C_raw, which matches d_model.
  st.c_ref = st.c_lin;
  st.c_ctx = gate_residual(st.c_ref, st.c_fuse, st.g_cam);

  auto block = build_context(st.c_ctx, st.d, st.g_cam, p);
  st.d_pool = std::move(block.d_pool);
  st.d_dir = std::move(block.d_dir);
  st.f_ctx = std::move(block.f_ctx);
  st.id_content = std::move(block.id_content);
  st.id_dir = std::move(block.id_dir);
  st.id_ctx = std::move(block.id_ctx);

  st.t = in.t;
  st.psi_pre1 = p.psi_w1 * st.z_cam + p.psi_b1.col(0);
  st.psi_act1 = detail::silu(MatrixXd(st.psi_pre1)).col(0);
  st.psi_out = p.psi_w2 * st.psi_act1 + p.psi_b2.col(0);
  st.t_ctx = st.t + st.g_cam * st.psi_out;
  return st;
}

inline CondContext forward(const std::vector<ItemInput>& batch, const CondParams& p,
                           const ForwardOptions& opt = {}) {
  CondContext ctx;
  ctx.cfg = p.cfg;
  ctx.items.reserve(batch.size());
  for (const auto& in : batch) ctx.items.push_back(forward_item(in, p, opt));
  ctx.has_intermediates = true;
  return ctx;
}

// ---------------------------------------------------------------------------
// Backward

struct ItemUpstream {
  MatrixXd d_f_ctx;  // (L_c + L_dir') x d_model
  VectorXd d_t_ctx;  // d_time
  VectorXd d_z_cam;  // d_z, optional (empty = zero)
  double d_g_cam = 0.0;
};

struct ItemInputGrads {
  VectorXd d_s;  // camera vector (16)
  MatrixXd d_c_raw, d_d_raw;
  VectorXd d_t;
};

struct Gradients {
  CondParams params;
  std::vector<ItemInputGrads> inputs;
};

inline Gradients backward(const CondContext& ctx, const std::vector<ItemUpstream>& upstream,
                          const CondParams& p) {
  if (!ctx.has_intermediates) {
    throw Error(ErrorCode::State, "backward needs the forward intermediates");
  }
  if (upstream.size() != ctx.items.size()) {
    throw Error(ErrorCode::Shape, "one upstream gradient per batch item is required");
  }
  const CondConfig& cfg = p.cfg;
  const int dm = cfg.d_model;
  const int lc = cfg.l_content;
  Gradients out{CondParams::zeros(cfg), {}};
  CondParams& gp = out.params;

  for (std::size_t b = 0; b < ctx.items.size(); ++b) {
    const ItemState& st = ctx.items[b];
    const ItemUpstream& up = upstream[b];
    if (up.d_f_ctx.rows() != st.f_ctx.rows() || up.d_f_ctx.cols() != st.f_ctx.cols() ||
        up.d_t_ctx.size() != st.t_ctx.size()) {
      throw Error(ErrorCode::Shape, "upstream gradient shape mismatch");
    }
    ItemInputGrads in;
    VectorXd dz = up.d_z_cam.size() == 0 ? VectorXd::Zero(cfg.d_z) : up.d_z_cam;
    double dg = up.d_g_cam;

    // t_ctx = t + g * psi(z)
    in.d_t = up.d_t_ctx;
    const VectorXd dpsi = st.g_cam * up.d_t_ctx;
    dg += up.d_t_ctx.dot(st.psi_out);
    gp.psi_w2 += dpsi * st.psi_act1.transpose();
    gp.psi_b2.col(0) += dpsi;
    const VectorXd dpsi_pre =
        detail::silu_backward(MatrixXd(st.psi_pre1), MatrixXd(p.psi_w2.transpose() * dpsi)).col(0);
    gp.psi_w1 += dpsi_pre * st.z_cam.transpose();
    gp.psi_b1.col(0) += dpsi_pre;
    dz += p.psi_w1.transpose() * dpsi_pre;

    // F_ctx = [C_ctx ; g * D_dir]
    const MatrixXd dc_ctx = up.d_f_ctx.topRows(lc);
    const MatrixXd df_dir = up.d_f_ctx.bottomRows(st.d_dir.rows());
    const MatrixXd dd_dir = st.g_cam * df_dir;
    dg += df_dir.cwiseProduct(st.d_dir).sum();

    // D_dir = (W_tok D + b_tok) W_feat^T + b_feat
    gp.cmp_feat_w += dd_dir.transpose() * st.d_pool;
    gp.cmp_feat_b.col(0) += dd_dir.colwise().sum().transpose();
    const MatrixXd dd_pool = dd_dir * p.cmp_feat_w;
    gp.cmp_tok_w += dd_pool * st.d.transpose();
    gp.cmp_tok_b.col(0) += dd_pool.rowwise().sum();
    MatrixXd dd = p.cmp_tok_w.transpose() * dd_pool;

    // C_ctx = C_ref + g * C_fuse, C_ref = C_lin
    MatrixXd dc_lin = dc_ctx;
    const MatrixXd dc_fuse = st.g_cam * dc_ctx;
    dg += dc_ctx.cwiseProduct(st.c_fuse).sum();

    // C_fuse = A V, A = softmax(Q K^T / sqrt(d))
    const double scale = 1.0 / std::sqrt(static_cast<double>(dm));
    const MatrixXd da = dc_fuse * st.kv.transpose();
    MatrixXd dkv = st.attn.transpose() * dc_fuse;
    const MatrixXd dlogits = detail::softmax_rows_backward(st.attn, da);
    const MatrixXd dq = dlogits * st.kv * scale;
    dkv += dlogits.transpose() * st.q * scale;

    // K = V = (1 + gamma_kv) * D + beta_kv ; Q = (1 + gamma_q) * C + beta_q
    dd += (dkv.array().rowwise() * (1.0 + st.gamma_kv.array()).transpose()).matrix();
    VectorXd dfkv(2 * dm);
    dfkv.head(dm) = dkv.cwiseProduct(st.d).colwise().sum().transpose();
    dfkv.tail(dm) = dkv.colwise().sum().transpose();
    const MatrixXd dc = (dq.array().rowwise() * (1.0 + st.gamma_q.array()).transpose()).matrix();
    VectorXd dfq(2 * dm);
    dfq.head(dm) = dq.cwiseProduct(st.c).colwise().sum().transpose();
    dfq.tail(dm) = dq.colwise().sum().transpose();
    gp.film_q_w += dfq * st.z_cam.transpose();
    gp.film_q_b.col(0) += dfq;
    gp.film_kv_w += dfkv * st.z_cam.transpose();
    gp.film_kv_b.col(0) += dfkv;
    dz += p.film_q_w.transpose() * dfq + p.film_kv_w.transpose() * dfkv;

    // Adapters
    const MatrixXd dc_soft = detail::layer_norm_backward(st.c_ln, p.con_gain, dc, gp.con_gain, gp.con_beta);
    dc_lin += detail::softmax_rows_backward(st.c_soft, dc_soft);
    gp.con_w += dc_lin.transpose() * st.c_raw;
    gp.con_b.col(0) += dc_lin.colwise().sum().transpose();
    in.d_c_raw = dc_lin * p.con_w;

    const MatrixXd dd_soft = detail::layer_norm_backward(st.d_ln, p.dir_gain, dd, gp.dir_gain, gp.dir_beta);
    const MatrixXd dd_lin = detail::softmax_rows_backward(st.d_soft, dd_soft);
    gp.dir_w += dd_lin.transpose() * st.d_raw;
    gp.dir_b.col(0) += dd_lin.colwise().sum().transpose();
    in.d_d_raw = dd_lin * p.dir_w;

    // Gate
    if (!st.gate_forced) {
      const double dlogit = dg * st.g_cam * (1.0 - st.g_cam);
      gp.gate_w += dlogit * st.d_raw_mean.transpose();
      gp.gate_b(0, 0) += dlogit;
      in.d_d_raw.rowwise() += (dlogit / static_cast<double>(st.d_raw.rows())) * p.gate_w.row(0);
    }

    // Camera encoder
    gp.enc_w2 += dz * st.enc_act1.transpose();
    gp.enc_b2.col(0) += dz;
    const VectorXd denc_pre =
        detail::silu_backward(MatrixXd(st.enc_pre1), MatrixXd(p.enc_w2.transpose() * dz)).col(0);
    gp.enc_w1 += denc_pre * st.pooled.transpose();
    gp.enc_b1.col(0) += denc_pre;
    const VectorXd dpooled = p.enc_w1.transpose() * denc_pre;
    const auto& last = st.conv_shapes[3];
    MatrixXd dx = dpooled.replicate(1, static_cast<Eigen::Index>(last.ho) * last.wo) /
                  static_cast<double>(last.ho * last.wo);
    for (int i = 3; i >= 0; --i) {
      const MatrixXd dpre = detail::silu_backward(st.conv_pre[i], dx);
      gp.conv_w[i] += dpre * st.conv_cols[i].transpose();
      gp.conv_b[i].col(0) += dpre.rowwise().sum();
      dx = detail::col2im(p.conv_w[i].transpose() * dpre, st.conv_shapes[i]);
    }
    const Eigen::Vector3d dproj = dx.rowwise().sum();
    in.d_s = camera_projection().transpose() * dproj;
    out.inputs.push_back(std::move(in));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shape audit

struct ShapeEntry {
  std::string name;
  Eigen::Index rows, cols;
};

inline std::vector<ShapeEntry> declared_shapes(const CondConfig& cfg) {
  const int lf = cfg.l_content + cfg.l_dir_compact;
  return {
      {"z_cam", cfg.d_z, 1},          {"C_raw", cfg.l_content, cfg.d_enc},
      {"D_raw", cfg.l_directive, cfg.d_enc}, {"C", cfg.l_content, cfg.d_model},
      {"D", cfg.l_directive, cfg.d_model},   {"Q", cfg.l_content, cfg.d_model},
      {"K", cfg.l_directive, cfg.d_model},   {"V", cfg.l_directive, cfg.d_model},
      {"attention", cfg.l_content, cfg.l_directive},
      {"gamma_q", cfg.d_model, 1},    {"beta_q", cfg.d_model, 1},
      {"gamma_kv", cfg.d_model, 1},   {"beta_kv", cfg.d_model, 1},
      {"C_fuse", cfg.l_content, cfg.d_model}, {"C_ctx", cfg.l_content, cfg.d_model},
      {"D_dir", cfg.l_dir_compact, cfg.d_model}, {"F_ctx", lf, cfg.d_model},
      {"ID_ctx", lf, 1},              {"t_ctx", cfg.d_time, 1},
  };
}

inline std::vector<ShapeEntry> observed_shapes(const ItemState& st) {
  return {
      {"z_cam", st.z_cam.rows(), st.z_cam.cols()}, {"C_raw", st.c_raw.rows(), st.c_raw.cols()},
      {"D_raw", st.d_raw.rows(), st.d_raw.cols()}, {"C", st.c.rows(), st.c.cols()},
      {"D", st.d.rows(), st.d.cols()},             {"Q", st.q.rows(), st.q.cols()},
      {"K", st.k().rows(), st.k().cols()},         {"V", st.v().rows(), st.v().cols()},
      {"attention", st.attn.rows(), st.attn.cols()},
      {"gamma_q", st.gamma_q.rows(), st.gamma_q.cols()}, {"beta_q", st.beta_q.rows(), st.beta_q.cols()},
      {"gamma_kv", st.gamma_kv.rows(), st.gamma_kv.cols()},
      {"beta_kv", st.beta_kv.rows(), st.beta_kv.cols()},
      {"C_fuse", st.c_fuse.rows(), st.c_fuse.cols()}, {"C_ctx", st.c_ctx.rows(), st.c_ctx.cols()},
      {"D_dir", st.d_dir.rows(), st.d_dir.cols()},    {"F_ctx", st.f_ctx.rows(), st.f_ctx.cols()},
      {"ID_ctx", static_cast<Eigen::Index>(st.id_ctx.size()), 1},
      {"t_ctx", st.t_ctx.rows(), st.t_ctx.cols()},
  };
}

/// Sinusoidal embedding of a diffusion timestep, width d.
inline VectorXd timestep_embedding(double step, int d) {
  VectorXd t(d);
  const int half = d / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * i / half);
    t(i) = std::sin(step * freq);
    t(i + half) = std::cos(step * freq);
  }
  if (d % 2) t(d - 1) = 0.0;
  return t;
}

}  // namespace camforge::cond
