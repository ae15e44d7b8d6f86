// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/error.hpp"

namespace camforge::cond {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct CondConfig {
  int d_enc = 48;
  int d_model = 32;
  int d_z = 64;
  int d_time = 64;
  int l_content = 8;
  int l_directive = 4;
  int l_dir_compact = 2;
  int batch = 2;
  int height = 16;
  int width = 16;
  std::array<int, 4> conv_channels = {8, 8, 16, 16};
  std::array<int, 4> conv_strides = {1, 2, 2, 1};
  int enc_hidden = 64;
  int psi_hidden = 64;
  double ln_eps = 1e-12;

  bool operator==(const CondConfig&) const = default;
};

/// Uniform in [-1, 1) from the top 53 bits of a 64-bit Mersenne Twister,
/// identical on every platform.
class UniformSource {
 public:
  explicit UniformSource(std::uint64_t seed) : rng_(seed) {}
  double operator()() { return 2.0 * (static_cast<double>(rng_() >> 11) * 0x1.0p-53) - 1.0; }
  std::uint64_t bits() { return rng_(); }

 private:
  std::mt19937_64 rng_;
};

/// Learnable tensors. Linear weights are [out, in]; biases and per-feature
/// vectors are [n, 1]; conv weights are [c_out, c_in * 9] with (c_in, ky, kx)
/// flattening.
struct CondParams {
  CondConfig cfg;
  std::array<MatrixXd, 4> conv_w, conv_b;
  MatrixXd enc_w1, enc_b1, enc_w2, enc_b2;
  MatrixXd con_w, con_b, con_gain, con_beta;
  MatrixXd dir_w, dir_b, dir_gain, dir_beta;
  MatrixXd film_q_w, film_q_b, film_kv_w, film_kv_b;
  MatrixXd gate_w, gate_b;
  MatrixXd cmp_tok_w, cmp_tok_b, cmp_feat_w, cmp_feat_b;
  MatrixXd psi_w1, psi_b1, psi_w2, psi_b2;

  template <typename F>
  void for_each(F&& f) {
    static constexpr const char* kConvNames[4][2] = {{"conv1.weight", "conv1.bias"},
                                                     {"conv2.weight", "conv2.bias"},
                                                     {"conv3.weight", "conv3.bias"},
                                                     {"conv4.weight", "conv4.bias"}};
    for (int i = 0; i < 4; ++i) {
      f(std::string_view(kConvNames[i][0]), conv_w[i]);
      f(std::string_view(kConvNames[i][1]), conv_b[i]);
    }
    f(std::string_view("encoder.fc1.weight"), enc_w1);
    f(std::string_view("encoder.fc1.bias"), enc_b1);
    f(std::string_view("encoder.fc2.weight"), enc_w2);
    f(std::string_view("encoder.fc2.bias"), enc_b2);
    f(std::string_view("adapter_con.linear.weight"), con_w);
    f(std::string_view("adapter_con.linear.bias"), con_b);
    f(std::string_view("adapter_con.norm.gain"), con_gain);
    f(std::string_view("adapter_con.norm.bias"), con_beta);
    f(std::string_view("adapter_dir.linear.weight"), dir_w);
    f(std::string_view("adapter_dir.linear.bias"), dir_b);
    f(std::string_view("adapter_dir.norm.gain"), dir_gain);
    f(std::string_view("adapter_dir.norm.bias"), dir_beta);
    f(std::string_view("film_q.weight"), film_q_w);
    f(std::string_view("film_q.bias"), film_q_b);
    f(std::string_view("film_kv.weight"), film_kv_w);
    f(std::string_view("film_kv.bias"), film_kv_b);
    f(std::string_view("gate.weight"), gate_w);
    f(std::string_view("gate.bias"), gate_b);
    f(std::string_view("compressor.token.weight"), cmp_tok_w);
    f(std::string_view("compressor.token.bias"), cmp_tok_b);
    f(std::string_view("compressor.feature.weight"), cmp_feat_w);
    f(std::string_view("compressor.feature.bias"), cmp_feat_b);
    f(std::string_view("psi.fc1.weight"), psi_w1);
    f(std::string_view("psi.fc1.bias"), psi_b1);
    f(std::string_view("psi.fc2.weight"), psi_w2);
    f(std::string_view("psi.fc2.bias"), psi_b2);
  }

  template <typename F>
  void for_each(F&& f) const {
    const_cast<CondParams*>(this)->for_each(
        [&f](std::string_view name, MatrixXd& m) { f(name, static_cast<const MatrixXd&>(m)); });
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each([&n](std::string_view, const MatrixXd& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  /// All tensors at their declared shapes, filled with zeros.
  static CondParams zeros(const CondConfig& cfg) {
    CondParams p;
    p.cfg = cfg;
    int cin = 3;
    for (int i = 0; i < 4; ++i) {
      p.conv_w[i] = MatrixXd::Zero(cfg.conv_channels[i], cin * 9);
      p.conv_b[i] = MatrixXd::Zero(cfg.conv_channels[i], 1);
      cin = cfg.conv_channels[i];
    }
    p.enc_w1 = MatrixXd::Zero(cfg.enc_hidden, cfg.conv_channels[3]);
    p.enc_b1 = MatrixXd::Zero(cfg.enc_hidden, 1);
    p.enc_w2 = MatrixXd::Zero(cfg.d_z, cfg.enc_hidden);
    p.enc_b2 = MatrixXd::Zero(cfg.d_z, 1);
    p.con_w = MatrixXd::Zero(cfg.d_model, cfg.d_enc);
    p.con_b = MatrixXd::Zero(cfg.d_model, 1);
    p.con_gain = MatrixXd::Zero(cfg.d_model, 1);
    p.con_beta = MatrixXd::Zero(cfg.d_model, 1);
    p.dir_w = MatrixXd::Zero(cfg.d_model, cfg.d_enc);
    p.dir_b = MatrixXd::Zero(cfg.d_model, 1);
    p.dir_gain = MatrixXd::Zero(cfg.d_model, 1);
    p.dir_beta = MatrixXd::Zero(cfg.d_model, 1);
    p.film_q_w = MatrixXd::Zero(2 * cfg.d_model, cfg.d_z);
    p.film_q_b = MatrixXd::Zero(2 * cfg.d_model, 1);
    p.film_kv_w = MatrixXd::Zero(2 * cfg.d_model, cfg.d_z);
    p.film_kv_b = MatrixXd::Zero(2 * cfg.d_model, 1);
    p.gate_w = MatrixXd::Zero(1, cfg.d_enc);
    p.gate_b = MatrixXd::Zero(1, 1);
    p.cmp_tok_w = MatrixXd::Zero(cfg.l_dir_compact, cfg.l_directive);
    p.cmp_tok_b = MatrixXd::Zero(cfg.l_dir_compact, 1);
    p.cmp_feat_w = MatrixXd::Zero(cfg.d_model, cfg.d_model);
    p.cmp_feat_b = MatrixXd::Zero(cfg.d_model, 1);
    p.psi_w1 = MatrixXd::Zero(cfg.psi_hidden, cfg.d_z);
    p.psi_b1 = MatrixXd::Zero(cfg.psi_hidden, 1);
    p.psi_w2 = MatrixXd::Zero(cfg.d_time, cfg.psi_hidden);
    p.psi_b2 = MatrixXd::Zero(cfg.d_time, 1);
    return p;
  }

  /// Default initialization: FiLM heads, gate head, psi.fc2 and
  /// compressor.feature start at zero, so the stack is an exact identity on
  /// its conditioning paths. Everything else is seeded uniform.
  static CondParams init(const CondConfig& cfg, std::uint64_t seed) {
    CondParams p = zeros(cfg);
    UniformSource u(seed);
    auto fill = [&u](MatrixXd& m, double scale) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * u();
    };
    auto fan = [](const MatrixXd& w) { return 1.0 / std::sqrt(static_cast<double>(w.cols())); };
    // SiLU stacks lose signal quickly under plain fan-in scaling, so the
    // encoder and psi weights use the He bound sqrt(6 / fan_in).
    auto he = [](const MatrixXd& w) { return std::sqrt(6.0 / static_cast<double>(w.cols())); };
    for (int i = 0; i < 4; ++i) {
      fill(p.conv_w[i], he(p.conv_w[i]));
      fill(p.conv_b[i], fan(p.conv_w[i]));
    }
    fill(p.enc_w1, he(p.enc_w1));
    fill(p.enc_b1, fan(p.enc_w1));
    fill(p.enc_w2, he(p.enc_w2));
    fill(p.enc_b2, fan(p.enc_w2));
    fill(p.con_w, fan(p.con_w));
    fill(p.con_b, fan(p.con_w));
    p.con_gain.setOnes();
    fill(p.dir_w, fan(p.dir_w));
    fill(p.dir_b, fan(p.dir_w));
    p.dir_gain.setOnes();
    fill(p.cmp_tok_w, fan(p.cmp_tok_w));
    fill(p.cmp_tok_b, fan(p.cmp_tok_w));
    fill(p.psi_w1, he(p.psi_w1));
    fill(p.psi_b1, fan(p.psi_w1));
    return p;
  }

  /// Fills every zero-initialized head with seeded values of the given scale
  /// (relative to 1/sqrt(fan_in)) and perturbs the norm affine parameters;
  /// used where the identity start would hide gradients or information flow.
  void randomize_heads(std::uint64_t seed, double scale = 1.0) {
    UniformSource u(seed);
    auto fill = [&u, scale](MatrixXd& m, double fan_scale) {
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * fan_scale * u();
    };
    auto fan = [](const MatrixXd& w) { return 1.0 / std::sqrt(static_cast<double>(w.cols())); };
    fill(film_q_w, fan(film_q_w));
    fill(film_q_b, fan(film_q_w));
    fill(film_kv_w, fan(film_kv_w));
    fill(film_kv_b, fan(film_kv_w));
    fill(gate_w, fan(gate_w));
    fill(gate_b, fan(gate_w));
    fill(cmp_feat_w, fan(cmp_feat_w));
    fill(cmp_feat_b, fan(cmp_feat_w));
    fill(psi_w2, fan(psi_w2));
    fill(psi_b2, fan(psi_w2));
    for (Eigen::Index i = 0; i < con_gain.size(); ++i) {
      con_gain.data()[i] += 0.1 * u();
      con_beta.data()[i] += 0.1 * u();
      dir_gain.data()[i] += 0.1 * u();
      dir_beta.data()[i] += 0.1 * u();
    }
  }
};

// Weight file layout (little-endian):
//   "CFWT" | u32 version | 16 x i32 config | u32 tensor count
//   per tensor: u32 name length | name bytes | u32 rows | u32 cols
//   then every tensor's data as f64, row-major, in header order.
inline constexpr std::uint32_t kWeightsVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out += static_cast<char>((v >> (8 * i)) & 0xff);
}

inline std::uint32_t get_u32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw Error(ErrorCode::Io, "truncated weight file");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += 4;
  return v;
}

inline std::array<std::int32_t, 16> config_words(const CondConfig& c) {
  return {c.d_enc,           c.d_model,         c.d_z,
          c.d_time,          c.l_content,       c.l_directive,
          c.l_dir_compact,   c.batch,           c.height,
          c.width,           c.conv_channels[0], c.conv_channels[1],
          c.conv_channels[2], c.conv_channels[3], c.enc_hidden,
          c.psi_hidden};
}

}  // namespace detail

inline std::string serialize_weights(const CondParams& p) {
  std::string out = "CFWT";
  detail::put_u32(out, kWeightsVersion);
  for (std::int32_t w : detail::config_words(p.cfg)) detail::put_u32(out, static_cast<std::uint32_t>(w));
  std::uint32_t count = 0;
  p.for_each([&count](std::string_view, const MatrixXd&) { ++count; });
  detail::put_u32(out, count);
  p.for_each([&out](std::string_view name, const MatrixXd& m) {
    detail::put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    detail::put_u32(out, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  });
  p.for_each([&out](std::string_view, const MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        double v = m(r, c);
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        for (int i = 0; i < 8; ++i) out += static_cast<char>((bits >> (8 * i)) & 0xff);
      }
    }
  });
  return out;
}

inline CondParams deserialize_weights(std::string_view in) {
  if (in.size() < 8 || in.substr(0, 4) != "CFWT") throw Error(ErrorCode::Io, "not a weight file");
  std::size_t pos = 4;
  if (detail::get_u32(in, pos) != kWeightsVersion) {
    throw Error(ErrorCode::Io, "unsupported weight file version");
  }
  std::array<std::int32_t, 16> words{};
  for (auto& w : words) w = static_cast<std::int32_t>(detail::get_u32(in, pos));
  CondConfig cfg;
  cfg.d_enc = words[0];
  cfg.d_model = words[1];
  cfg.d_z = words[2];
  cfg.d_time = words[3];
  cfg.l_content = words[4];
  cfg.l_directive = words[5];
  cfg.l_dir_compact = words[6];
  cfg.batch = words[7];
  cfg.height = words[8];
  cfg.width = words[9];
  cfg.conv_channels = {words[10], words[11], words[12], words[13]};
  cfg.enc_hidden = words[14];
  cfg.psi_hidden = words[15];
  for (std::int32_t w : words) {
    if (w <= 0 || w > 1 << 16) throw Error(ErrorCode::Io, "implausible config in weight file");
  }
  CondParams p = CondParams::zeros(cfg);
  const std::uint32_t count = detail::get_u32(in, pos);
  std::vector<std::pair<std::string, std::pair<std::uint32_t, std::uint32_t>>> table;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = detail::get_u32(in, pos);
    if (pos + len > in.size()) throw Error(ErrorCode::Io, "truncated weight file");
    std::string name(in.substr(pos, len));
    pos += len;
    const std::uint32_t rows = detail::get_u32(in, pos);
    const std::uint32_t cols = detail::get_u32(in, pos);
    table.push_back({std::move(name), {rows, cols}});
  }
  std::size_t idx = 0;
  p.for_each([&](std::string_view name, MatrixXd& m) {
    if (idx >= table.size() || table[idx].first != name ||
        table[idx].second.first != static_cast<std::uint32_t>(m.rows()) ||
        table[idx].second.second != static_cast<std::uint32_t>(m.cols())) {
      throw Error(ErrorCode::Shape, "weight file shape table mismatch at '" + std::string(name) + "'");
    }
    ++idx;
  });
  if (idx != table.size()) throw Error(ErrorCode::Shape, "weight file has extra tensors");
  p.for_each([&](std::string_view, MatrixXd& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        if (pos + 8 > in.size()) throw Error(ErrorCode::Io, "truncated weight data");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
          bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
        }
        pos += 8;
        std::memcpy(&m(r, c), &bits, sizeof bits);
      }
    }
  });
  if (pos != in.size()) throw Error(ErrorCode::Io, "trailing bytes in weight file");
  return p;
}

}  // namespace camforge::cond
