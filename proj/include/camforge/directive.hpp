// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Camera control directives of the form `[CONTROL: key=value, ...]`.
//
//   directive := ws "[" ws "CONTROL" ws ":" [pairlist] ws "]" ws
//   pairlist  := pair ("," pair)*
//   pair      := ws key ws "=" ws value ws
//
// Value syntax depends on the key:
//   exposure                  [+|-]<dec> EV
//   cct                       <dec> K
//   contrast/saturation/bokeh <int>/<int>  or bare <int> (out of 4)
//   zoom                      <dec> x       (also accepts U+00D7)
//   style                     identifier
//
// Keywords, keys and unit suffixes are case-insensitive. Keys are
// canonicalized to lowercase.

#pragma once

#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>
#include <variant>
#include <vector>

#include "camforge/error.hpp"

namespace camforge {

enum class Param { Style, Exposure, Cct, Contrast, Saturation, Zoom, Bokeh };

inline constexpr std::size_t kParamCount = 7;

inline constexpr std::array<Param, kParamCount> kAllParams = {
    Param::Style,      Param::Exposure, Param::Cct,  Param::Contrast,
    Param::Saturation, Param::Zoom,     Param::Bokeh};

constexpr std::string_view param_name(Param p) {
  switch (p) {
    case Param::Style: return "style";
    case Param::Exposure: return "exposure";
    case Param::Cct: return "cct";
    case Param::Contrast: return "contrast";
    case Param::Saturation: return "saturation";
    case Param::Zoom: return "zoom";
    case Param::Bokeh: return "bokeh";
  }
  return "";
}

inline std::optional<Param> param_from_name(std::string_view name) {
  for (Param p : kAllParams) {
    std::string_view canon = param_name(p);
    if (canon.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(name[i])) != canon[i]) {
        same = false;
        break;
      }
    }
    if (same) return p;
  }
  return std::nullopt;
}

struct Ev {
  double stops = 0.0;
  bool operator==(const Ev&) const = default;
};

struct Kelvin {
  double kelvin = 6500.0;
  bool operator==(const Kelvin&) const = default;
};

struct Level {
  int n = 1;
  int of = 4;
  bool operator==(const Level&) const = default;
};

struct ZoomFactor {
  double factor = 1.0;
  bool operator==(const ZoomFactor&) const = default;
};

struct StyleName {
  std::string name;
  bool operator==(const StyleName&) const = default;
};

using RawValue = std::variant<Ev, Kelvin, Level, ZoomFactor, StyleName>;

struct DirectivePair {
  Param param;
  RawValue value;
  bool operator==(const DirectivePair&) const = default;
};

struct Directive {
  std::vector<DirectivePair> pairs;
  std::string source_text;

  // Equality is over the parsed content; source text is provenance only.
  bool operator==(const Directive& other) const { return pairs == other.pairs; }

  const RawValue* find(Param p) const {
    for (const auto& pair : pairs) {
      if (pair.param == p) return &pair.value;
    }
    return nullptr;
  }

  template <typename T>
  const T* get(Param p) const {
    const RawValue* v = find(p);
    return v ? std::get_if<T>(v) : nullptr;
  }
};

namespace detail {

// Shortest fixed-notation text that reads back to the same double.
inline std::string format_decimal(double v) {
  if (v == 0.0) v = 0.0;  // folds -0
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v,
                                 std::chars_format::fixed);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf.data(), end);
}

class DirectiveParser {
 public:
  explicit DirectiveParser(std::string_view text) : text_(text) {}

  Directive parse() {
    Directive d;
    d.source_text = std::string(text_);
    skip_ws();
    expect('[', "expected '[' to open the directive");
    skip_ws();
    expect_keyword("CONTROL");
    skip_ws();
    expect(':', "expected ':' after CONTROL");
    skip_ws();
    if (peek() == ']') {
      ++pos_;
    } else {
      for (;;) {
        parse_pair(d);
        skip_ws();
        if (peek() == ',') {
          ++pos_;
          continue;
        }
        expect(']', "expected ',' or ']' after value");
        break;
      }
    }
    skip_ws();
    if (pos_ != text_.size()) fail(ErrorCode::Syntax, "trailing text after ']'");
    return d;
  }

 private:
  [[noreturn]] void fail(ErrorCode code, const std::string& message) const {
    throw Error(code, message + " (at offset " + std::to_string(pos_) + ")", pos_);
  }

  char peek() const { return pos_ < text_.size() ? text_[pos_] : '\0'; }

  void skip_ws() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
  }

  void expect(char c, const char* message) {
    if (peek() != c) fail(ErrorCode::Syntax, message);
    ++pos_;
  }

  void expect_keyword(std::string_view kw) {
    for (char c : kw) {
      if (std::toupper(static_cast<unsigned char>(peek())) != c) {
        fail(ErrorCode::Syntax, "expected 'CONTROL' keyword");
      }
      ++pos_;
    }
  }

  // Case-insensitive unit suffix; returns false without consuming on mismatch.
  bool accept_unit(std::string_view unit) {
    if (text_.size() - pos_ < unit.size()) return false;
    for (std::size_t i = 0; i < unit.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(text_[pos_ + i])) != static_cast<unsigned char>(unit[i])) {
        return false;
      }
    }
    pos_ += unit.size();
    return true;
  }

  static bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-';
  }

  void parse_pair(Directive& d) {
    skip_ws();
    const std::size_t key_start = pos_;
    while (std::isalpha(static_cast<unsigned char>(peek()))) ++pos_;
    if (pos_ == key_start) fail(ErrorCode::Syntax, "expected a parameter name");
    std::string_view key = text_.substr(key_start, pos_ - key_start);
    auto param = param_from_name(key);
    if (!param) {
      pos_ = key_start;
      fail(ErrorCode::UnknownParam, "unknown parameter '" + std::string(key) + "'");
    }
    if (d.find(*param)) {
      pos_ = key_start;
      fail(ErrorCode::DuplicateParam, "parameter '" + std::string(param_name(*param)) +
                                          "' appears more than once");
    }
    skip_ws();
    expect('=', "expected '=' after parameter name");
    skip_ws();
    const std::size_t value_start = pos_;
    RawValue value = parse_value(*param, value_start);
    d.pairs.push_back({*param, std::move(value)});
  }

  double parse_signed_decimal(bool allow_sign) {
    const std::size_t start = pos_;
    bool negative = false;
    if (peek() == '+' || peek() == '-') {
      if (!allow_sign) fail(ErrorCode::Syntax, "unexpected sign");
      negative = peek() == '-';
      ++pos_;
    }
    const std::size_t num_start = pos_;
    std::size_t digits = 0;
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_, ++digits;
    if (peek() == '.') {
      ++pos_;
      while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_, ++digits;
    }
    if (digits == 0) {
      pos_ = start;
      fail(ErrorCode::Syntax, "expected a number");
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(text_.data() + num_start, text_.data() + pos_, v,
                                     std::chars_format::fixed);
    if (ec != std::errc{} || ptr != text_.data() + pos_ || !std::isfinite(v)) {
      pos_ = start;
      fail(ErrorCode::Syntax, "malformed number");
    }
    return negative ? -v : v;
  }

  long parse_signed_int() {
    const std::size_t start = pos_;
    bool negative = false;
    if (peek() == '+' || peek() == '-') {
      negative = peek() == '-';
      ++pos_;
    }
    const std::size_t num_start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) ++pos_;
    long v = 0;
    auto [ptr, ec] = std::from_chars(text_.data() + num_start, text_.data() + pos_, v);
    if (pos_ == num_start || ec != std::errc{} || ptr != text_.data() + pos_) {
      pos_ = start;
      fail(ErrorCode::Syntax, "expected an integer level");
    }
    return negative ? -v : v;
  }

  RawValue parse_value(Param param, std::size_t value_start) {
    switch (param) {
      case Param::Exposure: {
        double stops = parse_signed_decimal(true);
        skip_ws();
        if (!accept_unit("ev")) fail(ErrorCode::Syntax, "exposure needs an 'EV' suffix");
        return Ev{stops == 0.0 ? 0.0 : stops};
      }
      case Param::Cct: {
        double k = parse_signed_decimal(true);
        skip_ws();
        if (!accept_unit("k")) fail(ErrorCode::Syntax, "cct needs a 'K' suffix");
        if (!(k > 0.0)) {
          pos_ = value_start;
          fail(ErrorCode::Value, "color temperature must be positive");
        }
        return Kelvin{k};
      }
      case Param::Zoom: {
        double f = parse_signed_decimal(true);
        skip_ws();
        if (!accept_unit("x") && !accept_unit("\xc3\x97")) {
          fail(ErrorCode::Syntax, "zoom needs an 'x' suffix");
        }
        if (!(f >= 1.0)) {
          pos_ = value_start;
          fail(ErrorCode::Value, "zoom factor must be at least 1");
        }
        return ZoomFactor{f};
      }
      case Param::Contrast:
      case Param::Saturation:
      case Param::Bokeh: {
        long n = parse_signed_int();
        long of = 4;
        skip_ws();
        if (peek() == '/') {
          ++pos_;
          skip_ws();
          of = parse_signed_int();
        }
        if (of < 2 || n < 1 || n > of || of > 1000) {
          pos_ = value_start;
          fail(ErrorCode::Value, "level must satisfy 1 <= n <= of with of >= 2");
        }
        return Level{static_cast<int>(n), static_cast<int>(of)};
      }
      case Param::Style: {
        const std::size_t start = pos_;
        if (!std::isalpha(static_cast<unsigned char>(peek()))) {
          fail(ErrorCode::Syntax, "style needs a name");
        }
        while (is_ident_char(peek())) ++pos_;
        return StyleName{std::string(text_.substr(start, pos_ - start))};
      }
    }
    fail(ErrorCode::Syntax, "unhandled parameter");
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline Directive parse_directive(std::string_view text) {
  return detail::DirectiveParser(text).parse();
}

inline std::string render_value(const RawValue& value) {
  struct Visitor {
    std::string operator()(const Ev& v) const {
      std::string s = detail::format_decimal(v.stops);
      return (s.front() == '-' ? s : "+" + s) + "EV";
    }
    std::string operator()(const Kelvin& v) const { return detail::format_decimal(v.kelvin) + "K"; }
    std::string operator()(const Level& v) const {
      return std::to_string(v.n) + "/" + std::to_string(v.of);
    }
    std::string operator()(const ZoomFactor& v) const {
      return detail::format_decimal(v.factor) + "x";
    }
    std::string operator()(const StyleName& v) const { return v.name; }
  };
  return std::visit(Visitor{}, value);
}

inline std::string render_directive(const Directive& d) {
  std::string out = "[CONTROL:";
  for (std::size_t i = 0; i < d.pairs.size(); ++i) {
    out += i == 0 ? " " : ", ";
    out += param_name(d.pairs[i].param);
    out += '=';
    out += render_value(d.pairs[i].value);
  }
  out += ']';
  return out;
}

}  // namespace camforge
