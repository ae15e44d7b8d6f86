// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Paired-dataset synthesis: plan records from a JSON build config, render
// them through the transform chain, write a line-delimited manifest, and
// verify a manifest by re-parsing, re-calibrating and re-rendering.

#pragma once

#include "json.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/lut.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/png_io.hpp"
#include "camforge/transforms.hpp"

namespace camforge {

namespace fs = std::filesystem;

struct BaseImage {
  std::string id;
  fs::path path;
  std::optional<fs::path> mask;

  bool operator==(const BaseImage&) const = default;
};

struct BuildConfig {
  std::uint64_t seed = 0;
  int pairs_per_setting = 1;
  std::vector<BaseImage> train_bases;
  std::vector<BaseImage> test_bases;
  int test_pairs = 0;  // total, spread evenly over settings
  // Raw value strings per parameter, e.g. {"exposure": {"-1EV", "+0EV"}}.
  std::map<Param, std::vector<std::string>> grids;
  std::map<std::string, std::string> captions;  // base id -> caption
  int workers = 0;                              // 0 = hardware concurrency

  static BuildConfig from_json(const nlohmann::json& j, const fs::path& base_dir = {});
  static BuildConfig load(const fs::path& path);
};

struct Setting {
  Param param;
  std::string raw;
};

struct PairRecord {
  std::string id;
  std::string split;
  std::string base_id;
  fs::path base_ref;
  std::optional<fs::path> mask_ref;
  std::string output_ref;
  std::string directive;
  std::optional<std::string> caption;
  Param param = Param::Exposure;
  std::string raw;
  CameraVector vector;
  std::uint64_t seed = 0;
  std::vector<std::string> chain;
  std::string output_checksum;  // empty until rendered

  nlohmann::ordered_json to_json() const;
  static PairRecord from_json(const nlohmann::json& j);
};

struct BuildPlan {
  std::vector<Setting> settings;
  std::vector<PairRecord> records;
};

namespace detail {

inline std::string sha256_of(std::string_view s) { return sha256_hex(s); }

inline std::uint64_t hash64(std::string_view s) {
  const std::string hex = sha256_of(s);
  return std::stoull(hex.substr(0, 16), nullptr, 16);
}

inline std::string setting_directive(Param p, const std::string& raw) {
  return "[CONTROL: " + std::string(param_name(p)) + "=" + raw + "]";
}

inline std::vector<BaseImage> scan_base_dir(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::Config, "base directory not found: " + dir.string());
  std::vector<BaseImage> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto& p = entry.path();
    const std::string name = p.filename().string();
    if (p.extension() != ".png" || name.size() > 9 && name.ends_with(".mask.png")) continue;
    BaseImage b{p.stem().string(), p, std::nullopt};
    fs::path mask = p.parent_path() / (p.stem().string() + ".mask.png");
    if (fs::exists(mask)) b.mask = mask;
    out.push_back(std::move(b));
  }
  std::sort(out.begin(), out.end(), [](const BaseImage& a, const BaseImage& b) { return a.id < b.id; });
  return out;
}

inline std::vector<BaseImage> parse_bases(const nlohmann::json& j, const char* list_key, const char* dir_key,
                                          const fs::path& base_dir) {
  std::vector<BaseImage> out;
  auto resolve = [&base_dir](const std::string& p) {
    fs::path path(p);
    return (path.is_absolute() ? path : base_dir / path).lexically_normal();
  };
  if (j.contains(dir_key)) {
    for (auto& b : scan_base_dir(resolve(j.at(dir_key).get<std::string>()))) out.push_back(std::move(b));
  }
  if (j.contains(list_key)) {
    for (const auto& e : j.at(list_key)) {
      BaseImage b;
      b.path = resolve(e.at("path").get<std::string>());
      b.id = e.contains("id") ? e.at("id").get<std::string>() : b.path.stem().string();
      if (e.contains("mask")) b.mask = resolve(e.at("mask").get<std::string>());
      out.push_back(std::move(b));
    }
  }
  return out;
}

// Seeded Fisher-Yates; std::shuffle is not specified portably.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

inline void validate_setting(Param p, const std::string& raw, const StyleRegistry& registry) {
  try {
    const Directive d = parse_directive(setting_directive(p, raw));
    if (p == Param::Exposure && std::abs(std::get<Ev>(d.pairs.at(0).value).stops) > kExposureRangeEv) {
      throw Error(ErrorCode::Range, "exposure beyond +/-3EV");
    }
    calibrate(d, registry);
  } catch (const Error& e) {
    throw Error(ErrorCode::Config, "grid value " + std::string(param_name(p)) + "=" + raw + ": " + e.what());
  }
}

}  // namespace detail

inline BuildConfig BuildConfig::from_json(const nlohmann::json& j, const fs::path& base_dir) {
  try {
    BuildConfig c;
    c.seed = j.value("seed", std::uint64_t{0});
    c.pairs_per_setting = j.value("pairs_per_setting", 1);
    c.test_pairs = j.value("test_pairs", 0);
    c.workers = j.value("workers", 0);
    c.train_bases = detail::parse_bases(j, "train_bases", "train_base_dir", base_dir);
    c.test_bases = detail::parse_bases(j, "test_bases", "test_base_dir", base_dir);
    if (j.contains("grids")) {
      for (const auto& [key, values] : j.at("grids").items()) {
        const auto p = param_from_name(key);
        if (!p) throw Error(ErrorCode::Config, "unknown grid parameter: " + key);
        c.grids[*p] = values.get<std::vector<std::string>>();
      }
    }
    if (j.contains("captions")) {
      const auto& cap = j.at("captions");
      if (cap.is_string()) {
        fs::path p(cap.get<std::string>());
        if (!p.is_absolute()) p = base_dir / p;
        c.captions = nlohmann::json::parse(read_file(p)).get<std::map<std::string, std::string>>();
      } else {
        c.captions = cap.get<std::map<std::string, std::string>>();
      }
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("build config: ") + e.what());
  }
}

inline BuildConfig BuildConfig::load(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, path.string() + ": " + e.what());
  }
  return from_json(j, fs::absolute(path).parent_path());
}

inline nlohmann::ordered_json PairRecord::to_json() const {
  nlohmann::ordered_json j;
  j["id"] = id;
  j["split"] = split;
  j["base_id"] = base_id;
  j["base_ref"] = base_ref.string();
  j["mask_ref"] = mask_ref ? nlohmann::ordered_json(mask_ref->string()) : nlohmann::ordered_json(nullptr);
  j["output_ref"] = output_ref;
  j["directive"] = directive;
  j["caption"] = caption ? nlohmann::ordered_json(*caption) : nlohmann::ordered_json(nullptr);
  j["param"] = std::string(param_name(param));
  j["raw"] = raw;
  const auto flat = vector.flatten();
  j["vector"] = {{"values", std::vector<double>(flat.begin(), flat.end())}, {"mask", vector.mask}};
  j["seed"] = seed;
  j["chain"] = chain;
  j["output_checksum"] = output_checksum;
  return j;
}

inline PairRecord PairRecord::from_json(const nlohmann::json& j) {
  try {
    PairRecord r;
    r.id = j.at("id").get<std::string>();
    r.split = j.at("split").get<std::string>();
    r.base_id = j.at("base_id").get<std::string>();
    r.base_ref = j.at("base_ref").get<std::string>();
    if (!j.at("mask_ref").is_null()) r.mask_ref = fs::path(j.at("mask_ref").get<std::string>());
    r.output_ref = j.at("output_ref").get<std::string>();
    r.directive = j.at("directive").get<std::string>();
    if (!j.at("caption").is_null()) r.caption = j.at("caption").get<std::string>();
    const auto p = param_from_name(j.at("param").get<std::string>());
    if (!p) throw Error(ErrorCode::Config, "unknown param in record " + r.id);
    r.param = *p;
    r.raw = j.at("raw").get<std::string>();
    const auto values = j.at("vector").at("values").get<std::vector<double>>();
    if (values.size() != kCameraVectorWidth) throw Error(ErrorCode::Config, "vector width in record " + r.id);
    std::array<double, kCameraVectorWidth> flat{};
    std::copy(values.begin(), values.end(), flat.begin());
    r.vector = CameraVector::unflatten(flat, j.at("vector").at("mask").get<std::uint8_t>());
    r.seed = j.at("seed").get<std::uint64_t>();
    r.chain = j.at("chain").get<std::vector<std::string>>();
    r.output_checksum = j.at("output_checksum").get<std::string>();
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Config, std::string("manifest record: ") + e.what());
  }
}

/// Settings in parameter order, each grid in listed order.
inline std::vector<Setting> enumerate_settings(const BuildConfig& cfg) {
  std::vector<Setting> out;
  for (Param p : kAllParams) {
    auto it = cfg.grids.find(p);
    if (it == cfg.grids.end()) continue;
    for (const auto& raw : it->second) out.push_back({p, raw});
  }
  return out;
}

/// Test pairs per setting: an even split, with the remainder going to the
/// earliest settings.
inline std::vector<int> test_allocation(int total, std::size_t settings) {
  std::vector<int> out(settings, 0);
  if (settings == 0) return out;
  const int each = total / static_cast<int>(settings);
  const int extra = total % static_cast<int>(settings);
  for (std::size_t i = 0; i < settings; ++i) out[i] = each + (static_cast<int>(i) < extra ? 1 : 0);
  return out;
}

inline BuildPlan plan_build(const BuildConfig& cfg, const StyleRegistry& registry = StyleRegistry::builtin()) {
  if (cfg.pairs_per_setting < 1) throw Error(ErrorCode::Config, "pairs_per_setting must be at least 1");
  if (cfg.test_pairs < 0) throw Error(ErrorCode::Config, "test_pairs must be non-negative");
  if (cfg.train_bases.empty()) throw Error(ErrorCode::Config, "no training bases");
  if (cfg.test_pairs > 0 && cfg.test_bases.empty()) throw Error(ErrorCode::Config, "test pairs requested without test bases");

  std::set<std::string> ids;
  std::set<fs::path> paths;
  for (const auto* list : {&cfg.train_bases, &cfg.test_bases}) {
    std::set<std::string> local;
    for (const auto& b : *list) {
      if (!local.insert(b.id).second) throw Error(ErrorCode::Config, "duplicate base id: " + b.id);
    }
  }
  for (const auto& b : cfg.train_bases) {
    ids.insert(b.id);
    paths.insert(b.path);
  }
  for (const auto& b : cfg.test_bases) {
    if (ids.count(b.id) || paths.count(b.path)) {
      throw Error(ErrorCode::Config, "base " + b.id + " appears in both train and test splits");
    }
  }

  BuildPlan plan;
  plan.settings = enumerate_settings(cfg);
  if (plan.settings.empty()) throw Error(ErrorCode::Config, "no parameter grids configured");
  for (const auto& s : plan.settings) detail::validate_setting(s.param, s.raw, registry);
  const auto test_counts = test_allocation(cfg.test_pairs, plan.settings.size());

  for (std::size_t si = 0; si < plan.settings.size(); ++si) {
    const Setting& s = plan.settings[si];
    const Directive d = parse_directive(detail::setting_directive(s.param, s.raw));
    const std::string directive_text = render_directive(d);
    const std::string raw_text = render_value(d.pairs.at(0).value);
    const CameraVector vec = calibrate(d, registry);
    const RenderSettings settings = RenderSettings::from_directive(d, registry);

    auto emit = [&](const std::string& split, const std::vector<BaseImage>& all, int count) {
      if (count == 0) return;
      std::vector<BaseImage> pool;
      for (const auto& b : all) {
        if (s.param != Param::Bokeh || b.mask) pool.push_back(b);
      }
      if (pool.empty()) {
        throw Error(ErrorCode::Config, "no " + split + " bases with masks for bokeh settings");
      }
      int made = 0;
      for (int replicate = 0; made < count; ++replicate) {
        std::vector<BaseImage> order = pool;
        detail::seeded_shuffle(order, detail::hash64(std::to_string(cfg.seed) + "|shuffle|" + split + "|" +
                                                     std::string(param_name(s.param)) + "|" + raw_text + "|" +
                                                     std::to_string(replicate)));
        for (std::size_t k = 0; k < order.size() && made < count; ++k, ++made) {
          const BaseImage& b = order[k];
          PairRecord r;
          r.id = detail::sha256_of(split + "|" + std::string(param_name(s.param)) + "|" + raw_text + "|" + b.id +
                                   "|" + std::to_string(replicate))
                     .substr(0, 20);
          r.split = split;
          r.base_id = b.id;
          r.base_ref = b.path;
          if (s.param == Param::Bokeh) r.mask_ref = b.mask;
          r.output_ref = "images/" + r.id + ".png";
          r.directive = directive_text;
          if (auto c = cfg.captions.find(b.id); c != cfg.captions.end()) r.caption = c->second;
          r.param = s.param;
          r.raw = raw_text;
          r.vector = vec;
          r.seed = detail::hash64(std::to_string(cfg.seed) + "|record|" + r.id);
          r.chain = chain_ops(settings, r.mask_ref.has_value());
          plan.records.push_back(std::move(r));
        }
      }
    };
    emit("train", cfg.train_bases, cfg.pairs_per_setting);
    emit("test", cfg.test_bases, test_counts[si]);
  }
  return plan;
}

struct RecordError {
  std::string id;
  std::string code;
  std::string message;
};

struct BuildReport {
  std::size_t planned = 0;
  std::size_t written = 0;
  std::vector<RecordError> errors;
  fs::path manifest;
};

/// Renders one record and returns the PNG bytes of its output.
inline std::vector<std::uint8_t> render_record(const PairRecord& r, const StyleLibrary& styles) {
  const std::string base = read_file(r.base_ref);
  std::optional<std::string> mask;
  if (r.mask_ref) mask = read_file(*r.mask_ref);
  try {
    return render_png(base, parse_directive(r.directive), styles,
                      mask ? std::optional<std::string_view>(*mask) : std::nullopt)
        .png;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::Io) throw;
    throw Error(ErrorCode::Io, r.base_ref.string() + ": " + e.what());
  }
}

inline std::string checksum_png_bytes(const std::vector<std::uint8_t>& png) {
  return raster_checksum(decode_png(std::string_view(reinterpret_cast<const char*>(png.data()), png.size())));
}

/// Renders every planned record into out_dir/images, then writes
/// manifest.jsonl (successful records, plan order) and errors.jsonl.
inline BuildReport render_pairs(BuildPlan plan, const fs::path& out_dir, const StyleLibrary& styles, int workers = 0) {
  fs::create_directories(out_dir / "images");
  const std::size_t n = plan.records.size();
  std::vector<std::optional<RecordError>> failures(n);
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      PairRecord& r = plan.records[i];
      try {
        const auto png = render_record(r, styles);
        r.output_checksum = checksum_png_bytes(png);
        write_file(out_dir / r.output_ref,
                   std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      } catch (const Error& e) {
        failures[i] = RecordError{r.id, std::string(to_string(e.code())), e.what()};
      } catch (const std::exception& e) {
        failures[i] = RecordError{r.id, "InternalError", e.what()};
      }
    }
  };
  int count = workers > 0 ? workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  count = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(count), std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (int t = 1; t < count; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  BuildReport report;
  report.planned = n;
  report.manifest = out_dir / "manifest.jsonl";
  std::string manifest, errors;
  for (std::size_t i = 0; i < n; ++i) {
    if (failures[i]) {
      nlohmann::ordered_json e{{"id", failures[i]->id}, {"error", failures[i]->code}, {"message", failures[i]->message}};
      errors += e.dump() + "\n";
      report.errors.push_back(*failures[i]);
    } else {
      manifest += plan.records[i].to_json().dump() + "\n";
      ++report.written;
    }
  }
  write_file(report.manifest, manifest);
  write_file(out_dir / "errors.jsonl", errors);
  return report;
}

inline std::vector<PairRecord> read_manifest(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::vector<PairRecord> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      out.push_back(PairRecord::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorCode::Io, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

struct VerifyIssue {
  std::string id;
  std::string kind;  // parse | calibration | chain | checksum
  std::string message;
};

struct VerifyReport {
  std::size_t records = 0;
  std::size_t sampled = 0;
  std::size_t parse_mismatches = 0;
  std::size_t calibration_mismatches = 0;
  std::size_t checksum_mismatches = 0;
  std::vector<VerifyIssue> issues;

  bool ok() const { return issues.empty(); }
};

/// Ids chosen for re-rendering: all of them at fraction >= 1, otherwise the
/// ceil(fraction * n) records with the lowest id hash.
inline std::set<std::string> sample_ids(const std::vector<PairRecord>& records, double fraction) {
  std::set<std::string> out;
  if (fraction >= 1.0) {
    for (const auto& r : records) out.insert(r.id);
    return out;
  }
  if (fraction <= 0.0) return out;
  std::vector<std::pair<std::uint64_t, std::string>> keyed;
  for (const auto& r : records) keyed.emplace_back(detail::hash64("sample|" + r.id), r.id);
  std::sort(keyed.begin(), keyed.end());
  const auto take = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(records.size())));
  for (std::size_t i = 0; i < take && i < keyed.size(); ++i) out.insert(keyed[i].second);
  return out;
}

inline VerifyReport verify_manifest(const fs::path& manifest, double sample, const StyleLibrary& styles,
                                    int workers = 0) {
  const auto records = read_manifest(manifest);
  const fs::path root = manifest.parent_path();
  VerifyReport report;
  report.records = records.size();
  const auto chosen = sample_ids(records, sample);
  std::vector<std::vector<VerifyIssue>> found(records.size());

  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < records.size(); i = next++) {
      const PairRecord& r = records[i];
      auto& issues = found[i];
      Directive d;
      try {
        d = parse_directive(r.directive);
      } catch (const Error& e) {
        issues.push_back({r.id, "parse", e.what()});
        continue;
      }
      try {
        const CameraVector v = calibrate(d, styles.registry());
        if (!(v == r.vector)) issues.push_back({r.id, "calibration", "stored vector differs from calibrate(parse(directive))"});
        const auto chain = chain_ops(RenderSettings::from_directive(d, styles.registry()), r.mask_ref.has_value());
        if (chain != r.chain) issues.push_back({r.id, "chain", "stored op list differs from the directive's chain"});
      } catch (const Error& e) {
        issues.push_back({r.id, "calibration", e.what()});
      }
      if (!chosen.count(r.id)) continue;
      try {
        const std::string stored = raster_checksum(load_png(root / r.output_ref));
        if (stored != r.output_checksum) {
          issues.push_back({r.id, "checksum", "output file does not match recorded checksum"});
          continue;
        }
        if (checksum_png_bytes(render_record(r, styles)) != r.output_checksum) {
          issues.push_back({r.id, "checksum", "re-render does not match recorded checksum"});
        }
      } catch (const Error& e) {
        issues.push_back({r.id, "checksum", e.what()});
      }
    }
  };
  int count = workers > 0 ? workers : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::vector<std::thread> pool;
  for (int t = 1; t < count; ++t) pool.emplace_back(work);
  work();
  for (auto& t : pool) t.join();

  report.sampled = chosen.size();
  for (const auto& list : found) {
    for (const auto& issue : list) {
      if (issue.kind == "parse") ++report.parse_mismatches;
      if (issue.kind == "calibration" || issue.kind == "chain") ++report.calibration_mismatches;
      if (issue.kind == "checksum") ++report.checksum_mismatches;
      report.issues.push_back(issue);
    }
  }
  return report;
}

}  // namespace camforge
