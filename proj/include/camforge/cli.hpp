// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Command-line front end. JSON results go to `out`, diagnostics to `err`.
// Exit codes: 0 success, 1 user error, 2 internal failure.

#pragma once

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <filesystem>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "camforge/calibration.hpp"
#include "camforge/cond/check.hpp"
#include "camforge/dataset.hpp"
#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/json_io.hpp"
#include "camforge/lut.hpp"
#include "camforge/metrics.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/png_io.hpp"
#include "camforge/service.hpp"

namespace camforge {

namespace detail {

struct CliState {
  std::string registry;
  std::string text;
  // render
  std::string in, out, directive, mask;
  std::string exposure, cct, contrast, saturation, zoom, bokeh, style;
  // dataset
  std::string config, out_dir, manifest;
  double sample = 1.0;
  int workers = 0;
  bool dry_run = false;
  // metrics
  std::string ref, test;
  // condcheck
  std::uint64_t seed = 2024;
  bool skip_gradcheck = false, skip_probe = false;
  // serve
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string root, console;
};

// Builds a directive from the per-parameter render flags, in the order the
// flags are listed.
inline std::string flags_directive(const CliState& s) {
  std::vector<std::string> parts;
  auto add = [&parts](const char* name, const std::string& v) {
    if (!v.empty()) parts.push_back(std::string(name) + "=" + v);
  };
  add("exposure", s.exposure);
  add("cct", s.cct);
  add("contrast", s.contrast);
  add("saturation", s.saturation);
  add("zoom", s.zoom);
  add("bokeh", s.bokeh);
  add("style", s.style);
  std::string text = "[CONTROL:";
  for (std::size_t i = 0; i < parts.size(); ++i) text += (i ? ", " : " ") + parts[i];
  return text + "]";
}

inline int cmd_parse(const CliState& s, std::ostream& out) {
  out << directive_to_json(parse_directive(s.text)).dump(2) << "\n";
  return 0;
}

inline int cmd_calibrate(const CliState& s, std::ostream& out) {
  const Directive d = parse_directive(s.text);
  ojson j = directive_to_json(d);
  j["vector"] = vector_to_json(calibrate(d, resolve_registry(s.registry)));
  out << j.dump(2) << "\n";
  return 0;
}

inline int cmd_render(const CliState& s, std::ostream& out) {
  const bool any_flag = !(s.exposure.empty() && s.cct.empty() && s.contrast.empty() && s.saturation.empty() &&
                          s.zoom.empty() && s.bokeh.empty() && s.style.empty());
  if (any_flag && !s.directive.empty()) {
    throw Error(ErrorCode::Value, "use either --directive or the per-parameter flags, not both");
  }
  const Directive d = parse_directive(s.directive.empty() ? flags_directive(s) : s.directive);
  if (d.find(Param::Bokeh) && s.mask.empty()) throw Error(ErrorCode::Value, "--bokeh needs --mask");
  const StyleLibrary styles(resolve_registry(s.registry));
  const std::string input = read_file(s.in);
  std::optional<std::string> mask;
  if (!s.mask.empty()) mask = read_file(s.mask);
  const RenderOutput r =
      render_png(input, d, styles, mask ? std::optional<std::string_view>(*mask) : std::nullopt);
  write_file(s.out, as_view(r.png));
  ojson j = directive_to_json(d);
  j["out"] = s.out;
  j["vector"] = vector_to_json(r.vector);
  j["chain"] = r.chain;
  j["output_checksum"] = raster_checksum(decode_png(as_view(r.png)));
  j["timing_ms"] = r.timing_ms;
  out << j.dump(2) << "\n";
  return 0;
}

inline int cmd_dataset_build(const CliState& s, std::ostream& out, std::ostream& err) {
  const BuildConfig cfg = BuildConfig::load(s.config);
  const StyleLibrary styles(resolve_registry(s.registry));
  const BuildPlan plan = plan_build(cfg, styles.registry());
  std::size_t train = 0;
  for (const auto& r : plan.records) train += r.split == "train";
  if (s.dry_run) {
    out << ojson{{"settings", plan.settings.size()},
                 {"records", plan.records.size()},
                 {"train", train},
                 {"test", plan.records.size() - train}}
               .dump(2)
        << "\n";
    return 0;
  }
  if (s.out_dir.empty()) throw Error(ErrorCode::Value, "--out is required unless --dry-run is given");
  const BuildReport rep = render_pairs(plan, s.out_dir, styles, s.workers ? s.workers : cfg.workers);
  ojson errors = ojson::array();
  for (const auto& e : rep.errors) {
    errors.push_back({{"id", e.id}, {"error", e.code}, {"message", e.message}});
    err << "record " << e.id << ": " << e.code << ": " << e.message << "\n";
  }
  out << ojson{{"manifest", rep.manifest.string()},
               {"settings", plan.settings.size()},
               {"planned", rep.planned},
               {"written", rep.written},
               {"train", train},
               {"test", plan.records.size() - train},
               {"errors", errors}}
             .dump(2)
      << "\n";
  return rep.errors.empty() ? 0 : 1;
}

inline int cmd_dataset_verify(const CliState& s, std::ostream& out, std::ostream& err) {
  const StyleLibrary styles(resolve_registry(s.registry));
  const VerifyReport rep = verify_manifest(s.manifest, s.sample, styles, s.workers);
  ojson issues = ojson::array();
  for (const auto& i : rep.issues) {
    issues.push_back({{"id", i.id}, {"kind", i.kind}, {"message", i.message}});
    err << "record " << i.id << ": " << i.kind << " mismatch: " << i.message << "\n";
  }
  out << ojson{{"records", rep.records},
               {"sampled", rep.sampled},
               {"parse_mismatches", rep.parse_mismatches},
               {"calibration_mismatches", rep.calibration_mismatches},
               {"checksum_mismatches", rep.checksum_mismatches},
               {"ok", rep.ok()},
               {"issues", issues}}
             .dump(2)
      << "\n";
  return rep.ok() ? 0 : 1;
}

inline int cmd_metrics(const CliState& s, std::ostream& out) {
  if (!s.manifest.empty()) {
    const auto records = read_manifest(s.manifest);
    const auto root = std::filesystem::path(s.manifest).parent_path();
    ojson rows = ojson::array();
    for (const auto& r : records) {
      const ImageBuffer ref = to_buffer(load_png(r.base_ref));
      const ImageBuffer test = to_buffer(load_png(root / r.output_ref));
      ojson row = metrics_to_json(compare(ref, test));
      row["id"] = r.id;
      row["param"] = std::string(param_name(r.param));
      row["raw"] = r.raw;
      rows.push_back(row);
    }
    out << ojson{{"records", rows}}.dump(2) << "\n";
    return 0;
  }
  if (s.ref.empty() || s.test.empty()) throw Error(ErrorCode::Value, "metrics needs --ref and --test, or --manifest");
  out << metrics_to_json(compare(to_buffer(load_png(s.ref)), to_buffer(load_png(s.test)))).dump(2) << "\n";
  return 0;
}

inline int cmd_condcheck(const CliState& s, std::ostream& out) {
  cond::CondcheckOptions opt;
  opt.seed = s.seed;
  opt.gradcheck = !s.skip_gradcheck;
  opt.probe = !s.skip_probe;
  const auto report = cond::run_condcheck(opt);
  out << report.dump(2) << "\n";
  return report.at("pass").get<bool>() ? 0 : 1;
}

inline int cmd_serve(const CliState& s, std::ostream& err) {
  ServiceOptions opt;
  opt.host = s.host;
  opt.port = s.port;
  opt.root = s.root;
  opt.console_dir = s.console;
  opt.registry = resolve_registry(s.registry);
  Service service(opt);
  err << "camforge serving on http://" << s.host << ":" << s.port << "\n";
  service.run();
  return 0;
}

}  // namespace detail

inline int cli_dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                        std::ostream& err = std::cerr) {
  detail::CliState s;
  CLI::App app{"camforge: camera-directive parsing, calibration, rendering and dataset tools", "camforge"};
  app.require_subcommand(1);
  app.add_option("--registry", s.registry, "Style registry file (overrides CAMFORGE_REGISTRY)");

  auto* parse = app.add_subcommand("parse", "Parse a directive and print its pairs");
  parse->add_option("text", s.text, "Directive text")->required();
  auto* calib = app.add_subcommand("calibrate", "Calibrate a directive into a camera vector");
  calib->add_option("text", s.text, "Directive text")->required();

  auto* render = app.add_subcommand("render", "Apply a directive to a PNG");
  render->add_option("--in", s.in, "Input PNG")->required();
  render->add_option("--out", s.out, "Output PNG")->required();
  render->add_option("--directive", s.directive, "Full directive text");
  render->add_option("--exposure", s.exposure, "e.g. +1EV");
  render->add_option("--cct", s.cct, "e.g. 3200K");
  render->add_option("--contrast", s.contrast, "e.g. 3/4");
  render->add_option("--saturation", s.saturation, "e.g. 2/4");
  render->add_option("--zoom", s.zoom, "e.g. 2x");
  render->add_option("--bokeh", s.bokeh, "e.g. 3/4 (needs --mask)");
  render->add_option("--mask", s.mask, "Foreground mask PNG");
  render->add_option("--style", s.style, "Registry style name");

  auto* dataset = app.add_subcommand("dataset", "Build or verify a paired dataset");
  dataset->require_subcommand(1);
  auto* build = dataset->add_subcommand("build", "Plan and render a dataset from a JSON config");
  build->add_option("--config", s.config, "Build config (JSON)")->required();
  build->add_option("--out", s.out_dir, "Output directory");
  build->add_option("--workers", s.workers, "Worker threads (0 = config/hardware)");
  build->add_flag("--dry-run", s.dry_run, "Only plan and print the record counts");
  auto* verify = dataset->add_subcommand("verify", "Re-check a manifest");
  verify->add_option("--manifest", s.manifest, "manifest.jsonl")->required();
  verify->add_option("--sample", s.sample, "Fraction of records to re-render")->check(CLI::Range(0.0, 1.0));
  verify->add_option("--workers", s.workers, "Worker threads");

  auto* metrics = app.add_subcommand("metrics", "PSNR / SSIM / Delta E between two PNGs");
  metrics->add_option("--ref", s.ref, "Reference PNG");
  metrics->add_option("--test", s.test, "Test PNG");
  metrics->add_option("--manifest", s.manifest, "Compare every record's output against its base");

  auto* condcheck = app.add_subcommand("condcheck", "Run the conditioning-stack check suite");
  condcheck->add_option("--seed", s.seed, "Seed");
  condcheck->add_flag("--skip-gradcheck", s.skip_gradcheck, "Skip the finite-difference check");
  condcheck->add_flag("--skip-probe", s.skip_probe, "Skip the linear probe");

  auto* serve = app.add_subcommand("serve", "Run the local HTTP service");
  serve->add_option("--host", s.host, "Bind address");
  serve->add_option("--port", s.port, "Port");
  serve->add_option("--root", s.root, "Directory for server-side image refs");
  serve->add_option("--console", s.console, "Static console assets to serve at /");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    app.exit(e, out, err);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 1;
  }

  try {
    if (parse->parsed()) return detail::cmd_parse(s, out);
    if (calib->parsed()) return detail::cmd_calibrate(s, out);
    if (render->parsed()) return detail::cmd_render(s, out);
    if (build->parsed()) return detail::cmd_dataset_build(s, out, err);
    if (verify->parsed()) return detail::cmd_dataset_verify(s, out, err);
    if (metrics->parsed()) return detail::cmd_metrics(s, out);
    if (condcheck->parsed()) return detail::cmd_condcheck(s, out);
    if (serve->parsed()) return detail::cmd_serve(s, err);
  } catch (const Error& e) {
    err << "camforge: " << to_string(e.code()) << ": " << e.what() << "\n";
    out << error_to_json(e).dump() << "\n";
    return e.code() == ErrorCode::State || e.code() == ErrorCode::Divergence ? 2 : 1;
  } catch (const std::exception& e) {
    err << "camforge: internal error: " << e.what() << "\n";
    return 2;
  }
  err << app.help();
  return 1;
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_dispatch(args);
}

}  // namespace camforge
