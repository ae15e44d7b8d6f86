// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Acceptance runner: one PASS/FAIL line per criterion, each held to its
// tolerance and wall-clock limit. Exits nonzero if any criterion fails.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "camforge/camforge.hpp"
#include "camforge/cond/check.hpp"
#include "camforge/cond/gradcheck.hpp"
#include "camforge/cond/probe.hpp"
#include "camforge/dataset.hpp"
#include "camforge/service.hpp"
#include "fixtures.hpp"

using namespace camforge;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

// Collects failed expectations for one criterion.
class Checker {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      if (failures_.size() < 4) failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }

  Outcome outcome() const {
    std::string d;
    for (const auto& s : pass_ ? notes_ : failures_) d += (d.empty() ? "" : "; ") + s;
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> failures_, notes_;
};

std::string fmt(double v, int digits = 6) {
  std::ostringstream o;
  o.precision(digits);
  o << v;
  return o.str();
}

const StyleLibrary& styles() {
  static const StyleLibrary lib(StyleRegistry::builtin());
  return lib;
}

std::vector<RasterImage> test_images() {
  return {testing::ramp_raster(), testing::photo_raster(), testing::noise_raster(17)};
}

std::string png_bytes(const RasterImage& r) { return std::string(as_view(encode_png(r))); }

// Criterion: EV, CCT and ordinal calibration.
Outcome calibration() {
  Checker c;
  std::vector<double> s;
  for (int i = -6; i <= 6; ++i) s.push_back(calibrate_exposure(0.5 * i));
  const double step = s[1] - s[0];
  double worst = 0.0;
  for (std::size_t i = 1; i < s.size(); ++i) {
    c.expect(s[i] > s[i - 1], "EV grid not strictly increasing at " + std::to_string(i));
    worst = std::max(worst, std::abs((s[i] - s[i - 1]) - step));
  }
  c.expect(worst <= 1e-12, "EV stride deviation " + fmt(worst));
  c.expect(calibrate_cct(2000.0) == 0.0, "cct(2000) = " + fmt(calibrate_cct(2000.0)));
  c.expect(calibrate_cct(10000.0) == 1.0, "cct(10000) = " + fmt(calibrate_cct(10000.0)));
  c.expect(std::abs(calibrate_cct(6500.0) - 0.7324) <= 1e-4, "cct(6500) = " + fmt(calibrate_cct(6500.0), 10));
  const double want[4] = {-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0};
  for (int n = 1; n <= 4; ++n) {
    c.expect(std::abs(calibrate_ordinal(n, 4) - want[n - 1]) <= 1e-12, "ordinal " + std::to_string(n) + "/4");
  }
  c.note("EV stride deviation " + fmt(worst) + ", cct(6500)=" + fmt(calibrate_cct(6500.0), 10));
  return c.outcome();
}

// Criterion: identity settings leave the bytes untouched.
Outcome identities() {
  Checker c;
  int cases = 0;
  const char* neutral[] = {"[CONTROL:]",
                           "[CONTROL: exposure=0EV]",
                           "[CONTROL: cct=6500K]",
                           "[CONTROL: zoom=1x]",
                           "[CONTROL: exposure=+0EV, cct=6500K, zoom=1x]"};
  const std::vector<std::string> names = {"ramp", "photo", "noise"};
  const auto images = test_images();
  for (std::size_t k = 0; k < images.size(); ++k) {
    const RasterImage& raster = images[k];
    const std::string input = png_bytes(raster);
    const ImageBuffer enc = to_buffer(raster);
    const ImageBuffer lin = srgb_decode(enc);
    const Mask mask(raster.width, raster.height, 0.5f);
    c.expect(apply_exposure(lin, 0.0) == lin, names[k] + ": ev=0");
    c.expect(apply_cct(lin, 6500.0) == lin, names[k] + ": 6500K");
    c.expect(apply_zoom(lin, 1.0) == lin, names[k] + ": zoom 1");
    c.expect(apply_bokeh(lin, mask, 0) == lin, names[k] + ": bokeh 0");
    c.expect(png_bytes(to_raster(apply_style(enc, Lut3D::identity()), 8)) == input, names[k] + ": identity LUT");
    cases += 5;
    const std::string mask_png = png_bytes(to_raster(
        testing::uniform(raster.width, raster.height, 0.5f, 0.5f, 0.5f), 8));
    for (const char* text : neutral) {
      const RenderOutput out = render_png(input, parse_directive(text), styles(), std::string_view(mask_png));
      c.expect(std::string(as_view(out.png)) == input, names[k] + ": " + text);
      ++cases;
    }
  }
  c.note(std::to_string(cases) + " identity cases bit-exact on ramp, photo, noise");
  return c.outcome();
}

double mean_luminance(const ImageBuffer& lin) {
  double s = 0.0;
  for (std::size_t i = 0; i < lin.data.size(); i += 3) {
    s += 0.2126 * lin.data[i] + 0.7152 * lin.data[i + 1] + 0.0722 * lin.data[i + 2];
  }
  return s / static_cast<double>(lin.pixel_count());
}

// Criterion: brighter with EV, bluer with kelvin.
Outcome monotonicity() {
  Checker c;
  // The photo scaled so +2EV stays below clipping.
  ImageBuffer lin = srgb_decode(to_buffer(testing::photo_raster()));
  float peak = 0.0f;
  for (float v : lin.data) peak = std::max(peak, v);
  for (float& v : lin.data) v *= 0.2f / peak;
  double prev = -1.0;
  std::string lum;
  for (int ev = -2; ev <= 2; ++ev) {
    const double m = mean_luminance(apply_exposure(lin, ev));
    c.expect(m > prev, "luminance not increasing at ev " + std::to_string(ev));
    lum += (lum.empty() ? "" : " < ") + fmt(m, 4);
    prev = m;
  }
  const ImageBuffer gray = testing::uniform(32, 32, 0.18f, 0.18f, 0.18f, ColorSpace::Linear);
  prev = -1.0;
  std::string ratios;
  for (double k : {2500.0, 4000.0, 6500.0, 8500.0, 10000.0}) {
    const ImageBuffer out = apply_cct(gray, k);
    double r = 0.0, b = 0.0;
    for (std::size_t i = 0; i < out.data.size(); i += 3) {
      r += out.data[i];
      b += out.data[i + 2];
    }
    c.expect(b / r > prev, "B/R not increasing at " + fmt(k) + "K");
    ratios += (ratios.empty() ? "" : " < ") + fmt(b / r, 4);
    prev = b / r;
  }
  c.note("luminance " + lum + "; B/R " + ratios);
  return c.outcome();
}

ImageBuffer add_noise(const ImageBuffer& img, double sigma, std::uint32_t seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> d(0.0, sigma);
  ImageBuffer out = img;
  for (float& v : out.data) v = static_cast<float>(std::clamp(v + d(rng), 0.0, 1.0));
  return out;
}

// Criterion: metric oracle values and degradation under noise.
Outcome metric_oracles() {
  Checker c;
  const double p = psnr(testing::uniform(32, 32, 0, 0, 0), testing::uniform(32, 32, 16 / 255.0f, 16 / 255.0f, 16 / 255.0f));
  c.expect(std::abs(p - 24.05) <= 0.01, "psnr " + fmt(p));
  const ImageBuffer photo = to_buffer(testing::photo_raster());
  c.expect(ssim(photo, photo) == 1.0, "ssim(a,a) = " + fmt(ssim(photo, photo), 17));
  const double de = delta_e(testing::uniform(8, 8, 1, 1, 1), testing::uniform(8, 8, 0, 0, 0));
  c.expect(std::abs(de - 100.0) <= 0.1, "delta E " + fmt(de));
  for (std::uint32_t seed = 1; seed <= 5; ++seed) {
    MetricReport prev = compare(photo, photo);
    for (double sigma : {0.01, 0.03, 0.06, 0.12, 0.24}) {
      const MetricReport r = compare(photo, add_noise(photo, sigma, seed));
      const bool worse = r.psnr < prev.psnr && r.ssim < prev.ssim && r.delta_e > prev.delta_e;
      c.expect(worse, "seed " + std::to_string(seed) + " sigma " + fmt(sigma) + " not worse");
      prev = r;
    }
  }
  c.note("psnr " + fmt(p) + " dB, delta E " + fmt(de) + ", 5 seeds x 5 noise levels monotone");
  return c.outcome();
}

// Criterion: the mini build plans, renders, reproduces and verifies.
Outcome mini_build() {
  Checker c;
  const fs::path a = testing::temp_dir("accept-a"), b = testing::temp_dir("accept-b");
  const BuildConfig cfg = BuildConfig::load(testing::source_dir() / "configs/mini.json");
  const BuildPlan plan = plan_build(cfg);
  c.expect(cfg.train_bases.size() == 5, "bases " + std::to_string(cfg.train_bases.size()));
  c.expect(plan.records.size() == 35, "records " + std::to_string(plan.records.size()));
  const BuildReport ra = render_pairs(plan, a, styles());
  const BuildReport rb = render_pairs(plan_build(cfg), b, styles());
  c.expect(ra.written == 35 && ra.errors.empty(), "written " + std::to_string(ra.written));
  c.expect(read_file(ra.manifest) == read_file(rb.manifest), "manifests differ between runs");
  const VerifyReport v = verify_manifest(ra.manifest, 1.0, styles());
  c.expect(v.sampled == 35, "re-rendered " + std::to_string(v.sampled));
  c.expect(v.ok() && v.checksum_mismatches == 0, "verify found " + std::to_string(v.issues.size()) + " issues");
  c.note("35 records, manifests byte-identical, verify re-rendered " + std::to_string(v.sampled) + " with " +
         std::to_string(v.checksum_mismatches) + " checksum mismatches");
  fs::remove_all(a);
  fs::remove_all(b);
  return c.outcome();
}

// Criterion: conditioning-stack structural invariants.
Outcome conditioning_invariants() {
  Checker c;
  cond::CondcheckOptions opt;
  opt.gradcheck = false;
  opt.probe = false;
  const auto report = cond::run_condcheck(opt);
  const std::vector<std::string> wanted = {"gate_open_interval", "zero_gate_identity", "attention_rows_stochastic",
                                           "id_ctx_contiguous"};
  for (const auto& name : wanted) {
    bool found = false;
    for (const auto& chk : report["checks"]) {
      if (chk["name"] == name) {
        found = true;
        c.expect(chk["pass"].get<bool>(), name + " " + chk["detail"].dump());
      }
    }
    c.expect(found, name + " missing");
  }
  for (const auto& chk : report["checks"]) {
    if (chk["name"] == "gate_open_interval") {
      c.note("gate in [" + fmt(chk["detail"]["min"].get<double>()) + ", " + fmt(chk["detail"]["max"].get<double>()) +
             "] over 1000 inputs");
    }
    if (chk["name"] == "attention_rows_stochastic") {
      c.note("attention row error " + fmt(chk["detail"]["max_row_error"].get<double>()));
    }
  }
  return c.outcome();
}

// Criterion: analytic gradients against central differences.
Outcome gradient_check() {
  Checker c;
  const cond::CondConfig cfg;
  c.expect(cfg.d_model == 32 && cfg.l_content == 8 && cfg.l_directive == 4 && cfg.batch == 2, "toy shapes");
  cond::CondParams p = cond::CondParams::init(cfg, 2024);
  p.randomize_heads(2025);
  const cond::GradcheckReport r = cond::gradcheck(p, cond::toy_batch(cfg, 2044));
  std::size_t params = 0;
  p.for_each([&](std::string_view, const Eigen::MatrixXd&) { ++params; });
  c.expect(r.tensors.size() >= params, "checked " + std::to_string(r.tensors.size()) + " of " + std::to_string(params));
  for (const auto& t : r.tensors) c.expect(t.rel < 1e-4, t.name + " relative error " + fmt(t.rel));
  c.note(std::to_string(r.tensors.size()) + " tensors, max relative error " + fmt(r.max_rel) + " at eps 1e-3");
  return c.outcome();
}

// Criterion: a linear probe reads the camera entries out of t_ctx.
Outcome probe() {
  Checker c;
  const cond::ProbeReport r = cond::run_probe();
  const std::size_t steps = r.probe.loss.size() - 1;
  c.expect(r.samples == 64, "samples " + std::to_string(r.samples));
  c.expect(steps <= 2000, "steps " + std::to_string(steps));
  c.expect(r.probe.final_mse < 0.01, "probe MSE " + fmt(r.probe.final_mse));
  c.expect(r.shuffled.final_mse > 5.0 * r.probe.final_mse, "shuffled MSE " + fmt(r.shuffled.final_mse));
  c.note("MSE " + fmt(r.probe.final_mse) + " after " + std::to_string(steps) + " steps, shuffled " +
         fmt(r.shuffled.final_mse));
  return c.outcome();
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("'") + CAMFORGE_CLI + "' " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string quote(const fs::path& p) { return "'" + p.string() + "'"; }

// Criterion: HTTP and CLI renders agree byte for byte.
Outcome api_cli_parity() {
  Checker c;
  const fs::path dir = testing::temp_dir("accept-parity");
  const fs::path mini = testing::source_dir() / "data/mini";
  ServiceOptions opt;
  opt.port = 0;
  Service service(opt);
  httplib::Client client("127.0.0.1", service.start());
  client.set_read_timeout(30, 0);
  struct Case {
    const char* image;
    const char* directive;
    bool mask;
  };
  const Case cases[] = {
      {"astronaut", "[CONTROL:]", false},
      {"chelsea", "[CONTROL: exposure=+1EV]", false},
      {"coffee", "[CONTROL: exposure=-2.5EV, cct=3200K]", false},
      {"hubble", "[CONTROL: cct=9000K]", false},
      {"rocket", "[CONTROL: contrast=4/4, saturation=1/4]", false},
      {"astronaut", "[CONTROL: zoom=2x]", false},
      {"chelsea", "[CONTROL: bokeh=4/4]", true},
      {"coffee", "[CONTROL: style=Portra]", false},
      {"hubble", "[CONTROL: style=TriX, contrast=3/4]", false},
      {"astronaut", "[CONTROL: exposure=+0.5EV, cct=4000K, zoom=1.5x, bokeh=2/4, style=Velvia]", true},
  };
  int same = 0;
  for (std::size_t i = 0; i < std::size(cases); ++i) {
    const Case& k = cases[i];
    const fs::path in = mini / (std::string(k.image) + ".png");
    const fs::path mask = mini / (std::string(k.image) + ".mask.png");
    httplib::MultipartFormDataItems items = {{"image", read_file(in), "image.png", "image/png"},
                                             {"directive", k.directive, "", "text/plain"}};
    if (k.mask) items.push_back({"mask", read_file(mask), "mask.png", "image/png"});
    auto res = client.Post("/render", items);
    const fs::path out = dir / ("cli" + std::to_string(i) + ".png");
    const int code = run_cli("render --in " + quote(in) + " --out " + quote(out) + " --directive '" + k.directive +
                             "'" + (k.mask ? " --mask " + quote(mask) : std::string()));
    const bool ok = res && res->status == 200 && code == 0 && fs::exists(out) && read_file(out) == res->body;
    c.expect(ok, std::string("case ") + k.directive);
    same += ok;
  }
  service.stop();
  fs::remove_all(dir);
  c.note(std::to_string(same) + "/10 directives byte-identical over HTTP and CLI");
  return c.outcome();
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double limit_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"calibration-endpoints-strides", 1.0, calibration},
      {"transform-identities", 5.0, identities},
      {"physical-monotonicity", 10.0, monotonicity},
      {"metric-oracles", 10.0, metric_oracles},
      {"mini-dataset-build", 60.0, mini_build},
      {"conditioning-invariants", 10.0, conditioning_invariants},
      {"gradient-check", 60.0, gradient_check},
      {"information-flow-probe", 120.0, probe},
      {"api-cli-parity", 10.0, api_cli_parity},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs >= c.limit_s) {
      o.pass = false;
      o.detail += "; exceeded time limit";
    }
    failed += !o.pass;
    std::printf("%s %-30s %8.3f s (limit %g s)  %s\n", o.pass ? "PASS" : "FAIL", c.name, secs, c.limit_s,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
  return failed == 0 ? 0 : 1;
}
