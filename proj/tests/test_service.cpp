// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

#include <gtest/gtest.h>

#include <future>
#include <vector>

#include "camforge/service.hpp"
#include "fixtures.hpp"

using namespace camforge;
using camforge::testing::png_string;
using camforge::testing::source_dir;

namespace {

class ServiceTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    ServiceOptions opt;
    opt.port = 0;
    opt.root = source_dir() / "data/mini";
    service_ = new Service(opt);
    port_ = service_->start();
  }

  static void TearDownTestSuite() {
    service_->stop();
    delete service_;
    service_ = nullptr;
  }

  static httplib::Client client() {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(30, 0);
    return c;
  }

  static std::string mini(const std::string& name) { return read_file(source_dir() / "data/mini" / name); }

  static inline Service* service_ = nullptr;
  static inline int port_ = 0;
};

httplib::MultipartFormData part(const std::string& name, const std::string& content,
                                const std::string& type = "image/png") {
  return {name, content, name + (type == "image/png" ? ".png" : ""), type};
}

nlohmann::json body_json(const httplib::Result& r) { return nlohmann::json::parse(r->body); }

}  // namespace

TEST_F(ServiceTest, Health) {
  auto r = client().Get("/health");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  EXPECT_EQ(r->body, "ok");
}

TEST_F(ServiceTest, StylesListsRegistry) {
  auto r = client().Get("/styles");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = body_json(r);
  ASSERT_EQ(j.at("styles").size(), kStyleCount);
  for (std::size_t i = 0; i < kStyleCount; ++i) {
    EXPECT_EQ(j["styles"][i]["name"], std::string(kBuiltinStyleNames[i]));
    EXPECT_EQ(j["styles"][i]["index"], i);
  }
}

TEST_F(ServiceTest, ParseAcceptsJsonAndText) {
  auto a = client().Post("/parse", R"({"directive": "[CONTROL: zoom=2x, exposure=+1EV]"})", "application/json");
  auto b = client().Post("/parse", "[CONTROL: zoom=2x, exposure=+1EV]", "text/plain");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->status, 200);
  EXPECT_EQ(a->body, b->body);
  const auto j = body_json(a);
  EXPECT_EQ(j["directive"], "[CONTROL: zoom=2x, exposure=+1EV]");
  EXPECT_EQ(j["pairs"].size(), 2u);
}

TEST_F(ServiceTest, CalibrateMatchesLibrary) {
  auto r = client().Post("/calibrate", R"({"directive": "[CONTROL: cct=6500K]"})", "application/json");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 200);
  const auto j = body_json(r);
  EXPECT_NEAR(j["vector"]["fields"]["cct"].get<double>(), 0.7323395250, 1e-9);
  const CameraVector v = calibrate(parse_directive("[CONTROL: cct=6500K]"), StyleRegistry::builtin());
  const auto flat = v.flatten();
  EXPECT_EQ(j["vector"]["values"].get<std::vector<double>>(), std::vector<double>(flat.begin(), flat.end()));
  EXPECT_EQ(j["vector"]["present"], nlohmann::json::array({"cct"}));
}

TEST_F(ServiceTest, ErrorStatusCodes) {
  auto syntax = client().Post("/calibrate", "[CONTROL exposure=+1EV]", "text/plain");
  ASSERT_TRUE(syntax);
  EXPECT_EQ(syntax->status, 400);
  EXPECT_EQ(body_json(syntax)["error"], "SyntaxError");

  auto range = client().Post("/calibrate", "[CONTROL: cct=12000K]", "text/plain");
  ASSERT_TRUE(range);
  EXPECT_EQ(range->status, 422);
  EXPECT_EQ(body_json(range)["error"], "RangeError");

  auto bad_json = client().Post("/calibrate", "{\"directive\": 3}", "application/json");
  ASSERT_TRUE(bad_json);
  EXPECT_EQ(bad_json->status, 400);

  auto no_image = client().Post("/render", "", "image/png");
  ASSERT_TRUE(no_image);
  EXPECT_EQ(no_image->status, 400);

  auto not_png = client().Post("/render", "definitely not a png", "image/png");
  ASSERT_TRUE(not_png);
  EXPECT_EQ(not_png->status, 400);
  EXPECT_EQ(body_json(not_png)["error"], "IoError");

  auto escape = client().Post("/render?ref=../../configs/mini.json", "", "image/png");
  ASSERT_TRUE(escape);
  EXPECT_EQ(escape->status, 400);

  auto missing = client().Get("/nope");
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 404);
}

TEST_F(ServiceTest, NeutralRenderIsByteIdentical) {
  const std::string photo = mini("coffee.png");
  auto r = client().Post("/render?directive=" + httplib::detail::encode_url("[CONTROL:]"), photo, "image/png");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  EXPECT_EQ(r->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(raster_checksum(decode_png(r->body)), raster_checksum(decode_png(photo)));

  const RasterImage ramp = camforge::testing::ramp_raster();
  auto items = httplib::MultipartFormDataItems{part("image", png_string(ramp)),
                                               part("directive", "[CONTROL: exposure=+0EV, cct=6500K, zoom=1x]", "text/plain")};
  auto m = client().Post("/render", items);
  ASSERT_TRUE(m);
  ASSERT_EQ(m->status, 200);
  EXPECT_EQ(decode_png(m->body).samples, ramp.samples);
}

TEST_F(ServiceTest, RenderMatchesLibrary) {
  const std::string photo = mini("rocket.png");
  const std::string text = "[CONTROL: exposure=-1EV, contrast=3/4, style=Velvia]";
  auto r = client().Post("/render?directive=" + httplib::detail::encode_url(text), photo, "image/png");
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const StyleLibrary styles(StyleRegistry::builtin());
  const RenderOutput lib = render_png(photo, parse_directive(text), styles);
  EXPECT_EQ(r->body, std::string(as_view(lib.png)));
}

TEST_F(ServiceTest, ReturnModes) {
  const std::string photo = mini("hubble.png");
  const std::string q = "/render?directive=" + httplib::detail::encode_url("[CONTROL: cct=3200K]");
  auto vec = client().Post(q + "&return=vector", photo, "image/png");
  ASSERT_TRUE(vec);
  ASSERT_EQ(vec->status, 200);
  const auto j = body_json(vec);
  EXPECT_EQ(j["directive"], "[CONTROL: cct=3200K]");
  EXPECT_FALSE(j["chain"].empty());

  auto both = client().Post(q + "&return=both", photo, "image/png");
  ASSERT_TRUE(both);
  ASSERT_EQ(both->status, 200);
  EXPECT_EQ(nlohmann::json::parse(both->get_header_value("X-Camforge-Vector")), j["vector"]["values"]);
  EXPECT_EQ(both->get_header_value("X-Camforge-Directive"), "[CONTROL: cct=3200K]");
  EXPECT_NO_THROW(decode_png(both->body));

  auto bad = client().Post(q + "&return=zip", photo, "image/png");
  ASSERT_TRUE(bad);
  EXPECT_EQ(bad->status, 400);
}

TEST_F(ServiceTest, MultipartMaskUploadDrivesBokeh) {
  const std::string photo = mini("astronaut.png"), mask = mini("astronaut.mask.png");
  const std::string text = "[CONTROL: bokeh=3/4]";
  auto items = httplib::MultipartFormDataItems{part("image", photo), part("mask", mask),
                                               part("directive", text, "text/plain")};
  auto r = client().Post("/render", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const StyleLibrary styles(StyleRegistry::builtin());
  const RenderOutput lib = render_png(photo, parse_directive(text), styles, std::string_view(mask));
  EXPECT_EQ(r->body, std::string(as_view(lib.png)));
  EXPECT_NE(raster_checksum(decode_png(r->body)), raster_checksum(decode_png(photo)));

  // The same render from server-side refs.
  auto by_ref = client().Post("/render?ref=astronaut.png&mask_ref=astronaut.mask.png&directive=" +
                                  httplib::detail::encode_url(text),
                              "", "image/png");
  ASSERT_TRUE(by_ref);
  ASSERT_EQ(by_ref->status, 200);
  EXPECT_EQ(by_ref->body, r->body);
}

TEST_F(ServiceTest, MetricsOverMultipart) {
  const RasterImage black = to_raster(camforge::testing::uniform(32, 32, 0, 0, 0), 8);
  const RasterImage gray = to_raster(camforge::testing::uniform(32, 32, 16 / 255.0f, 16 / 255.0f, 16 / 255.0f), 8);
  auto items = httplib::MultipartFormDataItems{part("ref", png_string(black)), part("test", png_string(gray))};
  auto r = client().Post("/metrics", items);
  ASSERT_TRUE(r);
  ASSERT_EQ(r->status, 200);
  const auto j = body_json(r);
  EXPECT_NEAR(j["psnr"].get<double>(), 24.05, 0.01);

  auto same = client().Post("/metrics?ref=chelsea.png&test=chelsea.png", "", "text/plain");
  ASSERT_TRUE(same);
  ASSERT_EQ(same->status, 200);
  EXPECT_EQ(body_json(same)["ssim"].get<double>(), 1.0);
  EXPECT_EQ(body_json(same)["delta_e"].get<double>(), 0.0);

  auto missing = client().Post("/metrics", httplib::MultipartFormDataItems{part("ref", png_string(black))});
  ASSERT_TRUE(missing);
  EXPECT_EQ(missing->status, 400);

  const RasterImage small = to_raster(camforge::testing::uniform(16, 32, 0, 0, 0), 8);
  auto mismatch = client().Post("/metrics", httplib::MultipartFormDataItems{part("ref", png_string(black)),
                                                                            part("test", png_string(small))});
  ASSERT_TRUE(mismatch);
  EXPECT_EQ(mismatch->status, 400);
  EXPECT_EQ(body_json(mismatch)["error"], "DimensionMismatch");
}

TEST_F(ServiceTest, ConcurrentIdenticalRequestsAgree) {
  const std::string photo = mini("chelsea.png");
  const std::string q =
      "/render?directive=" + httplib::detail::encode_url("[CONTROL: exposure=+1EV, saturation=1/4, zoom=1.5x]");
  std::vector<std::future<std::string>> jobs;
  for (int i = 0; i < 8; ++i) {
    jobs.push_back(std::async(std::launch::async, [&] {
      auto r = client().Post(q, photo, "image/png");
      return r && r->status == 200 ? r->body : std::string();
    }));
  }
  std::vector<std::string> bodies;
  for (auto& j : jobs) bodies.push_back(j.get());
  ASSERT_FALSE(bodies[0].empty());
  for (const auto& b : bodies) EXPECT_EQ(b, bodies[0]);
}

TEST(ServiceStatus, ErrorCodeMapping) {
  EXPECT_EQ(http_status(ErrorCode::Range), 422);
  EXPECT_EQ(http_status(ErrorCode::Syntax), 400);
  EXPECT_EQ(http_status(ErrorCode::UnknownStyle), 400);
  EXPECT_EQ(http_status(ErrorCode::Io), 400);
  EXPECT_EQ(http_status(ErrorCode::State), 500);
}

TEST(ServiceStatus, RefsNeedRoot) {
  ServiceOptions opt;
  opt.port = 0;
  Service s(opt);
  httplib::Client c("127.0.0.1", s.start());
  auto r = c.Post("/render?ref=coffee.png", "", "image/png");
  ASSERT_TRUE(r);
  EXPECT_EQ(r->status, 400);
  s.stop();
}
