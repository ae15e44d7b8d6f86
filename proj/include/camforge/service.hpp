// SPDX-License-Identifier: Apache-2.0
// Copyright Contributors to the camforge Project.

// Local HTTP service: parse, calibrate, render and compare over HTTP/1.1.
// Images travel as raw PNG bodies (or multipart parts); the calibrated
// vector rides in the X-Camforge-Vector header.

#pragma once

#include "httplib.h"
#include "json.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include "camforge/directive.hpp"
#include "camforge/error.hpp"
#include "camforge/json_io.hpp"
#include "camforge/lut.hpp"
#include "camforge/metrics.hpp"
#include "camforge/pipeline.hpp"
#include "camforge/png_io.hpp"

namespace camforge {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  std::filesystem::path root;         // server-side refs resolve under here
  std::filesystem::path console_dir;  // static assets, optional
  StyleRegistry registry = StyleRegistry::builtin();
};

/// HTTP status for a library error: range problems are 422, the rest of
/// the caller's mistakes 400.
inline int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::Range: return 422;
    case ErrorCode::State:
    case ErrorCode::Divergence:
    case ErrorCode::Shape:
    case ErrorCode::Bind: return 500;
    default: return 400;
  }
}

class Service {
 public:
  explicit Service(ServiceOptions opt)
      : opt_(std::move(opt)), styles_(opt_.registry), server_(std::make_unique<httplib::Server>()) {
    routes();
  }

  ~Service() { stop(); }

  /// Binds and serves on a background thread; returns the bound port.
  int start() {
    bind();
    thread_ = std::thread([this] { server_->listen_after_bind(); });
    server_->wait_until_ready();
    return port_;
  }

  /// Binds and serves on the calling thread until stop().
  void run() {
    bind();
    server_->listen_after_bind();
  }

  void stop() {
    if (server_->is_running()) server_->stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 private:
  void bind() {
    if (opt_.port == 0) {
      port_ = server_->bind_to_any_port(opt_.host);
      if (port_ < 0) throw Error(ErrorCode::Bind, "cannot bind " + opt_.host);
    } else {
      if (!server_->bind_to_port(opt_.host, opt_.port)) {
        throw Error(ErrorCode::Bind, "cannot bind " + opt_.host + ":" + std::to_string(opt_.port));
      }
      port_ = opt_.port;
    }
  }

  static void send_json(httplib::Response& res, const ojson& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, const Error& e) {
    send_json(res, error_to_json(e), http_status(e.code()));
  }

  template <typename F>
  static auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const nlohmann::json::exception& e) {
        send_error(res, Error(ErrorCode::Syntax, std::string("request body: ") + e.what()));
      } catch (const std::exception& e) {
        send_json(res, {{"error", "InternalError"}, {"message", e.what()}}, 500);
      }
    };
  }

  // A server-side ref must stay inside the configured root.
  std::string read_ref(const std::string& ref) const {
    if (opt_.root.empty()) throw Error(ErrorCode::Value, "server-side refs are disabled (no --root)");
    const auto root = std::filesystem::weakly_canonical(opt_.root);
    const auto path = std::filesystem::weakly_canonical(root / ref);
    const auto rel = path.lexically_relative(root);
    if (rel.empty() || *rel.begin() == "..") throw Error(ErrorCode::Value, "ref escapes the server root: " + ref);
    return read_file(path);
  }

  static std::string directive_of(const httplib::Request& req) {
    if (req.is_multipart_form_data() && req.has_file("directive")) return req.get_file_value("directive").content;
    if (req.has_param("directive")) return req.get_param_value("directive");
    if (req.has_header("X-Camforge-Directive")) return req.get_header_value("X-Camforge-Directive");
    return "[CONTROL:]";
  }

  void routes() {
    server_->Get("/health", [](const httplib::Request&, httplib::Response& res) {
      res.set_content("ok", "text/plain");
    });

    server_->Get("/styles", guarded([this](const httplib::Request&, httplib::Response& res) {
      ojson list = ojson::array();
      for (const auto& e : styles_.registry().entries()) {
        list.push_back({{"name", e.name}, {"index", e.index}, {"lut", e.lut_path}});
      }
      send_json(res, {{"version", 1}, {"styles", list}});
    }));

    server_->Post("/parse", guarded([](const httplib::Request& req, httplib::Response& res) {
      send_json(res, directive_to_json(parse_directive(body_directive(req))));
    }));

    server_->Post("/calibrate", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const Directive d = parse_directive(body_directive(req));
      ojson out = directive_to_json(d);
      out["vector"] = vector_to_json(calibrate(d, styles_.registry()));
      send_json(res, out);
    }));

    server_->Post("/render", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::string image, mask_bytes;
      bool has_mask = false;
      if (req.is_multipart_form_data()) {
        if (req.has_file("image")) image = req.get_file_value("image").content;
        if (req.has_file("mask")) {
          mask_bytes = req.get_file_value("mask").content;
          has_mask = true;
        }
      } else {
        image = req.body;
      }
      if (req.has_param("ref")) image = read_ref(req.get_param_value("ref"));
      if (req.has_param("mask_ref")) {
        mask_bytes = read_ref(req.get_param_value("mask_ref"));
        has_mask = true;
      }
      if (image.empty()) throw Error(ErrorCode::Value, "no image in request");
      const std::string mode = req.has_param("return") ? req.get_param_value("return") : "image";
      if (mode != "image" && mode != "vector" && mode != "both") {
        throw Error(ErrorCode::Value, "return must be image, vector or both");
      }
      const Directive d = parse_directive(directive_of(req));
      const RenderOutput out =
          render_png(image, d, styles_, has_mask ? std::optional<std::string_view>(mask_bytes) : std::nullopt);
      res.set_header("X-Camforge-Timing-Ms", std::to_string(out.timing_ms));
      if (mode == "vector") {
        ojson body = directive_to_json(d);
        body["vector"] = vector_to_json(out.vector);
        body["chain"] = out.chain;
        body["timing_ms"] = out.timing_ms;
        send_json(res, body);
        return;
      }
      if (mode == "both") {
        res.set_header("X-Camforge-Vector", vector_to_json(out.vector)["values"].dump());
        res.set_header("X-Camforge-Directive", render_directive(d));
      }
      res.set_content(std::string(as_view(out.png)), "image/png");
    }));

    server_->Post("/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::string ref, test;
      if (req.is_multipart_form_data()) {
        if (req.has_file("ref")) ref = req.get_file_value("ref").content;
        if (req.has_file("test")) test = req.get_file_value("test").content;
      }
      if (req.has_param("ref")) ref = read_ref(req.get_param_value("ref"));
      if (req.has_param("test")) test = read_ref(req.get_param_value("test"));
      if (ref.empty() || test.empty()) throw Error(ErrorCode::Value, "metrics needs ref and test images");
      send_json(res, metrics_to_json(compare(to_buffer(decode_png(ref)), to_buffer(decode_png(test)))));
    }));

    if (!opt_.console_dir.empty()) {
      if (!server_->set_mount_point("/", opt_.console_dir.string())) {
        throw Error(ErrorCode::Config, "console directory not found: " + opt_.console_dir.string());
      }
    }
  }

  // Accepts {"directive": "..."} as JSON or the directive as plain text.
  static std::string body_directive(const httplib::Request& req) {
    const std::string type = req.get_header_value("Content-Type");
    if (type.find("application/json") != std::string::npos) {
      const auto j = nlohmann::json::parse(req.body);
      if (!j.contains("directive") || !j.at("directive").is_string()) {
        throw Error(ErrorCode::Value, "expected {\"directive\": \"...\"}");
      }
      return j.at("directive").get<std::string>();
    }
    return req.body;
  }

  ServiceOptions opt_;
  StyleLibrary styles_;
  std::unique_ptr<httplib::Server> server_;
  std::thread thread_;
  int port_ = 0;
};

}  // namespace camforge
