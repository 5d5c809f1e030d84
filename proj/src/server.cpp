// Copyright 2026 The olala Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "olala/server.hpp"

#include <sys/socket.h>

#include <charconv>

#include <httplib.h>

#include "olala/log.hpp"

namespace olala {

using nlohmann::json;

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code,
                const std::string& message, const json& detail = nullptr) {
  json err = {{"code", code}, {"message", message}};
  if (!detail.is_null()) err["detail"] = detail;
  send_json(res, {{"error", err}}, status);
}

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ServiceError(400, "malformed_json", e.what());
  }
}

}  // namespace

HttpService::HttpService(SessionManager& sessions, std::filesystem::path image_dir)
    : sessions_(sessions), image_dir_(std::move(image_dir)),
      server_(std::make_unique<httplib::Server>()) {
  server_->set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  routes();
}

HttpService::~HttpService() { stop(); }

void HttpService::routes() {
  auto& srv = *server_;
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res,
                               std::exception_ptr ep) {
    try {
      std::rethrow_exception(ep);
    } catch (const ServiceError& e) {
      send_error(res, e.status(), e.code(), e.what(), e.detail());
    } catch (const ValidationError& e) {
      send_error(res, 422, "invalid_input", e.what());
    } catch (const ParseError& e) {
      send_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      log::error("request failed: {}", e.what());
      send_error(res, 500, "internal", e.what());
    }
  });
  srv.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
    if (res.status == 404 && res.body.empty()) {
      send_error(res, 404, "not_found", "no route for " + req.path);
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    log::debug("{} {} -> {}", req.method, req.path, res.status);
  });

  srv.Get("/health", [](const httplib::Request&, httplib::Response& res) {
    send_json(res, {{"status", "ok"}});
  });
  srv.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
    RunConfig cfg;
    try {
      cfg = RunConfig::from_json(parse_body(req));
    } catch (const ServiceError&) {
      throw;
    } catch (const Error& e) {
      throw ServiceError(400, "invalid_config", e.what());
    }
    const std::string id = sessions_.create(cfg);
    send_json(res, {{"session_id", id}}, 201);
  });
  srv.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    send_json(res, sessions_.get(req.matches[1]).status());
  });
  srv.Post(R"(/sessions/([^/]+)/tasks/next)",
           [this](const httplib::Request& req, httplib::Response& res) {
             send_json(res, sessions_.get(req.matches[1]).next_task());
           });
  srv.Post(R"(/sessions/([^/]+)/rounds/advance)",
           [this](const httplib::Request& req, httplib::Response& res) {
             send_json(res, sessions_.get(req.matches[1]).advance_round());
           });
  srv.Get(R"(/sessions/([^/]+)/export)",
          [this](const httplib::Request& req, httplib::Response& res) {
            Session& s = sessions_.get(req.matches[1]);
            s.export_files();
            send_json(res, s.export_coco());
          });
  srv.Get(R"(/sessions/([^/]+)/metrics)",
          [this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, sessions_.get(req.matches[1]).metrics());
          });
  srv.Get(R"(/tasks/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
    const std::string id = req.matches[1];
    send_json(res, sessions_.owner_of_task(id).task(id));
  });
  srv.Post(R"(/tasks/([^/]+)/labels)",
           [this](const httplib::Request& req, httplib::Response& res) {
             const std::string id = req.matches[1];
             send_json(res, sessions_.owner_of_task(id).submit_labels(id, parse_body(req)));
           });
  if (!image_dir_.empty()) {
    if (!srv.set_mount_point("/images", image_dir_.string())) {
      log::warn("image directory {} not found; /images disabled", image_dir_.string());
    }
  }
}

int HttpService::bind(const std::string& host, int port) {
  if (port == 0) return server_->bind_to_any_port(host);
  return server_->bind_to_port(host, port) ? port : -1;
}

bool HttpService::listen() { return server_->listen_after_bind(); }

void HttpService::stop() {
  if (server_ && server_->is_running()) server_->stop();
}

void HttpService::wait_until_ready() const { server_->wait_until_ready(); }

std::pair<std::string, int> parse_bind_address(const std::string& address) {
  std::string host = "127.0.0.1";
  std::string_view port_text = address;
  if (const auto colon = address.rfind(':'); colon != std::string::npos) {
    if (colon > 0) host = address.substr(0, colon);
    port_text = std::string_view(address).substr(colon + 1);
  }
  int port = -1;
  const auto [p, ec] =
      std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || p != port_text.data() + port_text.size() || port < 0 ||
      port > 65535) {
    throw ParseError("bad bind address '" + address + "'; expected host:port");
  }
  return {host, port};
}

}  // namespace olala
