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
#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "olala/session.hpp"

namespace httplib {
class Server;
}

namespace olala {

/// HTTP front end of a SessionManager. Bodies are JSON; errors are
///   {"error": {"code": "...", "message": "...", "detail": ...}}
/// with a 4xx or 5xx status.
///
///   GET  /health
///   POST /sessions                      body: run configuration object
///   GET  /sessions/{id}
///   POST /sessions/{id}/tasks/next
///   GET  /tasks/{task_id}
///   POST /tasks/{task_id}/labels
///   POST /sessions/{id}/rounds/advance
///   GET  /sessions/{id}/export
///   GET  /sessions/{id}/metrics
///   GET  /images/...                    files under image_dir
class HttpService {
 public:
  HttpService(SessionManager& sessions, std::filesystem::path image_dir = {});
  ~HttpService();

  /// Binds without SO_REUSEPORT, so a second service on the same port
  /// fails. Port 0 picks a free port. Returns the bound port or -1.
  int bind(const std::string& host, int port);
  /// Serves until stop(); returns false if the listener failed.
  bool listen();
  void stop();
  void wait_until_ready() const;

 private:
  void routes();

  SessionManager& sessions_;
  std::filesystem::path image_dir_;
  std::unique_ptr<httplib::Server> server_;
};

/// Splits "host:port" (host defaults to 127.0.0.1). Throws ParseError.
std::pair<std::string, int> parse_bind_address(const std::string& address);

}  // namespace olala
