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
#include "olala/log.hpp"

#include <cstdlib>
#include <cstring>
#include <iostream>
#include <mutex>
#include <string>

namespace olala::log {

Level threshold() {
  static const Level level = [] {
    const char* env = std::getenv("OLALA_LOG");
    if (!env) return Level::kWarn;
    if (std::strcmp(env, "error") == 0) return Level::kError;
    if (std::strcmp(env, "info") == 0) return Level::kInfo;
    if (std::strcmp(env, "debug") == 0) return Level::kDebug;
    return Level::kWarn;
  }();
  return level;
}

void write(Level level, const std::string& message) {
  static std::mutex mu;
  static constexpr const char* kNames[] = {"error", "warn", "info", "debug"};
  if (level > threshold()) return;
  std::lock_guard lock(mu);
  std::cerr << "olala " << kNames[static_cast<int>(level)] << ": " << message << '\n';
}

}  // namespace olala::log
