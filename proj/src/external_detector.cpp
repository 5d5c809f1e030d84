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
#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstring>

#include "olala/coco.hpp"
#include "olala/detector.hpp"

namespace olala {

using nlohmann::json;

LineChannel::LineChannel(int read_fd, int write_fd,
                         std::chrono::milliseconds timeout)
    : read_fd_(read_fd), write_fd_(write_fd), timeout_(timeout) {}

LineChannel::~LineChannel() {
  if (read_fd_ >= 0) ::close(read_fd_);
  if (write_fd_ >= 0 && write_fd_ != read_fd_) ::close(write_fd_);
}

json LineChannel::exchange(const json& request) {
  std::string line = request.dump();
  line.push_back('\n');
  std::size_t off = 0;
  while (off < line.size()) {
    const ssize_t n = ::write(write_fd_, line.data() + off, line.size() - off);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("detector write failed: ") +
                           std::strerror(errno));
    }
    off += static_cast<std::size_t>(n);
  }
  const std::string reply = read_line();
  try {
    return json::parse(reply);
  } catch (const json::parse_error&) {
    throw TransportError("detector sent a malformed response: " +
                         reply.substr(0, 200));
  }
}

std::string LineChannel::read_line() {
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    if (auto nl = buffer_.find('\n'); nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) throw TransportError("detector response timed out");
    pollfd pfd{read_fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("poll failed: ") + std::strerror(errno));
    }
    if (rc == 0) throw TransportError("detector response timed out");
    char chunk[4096];
    const ssize_t n = ::read(read_fd_, chunk, sizeof(chunk));
    if (n < 0) {
      if (errno == EINTR) continue;
      throw TransportError(std::string("detector read failed: ") +
                           std::strerror(errno));
    }
    if (n == 0) throw TransportError("detector closed the connection");
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

ExternalDetector::ExternalDetector(ExternalConfig config)
    : config_(std::move(config)) {
  if (config_.num_categories == 0) {
    throw ValidationError("external detector: num_categories must be set");
  }
  if (!config_.socket_path.empty()) {
    const int fd = ::socket(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0);
    if (fd < 0) throw TransportError("socket() failed");
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (config_.socket_path.size() >= sizeof(addr.sun_path)) {
      ::close(fd);
      throw TransportError("socket path too long");
    }
    std::strncpy(addr.sun_path, config_.socket_path.c_str(),
                 sizeof(addr.sun_path) - 1);
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw TransportError("cannot connect to detector at " +
                           config_.socket_path);
    }
    channel_ = std::make_unique<LineChannel>(fd, fd, config_.timeout);
    return;
  }
  if (config_.command.empty()) {
    throw ValidationError("external detector: command or socket_path required");
  }

  int to_child[2];
  int from_child[2];
  if (::pipe2(to_child, O_CLOEXEC) != 0) throw TransportError("pipe failed");
  if (::pipe2(from_child, O_CLOEXEC) != 0) {
    ::close(to_child[0]);
    ::close(to_child[1]);
    throw TransportError("pipe failed");
  }
  const pid_t pid = ::fork();
  if (pid < 0) throw TransportError("fork failed");
  if (pid == 0) {
    ::dup2(to_child[0], STDIN_FILENO);
    ::dup2(from_child[1], STDOUT_FILENO);
    ::execl("/bin/sh", "sh", "-c", config_.command.c_str(),
            static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(to_child[0]);
  ::close(from_child[1]);
  // a dead child must surface as EPIPE, not kill us
  ::signal(SIGPIPE, SIG_IGN);
  child_pid_ = pid;
  channel_ =
      std::make_unique<LineChannel>(from_child[0], to_child[1], config_.timeout);
}

ExternalDetector::~ExternalDetector() {
  channel_.reset();  // closes stdin, which asks the child to exit
  if (child_pid_ > 0) {
    int status = 0;
    for (int i = 0; i < 50; ++i) {
      if (::waitpid(child_pid_, &status, WNOHANG) == child_pid_) return;
      ::usleep(10000);
    }
    ::kill(child_pid_, SIGKILL);
    ::waitpid(child_pid_, &status, 0);
  }
}

json ExternalDetector::call(const json& request) const {
  std::lock_guard<std::mutex> lock(mu_);
  json reply = channel_->exchange(request);
  if (!reply.is_object()) throw TransportError("detector reply is not an object");
  if (auto err = reply.find("error"); err != reply.end()) {
    throw TransportError("detector error: " + err->dump());
  }
  return reply;
}

LayoutObject parse_wire_object(const json& record, std::size_t num_categories,
                               const PageRef& page) {
  if (!record.is_object()) throw TransportError("object record is not a map");
  auto bbox = record.find("bbox");
  auto scores = record.find("scores");
  if (bbox == record.end() || !bbox->is_array() || bbox->size() != 4) {
    throw TransportError("object record lacks bbox [x,y,w,h]");
  }
  if (scores == record.end() || !scores->is_array() ||
      scores->size() != num_categories) {
    throw TransportError("object record scores do not match category count");
  }
  double v[4];
  for (std::size_t i = 0; i < 4; ++i) {
    if (!(*bbox)[i].is_number()) throw TransportError("non-numeric bbox");
    v[i] = (*bbox)[i].get<double>();
  }
  BBox box = clamp_to_page(BBox{v[0], v[1], v[2], v[3]}, page.width, page.height);
  if (!box.valid()) throw TransportError("degenerate bbox from detector");

  std::vector<double> probs;
  probs.reserve(num_categories);
  double sum = 0.0;
  for (const auto& s : *scores) {
    if (!s.is_number()) throw TransportError("non-numeric category score");
    const double p = s.get<double>();
    if (!(p >= 0.0) || !std::isfinite(p)) {
      throw TransportError("negative category score");
    }
    probs.push_back(p);
    sum += p;
  }
  if (!(sum > 0.0)) throw TransportError("category scores sum to zero");
  for (double& p : probs) p = std::min(1.0, p / sum);

  LayoutObject obj;
  obj.bbox = box;
  obj.source = Source::kModelAuto;
  try {
    obj.category = CategoryDist(std::move(probs));
  } catch (const ValidationError& e) {
    throw TransportError(std::string("bad category scores: ") + e.what());
  }
  double confidence = 1.0;
  if (auto c = record.find("confidence"); c != record.end()) {
    if (!c->is_number()) throw TransportError("non-numeric confidence");
    confidence = c->get<double>();
  }
  if (!(confidence >= 0.0 && confidence <= 1.0)) {
    throw TransportError("confidence outside [0, 1]");
  }
  obj.confidence = confidence;
  return obj;
}

namespace {

const json& objects_of(const json& reply) {
  auto it = reply.find("objects");
  if (it == reply.end() || !it->is_array()) {
    throw TransportError("detector reply lacks an objects array");
  }
  return *it;
}

}  // namespace

Prediction ExternalDetector::detect(const PageRef& page) const {
  const json reply = call({{"op", "detect"}, {"image_id", page.image_id}});
  Prediction out;
  for (const auto& rec : objects_of(reply)) {
    out.push_back(parse_wire_object(rec, config_.num_categories, page));
  }
  return out;
}

std::vector<Refined> ExternalDetector::refine(
    const PageRef& page, std::span<const BBox> proposals) const {
  if (proposals.empty()) throw ValidationError("refine: empty proposal list");
  json boxes = json::array();
  for (const auto& p : proposals) boxes.push_back({p.x, p.y, p.w, p.h});
  const json reply = call(
      {{"op", "refine"}, {"image_id", page.image_id}, {"proposals", boxes}});
  const json& objs = objects_of(reply);
  if (objs.size() != proposals.size()) {
    throw TransportError("refine reply has " + std::to_string(objs.size()) +
                         " objects for " + std::to_string(proposals.size()) +
                         " proposals");
  }
  std::vector<Refined> out;
  out.reserve(objs.size());
  for (const auto& rec : objs) {
    LayoutObject o = parse_wire_object(rec, config_.num_categories, page);
    out.push_back({o.bbox, std::move(o.category)});
  }
  return out;
}

void ExternalDetector::update(const Dataset& labeled) {
  const auto path = config_.work_dir /
                    ("labeled_" + std::to_string(train_count_++) + ".json");
  export_coco(labeled, path);
  const json reply = call({{"op", "train"}, {"dataset_path", path.string()}});
  if (reply.value("ok", false) != true) {
    throw TransportError("detector did not acknowledge training");
  }
}

}  // namespace olala
