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

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "olala/types.hpp"

namespace olala {

class TransportError : public Error {
 public:
  using Error::Error;
};

class UnknownPageError : public Error {
 public:
  using Error::Error;
};

/// Predicted objects for one page: source model-auto, full distributions,
/// confidences in [0, 1].
using Prediction = std::vector<LayoutObject>;

/// Output of the second detector stage for one proposal box.
struct Refined {
  BBox box;
  CategoryDist dist;
};

/// The detection model: predicts objects for a page, refines proposal boxes
/// into (box, distribution) pairs, and is retrained on the labeled set.
///
/// detect() and refine() do not mutate model state. Implementations that
/// also tolerate concurrent calls report it via concurrent_safe(); update()
/// requires exclusive access.
class Detector {
 public:
  virtual ~Detector() = default;

  virtual Prediction detect(const PageRef& page) const = 0;
  /// One result per proposal, in input order. Throws ValidationError on an
  /// empty proposal list.
  virtual std::vector<Refined> refine(const PageRef& page,
                                      std::span<const BBox> proposals) const = 0;
  /// Retrains on `labeled`; blocks until the model is ready.
  virtual void update(const Dataset& labeled) = 0;
  /// Brings a fresh detector to the state it had after `updates` calls to
  /// update(), the last one on `labeled`. Retrains once by default.
  virtual void restore(const Dataset& labeled, std::uint64_t updates);

  virtual std::size_t num_categories() const = 0;
  virtual bool concurrent_safe() const { return false; }
  /// Accuracy proxy in [0, 1] for reports; NaN when unknown.
  virtual double skill() const;
};

struct SyntheticConfig {
  /// Labeled-object count at which skill reaches 1 - 1/e.
  double tau = 2000.0;
  /// Edge jitter scale as a fraction of the box dimension.
  double sigma = 0.05;
  double rho = 0.3;    // category confusion
  double delta = 0.3;  // object drop
  double phi = 0.2;    // duplicate emission
  double confidence_threshold = 0.5;
  std::uint64_t seed = 0;
  /// Pins the skill; update() then leaves it unchanged.
  std::optional<double> fixed_skill;

  void validate() const;
};

/// skill(n) = 1 - exp(-n / tau).
double skill_curve(double n_labeled_objects, double tau);

/// Noisy view of a hidden oracle dataset whose error rates shrink with
/// skill. Every error scales with (1 - skill): edge jitter, category flips,
/// dropped objects and duplicate emissions. At skill 1 detect() returns the
/// oracle objects exactly.
class SyntheticDetector final : public Detector {
 public:
  SyntheticDetector(Dataset oracle, SyntheticConfig config);

  Prediction detect(const PageRef& page) const override;
  std::vector<Refined> refine(const PageRef& page,
                              std::span<const BBox> proposals) const override;
  void update(const Dataset& labeled) override;
  void restore(const Dataset& labeled, std::uint64_t updates) override;

  std::size_t num_categories() const override;
  bool concurrent_safe() const override { return true; }
  double skill() const override { return skill_; }

  void update_skill(std::size_t n_labeled_objects);
  void set_skill(double s);
  /// Bumped by every model update; part of the randomness key.
  std::uint64_t epoch() const { return epoch_; }
  const SyntheticConfig& config() const { return config_; }

 private:
  const PageAnnotation& oracle_page(const PageRef& page) const;

  Dataset oracle_;
  std::unordered_map<std::int64_t, std::size_t> page_index_;
  SyntheticConfig config_;
  double skill_ = 0.0;
  std::uint64_t epoch_ = 0;
};

/// Line-delimited JSON channel to an external detector process.
class LineChannel {
 public:
  LineChannel(int read_fd, int write_fd, std::chrono::milliseconds timeout);
  ~LineChannel();
  LineChannel(const LineChannel&) = delete;
  LineChannel& operator=(const LineChannel&) = delete;

  /// Sends one request line and waits for one response line.
  nlohmann::json exchange(const nlohmann::json& request);

 private:
  std::string read_line();

  int read_fd_;
  int write_fd_;
  std::chrono::milliseconds timeout_;
  std::string buffer_;
};

struct ExternalConfig {
  /// Shell command started as the detector process (standard streams).
  std::string command;
  /// Alternative to `command`: path of a listening Unix domain socket.
  std::string socket_path;
  std::size_t num_categories = 0;
  std::chrono::milliseconds timeout{30000};
  /// Where labeled sets are written before a train request.
  std::filesystem::path work_dir = ".";
};

/// Client for a detector that speaks the line protocol:
///   {"op":"detect","image_id":..}
///   {"op":"refine","image_id":..,"proposals":[[x,y,w,h],..]}
///   {"op":"train","dataset_path":..}
/// Timeouts and malformed responses raise TransportError.
class ExternalDetector final : public Detector {
 public:
  explicit ExternalDetector(ExternalConfig config);
  ~ExternalDetector() override;

  Prediction detect(const PageRef& page) const override;
  std::vector<Refined> refine(const PageRef& page,
                              std::span<const BBox> proposals) const override;
  void update(const Dataset& labeled) override;
  std::size_t num_categories() const override { return config_.num_categories; }

 private:
  nlohmann::json call(const nlohmann::json& request) const;

  ExternalConfig config_;
  int child_pid_ = -1;
  std::unique_ptr<LineChannel> channel_;
  mutable std::mutex mu_;
  std::uint64_t train_count_ = 0;
};

/// Parses one {"bbox","scores","confidence"} record; throws TransportError.
LayoutObject parse_wire_object(const nlohmann::json& record,
                               std::size_t num_categories,
                               const PageRef& page);

}  // namespace olala
