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

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "olala/budget.hpp"
#include "olala/config.hpp"
#include "olala/loop.hpp"

namespace olala {

/// Failure reported to service clients: an HTTP status plus a stable
/// machine-readable code.
class ServiceError : public Error {
 public:
  ServiceError(int status, std::string code, const std::string& message,
               nlohmann::json detail = nullptr)
      : Error(message), status_(status), code_(std::move(code)),
        detail_(std::move(detail)) {}
  int status() const { return status_; }
  const std::string& code() const { return code_; }
  const nlohmann::json& detail() const { return detail_; }

 private:
  int status_;
  std::string code_;
  nlohmann::json detail_;
};

enum class Phase { kIdle, kServingRound, kAwaitingRetrain, kFinished };

std::string_view to_string(Phase p);
Phase phase_from_string(std::string_view name);

/// Lower score boundaries of the four quartiles plus the maximum:
/// [min, q1, median, q3, max], linear interpolation between order
/// statistics. Empty input gives an empty list.
std::vector<double> score_quartiles(std::vector<double> scores);

/// Append-only JSON-lines file; every record is flushed before append()
/// returns.
class EventLog {
 public:
  explicit EventLog(std::filesystem::path path);
  void append(const nlohmann::json& event);
  /// Parses every record. A torn final line is dropped; `intact_bytes`
  /// receives the length of the well-formed prefix.
  static std::vector<nlohmann::json> read(const std::filesystem::path& path,
                                          std::uintmax_t* intact_bytes = nullptr);
  /// Cuts a torn final line so later appends start on a fresh line.
  static void repair(const std::filesystem::path& path);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct Task {
  std::string id;
  PageRef page;
  std::size_t round = 0;
  Prediction predictions;
  std::vector<std::size_t> selected;
  bool open = true;
  nlohmann::json payload;
};

/// Counters of one service round, the human-mode analogue of RoundReport.
struct RoundMetrics {
  std::size_t round = 0;
  double selection_ratio = 0.0;
  double skill = 0.0;
  double allowance = 0.0;
  double spent = 0.0;
  std::size_t pages_labeled = 0;
  std::size_t pages_skipped = 0;
  std::size_t full = 0;
  std::size_t discounted = 0;
  std::size_t recovered_charges = 0;
  SourceCounts sources;
};

/// One annotation session. Every mutation is recorded in the session's
/// event log before it takes effect on the in-memory state, and restore()
/// rebuilds the state from the latest snapshot plus the events after it.
/// All public methods are serialized on the session mutex.
class Session {
 public:
  /// Starts a session in `dir` (created if needed). Throws ServiceError
  /// "invalid_config" when the config or its datasets cannot be used.
  static std::unique_ptr<Session> create(const std::string& id, const RunConfig& cfg,
                                         const std::filesystem::path& dir);
  static std::unique_ptr<Session> restore(const std::filesystem::path& dir);

  const std::string& id() const { return id_; }
  nlohmann::json status() const;
  /// The open task, a new one, or {"round_complete": true, ...}.
  nlohmann::json next_task();
  nlohmann::json task(const std::string& task_id) const;
  /// Applies a review of the task's selected objects:
  ///   {"confirmations": [i..], "edits": [{"index", "bbox", "category_id"}],
  ///    "deletions": [i..], "additions": [{"bbox", "category_id"}]}
  /// Every selected index must appear exactly once among confirmations,
  /// edits and deletions.
  nlohmann::json submit_labels(const std::string& task_id, const nlohmann::json& body);
  nlohmann::json advance_round();
  nlohmann::json export_coco() const;
  nlohmann::json metrics() const;
  /// Writes labeled.json and metrics.tsv into the session directory.
  void export_files() const;
  /// Writes a snapshot now; restore() then only replays later events.
  void write_snapshot();

  // state views for tests and tools
  Phase phase() const;
  std::size_t round() const;
  const PoolState& pool() const { return pool_; }
  const BudgetLedger& ledger() const { return ledger_; }
  double total_spent() const;
  std::uint64_t event_count() const { return seq_; }

 private:
  Session() = default;
  void init(const std::string& id, const RunConfig& cfg, const std::filesystem::path& dir);
  void record(nlohmann::json event);
  void apply(const nlohmann::json& event, bool replay);
  void start_round(std::size_t t);
  nlohmann::json task_view(const Task& task) const;
  nlohmann::json snapshot_json() const;
  void write_snapshot_unlocked();
  void load_snapshot(const nlohmann::json& snap);
  double selection_ratio_now() const;
  struct Review {
    std::vector<LayoutObject> objects;
    std::vector<ChargeKind> charges;
    std::vector<std::int64_t> charge_objects;
    std::size_t duplicates_removed = 0;
  };
  /// Validates a submission against its task and builds the page labels.
  Review review(const Task& task, const nlohmann::json& body) const;

  mutable std::mutex mu_;
  std::string id_;
  RunConfig cfg_;
  std::filesystem::path dir_;
  std::unique_ptr<EventLog> log_;
  std::uint64_t seq_ = 0;
  std::uint64_t snapshot_seq_ = 0;

  Dataset oracle_;
  std::unique_ptr<Detector> detector_;
  std::unique_ptr<Scorer> scorer_;
  std::vector<Category> categories_;
  Mode mode_ = Mode::kOlalaPerturbation;

  Phase phase_ = Phase::kIdle;
  std::size_t round_ = 0;
  PoolState pool_;
  BudgetLedger ledger_;
  double spent_before_ = 0.0;
  std::uint64_t detector_updates_ = 0;
  /// Labeled pages seen by the latest detector update.
  std::size_t trained_pages_ = 0;
  std::set<std::int64_t> visited_;
  std::map<std::string, Task> tasks_;
  std::optional<std::string> open_task_;
  std::uint64_t next_task_ = 1;
  std::vector<RoundMetrics> rounds_;
};

/// Owns the sessions stored under one data directory.
class SessionManager {
 public:
  /// Restores every session found in `data_dir`.
  explicit SessionManager(std::filesystem::path data_dir);

  std::string create(const RunConfig& cfg);
  /// Throws ServiceError "session_not_found".
  Session& get(const std::string& id);
  /// Session owning a task id of the form <session>-t<n>.
  Session& owner_of_task(const std::string& task_id);
  std::vector<std::string> ids() const;
  /// Snapshots every session.
  void flush();

 private:
  std::filesystem::path data_dir_;
  mutable std::mutex mu_;
  std::map<std::string, std::unique_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
};

}  // namespace olala
