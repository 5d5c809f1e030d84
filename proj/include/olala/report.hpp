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
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "olala/config.hpp"
#include "olala/loop.hpp"

namespace olala {

struct ExperimentRun {
  std::string name;
  Mode mode = Mode::kOlalaPerturbation;
  double budget = 0.0;
  std::size_t rounds = 0;
  FinalReport report;
};

/// One run of the loop per mode and per (budget, rounds) sweep point, each
/// with a fresh detector and seed set. Runs are ordered by sweep point, then
/// by the mode order of the config.
std::vector<ExperimentRun> run_experiments(const RunConfig& cfg, const Dataset& oracle);

/// Per-round table of one run, tab separated with a header line.
void write_round_table(std::ostream& out, const FinalReport& report);
/// One row per run.
void write_comparison_table(std::ostream& out, std::span<const ExperimentRun> runs);
void write_summary(std::ostream& out, const RunConfig& cfg,
                   std::span<const ExperimentRun> runs);

/// Writes <name>.tsv per run, comparison.tsv and summary.txt into `dir`.
/// Returns the written paths.
std::vector<std::filesystem::path> write_reports(const std::filesystem::path& dir,
                                                 const RunConfig& cfg,
                                                 std::span<const ExperimentRun> runs);

/// AP report of a created dataset against an oracle, tab separated.
void write_ap_report(std::ostream& out, const Dataset& oracle, const ApSummary& ap);

}  // namespace olala
