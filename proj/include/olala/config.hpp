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
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "olala/detector.hpp"
#include "olala/loop.hpp"
#include "olala/scoring.hpp"
#include "olala/sim_agent.hpp"
#include "olala/synth.hpp"

namespace olala {

enum class DetectorKind { kSynthetic, kExternal };

/// Everything a simulation or a service session needs. Read from a text
/// file of "key = value" lines ('#' starts a comment, lists are comma
/// separated) or from a flat JSON object with the same keys.
///
///   oracle            COCO file of the hidden ground truth; when absent the
///                     oracle is generated from the synth.* keys
///   pool              COCO file of the pages a service session annotates;
///                     pages that already carry objects form the seed set
///   modes             list of olala, olala-perturbation, olala-marginal,
///                     olala-random, image-random, image-marginal
///   scorer            perturbation | marginal | random (overrides the mode)
///   r_initial r_last decay rounds budget eta xi zeta grid_step seed
///   seed_pages keep_threshold recover_missing remove_duplicates parallel
///   perturb.pairs     list of alpha:beta
///   perturb.lambda perturb.divergence
///   detector          synthetic | external
///   detector.tau .sigma .rho .delta .phi .confidence_threshold .fixed_skill
///   detector.command .socket .timeout_ms .categories
///   synth.pages .mean_objects .seed .weights .names
///   sweep.budget sweep.rounds   lists; simulate runs their product
///   out_dir image_dir data_dir
struct RunConfig {
  std::filesystem::path oracle;
  std::filesystem::path pool;
  SynthConfig synth;
  std::vector<Mode> modes = {Mode::kOlalaPerturbation};
  std::optional<ScorerKind> scorer;
  LoopConfig loop;
  SimConfig sim;
  PerturbConfig perturb;
  std::size_t seed_pages = 10;
  DetectorKind detector = DetectorKind::kSynthetic;
  SyntheticConfig synthetic;
  ExternalConfig external;
  std::vector<double> sweep_budget;
  std::vector<std::size_t> sweep_rounds;
  std::filesystem::path out_dir = "olala_out";
  std::filesystem::path image_dir;
  std::filesystem::path data_dir = "olala_sessions";

  /// Applies one key. Throws ParseError naming the key on bad input.
  void set(std::string_view key, std::string_view value);
  void validate() const;

  /// Resolved oracle: loaded from `oracle` or synthesized.
  Dataset load_oracle() const;
  ScorerKind scorer_for_mode(Mode m) const;

  /// Keys explicitly set, in application order, for echoing into reports.
  const std::vector<std::pair<std::string, std::string>>& entries() const {
    return entries_;
  }

  static RunConfig parse(std::string_view text, const std::string& origin = "<text>");
  static RunConfig load(const std::filesystem::path& path);
  static RunConfig from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

/// Builds the configured detector. The synthetic detector reads `oracle`.
std::unique_ptr<Detector> make_detector(const RunConfig& cfg, const Dataset& oracle);

}  // namespace olala
