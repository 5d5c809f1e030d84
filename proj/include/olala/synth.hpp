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
#include <string>
#include <vector>

#include "olala/types.hpp"

namespace olala {

/// Parameters of the synthetic layout oracle: pages of non-overlapping
/// integer boxes stacked in 1 to 3 columns.
struct SynthConfig {
  std::size_t num_pages = 200;
  /// Mean objects per page; each page draws its count uniformly from
  /// [0.7, 1.3] times this.
  double mean_objects = 30.0;
  std::vector<std::string> category_names = {"text", "title", "list", "table",
                                              "figure"};
  /// Relative category frequencies, normalized on use.
  std::vector<double> category_weights = {0.55, 0.2, 0.12, 0.08, 0.05};
  int page_width = 612;
  int page_height = 792;
  int margin = 36;
  int gap = 6;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Deterministic in the config. Categories get ids 1..C; pages get ids 1..N
/// and file names page_NNNNN.png.
Dataset make_synthetic_oracle(const SynthConfig& cfg);

}  // namespace olala
