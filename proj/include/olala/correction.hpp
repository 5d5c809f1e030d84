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

#include <span>
#include <vector>

#include "olala/types.hpp"

namespace olala {

struct CorrectionConfig {
  /// Overlap-coefficient threshold for duplication removal, in (0, 1].
  double xi = 0.25;
  /// IOU below which a ground truth counts as missing, in [0, 1).
  double zeta = 0.05;
  /// Cell size of the uncovered-region grid, in pixels.
  double grid_step = 16.0;
  bool remove_duplicates = true;
  bool recover_missing = true;

  void validate() const;
};

/// Unselected predictions whose overlap coefficient with every human label
/// stays below `xi`. Order is preserved; unselected predictions are not
/// compared with each other.
std::vector<LayoutObject> remove_duplicates(
    std::span<const LayoutObject> unselected,
    std::span<const LayoutObject> human_labels, double xi);

/// Page regions not covered by any prediction, at grid resolution. A cell
/// counts as covered when its center lies inside a prediction. Uncovered
/// cells are merged row by row into maximal-width runs, and runs with the
/// same column span in consecutive rows are stacked into one rectangle. The
/// rectangles are disjoint and clipped to the page.
std::vector<BBox> uncovered_regions(double page_width, double page_height,
                                    std::span<const LayoutObject> predictions,
                                    double grid_step);

/// Oracle objects whose best IOU against `combined` is below `zeta`, tagged
/// as recovered.
std::vector<LayoutObject> recover_missing(std::span<const LayoutObject> oracle,
                                          std::span<const LayoutObject> combined,
                                          double zeta);

/// human ++ corrected_unselected ++ recovered, source tags untouched.
std::vector<LayoutObject> merge_labels(
    std::span<const LayoutObject> human,
    std::span<const LayoutObject> corrected_unselected,
    std::span<const LayoutObject> recovered);

}  // namespace olala
