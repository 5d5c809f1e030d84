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

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "olala/budget.hpp"
#include "olala/types.hpp"

namespace olala {

/// Simulated annotator that answers from a hidden oracle.
struct SimConfig {
  /// A selected prediction above this IOU with a same-category ground truth
  /// is accepted as is.
  double keep_threshold = 0.925;
  /// When false every selected prediction is replaced and charged in full
  /// (whole-image labeling).
  bool allow_discount = true;

  void validate() const;
};

struct SimLabels {
  std::vector<LayoutObject> labels;
  /// One charge per selected prediction, in input order.
  std::vector<ChargeKind> charges;
};

/// Labels `selected` (in descending score order) against one oracle page.
/// Each prediction is best-matched to a ground truth. Above the keep
/// threshold with the same argmax category it is kept (model-unchanged,
/// discounted); otherwise the ground truth replaces it (manual, full).
/// Each ground truth is emitted at most once: later selections of an
/// already used ground truth, and predictions with no overlapping ground
/// truth, yield nothing and are charged in full.
SimLabels simulate_label(std::span<const LayoutObject> selected,
                         std::span<const LayoutObject> oracle_page,
                         const SimConfig& cfg);

/// Recovers oracle objects missing from `combined` (max IOU < zeta), one
/// full charge each while the ledger can afford it.
std::vector<LayoutObject> resolve_false_negatives(
    std::span<const LayoutObject> oracle_page,
    std::span<const LayoutObject> combined, double zeta, BudgetLedger& ledger,
    std::int64_t image_id);

/// COCO thresholds 0.50:0.05:0.95.
std::vector<double> coco_iou_thresholds();

struct ApSummary {
  /// Mean over thresholds and over categories present in the oracle.
  double ap = 0.0;
  std::vector<double> per_threshold;
  /// NaN for categories without ground truth.
  std::vector<double> per_category;
};

/// Accuracy of a created dataset against the oracle, scored like detection
/// output: every created object is a detection of confidence 1 (ties in
/// page order, then object order), greedily matched per threshold, with
/// 101-point interpolated precision. Throws ValidationError when the page
/// sets or category counts differ.
ApSummary dataset_accuracy(const Dataset& created, const Dataset& oracle,
                           bool use_parallel = true);

/// Interpolated AP of one precision/recall sweep. `tp` holds the match flags
/// of the detections in ranking order.
double interpolated_ap(std::span<const std::uint8_t> tp, std::size_t num_gt);

/// Fractions of objects by source over {manual, model-auto,
/// model-unchanged, recovered}; ground-truth seed objects are not counted.
struct SourceBreakdown {
  double manual = 0.0;
  double model_auto = 0.0;
  double model_unchanged = 0.0;
  double recovered = 0.0;
  std::size_t total = 0;
};

SourceBreakdown source_breakdown(const Dataset& dataset);
SourceBreakdown source_breakdown(std::span<const LayoutObject> objects);

}  // namespace olala
