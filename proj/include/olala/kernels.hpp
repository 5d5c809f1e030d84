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

// Data-parallel inner loops of the engine. Each kernel has a serial
// reference in `serial` and an OpenMP version in `parallel` with identical
// results: every output element is computed independently, so the two
// agree bit for bit.

#include <cstdint>
#include <span>
#include <vector>

#include "olala/types.hpp"

namespace olala {

class Detector;
struct PerturbConfig;

namespace kernels {

/// Row-major |rows| x |cols| matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

/// Per-page greedy matching result for every (category, threshold) cell.
struct PageMatches {
  /// tp[c * num_thresholds + t][k]: 1 if the k-th created object of
  /// category c on this page matched a ground truth at threshold t.
  std::vector<std::vector<std::uint8_t>> tp;
  /// Ground-truth count per category.
  std::vector<std::size_t> num_gt;
};

struct PagePair {
  std::span<const LayoutObject> created;
  std::span<const LayoutObject> oracle;
};

namespace serial {

Matrix pairwise_iou(std::span<const BBox> a, std::span<const BBox> b);
Matrix pairwise_overlap(std::span<const BBox> a, std::span<const BBox> b);
std::vector<double> perturbation_scores(std::span<const LayoutObject> preds,
                                        const Detector& detector,
                                        const PageRef& page,
                                        const PerturbConfig& cfg);
std::vector<PageMatches> match_pages(std::span<const PagePair> pages,
                                     std::span<const double> thresholds,
                                     std::size_t num_categories);

}  // namespace serial

namespace parallel {

Matrix pairwise_iou(std::span<const BBox> a, std::span<const BBox> b);
Matrix pairwise_overlap(std::span<const BBox> a, std::span<const BBox> b);
/// Requires detector.concurrent_safe().
std::vector<double> perturbation_scores(std::span<const LayoutObject> preds,
                                        const Detector& detector,
                                        const PageRef& page,
                                        const PerturbConfig& cfg);
std::vector<PageMatches> match_pages(std::span<const PagePair> pages,
                                     std::span<const double> thresholds,
                                     std::size_t num_categories);

}  // namespace parallel

/// Greedy COCO matching for one page: created objects in order, each taking
/// the unmatched same-category ground truth of highest IOU >= threshold.
PageMatches match_page(const PagePair& page, std::span<const double> thresholds,
                       std::size_t num_categories);

}  // namespace kernels
}  // namespace olala
