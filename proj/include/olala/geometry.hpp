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

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>

namespace olala {

/// Axis-aligned rectangle in absolute pixel coordinates, (x, y) being the
/// top-left corner. A valid box has finite coordinates and w, h > 0.
struct BBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;

  double right() const { return x + w; }
  double bottom() const { return y + h; }
  double area() const { return w * h; }

  bool valid() const {
    return std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
           std::isfinite(h) && w > 0.0 && h > 0.0;
  }

  static BBox from_corners(double x1, double y1, double x2, double y2) {
    return BBox{x1, y1, x2 - x1, y2 - y1};
  }

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Area of a ∩ b; zero for disjoint or edge-touching boxes.
double intersection_area(const BBox& a, const BBox& b);

/// |a ∩ b| / |a ∪ b|.
double iou(const BBox& a, const BBox& b);

/// |a ∩ b| / min(|a|, |b|). Equals 1 under containment.
double overlap_coefficient(const BBox& a, const BBox& b);

/// Clips `b` to [0, width] x [0, height]. The result may be degenerate
/// (w or h <= 0) when `b` lies entirely outside the page.
BBox clamp_to_page(const BBox& b, double width, double height);

struct Match {
  std::size_t index = 0;
  double iou = 0.0;
};

/// Index of the box in `candidates` with the highest IOU against `query`.
/// Returns nullopt when `candidates` is empty or every IOU is zero. Ties
/// resolve to the lowest index.
std::optional<Match> best_match(const BBox& query,
                                std::span<const BBox> candidates);

}  // namespace olala
