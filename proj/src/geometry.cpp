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
#include "olala/geometry.hpp"

#include <algorithm>

namespace olala {

double intersection_area(const BBox& a, const BBox& b) {
  const double iw = std::min(a.right(), b.right()) - std::max(a.x, b.x);
  const double ih = std::min(a.bottom(), b.bottom()) - std::max(a.y, b.y);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  return iw * ih;
}

double iou(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double uni = a.area() + b.area() - inter;
  return uni > 0.0 ? std::min(1.0, inter / uni) : 0.0;
}

double overlap_coefficient(const BBox& a, const BBox& b) {
  const double inter = intersection_area(a, b);
  if (inter <= 0.0) return 0.0;
  const double smaller = std::min(a.area(), b.area());
  return smaller > 0.0 ? std::min(1.0, inter / smaller) : 0.0;
}

BBox clamp_to_page(const BBox& b, double width, double height) {
  // untouched boxes keep their exact (x, y, w, h)
  if (b.x >= 0.0 && b.y >= 0.0 && b.right() <= width && b.bottom() <= height) {
    return b;
  }
  const double x1 = std::clamp(b.x, 0.0, width);
  const double y1 = std::clamp(b.y, 0.0, height);
  const double x2 = std::clamp(b.right(), 0.0, width);
  const double y2 = std::clamp(b.bottom(), 0.0, height);
  return BBox::from_corners(x1, y1, x2, y2);
}

std::optional<Match> best_match(const BBox& query,
                                std::span<const BBox> candidates) {
  std::optional<Match> best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double v = iou(query, candidates[i]);
    if (v <= 0.0) continue;
    // strict > keeps the lowest index on ties
    if (!best || v > best->iou) best = Match{i, v};
  }
  return best;
}

}  // namespace olala
