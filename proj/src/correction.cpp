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
#include "olala/correction.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <utility>

#include "olala/kernels.hpp"

namespace olala {

void CorrectionConfig::validate() const {
  if (!(xi > 0.0 && xi <= 1.0)) throw ValidationError("xi must lie in (0, 1]");
  if (!(zeta >= 0.0 && zeta < 1.0)) throw ValidationError("zeta must lie in [0, 1)");
  if (!(grid_step > 0.0)) throw ValidationError("grid_step must be positive");
}

std::vector<LayoutObject> remove_duplicates(
    std::span<const LayoutObject> unselected,
    std::span<const LayoutObject> human_labels, double xi) {
  const auto a = boxes_of(unselected);
  const auto b = boxes_of(human_labels);
  const kernels::Matrix overlap = kernels::serial::pairwise_overlap(a, b);
  std::vector<LayoutObject> kept;
  for (std::size_t i = 0; i < unselected.size(); ++i) {
    bool duplicate = false;
    for (std::size_t j = 0; j < human_labels.size() && !duplicate; ++j) {
      duplicate = overlap.at(i, j) >= xi;
    }
    if (!duplicate) kept.push_back(unselected[i]);
  }
  return kept;
}

std::vector<BBox> uncovered_regions(double page_width, double page_height,
                                    std::span<const LayoutObject> predictions,
                                    double grid_step) {
  if (!(grid_step > 0.0)) throw ValidationError("grid_step must be positive");
  if (!(page_width > 0.0 && page_height > 0.0)) return {};
  const auto cols = static_cast<std::size_t>(std::ceil(page_width / grid_step));
  const auto rows = static_cast<std::size_t>(std::ceil(page_height / grid_step));

  auto cell_x = [&](std::size_t c) { return std::min(c * grid_step, page_width); };
  auto cell_y = [&](std::size_t r) { return std::min(r * grid_step, page_height); };

  std::vector<std::uint8_t> covered(rows * cols, 0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double cy = 0.5 * (cell_y(r) + cell_y(r + 1));
    for (std::size_t c = 0; c < cols; ++c) {
      const double cx = 0.5 * (cell_x(c) + cell_x(c + 1));
      for (const auto& p : predictions) {
        const BBox& b = p.bbox;
        if (cx >= b.x && cx < b.right() && cy >= b.y && cy < b.bottom()) {
          covered[r * cols + c] = 1;
          break;
        }
      }
    }
  }

  // open rectangles keyed by column span -> first row
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> open;
  std::vector<std::pair<std::size_t, BBox>> closed;  // (first row, box)
  auto close = [&](std::pair<std::size_t, std::size_t> span, std::size_t first,
                   std::size_t end_row) {
    closed.emplace_back(first, BBox::from_corners(cell_x(span.first), cell_y(first),
                                                  cell_x(span.second),
                                                  cell_y(end_row)));
  };

  for (std::size_t r = 0; r < rows; ++r) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> next;
    std::size_t c = 0;
    while (c < cols) {
      if (covered[r * cols + c]) {
        ++c;
        continue;
      }
      std::size_t end = c;
      while (end < cols && !covered[r * cols + end]) ++end;
      const auto span = std::make_pair(c, end);
      auto it = open.find(span);
      if (it != open.end()) {
        next.emplace(span, it->second);
        open.erase(it);
      } else {
        next.emplace(span, r);
      }
      c = end;
    }
    for (const auto& [span, first] : open) close(span, first, r);
    open = std::move(next);
  }
  for (const auto& [span, first] : open) close(span, first, rows);

  std::sort(closed.begin(), closed.end(), [](const auto& a, const auto& b) {
    if (a.second.y != b.second.y) return a.second.y < b.second.y;
    return a.second.x < b.second.x;
  });
  std::vector<BBox> out;
  out.reserve(closed.size());
  for (auto& [first, box] : closed) out.push_back(box);
  return out;
}

std::vector<LayoutObject> recover_missing(std::span<const LayoutObject> oracle,
                                          std::span<const LayoutObject> combined,
                                          double zeta) {
  const auto a = boxes_of(oracle);
  const auto b = boxes_of(combined);
  const kernels::Matrix ious = kernels::serial::pairwise_iou(a, b);
  std::vector<LayoutObject> out;
  for (std::size_t i = 0; i < oracle.size(); ++i) {
    double best = 0.0;
    for (std::size_t j = 0; j < combined.size(); ++j) {
      best = std::max(best, ious.at(i, j));
    }
    if (best < zeta) {
      LayoutObject o = oracle[i];
      o.source = Source::kRecovered;
      o.score.reset();
      o.confidence = 1.0;
      out.push_back(std::move(o));
    }
  }
  return out;
}

std::vector<LayoutObject> merge_labels(
    std::span<const LayoutObject> human,
    std::span<const LayoutObject> corrected_unselected,
    std::span<const LayoutObject> recovered) {
  std::vector<LayoutObject> out;
  out.reserve(human.size() + corrected_unselected.size() + recovered.size());
  out.insert(out.end(), human.begin(), human.end());
  out.insert(out.end(), corrected_unselected.begin(), corrected_unselected.end());
  out.insert(out.end(), recovered.begin(), recovered.end());
  return out;
}

}  // namespace olala
