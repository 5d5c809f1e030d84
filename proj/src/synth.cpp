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
#include "olala/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "olala/rng.hpp"

namespace olala {

void SynthConfig::validate() const {
  if (num_pages == 0) throw ValidationError("synth: num_pages must be positive");
  if (!(mean_objects >= 1.0)) throw ValidationError("synth: mean_objects < 1");
  if (category_names.empty() ||
      category_names.size() != category_weights.size()) {
    throw ValidationError("synth: one weight per category required");
  }
  double total = 0.0;
  for (double w : category_weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw ValidationError("synth: category weights must be finite and >= 0");
    }
    total += w;
  }
  if (!(total > 0.0)) throw ValidationError("synth: all category weights are 0");
  if (page_width <= 2 * margin + 16 || page_height <= 2 * margin + 16) {
    throw ValidationError("synth: page too small for its margins");
  }
  if (gap < 0) throw ValidationError("synth: negative gap");
}

namespace {

std::size_t draw_category(CounterRng& rng, const std::vector<double>& cdf) {
  const double u = rng.uniform() * cdf.back();
  const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
  return std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()),
                               cdf.size() - 1);
}

}  // namespace

Dataset make_synthetic_oracle(const SynthConfig& cfg) {
  cfg.validate();
  Dataset ds;
  const std::size_t C = cfg.category_names.size();
  for (std::size_t c = 0; c < C; ++c) {
    ds.categories.push_back({static_cast<std::int64_t>(c + 1), cfg.category_names[c]});
  }
  std::vector<double> cdf(C);
  std::partial_sum(cfg.category_weights.begin(), cfg.category_weights.end(),
                   cdf.begin());

  const int usable_w = cfg.page_width - 2 * cfg.margin;
  const int usable_h = cfg.page_height - 2 * cfg.margin;
  for (std::size_t p = 0; p < cfg.num_pages; ++p) {
    CounterRng rng({cfg.seed, static_cast<std::uint64_t>(Stream::kSynth), p});
    PageAnnotation page;
    page.image_id = static_cast<std::int64_t>(p + 1);
    page.file_name = fmt::format("page_{:05d}.png", p + 1);
    page.width = cfg.page_width;
    page.height = cfg.page_height;

    const double r = rng.uniform(0.7, 1.3);
    const auto total = static_cast<std::size_t>(
        std::max(1.0, std::round(cfg.mean_objects * r)));
    const int cols = 1 + static_cast<int>(rng.below(3));
    const int col_w = (usable_w - (cols - 1) * cfg.gap) / cols;
    // rows per column: spread the objects evenly over the columns
    const int min_row = 4 + cfg.gap;
    const auto max_rows = static_cast<std::size_t>(usable_h / min_row);
    for (int c = 0; c < cols; ++c) {
      std::size_t rows = total / static_cast<std::size_t>(cols) +
                         (static_cast<std::size_t>(c) < total % static_cast<std::size_t>(cols) ? 1 : 0);
      rows = std::min(rows, max_rows);
      if (rows == 0) continue;
      // random row heights, each at least min_row, summing to usable_h
      std::vector<double> share(rows);
      for (auto& s : share) s = rng.uniform(0.3, 1.7);
      const double sum = std::accumulate(share.begin(), share.end(), 0.0);
      const int spare = usable_h - static_cast<int>(rows) * min_row;
      std::vector<int> edges(rows + 1, 0);
      double acc = 0.0;
      for (std::size_t i = 0; i < rows; ++i) {
        acc += share[i];
        edges[i + 1] = static_cast<int>(i + 1) * min_row +
                       static_cast<int>(std::floor(spare * acc / sum));
      }
      edges[rows] = usable_h;
      const int x0 = cfg.margin + c * (col_w + cfg.gap);
      for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t cat = draw_category(rng, cdf);
        const int h = edges[i + 1] - edges[i] - cfg.gap;
        // titles and figures are often narrower than their column
        int w = col_w;
        if (cat != 0 && rng.bernoulli(0.5)) {
          w = std::max(8, static_cast<int>(col_w * rng.uniform(0.4, 1.0)));
        }
        LayoutObject obj;
        obj.bbox = {static_cast<double>(x0),
                    static_cast<double>(cfg.margin + edges[i]),
                    static_cast<double>(w), static_cast<double>(h)};
        obj.category = CategoryDist::one_hot(C, cat);
        obj.source = Source::kGroundTruth;
        page.objects.push_back(std::move(obj));
      }
    }
    ds.pages.push_back(std::move(page));
  }
  return ds;
}

}  // namespace olala
