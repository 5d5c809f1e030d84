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
#include "olala/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace olala {

CategoryDist::CategoryDist(std::vector<double> probs) : probs_(std::move(probs)) {
  double sum = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0 && p <= 1.0)) {
      throw ValidationError("category probability outside [0, 1]");
    }
    sum += p;
  }
  if (!probs_.empty() && std::abs(sum - 1.0) > kSumTolerance) {
    throw ValidationError("category distribution does not sum to 1");
  }
}

CategoryDist CategoryDist::one_hot(std::size_t num_categories,
                                   std::size_t index) {
  std::vector<double> p(num_categories, 0.0);
  p.at(index) = 1.0;
  return CategoryDist(std::move(p));
}

CategoryDist CategoryDist::uniform(std::size_t num_categories) {
  if (num_categories == 0) return CategoryDist();
  return CategoryDist(std::vector<double>(
      num_categories, 1.0 / static_cast<double>(num_categories)));
}

CategoryDist CategoryDist::peaked(std::size_t num_categories, std::size_t index,
                                  double weight) {
  if (weight >= 1.0) return one_hot(num_categories, index);
  const double base = (1.0 - weight) / static_cast<double>(num_categories);
  std::vector<double> p(num_categories, base);
  p.at(index) += weight;
  // absorb rounding so the sum check always holds
  const double sum = std::accumulate(p.begin(), p.end(), 0.0);
  p[index] = std::clamp(p[index] + (1.0 - sum), 0.0, 1.0);
  return CategoryDist(std::move(p));
}

std::size_t CategoryDist::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs_.size(); ++i) {
    if (probs_[i] > probs_[best]) best = i;
  }
  return best;
}

bool CategoryDist::is_one_hot() const {
  std::size_t ones = 0;
  for (double p : probs_) {
    if (p == 1.0) {
      ++ones;
    } else if (p != 0.0) {
      return false;
    }
  }
  return ones == 1;
}

std::string_view to_string(Source s) {
  switch (s) {
    case Source::kGroundTruth:
      return "ground-truth";
    case Source::kManual:
      return "manual";
    case Source::kModelUnchanged:
      return "model-unchanged";
    case Source::kModelAuto:
      return "model-auto";
    case Source::kRecovered:
      return "recovered";
  }
  return "unknown";
}

Source source_from_string(std::string_view name) {
  for (Source s : kAllSources) {
    if (to_string(s) == name) return s;
  }
  throw ParseError("unknown object source '" + std::string(name) + "'");
}

std::size_t Dataset::num_objects() const {
  std::size_t n = 0;
  for (const auto& page : pages) n += page.objects.size();
  return n;
}

std::optional<std::size_t> Dataset::category_index(std::int64_t id) const {
  for (std::size_t i = 0; i < categories.size(); ++i) {
    if (categories[i].id == id) return i;
  }
  return std::nullopt;
}

const PageAnnotation* Dataset::find_page(std::int64_t image_id) const {
  for (const auto& page : pages) {
    if (page.image_id == image_id) return &page;
  }
  return nullptr;
}

PageAnnotation* Dataset::find_page(std::int64_t image_id) {
  for (auto& page : pages) {
    if (page.image_id == image_id) return &page;
  }
  return nullptr;
}

void Dataset::validate() const {
  std::set<std::int64_t> ids;
  for (const auto& c : categories) {
    if (!ids.insert(c.id).second) {
      throw ValidationError("duplicate category id " + std::to_string(c.id));
    }
  }
  std::set<std::int64_t> image_ids;
  for (const auto& page : pages) {
    if (!image_ids.insert(page.image_id).second) {
      throw ValidationError("duplicate image id " +
                            std::to_string(page.image_id));
    }
    for (const auto& obj : page.objects) {
      if (obj.category.size() != categories.size()) {
        throw ValidationError("object distribution length mismatch on image " +
                              std::to_string(page.image_id));
      }
      if (!obj.bbox.valid()) {
        throw ValidationError("invalid box on image " +
                              std::to_string(page.image_id));
      }
    }
  }
}

std::vector<BBox> boxes_of(std::span<const LayoutObject> objects) {
  std::vector<BBox> out;
  out.reserve(objects.size());
  for (const auto& o : objects) out.push_back(o.bbox);
  return out;
}

std::optional<Match> best_match(const BBox& query,
                                std::span<const LayoutObject> objects) {
  const auto boxes = boxes_of(objects);
  return best_match(query, std::span<const BBox>(boxes));
}

}  // namespace olala
