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
#include "olala/sim_agent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

#include "olala/correction.hpp"
#include "olala/kernels.hpp"

namespace olala {

void SimConfig::validate() const {
  if (!(keep_threshold > 0.0 && keep_threshold <= 1.0)) {
    throw ValidationError("keep threshold must lie in (0, 1]");
  }
}

SimLabels simulate_label(std::span<const LayoutObject> selected,
                         std::span<const LayoutObject> oracle_page,
                         const SimConfig& cfg) {
  SimLabels out;
  std::vector<bool> used(oracle_page.size(), false);
  for (const auto& pred : selected) {
    const auto m = best_match(pred.bbox, oracle_page);
    if (!m || used[m->index]) {
      out.charges.push_back(ChargeKind::kFull);
      continue;
    }
    used[m->index] = true;
    const LayoutObject& truth = oracle_page[m->index];
    const bool accurate = m->iou > cfg.keep_threshold &&
                          pred.category.argmax() == truth.category.argmax();
    if (accurate && cfg.allow_discount) {
      LayoutObject kept = pred;
      kept.source = Source::kModelUnchanged;
      out.labels.push_back(std::move(kept));
      out.charges.push_back(ChargeKind::kDiscounted);
    } else {
      LayoutObject label = truth;
      label.source = Source::kManual;
      label.score.reset();
      label.confidence = 1.0;
      out.labels.push_back(std::move(label));
      out.charges.push_back(ChargeKind::kFull);
    }
  }
  return out;
}

std::vector<LayoutObject> resolve_false_negatives(
    std::span<const LayoutObject> oracle_page,
    std::span<const LayoutObject> combined, double zeta, BudgetLedger& ledger,
    std::int64_t image_id) {
  std::vector<LayoutObject> missing = recover_missing(oracle_page, combined, zeta);
  std::vector<LayoutObject> out;
  for (auto& obj : missing) {
    if (!ledger.can_afford_full()) break;
    ledger.charge(image_id,
                  static_cast<std::int64_t>(combined.size() + out.size()),
                  ChargeKind::kRecovered);
    out.push_back(std::move(obj));
  }
  return out;
}

std::vector<double> coco_iou_thresholds() {
  std::vector<double> t(10);
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i] = 0.5 + 0.05 * static_cast<double>(i);
  }
  return t;
}

double interpolated_ap(std::span<const std::uint8_t> tp, std::size_t num_gt) {
  if (num_gt == 0) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = tp.size();
  std::vector<double> precision(n);
  std::vector<double> recall(n);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    hits += tp[i];
    precision[i] = static_cast<double>(hits) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(hits) / static_cast<double>(num_gt);
  }
  // precision envelope, right to left
  for (std::size_t i = n; i-- > 1;) {
    precision[i - 1] = std::max(precision[i - 1], precision[i]);
  }
  double sum = 0.0;
  constexpr int kRecallPoints = 101;
  for (int k = 0; k < kRecallPoints; ++k) {
    const double r = static_cast<double>(k) / 100.0;
    auto it = std::lower_bound(recall.begin(), recall.end(), r);
    if (it != recall.end()) {
      sum += precision[static_cast<std::size_t>(it - recall.begin())];
    }
  }
  return sum / kRecallPoints;
}

ApSummary dataset_accuracy(const Dataset& created, const Dataset& oracle,
                           bool use_parallel) {
  if (created.num_categories() != oracle.num_categories()) {
    throw ValidationError("dataset_accuracy: category tables differ");
  }
  if (created.pages.size() != oracle.pages.size()) {
    throw ValidationError("dataset_accuracy: page sets differ");
  }
  std::vector<kernels::PagePair> pairs;
  pairs.reserve(oracle.pages.size());
  std::set<std::int64_t> seen;
  for (const auto& page : oracle.pages) {
    const PageAnnotation* mine = created.find_page(page.image_id);
    if (!mine || !seen.insert(page.image_id).second) {
      throw ValidationError("dataset_accuracy: page sets differ at image " +
                            std::to_string(page.image_id));
    }
    pairs.push_back({mine->objects, page.objects});
  }

  const auto thresholds = coco_iou_thresholds();
  const std::size_t C = oracle.num_categories();
  const std::size_t T = thresholds.size();
  const auto matches =
      use_parallel ? kernels::parallel::match_pages(pairs, thresholds, C)
                   : kernels::serial::match_pages(pairs, thresholds, C);

  ApSummary out;
  out.per_threshold.assign(T, 0.0);
  out.per_category.assign(C, std::numeric_limits<double>::quiet_NaN());
  std::size_t present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t num_gt = 0;
    for (const auto& m : matches) num_gt += m.num_gt[c];
    if (num_gt == 0) continue;
    ++present;
    double cat_sum = 0.0;
    for (std::size_t t = 0; t < T; ++t) {
      std::vector<std::uint8_t> flags;
      for (const auto& m : matches) {
        const auto& f = m.tp[c * T + t];
        flags.insert(flags.end(), f.begin(), f.end());
      }
      const double ap = interpolated_ap(flags, num_gt);
      out.per_threshold[t] += ap;
      cat_sum += ap;
    }
    out.per_category[c] = cat_sum / static_cast<double>(T);
  }
  if (present == 0) {
    out.per_threshold.assign(T, 0.0);
    out.ap = 0.0;
    return out;
  }
  double total = 0.0;
  for (auto& v : out.per_threshold) {
    v /= static_cast<double>(present);
    total += v;
  }
  out.ap = total / static_cast<double>(T);
  return out;
}

SourceBreakdown source_breakdown(std::span<const LayoutObject> objects) {
  SourceBreakdown b;
  std::size_t manual = 0, model_auto = 0, unchanged = 0, recovered = 0;
  for (const auto& o : objects) {
    switch (o.source) {
      case Source::kManual:
        ++manual;
        break;
      case Source::kModelAuto:
        ++model_auto;
        break;
      case Source::kModelUnchanged:
        ++unchanged;
        break;
      case Source::kRecovered:
        ++recovered;
        break;
      case Source::kGroundTruth:
        break;
    }
  }
  b.total = manual + model_auto + unchanged + recovered;
  if (b.total == 0) return b;
  const auto n = static_cast<double>(b.total);
  b.manual = static_cast<double>(manual) / n;
  b.model_auto = static_cast<double>(model_auto) / n;
  b.model_unchanged = static_cast<double>(unchanged) / n;
  b.recovered = static_cast<double>(recovered) / n;
  return b;
}

SourceBreakdown source_breakdown(const Dataset& dataset) {
  std::vector<LayoutObject> all;
  all.reserve(dataset.num_objects());
  for (const auto& p : dataset.pages) {
    all.insert(all.end(), p.objects.begin(), p.objects.end());
  }
  return source_breakdown(all);
}

}  // namespace olala
