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

#include <gtest/gtest.h>

#include "olala/synth.hpp"
#include "support.hpp"

namespace olala {
namespace {

using testing::object;

LayoutObject prediction(const BBox& b, std::size_t C, std::size_t cat) {
  LayoutObject o = object(b, C, cat, Source::kModelAuto);
  o.category = CategoryDist::peaked(C, cat, 0.8);
  o.confidence = 0.7;
  o.score = 0.4;
  return o;
}

TEST(SimulateLabel, ExactPredictionIsKeptAtDiscount) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 4, 1)};
  const std::vector<LayoutObject> sel{prediction({0, 0, 10, 10}, 4, 1)};
  const SimLabels out = simulate_label(sel, oracle, SimConfig{});
  ASSERT_EQ(out.labels.size(), 1u);
  EXPECT_EQ(out.labels[0].source, Source::kModelUnchanged);
  EXPECT_EQ(out.labels[0].bbox, sel[0].bbox);
  EXPECT_EQ(out.labels[0].category, sel[0].category);
  EXPECT_EQ(out.charges, std::vector<ChargeKind>{ChargeKind::kDiscounted});
  EXPECT_EQ(BudgetLedger(10, 0.2).cost(out.charges[0]), 0.2);
}

TEST(SimulateLabel, LowIouIsReplacedByTruth) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 4, 3)};
  const std::vector<LayoutObject> sel{prediction({0, 0, 10, 5}, 4, 3)};
  ASSERT_DOUBLE_EQ(iou(sel[0].bbox, oracle[0].bbox), 0.5);
  const SimLabels out = simulate_label(sel, oracle, SimConfig{});
  ASSERT_EQ(out.labels.size(), 1u);
  EXPECT_EQ(out.labels[0].source, Source::kManual);
  EXPECT_EQ(out.labels[0].bbox, oracle[0].bbox);
  EXPECT_EQ(out.labels[0].category, oracle[0].category);
  EXPECT_FALSE(out.labels[0].score);
  EXPECT_EQ(out.charges, std::vector<ChargeKind>{ChargeKind::kFull});
}

TEST(SimulateLabel, WrongCategoryAboveThresholdIsReplaced) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 4, 3)};
  const std::vector<LayoutObject> sel{prediction({0, 0, 10, 10}, 4, 2)};
  const SimLabels out = simulate_label(sel, oracle, SimConfig{});
  EXPECT_EQ(out.labels[0].source, Source::kManual);
  EXPECT_EQ(out.labels[0].category.argmax(), 3u);
  EXPECT_EQ(out.charges[0], ChargeKind::kFull);
}

TEST(SimulateLabel, KeepThresholdIsExclusive) {
  // IOU 0.925 exactly: 92.5 x 100 inside 100 x 100
  const std::vector<LayoutObject> oracle{object({0, 0, 100, 100}, 2, 0)};
  const std::vector<LayoutObject> at{prediction({0, 0, 92.5, 100}, 2, 0)};
  ASSERT_DOUBLE_EQ(iou(at[0].bbox, oracle[0].bbox), 0.925);
  EXPECT_EQ(simulate_label(at, oracle, SimConfig{}).charges[0], ChargeKind::kFull);
  const std::vector<LayoutObject> above{prediction({0, 0, 93, 100}, 2, 0)};
  EXPECT_EQ(simulate_label(above, oracle, SimConfig{}).charges[0], ChargeKind::kDiscounted);
}

TEST(SimulateLabel, SharedTruthIsEmittedOnce) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 2, 0)};
  const std::vector<LayoutObject> sel{prediction({0, 0, 10, 6}, 2, 0),
                                      prediction({0, 4, 10, 6}, 2, 0)};
  const SimLabels out = simulate_label(sel, oracle, SimConfig{});
  EXPECT_EQ(out.labels.size(), 1u);
  EXPECT_EQ(out.charges, (std::vector<ChargeKind>{ChargeKind::kFull, ChargeKind::kFull}));
}

TEST(SimulateLabel, UnmatchedYieldsNothingAndChargesFull) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 2, 0)};
  const std::vector<LayoutObject> sel{prediction({50, 50, 10, 10}, 2, 0)};
  const SimLabels out = simulate_label(sel, oracle, SimConfig{});
  EXPECT_TRUE(out.labels.empty());
  EXPECT_EQ(out.charges, std::vector<ChargeKind>{ChargeKind::kFull});
}

TEST(SimulateLabel, DiscountDisabledChargesFull) {
  const std::vector<LayoutObject> oracle{object({0, 0, 10, 10}, 2, 0)};
  const std::vector<LayoutObject> sel{prediction({0, 0, 10, 10}, 2, 0)};
  SimConfig cfg;
  cfg.allow_discount = false;
  const SimLabels out = simulate_label(sel, oracle, cfg);
  EXPECT_EQ(out.labels[0].source, Source::kManual);
  EXPECT_EQ(out.charges[0], ChargeKind::kFull);
}

TEST(SimulateLabelProperty, NoTruthEmittedTwice) {
  const Dataset oracle = make_synthetic_oracle(SynthConfig{.num_pages = 30, .seed = 2});
  CounterRng rng({41, 1});
  for (const auto& page : oracle.pages) {
    std::vector<LayoutObject> sel;
    for (int k = 0; k < 20; ++k) {
      const auto& t = page.objects[rng.below(page.objects.size())];
      BBox b = t.bbox;
      b.x += rng.uniform(-0.2, 0.2) * b.w;
      sel.push_back(prediction(clamp_to_page(b, page.width, page.height), 5, rng.below(5)));
    }
    const SimLabels out = simulate_label(sel, page.objects, SimConfig{});
    ASSERT_EQ(out.charges.size(), sel.size());
    std::vector<std::size_t> used;
    for (const auto& l : out.labels) {
      ASSERT_TRUE(l.source == Source::kManual || l.source == Source::kModelUnchanged);
      const auto m = best_match(l.bbox, std::span<const LayoutObject>(page.objects));
      ASSERT_TRUE(m);
      used.push_back(m->index);
    }
    std::sort(used.begin(), used.end());
    ASSERT_EQ(std::adjacent_find(used.begin(), used.end()), used.end());
    const auto discounted = std::count(out.charges.begin(), out.charges.end(), ChargeKind::kDiscounted);
    const auto unchanged = std::count_if(out.labels.begin(), out.labels.end(), [](const auto& l) {
      return l.source == Source::kModelUnchanged;
    });
    ASSERT_EQ(discounted, unchanged);
  }
}

TEST(ResolveFalseNegatives, Examples) {
  std::vector<LayoutObject> oracle;
  for (int i = 0; i < 5; ++i) oracle.push_back(object({20.0 * i, 0, 10, 10}, 2, 0));
  BudgetLedger none(10);
  EXPECT_TRUE(resolve_false_negatives(oracle, oracle, 0.05, none, 1).empty());
  EXPECT_EQ(none.spent(), 0.0);

  BudgetLedger three(3);
  const auto rec = resolve_false_negatives(oracle, {}, 0.05, three, 1);
  EXPECT_EQ(rec.size(), 3u);
  EXPECT_EQ(three.spent(), 3.0);
  EXPECT_EQ(three.count(ChargeKind::kRecovered), 3u);
  EXPECT_FALSE(three.can_afford_full());
}

TEST(ResolveFalseNegatives, RecoveredAreFarFromCombined) {
  const Dataset oracle = make_synthetic_oracle(SynthConfig{.num_pages = 10, .seed = 5});
  CounterRng rng({41, 2});
  for (const auto& page : oracle.pages) {
    std::vector<LayoutObject> combined;
    for (const auto& o : page.objects) {
      if (rng.bernoulli(0.5)) combined.push_back(o);
    }
    BudgetLedger ledger(1e9);
    for (const auto& r : resolve_false_negatives(page.objects, combined, 0.05, ledger, page.image_id)) {
      EXPECT_EQ(r.source, Source::kRecovered);
      for (const auto& c : combined) EXPECT_LT(iou(r.bbox, c.bbox), 0.05);
    }
  }
}

// Hand-rolled reference: greedy matching per category and threshold, then
// the 101-point interpolated precision read off every prefix of the ranking.
double reference_ap(const Dataset& created, const Dataset& oracle) {
  const auto thresholds = coco_iou_thresholds();
  const std::size_t C = oracle.num_categories();
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t c = 0; c < C; ++c) {
    std::size_t num_gt = 0;
    for (const auto& p : oracle.pages) {
      for (const auto& o : p.objects) num_gt += o.category.argmax() == c;
    }
    if (num_gt == 0) continue;
    ++present;
    double cat = 0.0;
    for (double t : thresholds) {
      std::vector<int> tp;
      for (std::size_t i = 0; i < oracle.pages.size(); ++i) {
        const auto& gts = oracle.pages[i].objects;
        std::vector<bool> taken(gts.size(), false);
        for (const auto& d : created.pages[i].objects) {
          if (d.category.argmax() != c) continue;
          int best = -1;
          double best_iou = t;
          for (std::size_t g = 0; g < gts.size(); ++g) {
            if (taken[g] || gts[g].category.argmax() != c) continue;
            const double v = iou(d.bbox, gts[g].bbox);
            if (v >= best_iou && (best < 0 || v > best_iou)) {
              best = static_cast<int>(g);
              best_iou = v;
            }
          }
          if (best >= 0) taken[static_cast<std::size_t>(best)] = true;
          tp.push_back(best >= 0);
        }
      }
      double sum = 0.0;
      for (int k = 0; k <= 100; ++k) {
        const double r = k / 100.0;
        double best_p = 0.0;
        int hits = 0;
        for (std::size_t n = 0; n < tp.size(); ++n) {
          hits += tp[n];
          const double recall = static_cast<double>(hits) / static_cast<double>(num_gt);
          if (recall >= r) best_p = std::max(best_p, hits / static_cast<double>(n + 1));
        }
        sum += best_p;
      }
      cat += sum / 101.0;
    }
    total += cat / static_cast<double>(thresholds.size());
  }
  return present ? total / static_cast<double>(present) : 0.0;
}

Dataset page_with(std::vector<LayoutObject> objs, std::size_t C = 2) {
  Dataset d;
  d.categories = testing::categories(C);
  d.pages.push_back({1, "p.png", 100, 100, std::move(objs)});
  return d;
}

TEST(DatasetAccuracy, IdenticalIsOneEmptyIsZero) {
  const Dataset oracle = make_synthetic_oracle(SynthConfig{.num_pages = 10});
  EXPECT_EQ(dataset_accuracy(oracle, oracle).ap, 1.0);
  Dataset empty = oracle;
  for (auto& p : empty.pages) p.objects.clear();
  EXPECT_EQ(dataset_accuracy(empty, oracle).ap, 0.0);
}

TEST(DatasetAccuracy, ExactPlusSpuriousMatchesEnumeration) {
  const Dataset oracle = page_with({object({0, 0, 10, 10}, 2, 0), object({50, 50, 20, 20}, 2, 0)});
  // exact first: prefixes (P, R) = (1, .5), (.5, .5); recall points 0..0.5 read 1
  const Dataset first = page_with({object({0, 0, 10, 10}, 2, 0), object({80, 0, 10, 10}, 2, 0)});
  const ApSummary a = dataset_accuracy(first, oracle);
  for (double v : a.per_threshold) EXPECT_NEAR(v, 51.0 / 101.0, 1e-12);
  EXPECT_NEAR(a.ap, reference_ap(first, oracle), 1e-12);
  // spurious first: (0, 0), (.5, .5)
  const Dataset second = page_with({object({80, 0, 10, 10}, 2, 0), object({0, 0, 10, 10}, 2, 0)});
  const ApSummary b = dataset_accuracy(second, oracle);
  for (double v : b.per_threshold) EXPECT_NEAR(v, 0.5 * 51.0 / 101.0, 1e-12);
  EXPECT_NEAR(b.ap, reference_ap(second, oracle), 1e-12);
}

TEST(DatasetAccuracy, ThresholdGridIsRespected) {
  // IOU 0.8 counts at thresholds 0.50..0.80 only
  const Dataset oracle = page_with({object({0, 0, 10, 10}, 2, 0)});
  const Dataset created = page_with({object({0, 0, 8, 10}, 2, 0)});
  const ApSummary a = dataset_accuracy(created, oracle);
  ASSERT_EQ(a.per_threshold.size(), 10u);
  for (std::size_t t = 0; t < 10; ++t) EXPECT_EQ(a.per_threshold[t], t <= 6 ? 1.0 : 0.0) << t;
  EXPECT_NEAR(a.ap, 0.7, 1e-12);
}

TEST(DatasetAccuracyProperty, MatchesReferenceOnSmallPages) {
  CounterRng rng({41, 3});
  for (int trial = 0; trial < 300; ++trial) {
    Dataset oracle, created;
    oracle.categories = created.categories = testing::categories(2);
    for (std::int64_t id = 1; id <= 2; ++id) {
      PageAnnotation o{id, "p", 60, 60, {}}, c{id, "p", 60, 60, {}};
      const auto n = rng.below(4);
      for (std::uint64_t k = 0; k < n; ++k) {
        o.objects.push_back(object(testing::random_int_box(rng, 40, 20), 2, rng.below(2)));
      }
      for (const auto& g : o.objects) {
        if (rng.bernoulli(0.3)) continue;
        BBox b = g.bbox;
        b.w = std::max(1.0, b.w - static_cast<double>(rng.below(3)));
        c.objects.push_back(object(b, 2, rng.bernoulli(0.8) ? g.category.argmax() : rng.below(2)));
      }
      if (rng.bernoulli(0.5)) c.objects.push_back(object(testing::random_int_box(rng, 40, 20), 2, 0));
      oracle.pages.push_back(o);
      created.pages.push_back(c);
    }
    ASSERT_NEAR(dataset_accuracy(created, oracle).ap, reference_ap(created, oracle), 1e-12) << trial;
    ASSERT_EQ(dataset_accuracy(created, oracle, true).ap, dataset_accuracy(created, oracle, false).ap);
  }
}

TEST(DatasetAccuracy, PermutedObjectsStillPerfect) {
  const Dataset oracle = make_synthetic_oracle(SynthConfig{.num_pages = 5, .seed = 8});
  Dataset created = oracle;
  for (auto& p : created.pages) std::reverse(p.objects.begin(), p.objects.end());
  EXPECT_EQ(dataset_accuracy(created, oracle).ap, 1.0);
}

TEST(DatasetAccuracy, PageMismatchThrows) {
  const Dataset oracle = make_synthetic_oracle(SynthConfig{.num_pages = 5});
  Dataset fewer = oracle;
  fewer.pages.pop_back();
  EXPECT_THROW(dataset_accuracy(fewer, oracle), ValidationError);
}

TEST(SourceBreakdown, Examples) {
  std::vector<LayoutObject> all_manual(4, object({0, 0, 1, 1}, 2, 0, Source::kManual));
  EXPECT_EQ(source_breakdown(all_manual).manual, 1.0);

  std::vector<LayoutObject> mixed;
  for (int i = 0; i < 2; ++i) mixed.push_back(object({0, 0, 1, 1}, 2, 0, Source::kManual));
  for (int i = 0; i < 3; ++i) mixed.push_back(object({0, 0, 1, 1}, 2, 0, Source::kModelAuto));
  for (int i = 0; i < 5; ++i) mixed.push_back(object({0, 0, 1, 1}, 2, 0, Source::kModelUnchanged));
  mixed.push_back(object({0, 0, 1, 1}, 2, 0, Source::kGroundTruth));
  const SourceBreakdown b = source_breakdown(mixed);
  EXPECT_DOUBLE_EQ(b.manual, 0.2);
  EXPECT_DOUBLE_EQ(b.model_auto, 0.3);
  EXPECT_DOUBLE_EQ(b.model_unchanged, 0.5);
  EXPECT_EQ(b.recovered, 0.0);
  EXPECT_EQ(b.total, 10u);
  EXPECT_NEAR(b.manual + b.model_auto + b.model_unchanged + b.recovered, 1.0, 1e-12);
}

}  // namespace
}  // namespace olala
