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

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "olala/budget.hpp"
#include "olala/correction.hpp"
#include "olala/detector.hpp"
#include "olala/scoring.hpp"
#include "olala/sim_agent.hpp"
#include "olala/types.hpp"

namespace olala {

enum class Decay { kLinear, kExponential };

std::string_view to_string(Decay d);
Decay decay_from_string(std::string_view name);

struct ScheduleConfig {
  double r_initial = 0.9;
  double r_last = 0.4;
  std::size_t total_rounds = 10;
  Decay decay = Decay::kLinear;
  /// Total object budget m; +infinity means unlimited.
  double budget_total = 21140.0;

  void validate() const;
  /// floor(m / T) per round, the remainder added to the last round.
  double round_allowance(std::size_t t) const;
};

/// Selection ratio r_t. Linear: r0 + (rT - r0) t / (T - 1); exponential:
/// r0 (rT / r0)^(t / (T - 1)); r0 when T = 1. Throws ValidationError when
/// t >= T.
double selection_ratio(const ScheduleConfig& cfg, std::size_t t);

/// min(ceil(r n), floor(remaining)); 0 once less than one full charge is
/// left.
std::size_t per_image_quota(double r, std::size_t n_predictions,
                            double remaining_budget);

struct Selection {
  /// Indices of selected objects, highest score first.
  std::vector<std::size_t> selected;
  /// Indices of the others, in input order.
  std::vector<std::size_t> unselected;
};

/// Top-m_i objects by score; ties by confidence (higher first), then index.
/// Objects without a score rank as 0.
Selection select_objects(std::span<const LayoutObject> scored, std::size_t m_i);

enum class Mode {
  kImageRandom,
  kImageMarginal,
  kOlalaRandom,
  kOlalaMarginal,
  kOlalaPerturbation,
};

std::string_view to_string(Mode m);
/// Accepts "olala" as an alias of "olala-perturbation".
Mode mode_from_string(std::string_view name);
bool is_image_level(Mode m);
ScorerKind scorer_for(Mode m);

/// L_t, U_t and the round index.
struct PoolState {
  Dataset labeled;
  std::vector<PageRef> unlabeled;
  std::size_t round = 0;

  std::size_t total_pages() const { return labeled.pages.size() + unlabeled.size(); }
};

/// Splits `pool` into a random seed set of `seed_pages` labeled pages (kept
/// with their annotations, tagged ground-truth) and the unlabeled rest, both
/// in pool order.
PoolState make_initial_pool(const Dataset& pool, std::size_t seed_pages,
                            std::uint64_t seed);

/// Source of labels for selected objects and missing regions: the simulated
/// oracle agent, or a human through the service.
class Annotator {
 public:
  virtual ~Annotator() = default;
  /// `selected` is in descending score order; one charge per object.
  virtual SimLabels label_selected(const PageRef& page,
                                   std::span<const LayoutObject> selected,
                                   bool allow_discount) = 0;
  /// Adds labels for objects missing from `combined`, charging `ledger`.
  virtual std::vector<LayoutObject> resolve_false_negatives(
      const PageRef& page, std::span<const LayoutObject> combined,
      BudgetLedger& ledger) = 0;
};

class SimulatedAnnotator final : public Annotator {
 public:
  SimulatedAnnotator(const Dataset& oracle, SimConfig sim, double zeta);

  SimLabels label_selected(const PageRef& page,
                           std::span<const LayoutObject> selected,
                           bool allow_discount) override;
  std::vector<LayoutObject> resolve_false_negatives(
      const PageRef& page, std::span<const LayoutObject> combined,
      BudgetLedger& ledger) override;

 private:
  const PageAnnotation& page_of(const PageRef& page) const;

  const Dataset& oracle_;
  SimConfig sim_;
  double zeta_;
};

struct LoopConfig {
  ScheduleConfig schedule;
  Mode mode = Mode::kOlalaPerturbation;
  CorrectionConfig correction;
  double eta = BudgetLedger::kDefaultEta;
  std::uint64_t seed = 0;
  /// Scores pages and matches AP with the OpenMP kernels.
  bool parallel = true;

  void validate() const;
};

struct SourceCounts {
  std::size_t ground_truth = 0;
  std::size_t manual = 0;
  std::size_t model_unchanged = 0;
  std::size_t model_auto = 0;
  std::size_t recovered = 0;

  void add(Source s);
  std::size_t total() const {
    return ground_truth + manual + model_unchanged + model_auto + recovered;
  }
};

struct RoundReport {
  std::size_t round = 0;
  double selection_ratio = 0.0;
  double skill = 0.0;
  std::size_t pages_labeled = 0;
  std::size_t pages_failed = 0;
  std::size_t objects_added = 0;
  SourceCounts sources;
  BudgetLedger ledger;
  /// Filled by run() when an oracle is available.
  std::optional<double> pool_ap;
  std::optional<double> created_ap;
  std::size_t cumulative_pages = 0;
};

/// One pass of the object-level loop over the unlabeled pool. Pages are
/// visited in pool order (OLALA modes) or, in image modes, by descending
/// mean object score with empty pages first. Stops before a page once less than one full charge is
/// left. Pages whose detection fails stay unlabeled.
RoundReport run_round(PoolState& pool, Detector& detector, const Scorer& scorer,
                      Annotator& annotator, const LoopConfig& cfg);

struct FinalReport {
  Mode mode = Mode::kOlalaPerturbation;
  std::vector<RoundReport> rounds;
  double final_skill = 0.0;
  /// Images and objects labeled by the loop (seed set excluded).
  std::size_t labeled_images = 0;
  std::size_t labeled_objects = 0;
  double total_spent = 0.0;
  std::optional<double> pool_ap;
  std::optional<double> created_ap;
  SourceBreakdown breakdown;
};

/// Builds the dataset of every pool page: labeled pages with their labels,
/// unlabeled pages empty. Page order follows `order`.
Dataset pool_snapshot(const PoolState& pool, const Dataset& order);

/// T rounds of run_round with a model update before each round and after
/// the last. With `oracle`, per-round and final AP are computed both over
/// the whole pool (unlabeled pages count as empty) and over labeled pages.
FinalReport run(PoolState& pool, Detector& detector, const Scorer& scorer,
                Annotator& annotator, const LoopConfig& cfg,
                const Dataset* oracle = nullptr);

/// AP of the labeled pages of `pool` against the same pages of `oracle`.
double created_accuracy(const PoolState& pool, const Dataset& oracle,
                        bool use_parallel = true);

}  // namespace olala
