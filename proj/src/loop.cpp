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
#include "olala/loop.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "olala/rng.hpp"

namespace olala {

std::string_view to_string(Decay d) {
  return d == Decay::kLinear ? "linear" : "exponential";
}

Decay decay_from_string(std::string_view name) {
  if (name == "linear") return Decay::kLinear;
  if (name == "exponential") return Decay::kExponential;
  throw ParseError("unknown decay '" + std::string(name) + "'");
}

void ScheduleConfig::validate() const {
  if (!(r_last >= 0.0 && r_last <= r_initial && r_initial <= 1.0)) {
    throw ValidationError("schedule requires 0 <= r_last <= r_initial <= 1");
  }
  if (total_rounds < 1) throw ValidationError("schedule requires T >= 1");
  if (!(budget_total >= 0.0)) throw ValidationError("budget must be nonnegative");
}

double ScheduleConfig::round_allowance(std::size_t t) const {
  if (std::isinf(budget_total)) return budget_total;
  const double T = static_cast<double>(total_rounds);
  const double per_round = std::floor(budget_total / T);
  if (t + 1 == total_rounds) return budget_total - per_round * (T - 1.0);
  return per_round;
}

double selection_ratio(const ScheduleConfig& cfg, std::size_t t) {
  if (t >= cfg.total_rounds) {
    throw ValidationError("round " + std::to_string(t) + " outside schedule of " +
                          std::to_string(cfg.total_rounds));
  }
  if (cfg.total_rounds == 1) return cfg.r_initial;
  if (t + 1 == cfg.total_rounds) return cfg.r_last;
  const double frac =
      static_cast<double>(t) / static_cast<double>(cfg.total_rounds - 1);
  if (cfg.decay == Decay::kLinear) {
    return cfg.r_initial + (cfg.r_last - cfg.r_initial) * frac;
  }
  if (cfg.r_initial <= 0.0) return 0.0;
  return cfg.r_initial * std::pow(cfg.r_last / cfg.r_initial, frac);
}

std::size_t per_image_quota(double r, std::size_t n_predictions,
                            double remaining_budget) {
  if (!(remaining_budget >= 1.0) || n_predictions == 0) return 0;
  const double wanted = std::ceil(r * static_cast<double>(n_predictions) - 1e-9);
  const auto by_ratio = static_cast<std::size_t>(std::max(0.0, wanted));
  if (remaining_budget >= static_cast<double>(by_ratio)) return by_ratio;
  return static_cast<std::size_t>(std::floor(remaining_budget));
}

Selection select_objects(std::span<const LayoutObject> scored, std::size_t m_i) {
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double sa = scored[a].score.value_or(0.0);
    const double sb = scored[b].score.value_or(0.0);
    if (sa != sb) return sa > sb;
    if (scored[a].confidence != scored[b].confidence) {
      return scored[a].confidence > scored[b].confidence;
    }
    return a < b;
  });
  const std::size_t k = std::min(m_i, scored.size());
  Selection out;
  out.selected.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  out.unselected.assign(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  std::sort(out.unselected.begin(), out.unselected.end());
  return out;
}

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::kImageRandom:
      return "image-random";
    case Mode::kImageMarginal:
      return "image-marginal";
    case Mode::kOlalaRandom:
      return "olala-random";
    case Mode::kOlalaMarginal:
      return "olala-marginal";
    case Mode::kOlalaPerturbation:
      return "olala-perturbation";
  }
  return "unknown";
}

Mode mode_from_string(std::string_view name) {
  if (name == "image-random") return Mode::kImageRandom;
  if (name == "image-marginal") return Mode::kImageMarginal;
  if (name == "olala-random") return Mode::kOlalaRandom;
  if (name == "olala-marginal") return Mode::kOlalaMarginal;
  if (name == "olala-perturbation" || name == "olala") {
    return Mode::kOlalaPerturbation;
  }
  throw ParseError("unknown mode '" + std::string(name) + "'");
}

bool is_image_level(Mode m) {
  return m == Mode::kImageRandom || m == Mode::kImageMarginal;
}

ScorerKind scorer_for(Mode m) {
  switch (m) {
    case Mode::kImageRandom:
    case Mode::kOlalaRandom:
      return ScorerKind::kRandom;
    case Mode::kImageMarginal:
    case Mode::kOlalaMarginal:
      return ScorerKind::kMarginal;
    case Mode::kOlalaPerturbation:
      return ScorerKind::kPerturbation;
  }
  return ScorerKind::kPerturbation;
}

PoolState make_initial_pool(const Dataset& pool, std::size_t seed_pages,
                            std::uint64_t seed) {
  const std::size_t n = pool.pages.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  CounterRng rng({seed, static_cast<std::uint64_t>(Stream::kSeedSet)});
  const std::size_t k = std::min(seed_pages, n);
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rng.below(n - i);
    std::swap(idx[i], idx[j]);
  }
  std::vector<bool> chosen(n, false);
  for (std::size_t i = 0; i < k; ++i) chosen[idx[i]] = true;

  PoolState state;
  state.labeled.categories = pool.categories;
  for (std::size_t i = 0; i < n; ++i) {
    if (chosen[i]) {
      PageAnnotation page = pool.pages[i];
      for (auto& o : page.objects) o.source = Source::kGroundTruth;
      state.labeled.pages.push_back(std::move(page));
    } else {
      state.unlabeled.push_back(PageRef::of(pool.pages[i]));
    }
  }
  return state;
}

SimulatedAnnotator::SimulatedAnnotator(const Dataset& oracle, SimConfig sim,
                                       double zeta)
    : oracle_(oracle), sim_(sim), zeta_(zeta) {
  sim_.validate();
}

const PageAnnotation& SimulatedAnnotator::page_of(const PageRef& page) const {
  const PageAnnotation* p = oracle_.find_page(page.image_id);
  if (!p) {
    throw UnknownPageError("oracle has no page " + std::to_string(page.image_id));
  }
  return *p;
}

SimLabels SimulatedAnnotator::label_selected(
    const PageRef& page, std::span<const LayoutObject> selected,
    bool allow_discount) {
  SimConfig cfg = sim_;
  cfg.allow_discount = sim_.allow_discount && allow_discount;
  return simulate_label(selected, page_of(page).objects, cfg);
}

std::vector<LayoutObject> SimulatedAnnotator::resolve_false_negatives(
    const PageRef& page, std::span<const LayoutObject> combined,
    BudgetLedger& ledger) {
  return olala::resolve_false_negatives(page_of(page).objects, combined, zeta_,
                                        ledger, page.image_id);
}

void LoopConfig::validate() const {
  schedule.validate();
  correction.validate();
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
}

void SourceCounts::add(Source s) {
  switch (s) {
    case Source::kGroundTruth:
      ++ground_truth;
      break;
    case Source::kManual:
      ++manual;
      break;
    case Source::kModelUnchanged:
      ++model_unchanged;
      break;
    case Source::kModelAuto:
      ++model_auto;
      break;
    case Source::kRecovered:
      ++recovered;
      break;
  }
}

namespace {

/// Visit order of the unlabeled pool for one round, as positions into
/// pool.unlabeled. Image-level modes detect and score every page up front,
/// visit pages without predictions first, then by descending image score;
/// the predictions are kept in `cached`.
std::vector<std::size_t> visit_order(
    const PoolState& pool, Detector& detector, const Scorer& scorer,
    const LoopConfig& cfg,
    std::unordered_map<std::size_t, std::pair<Prediction, std::vector<double>>>&
        cached) {
  std::vector<std::size_t> order(pool.unlabeled.size());
  std::iota(order.begin(), order.end(), 0);
  if (!is_image_level(cfg.mode)) return order;
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> priority(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    try {
      Prediction pred = detector.detect(pool.unlabeled[i]);
      std::vector<double> s =
          scorer.score_page(pool.unlabeled[i], pred, detector, pool.round);
      priority[i] = pred.empty() ? kInf : image_score(s);
      cached.emplace(i, std::make_pair(std::move(pred), std::move(s)));
    } catch (const Error&) {
      priority[i] = -kInf;
    }
  }
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return priority[a] > priority[b];
  });
  return order;
}

}  // namespace

RoundReport run_round(PoolState& pool, Detector& detector, const Scorer& scorer,
                      Annotator& annotator, const LoopConfig& cfg) {
  RoundReport report;
  report.round = pool.round;
  report.skill = detector.skill();
  const bool image_level = is_image_level(cfg.mode);
  report.selection_ratio =
      image_level ? 1.0 : selection_ratio(cfg.schedule, pool.round);
  report.ledger = BudgetLedger(cfg.schedule.round_allowance(pool.round), cfg.eta);
  BudgetLedger& ledger = report.ledger;

  std::unordered_map<std::size_t, std::pair<Prediction, std::vector<double>>>
      cached;
  const std::vector<std::size_t> order =
      visit_order(pool, detector, scorer, cfg, cached);

  std::vector<PageAnnotation> added;
  std::unordered_set<std::size_t> done;
  for (std::size_t pos : order) {
    if (!ledger.can_afford_full()) break;
    const PageRef& page = pool.unlabeled[pos];

    Prediction preds;
    std::vector<double> scores;
    try {
      if (auto it = cached.find(pos); it != cached.end()) {
        preds = std::move(it->second.first);
        scores = std::move(it->second.second);
      } else if (is_image_level(cfg.mode)) {
        throw Error("detection failed earlier this round");
      } else {
        preds = detector.detect(page);
        scores = scorer.score_page(page, preds, detector, pool.round);
      }
    } catch (const Error&) {
      ++report.pages_failed;
      continue;
    }
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i].score = scores[i];

    const std::size_t quota =
        per_image_quota(report.selection_ratio, preds.size(), ledger.remaining());
    const Selection sel = select_objects(preds, quota);

    std::vector<LayoutObject> selected;
    selected.reserve(sel.selected.size());
    for (std::size_t i : sel.selected) selected.push_back(preds[i]);
    SimLabels human = annotator.label_selected(page, selected, !image_level);
    for (std::size_t k = 0; k < human.charges.size(); ++k) {
      ledger.charge(page.image_id, static_cast<std::int64_t>(sel.selected[k]),
                    human.charges[k]);
    }

    std::vector<LayoutObject> unselected;
    unselected.reserve(sel.unselected.size());
    for (std::size_t i : sel.unselected) {
      LayoutObject o = preds[i];
      o.source = Source::kModelAuto;
      unselected.push_back(std::move(o));
    }
    if (cfg.correction.remove_duplicates) {
      unselected = remove_duplicates(unselected, human.labels, cfg.correction.xi);
    }

    std::vector<LayoutObject> recovered;
    if (cfg.correction.recover_missing) {
      const auto combined = merge_labels(human.labels, unselected, {});
      recovered = annotator.resolve_false_negatives(page, combined, ledger);
    }

    PageAnnotation labeled;
    labeled.image_id = page.image_id;
    labeled.file_name = page.file_name;
    labeled.width = page.width;
    labeled.height = page.height;
    labeled.objects = merge_labels(human.labels, unselected, recovered);
    for (const auto& o : labeled.objects) report.sources.add(o.source);
    report.objects_added += labeled.objects.size();
    added.push_back(std::move(labeled));
    done.insert(pos);
  }

  std::vector<PageRef> remaining;
  remaining.reserve(pool.unlabeled.size() - done.size());
  for (std::size_t i = 0; i < pool.unlabeled.size(); ++i) {
    if (!done.count(i)) remaining.push_back(pool.unlabeled[i]);
  }
  pool.unlabeled = std::move(remaining);
  report.pages_labeled = added.size();
  for (auto& p : added) pool.labeled.pages.push_back(std::move(p));
  report.cumulative_pages = pool.labeled.pages.size();
  return report;
}

Dataset pool_snapshot(const PoolState& pool, const Dataset& order) {
  Dataset out;
  out.categories = order.categories;
  out.pages.reserve(order.pages.size());
  for (const auto& ref : order.pages) {
    const PageAnnotation* mine = pool.labeled.find_page(ref.image_id);
    if (mine) {
      out.pages.push_back(*mine);
    } else {
      PageAnnotation empty;
      empty.image_id = ref.image_id;
      empty.file_name = ref.file_name;
      empty.width = ref.width;
      empty.height = ref.height;
      out.pages.push_back(std::move(empty));
    }
  }
  return out;
}

double created_accuracy(const PoolState& pool, const Dataset& oracle,
                        bool use_parallel) {
  // oracle page order, so the tie ranking does not depend on visit order
  Dataset created, truth;
  created.categories = pool.labeled.categories;
  truth.categories = oracle.categories;
  for (const auto& page : oracle.pages) {
    if (const PageAnnotation* mine = pool.labeled.find_page(page.image_id)) {
      created.pages.push_back(*mine);
      truth.pages.push_back(page);
    }
  }
  if (created.pages.size() != pool.labeled.pages.size()) {
    throw ValidationError("oracle lacks some labeled pages");
  }
  return dataset_accuracy(created, truth, use_parallel).ap;
}

FinalReport run(PoolState& pool, Detector& detector, const Scorer& scorer,
                Annotator& annotator, const LoopConfig& cfg,
                const Dataset* oracle) {
  cfg.validate();
  FinalReport out;
  out.mode = cfg.mode;
  const std::size_t seed_pages = pool.labeled.pages.size();
  const std::size_t seed_objects = pool.labeled.num_objects();

  for (std::size_t t = 0; t < cfg.schedule.total_rounds; ++t) {
    pool.round = t;
    detector.update(pool.labeled);
    RoundReport r = run_round(pool, detector, scorer, annotator, cfg);
    if (oracle) {
      r.pool_ap = dataset_accuracy(pool_snapshot(pool, *oracle), *oracle,
                                   cfg.parallel).ap;
      r.created_ap = created_accuracy(pool, *oracle, cfg.parallel);
    }
    out.total_spent += r.ledger.spent();
    out.rounds.push_back(std::move(r));
  }
  pool.round = cfg.schedule.total_rounds;
  detector.update(pool.labeled);

  out.final_skill = detector.skill();
  out.labeled_images = pool.labeled.pages.size() - seed_pages;
  out.labeled_objects = pool.labeled.num_objects() - seed_objects;
  out.breakdown = source_breakdown(pool.labeled);
  if (!out.rounds.empty()) {
    out.pool_ap = out.rounds.back().pool_ap;
    out.created_ap = out.rounds.back().created_ap;
  }
  return out;
}

}  // namespace olala
