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
#include "olala/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "olala/kernels.hpp"
#include "olala/rng.hpp"

namespace olala {

void PerturbConfig::validate() const {
  if (pairs.empty()) throw ValidationError("perturbation needs at least one pair");
  for (const auto& [a, b] : pairs) {
    if (!(a >= 0.0 && b >= 0.0)) {
      throw ValidationError("perturbation ratios must be nonnegative");
    }
  }
  if (!(lambda >= 0.0)) throw ValidationError("lambda must be nonnegative");
}

std::vector<BBox> perturb_boxes(const BBox& b, const PerturbConfig& cfg) {
  // top-left, top-right, bottom-left, bottom-right
  static constexpr int kSigns[4][2] = {{-1, -1}, {1, -1}, {-1, 1}, {1, 1}};
  std::vector<BBox> out;
  out.reserve(cfg.num_perturbations());
  for (const auto& [alpha, beta] : cfg.pairs) {
    for (const auto& sign : kSigns) {
      out.push_back(BBox{b.x + sign[0] * alpha * b.w, b.y + sign[1] * beta * b.h,
                         b.w, b.h});
    }
  }
  return out;
}

double position_disagreement(const BBox& b_hat, std::span<const BBox> refined) {
  if (refined.empty()) throw ValidationError("position_disagreement: no boxes");
  double sum = 0.0;
  for (const auto& q : refined) sum += 1.0 - iou(b_hat, q);
  return sum / static_cast<double>(refined.size());
}

double divergence(const CategoryDist& p, const CategoryDist& q,
                  Divergence kind) {
  if (p.size() != q.size()) {
    throw ValidationError("divergence: distributions differ in length");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] <= 0.0) continue;
    const double log_q = std::log(std::max(q[i], kLogFloor));
    if (kind == Divergence::kCrossEntropy) {
      sum -= p[i] * log_q;
    } else {
      sum += p[i] * (std::log(p[i]) - log_q);
    }
  }
  // KL is nonnegative; clip rounding noise
  return kind == Divergence::kKl ? std::max(0.0, sum) : sum;
}

double category_disagreement(const CategoryDist& c_hat,
                             std::span<const CategoryDist> refined,
                             Divergence kind) {
  if (refined.empty()) throw ValidationError("category_disagreement: no dists");
  double sum = 0.0;
  for (const auto& v : refined) sum += divergence(c_hat, v, kind);
  return sum / static_cast<double>(refined.size());
}

double perturbation_score(const LayoutObject& obj, const Detector& detector,
                          const PageRef& page, const PerturbConfig& cfg) {
  std::vector<BBox> proposals = perturb_boxes(obj.bbox, cfg);
  for (auto& p : proposals) {
    BBox c = clamp_to_page(p, page.width, page.height);
    p = c.valid() ? c : clamp_to_page(obj.bbox, page.width, page.height);
  }
  const std::vector<Refined> refined = detector.refine(page, proposals);
  if (refined.size() != proposals.size()) {
    throw Error("detector returned a misaligned refine result");
  }

  std::vector<BBox> boxes;
  std::vector<CategoryDist> dists;
  boxes.reserve(refined.size());
  dists.reserve(refined.size());
  for (const auto& r : refined) {
    boxes.push_back(r.box);
    dists.push_back(r.dist);
  }
  const double dp = cfg.position_vs_inputs
                        ? position_disagreement(obj.bbox, proposals)
                        : position_disagreement(obj.bbox, boxes);
  const double dc = category_disagreement(obj.category, dists, cfg.divergence);
  return dp + cfg.lambda * dc;
}

double marginal_score(const CategoryDist& c_hat) {
  if (c_hat.size() < 2) {
    throw ValidationError("marginal score needs at least two categories");
  }
  double first = -1.0;
  double second = -1.0;
  for (double p : c_hat.probs()) {
    if (p > first) {
      second = first;
      first = p;
    } else if (p > second) {
      second = p;
    }
  }
  return 1.0 - (first - second);
}

double random_score(std::uint64_t seed, std::int64_t image_id,
                    std::size_t object_index, std::uint64_t round) {
  CounterRng rng({seed, static_cast<std::uint64_t>(Stream::kRandomScore),
                  static_cast<std::uint64_t>(image_id), object_index, round});
  return rng.uniform();
}

double image_score(std::span<const double> scores) {
  if (scores.empty()) return 0.0;
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

double image_score(std::span<const LayoutObject> objects) {
  std::vector<double> scores;
  scores.reserve(objects.size());
  for (const auto& o : objects) scores.push_back(o.score.value_or(0.0));
  return image_score(scores);
}

std::string_view to_string(ScorerKind kind) {
  switch (kind) {
    case ScorerKind::kPerturbation:
      return "perturbation";
    case ScorerKind::kMarginal:
      return "marginal";
    case ScorerKind::kRandom:
      return "random";
  }
  return "unknown";
}

ScorerKind scorer_from_string(std::string_view name) {
  if (name == "perturbation") return ScorerKind::kPerturbation;
  if (name == "marginal") return ScorerKind::kMarginal;
  if (name == "random") return ScorerKind::kRandom;
  throw ParseError("unknown scorer '" + std::string(name) + "'");
}

namespace {

class PerturbationScorer final : public Scorer {
 public:
  explicit PerturbationScorer(PerturbConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
  }
  std::vector<double> score_page(const PageRef& page,
                                 std::span<const LayoutObject> preds,
                                 const Detector& detector,
                                 std::uint64_t) const override {
    if (detector.concurrent_safe()) {
      return kernels::parallel::perturbation_scores(preds, detector, page, cfg_);
    }
    return kernels::serial::perturbation_scores(preds, detector, page, cfg_);
  }
  ScorerKind kind() const override { return ScorerKind::kPerturbation; }

 private:
  PerturbConfig cfg_;
};

class MarginalScorer final : public Scorer {
 public:
  std::vector<double> score_page(const PageRef&,
                                 std::span<const LayoutObject> preds,
                                 const Detector&,
                                 std::uint64_t) const override {
    std::vector<double> out;
    out.reserve(preds.size());
    for (const auto& p : preds) out.push_back(marginal_score(p.category));
    return out;
  }
  ScorerKind kind() const override { return ScorerKind::kMarginal; }
};

class RandomScorer final : public Scorer {
 public:
  explicit RandomScorer(std::uint64_t seed) : seed_(seed) {}
  std::vector<double> score_page(const PageRef& page,
                                 std::span<const LayoutObject> preds,
                                 const Detector&,
                                 std::uint64_t round) const override {
    std::vector<double> out;
    out.reserve(preds.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
      out.push_back(random_score(seed_, page.image_id, i, round));
    }
    return out;
  }
  ScorerKind kind() const override { return ScorerKind::kRandom; }

 private:
  std::uint64_t seed_;
};

}  // namespace

std::unique_ptr<Scorer> make_scorer(ScorerKind kind, PerturbConfig cfg,
                                    std::uint64_t seed) {
  switch (kind) {
    case ScorerKind::kPerturbation:
      return std::make_unique<PerturbationScorer>(std::move(cfg));
    case ScorerKind::kMarginal:
      return std::make_unique<MarginalScorer>();
    case ScorerKind::kRandom:
      return std::make_unique<RandomScorer>(seed);
  }
  throw ValidationError("unknown scorer kind");
}

}  // namespace olala
