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
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "olala/detector.hpp"
#include "olala/types.hpp"

namespace olala {

enum class Divergence { kCrossEntropy, kKl };

/// Floor applied to probabilities before taking logarithms.
inline constexpr double kLogFloor = 1e-12;

struct PerturbConfig {
  /// (alpha, beta): horizontal and vertical shift ratios.
  std::vector<std::pair<double, double>> pairs = {
      {0.08, 0.04}, {0.08, 0.16}, {0.12, 0.04}, {0.12, 0.16}};
  double lambda = 1.0;
  Divergence divergence = Divergence::kCrossEntropy;
  /// Measures position disagreement against the perturbed inputs instead of
  /// the refined outputs. Only meaningful in tests: the result then depends
  /// on (alpha, beta) alone.
  bool position_vs_inputs = false;

  std::size_t num_perturbations() const { return pairs.size() * 4; }
  void validate() const;
};

/// K = 4 * |pairs| copies of `b` shifted toward top-left, top-right,
/// bottom-left and bottom-right, ordered by (pair, direction). Width and
/// height are unchanged.
std::vector<BBox> perturb_boxes(const BBox& b, const PerturbConfig& cfg);

/// Mean of 1 - IOU(b_hat, refined_k). Throws ValidationError when empty.
double position_disagreement(const BBox& b_hat, std::span<const BBox> refined);

/// L(p || q) for the chosen divergence.
double divergence(const CategoryDist& p, const CategoryDist& q, Divergence kind);

/// Mean of L(c_hat || v_k). Throws ValidationError when empty or on a
/// dimension mismatch.
double category_disagreement(const CategoryDist& c_hat,
                             std::span<const CategoryDist> refined,
                             Divergence kind);

/// D = D_p + lambda * D_c from a single refine() call over the K perturbed
/// boxes, which are first clipped to the page.
double perturbation_score(const LayoutObject& obj, const Detector& detector,
                          const PageRef& page, const PerturbConfig& cfg);

/// 1 - (p_max - p_second). Throws ValidationError below two categories.
double marginal_score(const CategoryDist& c_hat);

/// Seeded uniform draw in [0, 1); pure function of its key.
double random_score(std::uint64_t seed, std::int64_t image_id,
                    std::size_t object_index, std::uint64_t round);

/// Arithmetic mean of object scores; 0 for an empty page.
double image_score(std::span<const double> scores);
double image_score(std::span<const LayoutObject> objects);

enum class ScorerKind { kPerturbation, kMarginal, kRandom };

std::string_view to_string(ScorerKind kind);
/// "perturbation" | "marginal" | "random"; throws ParseError.
ScorerKind scorer_from_string(std::string_view name);

/// Object scoring function f used by the loop and the service.
class Scorer {
 public:
  virtual ~Scorer() = default;
  /// One score per prediction, in order.
  virtual std::vector<double> score_page(const PageRef& page,
                                         std::span<const LayoutObject> preds,
                                         const Detector& detector,
                                         std::uint64_t round) const = 0;
  virtual ScorerKind kind() const = 0;
};

std::unique_ptr<Scorer> make_scorer(ScorerKind kind, PerturbConfig cfg,
                                    std::uint64_t seed);

}  // namespace olala
