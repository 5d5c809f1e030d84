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
#include "olala/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "olala/rng.hpp"

namespace olala {

double Detector::skill() const {
  return std::numeric_limits<double>::quiet_NaN();
}

void Detector::restore(const Dataset& labeled, std::uint64_t /*updates*/) {
  update(labeled);
}

void SyntheticConfig::validate() const {
  auto unit = [](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw ValidationError(std::string("synthetic detector: ") + name +
                            " must lie in [0, 1]");
    }
  };
  if (!(tau > 0.0)) throw ValidationError("synthetic detector: tau must be > 0");
  unit(sigma, "sigma");
  unit(rho, "rho");
  unit(delta, "delta");
  unit(phi, "phi");
  unit(confidence_threshold, "confidence_threshold");
  if (fixed_skill) unit(*fixed_skill, "fixed_skill");
}

double skill_curve(double n_labeled_objects, double tau) {
  return 1.0 - std::exp(-n_labeled_objects / tau);
}

namespace {

constexpr double kTruncation = 2.0;

/// Moves each edge of `b` by an independent truncated normal whose scale is
/// `scale` times the matching box dimension. A zero scale returns `b`
/// bit-for-bit.
BBox jitter(const BBox& b, double scale, CounterRng& rng) {
  const double dx1 = rng.truncated_normal(scale * b.w, kTruncation);
  const double dx2 = rng.truncated_normal(scale * b.w, kTruncation);
  const double dy1 = rng.truncated_normal(scale * b.h, kTruncation);
  const double dy2 = rng.truncated_normal(scale * b.h, kTruncation);
  if (scale <= 0.0) return b;
  BBox out{b.x + dx1, b.y + dy1, b.w + dx2 - dx1, b.h + dy2 - dy1};
  return out.valid() ? out : b;
}

BBox clamp_or(const BBox& b, const BBox& fallback, const PageRef& page) {
  BBox c = clamp_to_page(b, page.width, page.height);
  if (c.valid()) return c;
  return clamp_to_page(fallback, page.width, page.height);
}

std::uint64_t box_key(const BBox& b) {
  return hash_key({bits_of(b.x), bits_of(b.y), bits_of(b.w), bits_of(b.h)});
}

}  // namespace

SyntheticDetector::SyntheticDetector(Dataset oracle, SyntheticConfig config)
    : oracle_(std::move(oracle)), config_(config) {
  config_.validate();
  for (std::size_t i = 0; i < oracle_.pages.size(); ++i) {
    page_index_.emplace(oracle_.pages[i].image_id, i);
  }
  skill_ = config_.fixed_skill.value_or(0.0);
}

std::size_t SyntheticDetector::num_categories() const {
  return oracle_.num_categories();
}

const PageAnnotation& SyntheticDetector::oracle_page(const PageRef& page) const {
  auto it = page_index_.find(page.image_id);
  if (it == page_index_.end()) {
    throw UnknownPageError("synthetic detector: unknown page " +
                           std::to_string(page.image_id));
  }
  return oracle_.pages[it->second];
}

void SyntheticDetector::update_skill(std::size_t n_labeled_objects) {
  ++epoch_;
  if (config_.fixed_skill) return;
  skill_ = skill_curve(static_cast<double>(n_labeled_objects), config_.tau);
}

void SyntheticDetector::update(const Dataset& labeled) {
  update_skill(labeled.num_objects());
}

void SyntheticDetector::restore(const Dataset& labeled, std::uint64_t updates) {
  update_skill(labeled.num_objects());
  epoch_ = updates;
}

void SyntheticDetector::set_skill(double s) {
  if (!(s >= 0.0 && s <= 1.0)) throw ValidationError("skill must lie in [0, 1]");
  skill_ = s;
}

Prediction SyntheticDetector::detect(const PageRef& ref) const {
  const PageAnnotation& page = oracle_page(ref);
  const std::size_t C = oracle_.num_categories();
  const double s = skill_;
  const double q = 1.0 - s;

  Prediction out;
  for (std::size_t j = 0; j < page.objects.size(); ++j) {
    const LayoutObject& truth = page.objects[j];
    CounterRng rng({config_.seed, static_cast<std::uint64_t>(Stream::kDetect),
                    static_cast<std::uint64_t>(page.image_id), j, epoch_});

    if (rng.bernoulli(q * config_.delta)) continue;

    const BBox box = clamp_or(jitter(truth.bbox, q * config_.sigma, rng),
                              truth.bbox, ref);

    const std::size_t true_class = truth.category.argmax();
    std::size_t predicted = true_class;
    const bool flipped = C > 1 && rng.bernoulli(q * config_.rho);
    if (flipped) {
      predicted = (true_class + 1 + rng.below(C - 1)) % C;
    }
    const double peak = s * (flipped ? 0.5 : 1.0) + q * rng.uniform();

    double confidence = s * iou(box, truth.bbox) + q * rng.uniform();
    confidence = std::clamp(confidence, 1e-6, 1.0);
    const bool duplicate = rng.bernoulli(q * config_.phi);

    if (confidence < config_.confidence_threshold) continue;

    LayoutObject obj;
    obj.bbox = box;
    obj.category = CategoryDist::peaked(C, predicted, peak);
    obj.source = Source::kModelAuto;
    obj.confidence = confidence;
    out.push_back(obj);

    if (duplicate) {
      LayoutObject dup = obj;
      dup.bbox = clamp_or(jitter(truth.bbox, q * config_.sigma, rng),
                          truth.bbox, ref);
      // strictly below the original
      dup.confidence = confidence * (0.5 + 0.5 * rng.uniform());
      if (dup.confidence >= config_.confidence_threshold) out.push_back(dup);
    }
  }
  return out;
}

std::vector<Refined> SyntheticDetector::refine(
    const PageRef& ref, std::span<const BBox> proposals) const {
  if (proposals.empty()) throw ValidationError("refine: empty proposal list");
  const PageAnnotation& page = oracle_page(ref);
  const std::size_t C = oracle_.num_categories();
  const double s = skill_;
  const double q = 1.0 - s;

  std::vector<Refined> out;
  out.reserve(proposals.size());
  for (const BBox& p : proposals) {
    CounterRng rng({config_.seed, static_cast<std::uint64_t>(Stream::kRefine),
                    static_cast<std::uint64_t>(page.image_id), box_key(p),
                    epoch_});
    auto m = best_match(p, std::span<const LayoutObject>(page.objects));
    if (!m) {
      out.push_back({clamp_or(jitter(p, q * config_.sigma, rng), p, ref),
                     CategoryDist::uniform(C)});
      continue;
    }
    const LayoutObject& truth = page.objects[m->index];
    const BBox& g = truth.bbox;
    const BBox blended{s * g.x + q * p.x, s * g.y + q * p.y, s * g.w + q * p.w,
                       s * g.h + q * p.h};
    const BBox box = clamp_or(jitter(blended, q * config_.sigma, rng), g, ref);
    // Evidence weight s * IOU^((1-s)/s): equals s * IOU at s = 1/2 and 1 at
    // s = 1, so a perfect model recognizes any overlapping proposal.
    const double weight = s > 0.0 ? s * std::pow(m->iou, q / s) : 0.0;
    out.push_back({box, CategoryDist::peaked(C, truth.category.argmax(), weight)});
  }
  return out;
}

}  // namespace olala
