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
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "olala/geometry.hpp"

namespace olala {

/// Base class for all errors raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Probability distribution over a dataset's category table.
class CategoryDist {
 public:
  static constexpr double kSumTolerance = 1e-9;

  CategoryDist() = default;
  /// Throws ValidationError unless entries lie in [0, 1] and sum to 1.
  explicit CategoryDist(std::vector<double> probs);

  static CategoryDist one_hot(std::size_t num_categories, std::size_t index);
  static CategoryDist uniform(std::size_t num_categories);
  /// weight * one_hot(index) + (1 - weight) * uniform.
  static CategoryDist peaked(std::size_t num_categories, std::size_t index,
                             double weight);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }

  /// Lowest index among the maximal entries.
  std::size_t argmax() const;
  bool is_one_hot() const;

  friend bool operator==(const CategoryDist&, const CategoryDist&) = default;

 private:
  std::vector<double> probs_;
};

enum class Source : std::uint8_t {
  kGroundTruth,
  kManual,
  kModelUnchanged,
  kModelAuto,
  kRecovered,
};

inline constexpr Source kAllSources[] = {
    Source::kGroundTruth, Source::kManual, Source::kModelUnchanged,
    Source::kModelAuto, Source::kRecovered};

std::string_view to_string(Source s);
/// Parses the wire names "ground-truth", "manual", ... Throws ParseError.
Source source_from_string(std::string_view name);

struct LayoutObject {
  BBox bbox;
  CategoryDist category;
  Source source = Source::kGroundTruth;
  std::optional<double> score;
  /// Detector confidence; 1.0 for human and ground-truth labels.
  double confidence = 1.0;

  friend bool operator==(const LayoutObject&, const LayoutObject&) = default;
};

struct PageAnnotation {
  std::int64_t image_id = 0;
  std::string file_name;
  double width = 0.0;
  double height = 0.0;
  std::vector<LayoutObject> objects;

  friend bool operator==(const PageAnnotation&, const PageAnnotation&) =
      default;
};

/// What the detector and the UI need to know about a page; no labels.
struct PageRef {
  std::int64_t image_id = 0;
  std::string file_name;
  double width = 0.0;
  double height = 0.0;

  static PageRef of(const PageAnnotation& page) {
    return PageRef{page.image_id, page.file_name, page.width, page.height};
  }
};

struct Category {
  std::int64_t id = 0;
  std::string name;

  friend bool operator==(const Category&, const Category&) = default;
};

struct Dataset {
  std::vector<Category> categories;
  std::vector<PageAnnotation> pages;

  std::size_t num_categories() const { return categories.size(); }
  std::size_t num_objects() const;
  /// Position of the category with COCO id `id`, or nullopt.
  std::optional<std::size_t> category_index(std::int64_t id) const;
  const PageAnnotation* find_page(std::int64_t image_id) const;
  PageAnnotation* find_page(std::int64_t image_id);

  /// Checks the unique-id and distribution-length invariants.
  void validate() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

std::vector<BBox> boxes_of(std::span<const LayoutObject> objects);

/// best_match over the boxes of `objects`.
std::optional<Match> best_match(const BBox& query,
                                std::span<const LayoutObject> objects);

}  // namespace olala
