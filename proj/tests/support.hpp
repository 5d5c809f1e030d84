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

#include <unistd.h>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "olala/geometry.hpp"
#include "olala/rng.hpp"
#include "olala/types.hpp"

namespace olala::testing {

/// Cells of the unit grid covered by an integer-coordinate box.
inline long cells(const BBox& b) { return static_cast<long>(b.w) * static_cast<long>(b.h); }

/// Counts unit cells inside both boxes by visiting every cell of the first.
inline long raster_intersection(const BBox& a, const BBox& b) {
  long n = 0;
  for (long y = static_cast<long>(a.y); y < static_cast<long>(a.bottom()); ++y) {
    for (long x = static_cast<long>(a.x); x < static_cast<long>(a.right()); ++x) {
      if (x >= b.x && x < b.right() && y >= b.y && y < b.bottom()) ++n;
    }
  }
  return n;
}

inline double raster_iou(const BBox& a, const BBox& b) {
  const long i = raster_intersection(a, b);
  return static_cast<double>(i) / static_cast<double>(cells(a) + cells(b) - i);
}

inline double raster_overlap(const BBox& a, const BBox& b) {
  const long i = raster_intersection(a, b);
  return static_cast<double>(i) / static_cast<double>(std::min(cells(a), cells(b)));
}

inline BBox random_int_box(CounterRng& rng, int extent, int max_side) {
  const auto w = 1 + static_cast<double>(rng.below(static_cast<std::uint64_t>(max_side)));
  const auto h = 1 + static_cast<double>(rng.below(static_cast<std::uint64_t>(max_side)));
  const auto x = static_cast<double>(rng.below(static_cast<std::uint64_t>(extent)));
  const auto y = static_cast<double>(rng.below(static_cast<std::uint64_t>(extent)));
  return {x, y, w, h};
}

inline LayoutObject object(const BBox& b, std::size_t num_categories, std::size_t category,
                           Source source = Source::kGroundTruth) {
  LayoutObject o;
  o.bbox = b;
  o.category = CategoryDist::one_hot(num_categories, category);
  o.source = source;
  return o;
}

inline std::vector<Category> categories(std::size_t n) {
  std::vector<Category> out;
  for (std::size_t c = 0; c < n; ++c) {
    out.push_back({static_cast<std::int64_t>(c + 1), "c" + std::to_string(c + 1)});
  }
  return out;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir() {
    std::string tmpl = (std::filesystem::temp_directory_path() / "olala-test-XXXXXX").string();
    path_ = ::mkdtemp(tmpl.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace olala::testing
