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
#include "olala/kernels.hpp"

#include <exception>
#include <mutex>

#include "olala/detector.hpp"
#include "olala/scoring.hpp"

namespace olala::kernels {

namespace {

template <typename F>
Matrix pairwise_serial(std::span<const BBox> a, std::span<const BBox> b, F f) {
  Matrix m{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      m.values[i * b.size() + j] = f(a[i], b[j]);
    }
  }
  return m;
}

template <typename F>
Matrix pairwise_omp(std::span<const BBox> a, std::span<const BBox> b, F f) {
  Matrix m{a.size(), b.size(), std::vector<double>(a.size() * b.size())};
  const auto rows = static_cast<std::int64_t>(a.size());
  const std::size_t cols = b.size();
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const auto i = static_cast<std::size_t>(r);
    double* row = m.values.data() + i * cols;
    for (std::size_t j = 0; j < cols; ++j) row[j] = f(a[i], b[j]);
  }
  return m;
}

/// Collects the first exception thrown inside an OpenMP region.
class ErrorSlot {
 public:
  void capture() {
    std::lock_guard<std::mutex> lock(mu_);
    if (!error_) error_ = std::current_exception();
  }
  void rethrow() const {
    if (error_) std::rethrow_exception(error_);
  }

 private:
  std::mutex mu_;
  std::exception_ptr error_;
};

}  // namespace

PageMatches match_page(const PagePair& page, std::span<const double> thresholds,
                       std::size_t num_categories) {
  const std::size_t T = thresholds.size();
  PageMatches out;
  out.tp.resize(num_categories * T);
  out.num_gt.assign(num_categories, 0);

  std::vector<std::vector<std::size_t>> gt_of(num_categories);
  for (std::size_t g = 0; g < page.oracle.size(); ++g) {
    const std::size_t c = page.oracle[g].category.argmax();
    gt_of[c].push_back(g);
    ++out.num_gt[c];
  }
  std::vector<std::vector<std::size_t>> det_of(num_categories);
  for (std::size_t d = 0; d < page.created.size(); ++d) {
    det_of[page.created[d].category.argmax()].push_back(d);
  }

  for (std::size_t c = 0; c < num_categories; ++c) {
    const auto& dets = det_of[c];
    const auto& gts = gt_of[c];
    std::vector<double> ious(dets.size() * gts.size());
    for (std::size_t i = 0; i < dets.size(); ++i) {
      for (std::size_t j = 0; j < gts.size(); ++j) {
        ious[i * gts.size() + j] =
            iou(page.created[dets[i]].bbox, page.oracle[gts[j]].bbox);
      }
    }
    for (std::size_t t = 0; t < T; ++t) {
      auto& flags = out.tp[c * T + t];
      flags.assign(dets.size(), 0);
      std::vector<bool> taken(gts.size(), false);
      for (std::size_t i = 0; i < dets.size(); ++i) {
        double best = thresholds[t];
        std::ptrdiff_t pick = -1;
        for (std::size_t j = 0; j < gts.size(); ++j) {
          if (taken[j]) continue;
          const double v = ious[i * gts.size() + j];
          if (v >= best && (pick < 0 || v > best)) {
            best = v;
            pick = static_cast<std::ptrdiff_t>(j);
          }
        }
        if (pick >= 0) {
          taken[static_cast<std::size_t>(pick)] = true;
          flags[i] = 1;
        }
      }
    }
  }
  return out;
}

namespace serial {

Matrix pairwise_iou(std::span<const BBox> a, std::span<const BBox> b) {
  return pairwise_serial(a, b, [](const BBox& x, const BBox& y) { return iou(x, y); });
}

Matrix pairwise_overlap(std::span<const BBox> a, std::span<const BBox> b) {
  return pairwise_serial(
      a, b, [](const BBox& x, const BBox& y) { return overlap_coefficient(x, y); });
}

std::vector<double> perturbation_scores(std::span<const LayoutObject> preds,
                                        const Detector& detector,
                                        const PageRef& page,
                                        const PerturbConfig& cfg) {
  std::vector<double> out;
  out.reserve(preds.size());
  for (const auto& p : preds) {
    out.push_back(perturbation_score(p, detector, page, cfg));
  }
  return out;
}

std::vector<PageMatches> match_pages(std::span<const PagePair> pages,
                                     std::span<const double> thresholds,
                                     std::size_t num_categories) {
  std::vector<PageMatches> out;
  out.reserve(pages.size());
  for (const auto& p : pages) {
    out.push_back(match_page(p, thresholds, num_categories));
  }
  return out;
}

}  // namespace serial

namespace parallel {

Matrix pairwise_iou(std::span<const BBox> a, std::span<const BBox> b) {
  return pairwise_omp(a, b, [](const BBox& x, const BBox& y) { return iou(x, y); });
}

Matrix pairwise_overlap(std::span<const BBox> a, std::span<const BBox> b) {
  return pairwise_omp(
      a, b, [](const BBox& x, const BBox& y) { return overlap_coefficient(x, y); });
}

std::vector<double> perturbation_scores(std::span<const LayoutObject> preds,
                                        const Detector& detector,
                                        const PageRef& page,
                                        const PerturbConfig& cfg) {
  std::vector<double> out(preds.size(), 0.0);
  ErrorSlot error;
  const auto n = static_cast<std::int64_t>(preds.size());
#pragma omp parallel for schedule(dynamic, 4)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto k = static_cast<std::size_t>(i);
      out[k] = perturbation_score(preds[k], detector, page, cfg);
    } catch (...) {
      error.capture();
    }
  }
  error.rethrow();
  return out;
}

std::vector<PageMatches> match_pages(std::span<const PagePair> pages,
                                     std::span<const double> thresholds,
                                     std::size_t num_categories) {
  std::vector<PageMatches> out(pages.size());
  ErrorSlot error;
  const auto n = static_cast<std::int64_t>(pages.size());
#pragma omp parallel for schedule(dynamic, 8)
  for (std::int64_t i = 0; i < n; ++i) {
    try {
      const auto k = static_cast<std::size_t>(i);
      out[k] = match_page(pages[k], thresholds, num_categories);
    } catch (...) {
      error.capture();
    }
  }
  error.rethrow();
  return out;
}

}  // namespace parallel
}  // namespace olala::kernels
