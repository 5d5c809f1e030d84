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

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "olala/types.hpp"

namespace olala {

/// Name of the per-annotation attribute that carries the object source.
inline constexpr const char* kSourceAttribute = "olala_source";

/// Reads COCO object-detection annotations. Categories become one-hot
/// distributions, boxes are clipped to their page, and boxes with a
/// non-positive width or height are rejected with the annotation id.
/// Objects keep the annotation order within each page.
Dataset load_coco(const std::filesystem::path& path);
Dataset coco_from_json(const nlohmann::json& doc,
                       const std::string& origin = "<memory>");

/// Writes COCO annotations; the argmax category is exported and the source
/// tag goes into the `olala_source` attribute. Annotation ids are assigned
/// sequentially from 1 in page order.
void export_coco(const Dataset& dataset, const std::filesystem::path& path);
nlohmann::json coco_to_json(const Dataset& dataset);

}  // namespace olala
