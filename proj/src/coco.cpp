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
#include "olala/coco.hpp"

#include <algorithm>
#include <fstream>
#include <unordered_map>

namespace olala {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  return *it;
}

double number(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number()) {
    throw ParseError(where + ": field '" + key + "' is not a number");
  }
  return v.get<double>();
}

std::int64_t integer(const json& obj, const char* key,
                     const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_number_integer()) {
    throw ParseError(where + ": field '" + key + "' is not an integer");
  }
  return v.get<std::int64_t>();
}

const json& array_field(const json& doc, const char* key,
                        const std::string& origin) {
  auto it = doc.find(key);
  if (it == doc.end() || !it->is_array()) {
    throw ParseError(origin + ": '" + key + "' must be an array");
  }
  return *it;
}

}  // namespace

Dataset coco_from_json(const json& doc, const std::string& origin) {
  if (!doc.is_object()) throw ParseError(origin + ": top level is not an object");

  Dataset ds;
  const json& cats = array_field(doc, "categories", origin);
  for (std::size_t i = 0; i < cats.size(); ++i) {
    const std::string where = origin + ": categories[" + std::to_string(i) + "]";
    Category c;
    c.id = integer(cats[i], "id", where);
    c.name = cats[i].value("name", std::string());
    if (ds.category_index(c.id)) {
      throw ParseError(where + ": duplicate category id " + std::to_string(c.id));
    }
    ds.categories.push_back(std::move(c));
  }

  std::unordered_map<std::int64_t, std::size_t> page_of;
  const json& images = array_field(doc, "images", origin);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const std::string where = origin + ": images[" + std::to_string(i) + "]";
    PageAnnotation page;
    page.image_id = integer(images[i], "id", where);
    page.width = number(images[i], "width", where);
    page.height = number(images[i], "height", where);
    page.file_name = images[i].value("file_name", std::string());
    if (!(page.width > 0.0 && page.height > 0.0)) {
      throw ParseError(where + ": non-positive page size");
    }
    if (!page_of.emplace(page.image_id, ds.pages.size()).second) {
      throw ParseError(where + ": duplicate image id " +
                       std::to_string(page.image_id));
    }
    ds.pages.push_back(std::move(page));
  }

  auto anns_it = doc.find("annotations");
  if (anns_it == doc.end()) return ds;
  if (!anns_it->is_array()) {
    throw ParseError(origin + ": 'annotations' must be an array");
  }
  const json& anns = *anns_it;
  const std::size_t num_categories = ds.categories.size();
  for (std::size_t i = 0; i < anns.size(); ++i) {
    const json& a = anns[i];
    std::string where = origin + ": annotations[" + std::to_string(i) + "]";
    if (a.contains("id")) {
      where += " (id " + a["id"].dump() + ")";
    }
    const std::int64_t image_id = integer(a, "image_id", where);
    const std::int64_t category_id = integer(a, "category_id", where);
    const json& bbox = require(a, "bbox", where);
    if (!bbox.is_array() || bbox.size() != 4 ||
        !std::all_of(bbox.begin(), bbox.end(),
                     [](const json& v) { return v.is_number(); })) {
      throw ParseError(where + ": bbox must be [x, y, w, h]");
    }

    auto page_it = page_of.find(image_id);
    if (page_it == page_of.end()) {
      throw ParseError(where + ": unknown image id " + std::to_string(image_id));
    }
    auto cat = ds.category_index(category_id);
    if (!cat) {
      throw ParseError(where + ": unknown category id " +
                       std::to_string(category_id));
    }
    PageAnnotation& page = ds.pages[page_it->second];

    BBox raw{bbox[0].get<double>(), bbox[1].get<double>(),
             bbox[2].get<double>(), bbox[3].get<double>()};
    if (!raw.valid()) {
      throw ParseError(where + ": degenerate or non-finite bbox");
    }
    BBox clamped = clamp_to_page(raw, page.width, page.height);
    if (!clamped.valid()) {
      throw ParseError(where + ": bbox lies outside its page");
    }

    LayoutObject obj;
    obj.bbox = clamped;
    obj.category = CategoryDist::one_hot(num_categories, *cat);
    if (auto s = a.find(kSourceAttribute); s != a.end()) {
      if (!s->is_string()) throw ParseError(where + ": source tag must be a string");
      try {
        obj.source = source_from_string(s->get<std::string>());
      } catch (const ParseError& e) {
        throw ParseError(where + ": " + e.what());
      }
    }
    if (auto s = a.find("score"); s != a.end() && s->is_number()) {
      obj.score = s->get<double>();
    }
    page.objects.push_back(std::move(obj));
  }
  return ds;
}

Dataset load_coco(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path.string() + ": cannot open file");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  return coco_from_json(doc, path.string());
}

json coco_to_json(const Dataset& dataset) {
  json images = json::array();
  json annotations = json::array();
  json categories = json::array();
  for (const auto& c : dataset.categories) {
    categories.push_back({{"id", c.id}, {"name", c.name}});
  }
  std::int64_t next_id = 1;
  for (const auto& page : dataset.pages) {
    images.push_back({{"id", page.image_id},
                      {"width", page.width},
                      {"height", page.height},
                      {"file_name", page.file_name}});
    for (const auto& obj : page.objects) {
      json a = {{"id", next_id++},
                {"image_id", page.image_id},
                {"category_id",
                 dataset.categories.at(obj.category.argmax()).id},
                {"bbox", {obj.bbox.x, obj.bbox.y, obj.bbox.w, obj.bbox.h}},
                {"area", obj.bbox.area()},
                {"iscrowd", 0},
                {kSourceAttribute, std::string(to_string(obj.source))}};
      if (obj.score) a["score"] = *obj.score;
      annotations.push_back(std::move(a));
    }
  }
  return json{{"images", std::move(images)},
              {"annotations", std::move(annotations)},
              {"categories", std::move(categories)}};
}

void export_coco(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out << coco_to_json(dataset).dump(1) << '\n';
  if (!out) throw Error(path.string() + ": write failed");
}

}  // namespace olala
