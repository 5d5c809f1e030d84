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
#include "olala/session.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "olala/coco.hpp"
#include "olala/correction.hpp"
#include "olala/log.hpp"

namespace olala {

using nlohmann::json;

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::kIdle:
      return "idle";
    case Phase::kServingRound:
      return "serving-round";
    case Phase::kAwaitingRetrain:
      return "awaiting-retrain";
    case Phase::kFinished:
      return "finished";
  }
  return "unknown";
}

Phase phase_from_string(std::string_view name) {
  if (name == "idle") return Phase::kIdle;
  if (name == "serving-round") return Phase::kServingRound;
  if (name == "awaiting-retrain") return Phase::kAwaitingRetrain;
  if (name == "finished") return Phase::kFinished;
  throw ParseError("unknown phase '" + std::string(name) + "'");
}

std::vector<double> score_quartiles(std::vector<double> scores) {
  if (scores.empty()) return {};
  std::sort(scores.begin(), scores.end());
  const auto n = static_cast<double>(scores.size() - 1);
  std::vector<double> out;
  for (double p : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    const double pos = p * n;
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, scores.size() - 1);
    out.push_back(scores[lo] + (scores[hi] - scores[lo]) * (pos - std::floor(pos)));
  }
  return out;
}

EventLog::EventLog(std::filesystem::path path) : path_(std::move(path)) {}

void EventLog::append(const json& event) {
  std::ofstream out(path_, std::ios::app | std::ios::binary);
  out << event.dump() << '\n';
  out.flush();
  if (!out) throw Error("cannot append to event log " + path_.string());
}

std::vector<json> EventLog::read(const std::filesystem::path& path,
                                 std::uintmax_t* intact_bytes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read event log " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t line_no = 0;
  std::uintmax_t offset = 0;
  std::uintmax_t intact = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const bool terminated = !in.eof();
    offset += line.size() + (terminated ? 1 : 0);
    if (line.empty()) {
      intact = offset;
      continue;
    }
    try {
      out.push_back(json::parse(line));
      intact = offset;
    } catch (const json::exception&) {
      // a torn final line from a crash mid-write is dropped
      if (!terminated || in.peek() == std::char_traits<char>::eof()) {
        log::warn("{}:{}: dropping incomplete trailing record", path.string(), line_no);
        break;
      }
      throw ParseError(path.string() + ":" + std::to_string(line_no) +
                       ": malformed event record");
    }
  }
  if (intact_bytes) *intact_bytes = intact;
  return out;
}

void EventLog::repair(const std::filesystem::path& path) {
  std::uintmax_t intact = 0;
  read(path, &intact);
  if (std::filesystem::file_size(path) != intact) {
    std::filesystem::resize_file(path, intact);
  }
  if (intact == 0) return;
  std::ifstream in(path, std::ios::binary);
  in.seekg(-1, std::ios::end);
  if (in.get() != '\n') {
    in.close();
    std::ofstream(path, std::ios::app | std::ios::binary) << '\n';
  }
}

namespace {

constexpr std::uint64_t kSnapshotEvery = 32;

json box_json(const BBox& b) { return json::array({b.x, b.y, b.w, b.h}); }

BBox box_from(const json& j) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(),
          j.at(3).get<double>()};
}

json object_json(const LayoutObject& o) {
  json j = {{"bbox", box_json(o.bbox)},
            {"probs", o.category.probs()},
            {"source", to_string(o.source)},
            {"confidence", o.confidence}};
  if (o.score) j["score"] = *o.score;
  return j;
}

LayoutObject object_from(const json& j) {
  LayoutObject o;
  o.bbox = box_from(j.at("bbox"));
  o.category = CategoryDist(j.at("probs").get<std::vector<double>>());
  o.source = source_from_string(j.at("source").get<std::string>());
  o.confidence = j.at("confidence").get<double>();
  if (j.contains("score")) o.score = j.at("score").get<double>();
  return o;
}

json page_ref_json(const PageRef& p) {
  return {{"image_id", p.image_id},
          {"file_name", p.file_name},
          {"width", p.width},
          {"height", p.height}};
}

PageRef page_ref_from(const json& j) {
  return {j.at("image_id").get<std::int64_t>(), j.at("file_name").get<std::string>(),
          j.at("width").get<double>(), j.at("height").get<double>()};
}

json page_json(const PageAnnotation& p) {
  json j = page_ref_json(PageRef::of(p));
  j["objects"] = json::array();
  for (const auto& o : p.objects) j["objects"].push_back(object_json(o));
  return j;
}

PageAnnotation page_from(const json& j) {
  const PageRef r = page_ref_from(j);
  PageAnnotation p{r.image_id, r.file_name, r.width, r.height, {}};
  for (const auto& o : j.at("objects")) p.objects.push_back(object_from(o));
  return p;
}

json metrics_json(const RoundMetrics& m) {
  return {{"round", m.round},
          {"selection_ratio", m.selection_ratio},
          {"skill", std::isnan(m.skill) ? json(nullptr) : json(m.skill)},
          {"allowance", std::isinf(m.allowance) ? json("inf") : json(m.allowance)},
          {"spent", m.spent},
          {"pages_labeled", m.pages_labeled},
          {"pages_skipped", m.pages_skipped},
          {"charges",
           {{"full", m.full},
            {"discounted", m.discounted},
            {"recovered", m.recovered_charges}}},
          {"sources",
           {{"ground-truth", m.sources.ground_truth},
            {"manual", m.sources.manual},
            {"model-auto", m.sources.model_auto},
            {"model-unchanged", m.sources.model_unchanged},
            {"recovered", m.sources.recovered}}}};
}

double number_or_inf(const json& j) {
  if (j.is_string() && j.get<std::string>() == "inf") {
    return std::numeric_limits<double>::infinity();
  }
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

RoundMetrics metrics_from(const json& j) {
  RoundMetrics m;
  m.round = j.at("round").get<std::size_t>();
  m.selection_ratio = j.at("selection_ratio").get<double>();
  m.skill = number_or_inf(j.at("skill"));
  m.allowance = number_or_inf(j.at("allowance"));
  m.spent = j.at("spent").get<double>();
  m.pages_labeled = j.at("pages_labeled").get<std::size_t>();
  m.pages_skipped = j.at("pages_skipped").get<std::size_t>();
  const auto& c = j.at("charges");
  m.full = c.at("full").get<std::size_t>();
  m.discounted = c.at("discounted").get<std::size_t>();
  m.recovered_charges = c.at("recovered").get<std::size_t>();
  const auto& s = j.at("sources");
  m.sources.ground_truth = s.at("ground-truth").get<std::size_t>();
  m.sources.manual = s.at("manual").get<std::size_t>();
  m.sources.model_auto = s.at("model-auto").get<std::size_t>();
  m.sources.model_unchanged = s.at("model-unchanged").get<std::size_t>();
  m.sources.recovered = s.at("recovered").get<std::size_t>();
  return m;
}

/// Rebuilds a task from its public payload.
Task task_from(const json& payload) {
  Task t;
  t.id = payload.at("task_id").get<std::string>();
  t.round = payload.at("round").get<std::size_t>();
  t.page = page_ref_from(payload.at("image"));
  for (const auto& o : payload.at("objects")) {
    LayoutObject obj;
    obj.bbox = box_from(o.at("bbox"));
    obj.category = CategoryDist(o.at("scores").get<std::vector<double>>());
    obj.source = Source::kModelAuto;
    obj.confidence = o.at("confidence").get<double>();
    obj.score = o.at("score").get<double>();
    t.predictions.push_back(std::move(obj));
  }
  t.selected = payload.at("selected").get<std::vector<std::size_t>>();
  t.payload = payload;
  return t;
}

ServiceError unprocessable(const std::string& code, const std::string& message) {
  return ServiceError(422, code, message);
}

}  // namespace

void Session::init(const std::string& id, const RunConfig& cfg,
                   const std::filesystem::path& dir) {
  id_ = id;
  cfg_ = cfg;
  dir_ = dir;
  try {
    cfg_.validate();
    mode_ = cfg_.modes.front();
    Dataset pool_set;
    if (!cfg_.pool.empty()) {
      pool_set = load_coco(cfg_.pool);
      pool_.labeled.categories = pool_set.categories;
      for (auto& page : pool_set.pages) {
        if (page.objects.empty()) {
          pool_.unlabeled.push_back(PageRef::of(page));
        } else {
          for (auto& o : page.objects) o.source = Source::kGroundTruth;
          pool_.labeled.pages.push_back(std::move(page));
        }
      }
    }
    if (cfg_.detector == DetectorKind::kSynthetic) {
      oracle_ = cfg_.load_oracle();
      if (cfg_.pool.empty()) {
        pool_ = make_initial_pool(oracle_, cfg_.seed_pages, cfg_.loop.seed);
      } else if (oracle_.num_categories() != pool_.labeled.num_categories()) {
        throw ValidationError("pool and oracle category tables differ");
      }
      detector_ = make_detector(cfg_, oracle_);
    } else {
      if (cfg_.pool.empty()) {
        throw ValidationError("sessions with an external detector need a pool file");
      }
      RunConfig ext = cfg_;
      ext.out_dir = dir_;
      detector_ = make_detector(ext, pool_set);
    }
    categories_ = pool_.labeled.categories;
    scorer_ = make_scorer(cfg_.scorer_for_mode(mode_), cfg_.perturb, cfg_.loop.seed);
  } catch (const ServiceError&) {
    throw;
  } catch (const std::exception& e) {
    throw ServiceError(400, "invalid_config", e.what());
  }
  ledger_ = BudgetLedger(0.0, cfg_.loop.eta);
}

std::unique_ptr<Session> Session::create(const std::string& id, const RunConfig& cfg,
                                         const std::filesystem::path& dir) {
  std::unique_ptr<Session> s(new Session());
  s->init(id, cfg, dir);
  std::filesystem::create_directories(dir);
  if (std::filesystem::exists(dir / "events.jsonl")) {
    throw ServiceError(409, "session_exists", "session " + id + " already exists");
  }
  s->log_ = std::make_unique<EventLog>(dir / "events.jsonl");
  s->record({{"type", "session-created"}, {"session_id", id}, {"config", cfg.to_json()}});
  log::info("session {} created in {}", id, dir.string());
  return s;
}

std::unique_ptr<Session> Session::restore(const std::filesystem::path& dir) {
  const auto events = EventLog::read(dir / "events.jsonl");
  if (events.empty() || events.front().value("type", "") != "session-created") {
    throw ParseError(dir.string() + ": event log does not start with session-created");
  }
  EventLog::repair(dir / "events.jsonl");
  std::unique_ptr<Session> s(new Session());
  const auto& first = events.front();
  s->init(first.at("session_id").get<std::string>(),
          RunConfig::from_json(first.at("config")), dir);
  s->log_ = std::make_unique<EventLog>(dir / "events.jsonl");
  s->seq_ = first.at("seq").get<std::uint64_t>();

  const auto snap_path = dir / "snapshot.json";
  if (std::filesystem::exists(snap_path)) {
    std::ifstream in(snap_path);
    const json snap = json::parse(in);
    if (snap.at("seq").get<std::uint64_t>() <= events.back().at("seq").get<std::uint64_t>()) {
      s->load_snapshot(snap);
    }
  }
  for (const auto& e : events) {
    const auto seq = e.at("seq").get<std::uint64_t>();
    if (seq <= s->seq_) continue;
    s->apply(e, /*replay=*/true);
    s->seq_ = seq;
  }
  s->snapshot_seq_ = s->seq_;
  log::info("session {} restored at event {}", s->id_, s->seq_);
  return s;
}

void Session::record(json event) {
  event["seq"] = seq_ + 1;
  log_->append(event);
  ++seq_;
  apply(event, /*replay=*/false);
  if (seq_ - snapshot_seq_ >= kSnapshotEvery) write_snapshot_unlocked();
}

double Session::selection_ratio_now() const {
  if (is_image_level(mode_)) return 1.0;
  return selection_ratio(cfg_.loop.schedule, std::min(round_, cfg_.loop.schedule.total_rounds - 1));
}

void Session::start_round(std::size_t t) {
  round_ = t;
  phase_ = Phase::kServingRound;
  ledger_ = BudgetLedger(cfg_.loop.schedule.round_allowance(t), cfg_.loop.eta);
  visited_.clear();
  RoundMetrics m;
  m.round = t;
  m.selection_ratio = selection_ratio_now();
  m.skill = detector_->skill();
  m.allowance = ledger_.allowance();
  rounds_.push_back(m);
}

void Session::apply(const json& e, bool replay) {
  const std::string type = e.at("type").get<std::string>();
  if (type == "session-created") {
    return;
  }
  if (type == "round-started") {
    if (replay) detector_->update(pool_.labeled);
    ++detector_updates_;
    trained_pages_ = pool_.labeled.pages.size();
    start_round(e.at("round").get<std::size_t>());
  } else if (type == "task-issued") {
    Task t = task_from(e.at("task"));
    visited_.insert(t.page.image_id);
    open_task_ = t.id;
    next_task_ = e.at("next_task").get<std::uint64_t>();
    tasks_[t.id] = std::move(t);
  } else if (type == "page-skipped") {
    visited_.insert(e.at("image_id").get<std::int64_t>());
    if (!rounds_.empty()) ++rounds_.back().pages_skipped;
  } else if (type == "labels-submitted") {
    Task& t = tasks_.at(e.at("task_id").get<std::string>());
    Review r = review(t, e.at("body"));
    RoundMetrics& m = rounds_.back();
    for (std::size_t k = 0; k < r.charges.size(); ++k) {
      ledger_.charge(t.page.image_id, r.charge_objects[k], r.charges[k]);
      switch (r.charges[k]) {
        case ChargeKind::kFull:
          ++m.full;
          break;
        case ChargeKind::kDiscounted:
          ++m.discounted;
          break;
        case ChargeKind::kRecovered:
          ++m.recovered_charges;
          break;
      }
    }
    m.spent = ledger_.spent();
    for (const auto& o : r.objects) m.sources.add(o.source);
    ++m.pages_labeled;
    auto& U = pool_.unlabeled;
    U.erase(std::remove_if(U.begin(), U.end(),
                           [&](const PageRef& p) { return p.image_id == t.page.image_id; }),
            U.end());
    pool_.labeled.pages.push_back(PageAnnotation{t.page.image_id, t.page.file_name,
                                                 t.page.width, t.page.height,
                                                 std::move(r.objects)});
    t.open = false;
    open_task_.reset();
  } else if (type == "advance-requested") {
    phase_ = Phase::kAwaitingRetrain;
  } else if (type == "retrain-failed") {
    phase_ = Phase::kAwaitingRetrain;
  } else if (type == "round-advanced") {
    if (replay) detector_->update(pool_.labeled);
    ++detector_updates_;
    trained_pages_ = pool_.labeled.pages.size();
    spent_before_ += ledger_.spent();
    const auto next = e.at("round").get<std::size_t>();
    if (next >= cfg_.loop.schedule.total_rounds) {
      round_ = next;
      phase_ = Phase::kFinished;
      ledger_ = BudgetLedger(0.0, cfg_.loop.eta);
      visited_.clear();
    } else {
      start_round(next);
    }
  } else {
    throw ParseError("unknown event type '" + type + "'");
  }
}

Session::Review Session::review(const Task& task, const json& body) const {
  if (!body.is_object()) throw ServiceError(400, "bad_request", "label payload must be an object");
  const auto& preds = task.predictions;
  const std::set<std::size_t> selected(task.selected.begin(), task.selected.end());
  std::set<std::size_t> seen;
  const bool image_level = is_image_level(mode_);

  auto list = [&](const char* key) -> json {
    if (!body.contains(key)) return json::array();
    const json& v = body.at(key);
    if (!v.is_array()) {
      throw ServiceError(400, "bad_request", std::string(key) + " must be a list");
    }
    return v;
  };
  auto index_of = [&](const json& v) {
    if (!v.is_number_unsigned() || v.get<std::size_t>() >= preds.size() ||
        !selected.count(v.get<std::size_t>())) {
      throw unprocessable("invalid_index",
                          "index " + v.dump() + " is not a selected object of this task");
    }
    const auto i = v.get<std::size_t>();
    if (!seen.insert(i).second) {
      throw unprocessable("duplicate_index",
                          "object " + std::to_string(i) + " is reviewed more than once");
    }
    return i;
  };
  auto box_of = [&](const json& v) {
    if (!v.is_array() || v.size() != 4 ||
        !std::all_of(v.begin(), v.end(), [](const json& x) { return x.is_number(); })) {
      throw unprocessable("invalid_geometry", "bbox must be [x, y, w, h]");
    }
    const BBox b = box_from(v);
    if (!b.valid() || b.x >= task.page.width || b.y >= task.page.height ||
        b.right() <= 0.0 || b.bottom() <= 0.0) {
      throw unprocessable("invalid_geometry",
                          "bbox " + v.dump() + " is degenerate or outside the page");
    }
    return clamp_to_page(b, task.page.width, task.page.height);
  };
  auto category_of = [&](const json& v) {
    if (v.is_number_integer()) {
      for (std::size_t c = 0; c < categories_.size(); ++c) {
        if (categories_[c].id == v.get<std::int64_t>()) return c;
      }
    }
    throw unprocessable("unknown_category", "unknown category id " + v.dump());
  };

  Review r;
  std::vector<LayoutObject> human;
  for (const auto& v : list("confirmations")) {
    const auto i = index_of(v);
    LayoutObject o = preds[i];
    o.source = Source::kModelUnchanged;
    human.push_back(std::move(o));
    r.charges.push_back(image_level ? ChargeKind::kFull : ChargeKind::kDiscounted);
    r.charge_objects.push_back(static_cast<std::int64_t>(i));
  }
  for (const auto& v : list("edits")) {
    if (!v.is_object() || !v.contains("index")) {
      throw ServiceError(400, "bad_request", "edits need an index");
    }
    const auto i = index_of(v.at("index"));
    LayoutObject o;
    o.bbox = v.contains("bbox") ? box_of(v.at("bbox")) : preds[i].bbox;
    const std::size_t c = v.contains("category_id") ? category_of(v.at("category_id"))
                                                    : preds[i].category.argmax();
    o.category = CategoryDist::one_hot(categories_.size(), c);
    o.source = Source::kManual;
    human.push_back(std::move(o));
    r.charges.push_back(ChargeKind::kFull);
    r.charge_objects.push_back(static_cast<std::int64_t>(i));
  }
  for (const auto& v : list("deletions")) {
    const auto i = index_of(v);
    r.charges.push_back(ChargeKind::kFull);
    r.charge_objects.push_back(static_cast<std::int64_t>(i));
  }
  if (seen.size() != selected.size()) {
    throw unprocessable("incomplete_review",
                        fmt::format("{} of {} selected objects reviewed", seen.size(),
                                    selected.size()));
  }
  std::vector<LayoutObject> added;
  for (const auto& v : list("additions")) {
    if (!v.is_object() || !v.contains("bbox") || !v.contains("category_id")) {
      throw ServiceError(400, "bad_request", "additions need bbox and category_id");
    }
    LayoutObject o;
    o.bbox = box_of(v.at("bbox"));
    o.category = CategoryDist::one_hot(categories_.size(), category_of(v.at("category_id")));
    o.source = Source::kRecovered;
    added.push_back(std::move(o));
    r.charges.push_back(ChargeKind::kRecovered);
    r.charge_objects.push_back(-1);
  }

  std::vector<LayoutObject> unselected;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (!selected.count(i)) unselected.push_back(preds[i]);
  }
  if (cfg_.loop.correction.remove_duplicates) {
    std::vector<LayoutObject> reference = human;
    reference.insert(reference.end(), added.begin(), added.end());
    const std::size_t before = unselected.size();
    unselected = remove_duplicates(unselected, reference, cfg_.loop.correction.xi);
    r.duplicates_removed = before - unselected.size();
  }
  r.objects = merge_labels(human, unselected, added);
  return r;
}

json Session::task_view(const Task& t) const {
  json j = t.payload;
  j["status"] = t.open ? "open" : "submitted";
  return j;
}

json Session::next_task() {
  std::lock_guard lock(mu_);
  if (phase_ == Phase::kFinished) {
    throw ServiceError(409, "session_finished", "session " + id_ + " is finished");
  }
  if (phase_ == Phase::kAwaitingRetrain) {
    throw ServiceError(409, "awaiting_retrain",
                       "the model update failed; retry rounds/advance");
  }
  if (phase_ == Phase::kIdle) {
    try {
      detector_->update(pool_.labeled);
    } catch (const Error& e) {
      throw ServiceError(502, "detector_failed", e.what());
    }
    record({{"type", "round-started"}, {"round", 0}});
  }
  if (open_task_) return task_view(tasks_.at(*open_task_));

  while (true) {
    if (!ledger_.can_afford_full()) {
      return {{"round_complete", true}, {"reason", "budget_exhausted"}, {"round", round_}};
    }
    const auto it = std::find_if(pool_.unlabeled.begin(), pool_.unlabeled.end(),
                                 [&](const PageRef& p) { return !visited_.count(p.image_id); });
    if (it == pool_.unlabeled.end()) {
      return {{"round_complete", true}, {"reason", "pool_exhausted"}, {"round", round_}};
    }
    const PageRef page = *it;
    Prediction preds;
    std::vector<double> scores;
    try {
      preds = detector_->detect(page);
      scores = scorer_->score_page(page, preds, *detector_, round_);
    } catch (const Error& e) {
      log::warn("session {}: skipping page {}: {}", id_, page.image_id, e.what());
      record({{"type", "page-skipped"}, {"image_id", page.image_id}, {"message", e.what()}});
      continue;
    }
    for (std::size_t i = 0; i < preds.size(); ++i) preds[i].score = scores[i];

    const double r = selection_ratio_now();
    const std::size_t quota = per_image_quota(r, preds.size(), ledger_.remaining());
    const Selection sel = select_objects(preds, quota);
    std::vector<bool> is_selected(preds.size(), false);
    for (auto i : sel.selected) is_selected[i] = true;

    json objects = json::array();
    for (std::size_t i = 0; i < preds.size(); ++i) {
      const auto& o = preds[i];
      objects.push_back({{"index", i},
                         {"bbox", box_json(o.bbox)},
                         {"category_id", categories_[o.category.argmax()].id},
                         {"scores", o.category.probs()},
                         {"confidence", o.confidence},
                         {"score", *o.score},
                         {"selected", static_cast<bool>(is_selected[i])}});
    }
    json regions = json::array();
    for (const auto& b : uncovered_regions(page.width, page.height, preds,
                                           cfg_.loop.correction.grid_step)) {
      regions.push_back(box_json(b));
    }
    json image = page_ref_json(page);
    image["url"] = "/images/" + page.file_name;
    const double eta = is_image_level(mode_) ? 1.0 : ledger_.eta();
    const std::string task_id = fmt::format("{}-t{}", id_, next_task_);
    json payload = {{"task_id", task_id},
                    {"session_id", id_},
                    {"round", round_},
                    {"image", image},
                    {"selection_ratio", r},
                    {"quota", quota},
                    {"objects", objects},
                    {"selected", sel.selected},
                    {"quartiles", score_quartiles(scores)},
                    {"uncovered_regions", regions},
                    {"budget_remaining", ledger_.remaining()},
                    {"charges", {{"confirm", eta}, {"edit", 1.0}, {"delete", 1.0}, {"add", 1.0}}}};
    record({{"type", "task-issued"}, {"task", payload}, {"next_task", next_task_ + 1}});
    return task_view(tasks_.at(task_id));
  }
}

json Session::task(const std::string& task_id) const {
  std::lock_guard lock(mu_);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw ServiceError(404, "task_not_found", "no task " + task_id);
  return task_view(it->second);
}

json Session::submit_labels(const std::string& task_id, const json& body) {
  std::lock_guard lock(mu_);
  const auto it = tasks_.find(task_id);
  if (it == tasks_.end()) throw ServiceError(404, "task_not_found", "no task " + task_id);
  if (!it->second.open) {
    throw ServiceError(409, "task_closed", "task " + task_id + " was already submitted");
  }
  const Review r = review(it->second, body);
  double requested = 0.0;
  for (auto k : r.charges) requested += ledger_.cost(k);
  if (requested > ledger_.remaining() + 1e-9) {
    throw ServiceError(409, "over_budget",
                       fmt::format("submission costs {:g} but {:g} remains", requested,
                                   ledger_.remaining()),
                       {{"requested", requested}, {"remaining", ledger_.remaining()}});
  }
  SourceCounts sources;
  for (const auto& o : r.objects) sources.add(o.source);
  record({{"type", "labels-submitted"}, {"task_id", task_id}, {"body", body}});
  return {{"task_id", task_id},
          {"accepted", true},
          {"charged", requested},
          {"remaining", ledger_.remaining()},
          {"objects", r.objects.size()},
          {"duplicates_removed", r.duplicates_removed},
          {"sources",
           {{"manual", sources.manual},
            {"model-auto", sources.model_auto},
            {"model-unchanged", sources.model_unchanged},
            {"recovered", sources.recovered}}}};
}

json Session::advance_round() {
  std::lock_guard lock(mu_);
  if (phase_ == Phase::kFinished) {
    throw ServiceError(409, "session_finished", "session " + id_ + " is finished");
  }
  if (phase_ == Phase::kIdle) {
    throw ServiceError(409, "wrong_phase", "no round has started; request a task first");
  }
  if (phase_ == Phase::kServingRound) {
    if (open_task_) {
      throw ServiceError(409, "task_outstanding", "task " + *open_task_ + " is still open");
    }
    const bool pages_left =
        std::any_of(pool_.unlabeled.begin(), pool_.unlabeled.end(),
                    [&](const PageRef& p) { return !visited_.count(p.image_id); });
    if (ledger_.can_afford_full() && pages_left) {
      throw ServiceError(409, "round_incomplete",
                         "budget and unvisited pages remain in this round",
                         {{"remaining", ledger_.remaining()}});
    }
    record({{"type", "advance-requested"}, {"round", round_}});
  }
  try {
    detector_->update(pool_.labeled);
  } catch (const Error& e) {
    record({{"type", "retrain-failed"}, {"round", round_}, {"message", e.what()}});
    throw ServiceError(502, "retrain_failed", e.what());
  }
  record({{"type", "round-advanced"}, {"round", round_ + 1}});
  write_snapshot_unlocked();
  json out = {{"round", round_}, {"phase", to_string(phase_)}};
  if (phase_ == Phase::kServingRound) out["selection_ratio"] = selection_ratio_now();
  return out;
}

json Session::status() const {
  std::lock_guard lock(mu_);
  const double skill = detector_->skill();
  json j = {{"session_id", id_},
            {"phase", to_string(phase_)},
            {"mode", to_string(mode_)},
            {"round", round_},
            {"total_rounds", cfg_.loop.schedule.total_rounds},
            {"skill", std::isnan(skill) ? json(nullptr) : json(skill)},
            {"budget",
             {{"allowance", std::isinf(ledger_.allowance()) ? json("inf")
                                                            : json(ledger_.allowance())},
              {"spent", ledger_.spent()},
              {"remaining", std::isinf(ledger_.remaining()) ? json("inf")
                                                            : json(ledger_.remaining())},
              {"eta", ledger_.eta()},
              {"total_spent", spent_before_ + ledger_.spent()}}},
            {"pool",
             {{"labeled_pages", pool_.labeled.pages.size()},
              {"unlabeled_pages", pool_.unlabeled.size()},
              {"labeled_objects", pool_.labeled.num_objects()}}},
            {"open_task", open_task_ ? json(*open_task_) : json(nullptr)},
            {"events", seq_}};
  if (phase_ == Phase::kServingRound) j["selection_ratio"] = selection_ratio_now();
  return j;
}

json Session::export_coco() const {
  std::lock_guard lock(mu_);
  return coco_to_json(pool_.labeled);
}

json Session::metrics() const {
  std::lock_guard lock(mu_);
  json rounds = json::array();
  for (const auto& m : rounds_) rounds.push_back(metrics_json(m));
  const SourceBreakdown b = source_breakdown(pool_.labeled);
  json j = {{"session_id", id_},
            {"rounds", rounds},
            {"total_spent", spent_before_ + ledger_.spent()},
            {"labeled_pages", pool_.labeled.pages.size()},
            {"labeled_objects", pool_.labeled.num_objects()},
            {"breakdown",
             {{"manual", b.manual},
              {"model-auto", b.model_auto},
              {"model-unchanged", b.model_unchanged},
              {"recovered", b.recovered},
              {"total", b.total}}}};
  if (!oracle_.pages.empty()) {
    try {
      j["created_ap"] = created_accuracy(pool_, oracle_, cfg_.loop.parallel);
    } catch (const ValidationError&) {
      // labeled pages outside the oracle: no accuracy to report
    }
  }
  return j;
}

void Session::export_files() const {
  const json coco = export_coco();
  const json m = metrics();
  {
    std::ofstream out(dir_ / "labeled.json");
    out << coco.dump(1) << '\n';
  }
  std::ofstream out(dir_ / "metrics.tsv");
  out << "round\tratio\tskill\tallowance\tspent\tpages\tskipped\tfull\tdiscounted"
         "\trecovered_charges\tmanual\tmodel_auto\tmodel_unchanged\trecovered\n";
  for (const auto& r : m.at("rounds")) {
    const auto& c = r.at("charges");
    const auto& s = r.at("sources");
    out << fmt::format("{}\t{:.6f}\t{}\t{}\t{:.6f}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                       r.at("round").get<std::size_t>(),
                       r.at("selection_ratio").get<double>(), r.at("skill").dump(),
                       r.at("allowance").dump(), r.at("spent").get<double>(),
                       r.at("pages_labeled").get<std::size_t>(),
                       r.at("pages_skipped").get<std::size_t>(),
                       c.at("full").get<std::size_t>(), c.at("discounted").get<std::size_t>(),
                       c.at("recovered").get<std::size_t>(), s.at("manual").get<std::size_t>(),
                       s.at("model-auto").get<std::size_t>(),
                       s.at("model-unchanged").get<std::size_t>(),
                       s.at("recovered").get<std::size_t>());
  }
}

json Session::snapshot_json() const {
  json ledger_log = json::array();
  for (const auto& c : ledger_.log()) {
    ledger_log.push_back({c.image_id, c.object, to_string(c.kind)});
  }
  json labeled = json::array();
  for (const auto& p : pool_.labeled.pages) labeled.push_back(page_json(p));
  json unlabeled = json::array();
  for (const auto& p : pool_.unlabeled) unlabeled.push_back(page_ref_json(p));
  json tasks = json::array();
  for (const auto& [id, t] : tasks_) tasks.push_back({{"payload", t.payload}, {"open", t.open}});
  json rounds = json::array();
  for (const auto& m : rounds_) rounds.push_back(metrics_json(m));
  return {{"seq", seq_},
          {"phase", to_string(phase_)},
          {"round", round_},
          {"spent_before", spent_before_},
          {"detector_updates", detector_updates_},
          {"trained_pages", trained_pages_},
          {"ledger",
           {{"allowance", std::isinf(ledger_.allowance()) ? json("inf")
                                                          : json(ledger_.allowance())},
            {"log", ledger_log}}},
          {"labeled", labeled},
          {"unlabeled", unlabeled},
          {"visited", visited_},
          {"tasks", tasks},
          {"open_task", open_task_ ? json(*open_task_) : json(nullptr)},
          {"next_task", next_task_},
          {"rounds", rounds}};
}

void Session::load_snapshot(const json& snap) {
  seq_ = snap.at("seq").get<std::uint64_t>();
  phase_ = phase_from_string(snap.at("phase").get<std::string>());
  round_ = snap.at("round").get<std::size_t>();
  spent_before_ = snap.at("spent_before").get<double>();
  detector_updates_ = snap.at("detector_updates").get<std::uint64_t>();
  ledger_ = BudgetLedger(number_or_inf(snap.at("ledger").at("allowance")), cfg_.loop.eta);
  for (const auto& c : snap.at("ledger").at("log")) {
    ledger_.charge(c.at(0).get<std::int64_t>(), c.at(1).get<std::int64_t>(),
                   charge_kind_from_string(c.at(2).get<std::string>()));
  }
  pool_.labeled.pages.clear();
  for (const auto& p : snap.at("labeled")) pool_.labeled.pages.push_back(page_from(p));
  pool_.unlabeled.clear();
  for (const auto& p : snap.at("unlabeled")) pool_.unlabeled.push_back(page_ref_from(p));
  pool_.round = round_;
  visited_ = snap.at("visited").get<std::set<std::int64_t>>();
  tasks_.clear();
  for (const auto& t : snap.at("tasks")) {
    Task task = task_from(t.at("payload"));
    task.open = t.at("open").get<bool>();
    tasks_[task.id] = std::move(task);
  }
  open_task_.reset();
  if (!snap.at("open_task").is_null()) open_task_ = snap.at("open_task").get<std::string>();
  next_task_ = snap.at("next_task").get<std::uint64_t>();
  rounds_.clear();
  for (const auto& m : snap.at("rounds")) rounds_.push_back(metrics_from(m));
  trained_pages_ = snap.at("trained_pages").get<std::size_t>();
  if (detector_updates_ > 0) {
    // the last update saw only the pages labeled before it
    Dataset trained = pool_.labeled;
    trained.pages.resize(std::min(trained_pages_, trained.pages.size()));
    detector_->restore(trained, detector_updates_);
  }
}

void Session::write_snapshot() {
  std::lock_guard lock(mu_);
  write_snapshot_unlocked();
}

void Session::write_snapshot_unlocked() {
  const auto tmp = dir_ / "snapshot.json.tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << snapshot_json().dump() << '\n';
    if (!out) throw Error("cannot write snapshot in " + dir_.string());
  }
  std::filesystem::rename(tmp, dir_ / "snapshot.json");
  snapshot_seq_ = seq_;
}

Phase Session::phase() const {
  std::lock_guard lock(mu_);
  return phase_;
}

std::size_t Session::round() const {
  std::lock_guard lock(mu_);
  return round_;
}

double Session::total_spent() const {
  std::lock_guard lock(mu_);
  return spent_before_ + ledger_.spent();
}

SessionManager::SessionManager(std::filesystem::path data_dir)
    : data_dir_(std::move(data_dir)) {
  std::filesystem::create_directories(data_dir_);
  std::vector<std::filesystem::path> dirs;
  for (const auto& entry : std::filesystem::directory_iterator(data_dir_)) {
    if (entry.is_directory() && std::filesystem::exists(entry.path() / "events.jsonl")) {
      dirs.push_back(entry.path());
    }
  }
  std::sort(dirs.begin(), dirs.end());
  for (const auto& dir : dirs) {
    try {
      auto s = Session::restore(dir);
      const std::string id = s->id();
      if (id.size() > 1 && id[0] == 's') {
        try {
          next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(id.substr(1)) + 1);
        } catch (const std::exception&) {
        }
      }
      sessions_.emplace(id, std::move(s));
    } catch (const std::exception& e) {
      log::error("cannot restore session in {}: {}", dir.string(), e.what());
    }
  }
}

std::string SessionManager::create(const RunConfig& cfg) {
  std::lock_guard lock(mu_);
  const std::string id = fmt::format("s{:04d}", next_id_);
  auto s = Session::create(id, cfg, data_dir_ / id);
  ++next_id_;
  sessions_.emplace(id, std::move(s));
  return id;
}

Session& SessionManager::get(const std::string& id) {
  std::lock_guard lock(mu_);
  const auto it = sessions_.find(id);
  if (it == sessions_.end()) {
    throw ServiceError(404, "session_not_found", "no session " + id);
  }
  return *it->second;
}

Session& SessionManager::owner_of_task(const std::string& task_id) {
  const auto cut = task_id.rfind("-t");
  if (cut == std::string::npos) {
    throw ServiceError(404, "task_not_found", "no task " + task_id);
  }
  try {
    return get(task_id.substr(0, cut));
  } catch (const ServiceError&) {
    throw ServiceError(404, "task_not_found", "no task " + task_id);
  }
}

std::vector<std::string> SessionManager::ids() const {
  std::lock_guard lock(mu_);
  std::vector<std::string> out;
  for (const auto& [id, s] : sessions_) out.push_back(id);
  return out;
}

void SessionManager::flush() {
  std::lock_guard lock(mu_);
  for (auto& [id, s] : sessions_) s->write_snapshot();
}

}  // namespace olala
