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

#include <fstream>

#include <gtest/gtest.h>

#include "olala/coco.hpp"
#include "support.hpp"

namespace olala {
namespace {

using nlohmann::json;

RunConfig base_config() {
  return RunConfig::parse(R"(
modes = olala-perturbation
synth.pages = 30
synth.mean_objects = 10
seed_pages = 5
rounds = 2
budget = 60
detector.tau = 200
seed = 3
)");
}

int status_of(const std::function<void()>& f, std::string* code = nullptr) {
  try {
    f();
  } catch (const ServiceError& e) {
    if (code) *code = e.code();
    return e.status();
  }
  return 200;
}

std::string code_of(const std::function<void()>& f) {
  std::string code = "none";
  status_of(f, &code);
  return code;
}

json confirm_all(const json& task) { return {{"confirmations", task.at("selected")}}; }

/// Confirms every task until the round reports completion.
std::size_t drain_round(Session& s) {
  std::size_t n = 0;
  while (true) {
    const json t = s.next_task();
    if (t.contains("round_complete")) return n;
    s.submit_labels(t.at("task_id"), confirm_all(t));
    ++n;
  }
}

struct SessionTest : ::testing::Test {
  testing::TempDir dir;
  RunConfig cfg = base_config();

  std::unique_ptr<Session> make(const std::string& id = "s0001") {
    return Session::create(id, cfg, dir / id);
  }
};

TEST_F(SessionTest, CreateStartsIdle) {
  auto s = make();
  const json st = s->status();
  EXPECT_EQ(st.at("phase"), "idle");
  EXPECT_EQ(st.at("round"), 0);
  EXPECT_EQ(st.at("total_rounds"), 2);
  EXPECT_EQ(st.at("pool").at("labeled_pages"), 5);
  EXPECT_EQ(st.at("pool").at("unlabeled_pages"), 25);
  EXPECT_TRUE(st.at("open_task").is_null());
  EXPECT_EQ(s->event_count(), 1u);
  EXPECT_EQ(code_of([&] { make(); }), "session_exists");
}

TEST_F(SessionTest, InvalidConfigIsRejected) {
  cfg.set("oracle", (dir / "missing.json").string());
  EXPECT_EQ(status_of([&] { make(); }), 400);
  EXPECT_EQ(code_of([&] { make("s0002"); }), "invalid_config");
  RunConfig ext = base_config();
  ext.set("detector", "external");
  ext.set("detector.command", "true");
  EXPECT_EQ(code_of([&] { Session::create("s0003", ext, dir / "s0003"); }), "invalid_config");
}

TEST_F(SessionTest, TaskPayload) {
  auto s = make();
  const json t = s->next_task();
  EXPECT_EQ(s->phase(), Phase::kServingRound);
  EXPECT_EQ(t.at("task_id"), "s0001-t1");
  EXPECT_EQ(t.at("status"), "open");
  const auto& objects = t.at("objects");
  const double allowance = cfg.loop.schedule.round_allowance(0);
  EXPECT_EQ(allowance, 30.0);
  EXPECT_EQ(t.at("quota").get<std::size_t>(),
            per_image_quota(0.9, objects.size(), allowance));
  EXPECT_EQ(t.at("selected").size(), t.at("quota").get<std::size_t>());
  EXPECT_DOUBLE_EQ(t.at("charges").at("confirm").get<double>(), 0.2);
  EXPECT_EQ(t.at("image").at("url"), "/images/" + t.at("image").at("file_name").get<std::string>());

  // selected objects carry the highest scores
  double lowest_selected = 1e300, highest_other = -1e300;
  std::vector<double> scores;
  for (const auto& o : objects) {
    const double v = o.at("score").get<double>();
    scores.push_back(v);
    if (o.at("selected").get<bool>()) {
      lowest_selected = std::min(lowest_selected, v);
    } else {
      highest_other = std::max(highest_other, v);
    }
    EXPECT_FALSE(o.contains("source"));
    EXPECT_EQ(o.at("scores").size(), 5u);
  }
  EXPECT_GE(lowest_selected, highest_other);
  EXPECT_EQ(t.at("quartiles").get<std::vector<double>>(), score_quartiles(scores));
  EXPECT_EQ(t.dump().find("ground-truth"), std::string::npos);

  // reads are idempotent until submission
  EXPECT_EQ(s->next_task(), t);
  EXPECT_EQ(s->task("s0001-t1"), t);
  EXPECT_EQ(s->status().at("open_task"), "s0001-t1");
}

TEST(ScoreQuartiles, Values) {
  EXPECT_TRUE(score_quartiles({}).empty());
  EXPECT_EQ(score_quartiles({5, 1, 3, 2, 4}), (std::vector<double>{1, 2, 3, 4, 5}));
  EXPECT_EQ(score_quartiles({2}), (std::vector<double>{2, 2, 2, 2, 2}));
  EXPECT_EQ(score_quartiles({0, 1}), (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
}

TEST_F(SessionTest, ConfirmAllChargesDiscount) {
  auto s = make();
  const json t = s->next_task();
  const std::size_t n_sel = t.at("selected").size();
  const json r = s->submit_labels(t.at("task_id"), confirm_all(t));
  EXPECT_NEAR(r.at("charged").get<double>(), 0.2 * static_cast<double>(n_sel), 1e-12);
  EXPECT_NEAR(r.at("remaining").get<double>(), 30.0 - 0.2 * static_cast<double>(n_sel), 1e-12);
  EXPECT_EQ(r.at("sources").at("model-unchanged"), n_sel);
  EXPECT_EQ(s->pool().labeled.pages.size(), 6u);
  EXPECT_EQ(s->pool().unlabeled.size(), 24u);
  EXPECT_EQ(s->task(t.at("task_id")).at("status"), "submitted");
  EXPECT_EQ(code_of([&] { s->submit_labels(t.at("task_id"), confirm_all(t)); }), "task_closed");
  EXPECT_EQ(status_of([&] { s->submit_labels("s0001-t99", json::object()); }), 404);
  EXPECT_NE(s->next_task().at("task_id"), t.at("task_id"));
}

TEST_F(SessionTest, EditPlusAdditionCostsTwo) {
  cfg.set("r_initial", "0.01");
  cfg.set("r_last", "0.01");
  auto s = make();
  json t = s->next_task();
  while (t.at("objects").empty()) {
    s->submit_labels(t.at("task_id"), json::object());
    t = s->next_task();
  }
  ASSERT_EQ(t.at("quota"), 1);
  const auto i = t.at("selected").at(0).get<std::size_t>();
  const json body = {
      {"edits", {{{"index", i}, {"category_id", 2}}}},
      {"additions", {{{"bbox", {1, 1, 5, 5}}, {"category_id", 1}}}}};
  const double before = s->ledger().spent();
  const json r = s->submit_labels(t.at("task_id"), body);
  EXPECT_DOUBLE_EQ(r.at("charged").get<double>(), 2.0);
  EXPECT_DOUBLE_EQ(s->ledger().spent() - before, 2.0);
  EXPECT_EQ(r.at("sources").at("manual"), 1);
  EXPECT_EQ(r.at("sources").at("recovered"), 1);
  const PageAnnotation& page = s->pool().labeled.pages.back();
  const auto edited = std::find_if(page.objects.begin(), page.objects.end(),
                                   [](const LayoutObject& o) { return o.source == Source::kManual; });
  ASSERT_NE(edited, page.objects.end());
  EXPECT_EQ(edited->category.argmax(), 1u);
  EXPECT_EQ(edited->category.probs()[1], 1.0);
}

TEST_F(SessionTest, OverBudgetLeavesStateUntouched) {
  cfg.set("rounds", "1");
  cfg.set("budget", "2");
  auto s = make();
  json t = s->next_task();
  ASSERT_EQ(t.at("quota"), 2);
  json body = {{"deletions", t.at("selected")},
               {"additions", {{{"bbox", {1, 1, 5, 5}}, {"category_id", 1}}}}};
  const auto events = s->event_count();
  const json status = s->status();
  try {
    s->submit_labels(t.at("task_id"), body);
    FAIL();
  } catch (const ServiceError& e) {
    EXPECT_EQ(e.status(), 409);
    EXPECT_EQ(e.code(), "over_budget");
    EXPECT_DOUBLE_EQ(e.detail().at("requested").get<double>(), 3.0);
    EXPECT_DOUBLE_EQ(e.detail().at("remaining").get<double>(), 2.0);
  }
  EXPECT_EQ(s->event_count(), events);
  EXPECT_EQ(s->status(), status);
  EXPECT_EQ(s->task(t.at("task_id")).at("status"), "open");
  body.erase("additions");
  EXPECT_DOUBLE_EQ(s->submit_labels(t.at("task_id"), body).at("remaining").get<double>(), 0.0);
  EXPECT_EQ(s->next_task().at("reason"), "budget_exhausted");
}

TEST_F(SessionTest, ReviewErrors) {
  auto s = make();
  const json t = s->next_task();
  const json sel = t.at("selected");
  ASSERT_GE(sel.size(), 2u);
  std::size_t unselected = 0;
  while (std::find(sel.begin(), sel.end(), json(unselected)) != sel.end()) ++unselected;
  json rest = sel;
  rest.erase(rest.begin());
  const json first = sel.at(0);
  const std::string id = t.at("task_id");

  auto code = [&](const json& body) { return code_of([&] { s->submit_labels(id, body); }); };
  auto with = [&](json extra) {
    json b = {{"confirmations", rest}};
    for (auto& [k, v] : extra.items()) b[k] = v;
    return b;
  };
  EXPECT_EQ(code(json::array()), "bad_request");
  EXPECT_EQ(code({{"confirmations", 3}}), "bad_request");
  EXPECT_EQ(code(with({{"edits", {{{"bbox", {1, 1, 2, 2}}}}}})), "bad_request");
  EXPECT_EQ(code({{"confirmations", sel}, {"additions", {{{"bbox", {1, 1, 2, 2}}}}}}), "bad_request");
  EXPECT_EQ(code({{"confirmations", {999}}}), "invalid_index");
  EXPECT_EQ(code({{"confirmations", {unselected}}}), "invalid_index");
  EXPECT_EQ(code({{"confirmations", {-1}}}), "invalid_index");
  EXPECT_EQ(code(with({{"deletions", {first, first}}})), "duplicate_index");
  EXPECT_EQ(code({{"confirmations", sel}, {"deletions", {first}}}), "duplicate_index");
  EXPECT_EQ(code({{"confirmations", rest}}), "incomplete_review");
  EXPECT_EQ(code(json::object()), "incomplete_review");
  EXPECT_EQ(code(with({{"edits", {{{"index", first}, {"bbox", {1, 1, 0, 5}}}}}})),
            "invalid_geometry");
  EXPECT_EQ(code(with({{"edits", {{{"index", first}, {"bbox", {1, 1, 5}}}}}})),
            "invalid_geometry");
  EXPECT_EQ(code({{"confirmations", sel},
                  {"additions", {{{"bbox", {5000, 5, 5, 5}}, {"category_id", 1}}}}}),
            "invalid_geometry");
  EXPECT_EQ(code(with({{"edits", {{{"index", first}, {"category_id", 99}}}}})),
            "unknown_category");
  EXPECT_EQ(code({{"confirmations", sel},
                  {"additions", {{{"bbox", {1, 1, 5, 5}}, {"category_id", "1"}}}}}),
            "unknown_category");
  EXPECT_EQ(status_of([&] { s->submit_labels(id, json::object()); }), 422);
  EXPECT_EQ(s->task(id).at("status"), "open");
  EXPECT_EQ(code({{"confirmations", sel}}), "none");
}

TEST_F(SessionTest, AdditionsAreClampedToThePage) {
  auto s = make();
  const json t = s->next_task();
  const double W = t.at("image").at("width").get<double>();
  s->submit_labels(t.at("task_id"),
                   {{"confirmations", t.at("selected")},
                    {"additions", {{{"bbox", {W - 10, 1, 50, 5}}, {"category_id", 1}}}}});
  const auto& objs = s->pool().labeled.pages.back().objects;
  const auto added = std::find_if(objs.begin(), objs.end(), [](const LayoutObject& o) {
    return o.source == Source::kRecovered;
  });
  ASSERT_NE(added, objs.end());
  EXPECT_DOUBLE_EQ(added->bbox.right(), W);
}

TEST_F(SessionTest, RoundLifecycle) {
  auto s = make();
  EXPECT_EQ(code_of([&] { s->advance_round(); }), "wrong_phase");
  const json t = s->next_task();
  EXPECT_EQ(code_of([&] { s->advance_round(); }), "task_outstanding");
  s->submit_labels(t.at("task_id"), confirm_all(t));
  EXPECT_EQ(code_of([&] { s->advance_round(); }), "round_incomplete");

  drain_round(*s);
  const double skill0 = s->status().at("skill").get<double>();
  const json a = s->advance_round();
  EXPECT_EQ(a.at("round"), 1);
  EXPECT_EQ(a.at("phase"), "serving-round");
  EXPECT_DOUBLE_EQ(a.at("selection_ratio").get<double>(),
                   selection_ratio(cfg.loop.schedule, 1));
  EXPECT_DOUBLE_EQ(a.at("selection_ratio").get<double>(), 0.4);
  EXPECT_GT(s->status().at("skill").get<double>(), skill0);
  EXPECT_EQ(s->ledger().spent(), 0.0);

  std::size_t advanced = 0;
  for (const auto& e : EventLog::read(dir / "s0001" / "events.jsonl")) {
    advanced += e.at("type") == "round-advanced";
  }
  EXPECT_EQ(advanced, 1u);

  drain_round(*s);
  const json b = s->advance_round();
  EXPECT_EQ(b.at("phase"), "finished");
  EXPECT_FALSE(b.contains("selection_ratio"));
  EXPECT_EQ(s->phase(), Phase::kFinished);
  EXPECT_EQ(code_of([&] { s->next_task(); }), "session_finished");
  EXPECT_EQ(code_of([&] { s->advance_round(); }), "session_finished");
  EXPECT_LE(s->total_spent(), 60.0 + 1e-9);

  const json m = s->metrics();
  ASSERT_EQ(m.at("rounds").size(), 2u);
  EXPECT_TRUE(m.contains("created_ap"));
  EXPECT_GT(m.at("created_ap").get<double>(), 0.0);
}

TEST_F(SessionTest, SpentNeverDecreases) {
  cfg.set("rounds", "3");
  auto s = make();
  double last = 0.0;
  while (s->phase() != Phase::kFinished) {
    const json t = s->next_task();
    if (t.contains("round_complete")) {
      s->advance_round();
    } else {
      s->submit_labels(t.at("task_id"), confirm_all(t));
    }
    const double now = s->status().at("budget").at("total_spent").get<double>();
    EXPECT_GE(now, last);
    last = now;
  }
  EXPECT_LE(last, 60.0 + 1e-9);
}

/// Drives a session through a fixed script: the first `tasks` tasks are
/// answered with alternating confirm-all and delete-first reviews.
void script(Session& s, std::size_t tasks) {
  for (std::size_t k = 0; k < tasks && s.phase() != Phase::kFinished; ++k) {
    const json t = s.next_task();
    if (t.contains("round_complete")) {
      s.advance_round();
      continue;
    }
    json body = confirm_all(t);
    if (k % 2 == 1 && !t.at("selected").empty()) {
      json rest = t.at("selected");
      body["deletions"] = {rest.at(0)};
      rest.erase(rest.begin());
      body["confirmations"] = rest;
    }
    s.submit_labels(t.at("task_id"), body);
  }
}

void expect_same(Session& a, Session& b) {
  EXPECT_EQ(a.status(), b.status());
  EXPECT_EQ(a.export_coco(), b.export_coco());
  EXPECT_EQ(a.metrics(), b.metrics());
}

std::filesystem::path copy_dir(const std::filesystem::path& from,
                               const std::filesystem::path& to) {
  std::filesystem::copy(from, to, std::filesystem::copy_options::recursive);
  return to;
}

TEST_F(SessionTest, RestoreMatchesLiveSessionMidRound) {
  cfg.set("synth.pages", "80");
  cfg.set("budget", "200");
  cfg.set("rounds", "3");
  auto live = make();
  script(*live, 20);
  const json open = live->next_task();  // leaves a task open
  ASSERT_FALSE(open.contains("round_complete"));
  ASSERT_GT(live->event_count(), 32u);  // a periodic snapshot exists
  ASSERT_TRUE(std::filesystem::exists(dir / "s0001" / "snapshot.json"));

  auto from_snapshot = Session::restore(copy_dir(dir / "s0001", dir / "a"));
  copy_dir(dir / "s0001", dir / "b");
  std::filesystem::remove(dir / "b" / "snapshot.json");
  auto from_log = Session::restore(dir / "b");

  for (Session* r : {from_snapshot.get(), from_log.get()}) {
    expect_same(*live, *r);
    EXPECT_EQ(r->task(open.at("task_id")), open);
    EXPECT_EQ(r->next_task(), open);
    EXPECT_EQ(r->event_count(), live->event_count());
  }
  // identical continuations stay identical
  for (Session* s : {live.get(), from_snapshot.get(), from_log.get()}) script(*s, 200);
  EXPECT_EQ(live->phase(), Phase::kFinished);
  expect_same(*live, *from_snapshot);
  expect_same(*live, *from_log);
}

TEST_F(SessionTest, RestoreAfterAdvance) {
  auto live = make();
  script(*live, 40);
  ASSERT_GE(live->round(), 1u);
  auto restored = Session::restore(copy_dir(dir / "s0001", dir / "c"));
  expect_same(*live, *restored);
}

TEST_F(SessionTest, TornLogTailIsDropped) {
  auto s = make();
  script(*s, 3);
  const auto log = dir / "s0001" / "events.jsonl";
  const auto before = EventLog::read(log).size();
  { std::ofstream(log, std::ios::app) << R"({"type": "task-iss)"; }
  auto r = Session::restore(dir / "s0001");
  EXPECT_EQ(r->event_count(), before);
  script(*r, 2);  // appends land on fresh lines
  EXPECT_EQ(EventLog::read(log).size(), r->event_count());

  std::ofstream(dir / "bad.jsonl") << "{\"seq\": 1}\nnot json\n{\"seq\": 2}\n";
  EXPECT_THROW(EventLog::read(dir / "bad.jsonl"), ParseError);
  std::ofstream(dir / "tail.jsonl") << "{\"seq\": 1}\n{\"seq\": 2}";
  EXPECT_EQ(EventLog::read(dir / "tail.jsonl").size(), 2u);
}

TEST_F(SessionTest, ExportFiles) {
  auto s = make();
  script(*s, 6);
  EXPECT_EQ(s->export_coco(), s->export_coco());
  s->export_files();
  const Dataset labeled = load_coco(dir / "s0001" / "labeled.json");
  const json st = s->status();
  EXPECT_EQ(labeled.pages.size(), st.at("pool").at("labeled_pages").get<std::size_t>());
  EXPECT_EQ(labeled.num_objects(), st.at("pool").at("labeled_objects").get<std::size_t>());
  std::ifstream tsv(dir / "s0001" / "metrics.tsv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(tsv, line)) ++lines;
  EXPECT_EQ(lines, 1 + s->metrics().at("rounds").size());
}

TEST(SessionManagerTest, CreatesRestoresAndRoutes) {
  testing::TempDir dir;
  const RunConfig cfg = base_config();
  {
    SessionManager m(dir.path());
    EXPECT_EQ(m.create(cfg), "s0001");
    EXPECT_EQ(m.create(cfg), "s0002");
    m.get("s0002").next_task();
    EXPECT_EQ(&m.owner_of_task("s0002-t1"), &m.get("s0002"));
    EXPECT_EQ(code_of([&] { m.get("s0404"); }), "session_not_found");
    EXPECT_EQ(code_of([&] { m.owner_of_task("s0404-t1"); }), "task_not_found");
    EXPECT_EQ(code_of([&] { m.owner_of_task("bogus"); }), "task_not_found");
    m.flush();
  }
  SessionManager again(dir.path());
  EXPECT_EQ(again.ids(), (std::vector<std::string>{"s0001", "s0002"}));
  EXPECT_EQ(again.get("s0002").status().at("open_task"), "s0002-t1");
  EXPECT_EQ(again.create(cfg), "s0003");
}

TEST(SessionExternal, MockDetectorRound) {
  testing::TempDir dir;
  Dataset pool;
  pool.categories = testing::categories(2);
  for (int i = 1; i <= 4; ++i) {
    PageAnnotation p{i, "p" + std::to_string(i) + ".png", 200, 200, {}};
    if (i == 1) p.objects.push_back(testing::object({5, 5, 20, 20}, 2, 0));
    pool.pages.push_back(p);
  }
  export_coco(pool, dir / "pool.json");
  RunConfig cfg = RunConfig::parse("modes = olala\nrounds = 1\nbudget = 100\n");
  cfg.pool = dir / "pool.json";
  cfg.set("detector", "external");
  cfg.set("detector.command", std::string(OLALA_MOCK_DETECTOR) + " --mode ok");
  auto s = Session::create("s0001", cfg, dir / "s");
  EXPECT_EQ(s->status().at("pool").at("labeled_pages"), 1);
  std::size_t tasks = 0;
  while (true) {
    const json t = s->next_task();
    if (t.contains("round_complete")) break;
    ASSERT_EQ(t.at("objects").size(), 2u);
    EXPECT_NEAR(t.at("objects").at(0).at("scores").at(0).get<double>(), 0.9, 1e-12);
    EXPECT_EQ(t.at("objects").at(1).at("category_id"), 2);
    s->submit_labels(t.at("task_id"), confirm_all(t));
    ++tasks;
  }
  EXPECT_EQ(tasks, 3u);
  EXPECT_EQ(s->advance_round().at("phase"), "finished");
  EXPECT_TRUE(std::filesystem::exists(dir / "s" / "labeled_1.json"));
  EXPECT_FALSE(s->metrics().contains("created_ap"));
}

}  // namespace
}  // namespace olala
