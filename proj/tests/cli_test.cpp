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
// Runs the olala binary end to end.
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>
#include <httplib.h>

#include "olala/coco.hpp"
#include "olala/session.hpp"
#include "olala/sim_agent.hpp"
#include "support.hpp"

namespace olala {
namespace {

struct Result {
  int code = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(OLALA_BINARY) + " " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  Result r;
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof buf, p)) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double ap_of(const std::string& report) {
  std::istringstream in(report);
  std::string line;
  while (std::getline(in, line)) {
    if (line.rfind("ap\t", 0) == 0) return std::stod(line.substr(3));
  }
  return -1.0;
}

constexpr const char* kTiny = R"(modes = image-random, olala-perturbation
synth.pages = 30
synth.mean_objects = 10
seed_pages = 4
rounds = 3
budget = 200
detector.tau = 300
)";

struct CliTest : ::testing::Test {
  testing::TempDir dir;
  std::filesystem::path config() {
    std::ofstream(dir / "tiny.cfg") << kTiny;
    return dir / "tiny.cfg";
  }
};

TEST_F(CliTest, SimulateWritesReportsDeterministically) {
  const auto cfg = config();
  const Result a = run("simulate --config " + cfg.string() + " --out-dir " + (dir / "a").string());
  const Result b = run("simulate --config " + cfg.string() + " --out-dir " + (dir / "b").string());
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  for (const char* f : {"image-random.tsv", "olala-perturbation.tsv", "comparison.tsv",
                        "summary.txt"}) {
    ASSERT_TRUE(std::filesystem::exists(dir / "a" / f)) << f;
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  }
  EXPECT_NE(a.out.find("olala-perturbation:"), std::string::npos);

  const std::string seeded = "simulate --config " + cfg.string() + " --seed 99 --out-dir ";
  ASSERT_EQ(run(seeded + (dir / "c").string()).code, 0);
  ASSERT_EQ(run(seeded + (dir / "d").string()).code, 0);
  EXPECT_EQ(slurp(dir / "c" / "comparison.tsv"), slurp(dir / "d" / "comparison.tsv"));
  EXPECT_NE(slurp(dir / "a" / "comparison.tsv"), slurp(dir / "c" / "comparison.tsv"));
}

TEST_F(CliTest, SweepRunsTheGrid) {
  std::ofstream(dir / "sweep.cfg") << kTiny << "modes = olala\nsweep.budget = 100, 200\n"
                                   << "sweep.rounds = 3, 6, 9\n";
  ASSERT_EQ(run("simulate --config " + (dir / "sweep.cfg").string() + " --out-dir " +
                (dir / "out").string())
                .code,
            0);
  std::size_t tables = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir / "out")) {
    tables += e.path().filename().string().rfind("olala-perturbation_m", 0) == 0;
  }
  EXPECT_EQ(tables, 6u);
  std::istringstream cmp(slurp(dir / "out" / "comparison.tsv"));
  std::string line;
  std::size_t rows = 0;
  while (std::getline(cmp, line)) ++rows;
  EXPECT_EQ(rows, 7u);
}

TEST_F(CliTest, SimulateOverridesFlags) {
  const Result r = run("simulate --config " + config().string() +
                       " --mode olala-random --budget inf --rounds 2 --out-dir " +
                       (dir / "o").string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(std::filesystem::exists(dir / "o" / "olala-random.tsv"));
  EXPECT_FALSE(std::filesystem::exists(dir / "o" / "image-random.tsv"));
}

TEST_F(CliTest, SynthIsByteIdentical) {
  const auto a = dir / "a.json", b = dir / "b.json", c = dir / "c.json";
  ASSERT_EQ(run("synth --out " + a.string() + " --pages 200 --seed 4").code, 0);
  ASSERT_EQ(run("synth --out " + b.string() + " --pages 200 --seed 4").code, 0);
  ASSERT_EQ(run("synth --out " + c.string() + " --pages 200 --seed 5").code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  EXPECT_NE(slurp(a), slurp(c));
  const Dataset ds = load_coco(a);
  EXPECT_EQ(ds.pages.size(), 200u);
  const double mean = static_cast<double>(ds.num_objects()) / 200.0;
  EXPECT_NEAR(mean, 30.0, 1.5);

  ASSERT_EQ(run("synth --out " + c.string() + " --pages 5 --weights 3,1").code, 0);
  EXPECT_EQ(load_coco(c).num_categories(), 2u);
}

TEST_F(CliTest, EvalExtremes) {
  const auto oracle = dir / "oracle.json";
  ASSERT_EQ(run("synth --out " + oracle.string() + " --pages 20").code, 0);
  Dataset empty = load_coco(oracle);
  for (auto& p : empty.pages) p.objects.clear();
  export_coco(empty, dir / "empty.json");

  const Result same = run("eval " + oracle.string() + " --oracle " + oracle.string() +
                          " --out-dir " + (dir / "e").string());
  ASSERT_EQ(same.code, 0);
  EXPECT_DOUBLE_EQ(ap_of(same.out), 1.0);
  EXPECT_EQ(slurp(dir / "e" / "eval.tsv"), same.out);
  const Result none = run("eval " + (dir / "empty.json").string() + " --oracle " + oracle.string());
  ASSERT_EQ(none.code, 0);
  EXPECT_DOUBLE_EQ(ap_of(none.out), 0.0);

  // agrees with the library on a perturbed copy
  Dataset shifted = load_coco(oracle);
  for (auto& p : shifted.pages) {
    for (auto& o : p.objects) o.bbox.x += 0.15 * o.bbox.w;
  }
  export_coco(shifted, dir / "shifted.json");
  const Result mid = run("eval " + (dir / "shifted.json").string() + " --oracle " + oracle.string());
  EXPECT_NEAR(ap_of(mid.out),
              dataset_accuracy(load_coco(dir / "shifted.json"), load_coco(oracle)).ap, 1e-6);
}

TEST_F(CliTest, ExitCodes) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  EXPECT_EQ(run("simulate --no-such-flag").code, 1);
  EXPECT_EQ(run("--help").code, 0);
  EXPECT_EQ(run("eval").code, 1);
  std::ofstream(dir / "bad.cfg") << "bogus = 1\n";
  EXPECT_EQ(run("simulate --config " + (dir / "bad.cfg").string()).code, 1);
  std::ofstream(dir / "invalid.cfg") << "r_initial = 0.1\nr_last = 0.5\n";
  EXPECT_EQ(run("simulate --config " + (dir / "invalid.cfg").string()).code, 1);
  EXPECT_EQ(run("simulate --oracle " + (dir / "missing.json").string() + " --out-dir " +
                (dir / "x").string())
                .code,
            2);
  std::ofstream(dir / "garbage.json") << "{";
  EXPECT_EQ(run("eval " + (dir / "garbage.json").string() + " --oracle " +
                (dir / "garbage.json").string())
                .code,
            2);
}

/// A serve process with its stdout on a pipe.
struct Server {
  pid_t pid = -1;
  FILE* out = nullptr;

  Server(const std::string& bind, const std::filesystem::path& data) {
    int fds[2];
    if (::pipe(fds) != 0) return;
    pid = ::fork();
    if (pid == 0) {
      ::dup2(fds[1], STDOUT_FILENO);
      ::close(fds[0]);
      ::close(fds[1]);
      ::execl(OLALA_BINARY, OLALA_BINARY, "serve", "--bind", bind.c_str(), "--out-dir",
              data.c_str(), static_cast<char*>(nullptr));
      ::_exit(127);
    }
    ::close(fds[1]);
    out = ::fdopen(fds[0], "r");
  }
  ~Server() {
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      ::waitpid(pid, nullptr, 0);
    }
    if (out) ::fclose(out);
  }
  /// Port announced on the first line, or -1.
  int port() {
    char line[512];
    if (!std::fgets(line, sizeof line, out)) return -1;
    const std::string s(line);
    const auto colon = s.find(':', s.find("serving on"));
    return colon == std::string::npos ? -1 : std::atoi(s.c_str() + colon + 1);
  }
  int wait() {
    int status = 0;
    ::waitpid(pid, &status, 0);
    pid = -1;
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }
};

TEST_F(CliTest, ServeHealthDuplicateBindAndShutdown) {
  Server server("127.0.0.1:0", dir / "data");
  const int port = server.port();
  ASSERT_GT(port, 0);
  httplib::Client client("127.0.0.1", port);
  auto health = client.Get("/health");
  ASSERT_TRUE(health);
  EXPECT_EQ(health->status, 200);

  const nlohmann::json cfg = {{"synth.pages", 12}, {"synth.mean_objects", 6},
                              {"seed_pages", 2},   {"rounds", 2},
                              {"budget", 30}};
  auto created = client.Post("/sessions", cfg.dump(), "application/json");
  ASSERT_TRUE(created);
  ASSERT_EQ(created->status, 201);
  auto task = client.Post("/sessions/s0001/tasks/next", "", "application/json");
  ASSERT_TRUE(task);
  ASSERT_EQ(task->status, 200);

  Server second("127.0.0.1:" + std::to_string(port), dir / "data2");
  EXPECT_EQ(second.wait(), 2);

  ::kill(server.pid, SIGTERM);
  EXPECT_EQ(server.wait(), 0);
  const auto session = dir / "data" / "s0001";
  ASSERT_TRUE(std::filesystem::exists(session / "snapshot.json"));
  const auto snap = nlohmann::json::parse(slurp(session / "snapshot.json"));
  const auto events = EventLog::read(session / "events.jsonl");
  EXPECT_EQ(snap.at("seq"), events.back().at("seq"));
  EXPECT_FALSE(snap.at("open_task").is_null());
}

}  // namespace
}  // namespace olala
