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
#include <signal.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "olala/coco.hpp"
#include "olala/config.hpp"
#include "olala/log.hpp"
#include "olala/report.hpp"
#include "olala/server.hpp"
#include "olala/synth.hpp"

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

/// Bad configuration or flags, as opposed to failures while running.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <typename F>
auto as_usage(F&& f) {
  try {
    return f();
  } catch (const olala::ParseError& e) {
    throw UsageError(e.what());
  } catch (const olala::ValidationError& e) {
    throw UsageError(e.what());
  }
}

struct Overrides {
  std::string config;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> budget;
  std::optional<std::size_t> rounds;
  std::optional<std::string> out_dir;
  std::optional<std::string> oracle;
};

olala::RunConfig load_config(const Overrides& o) {
  return as_usage([&] {
    olala::RunConfig cfg =
        o.config.empty() ? olala::RunConfig{} : olala::RunConfig::load(o.config);
    if (o.mode) cfg.set("modes", *o.mode);
    if (o.seed) cfg.set("seed", std::to_string(*o.seed));
    if (o.budget) cfg.set("budget", *o.budget);
    if (o.rounds) cfg.set("rounds", std::to_string(*o.rounds));
    if (o.oracle) cfg.set("oracle", *o.oracle);
    if (o.out_dir) cfg.out_dir = std::filesystem::path(*o.out_dir);
    cfg.validate();
    return cfg;
  });
}

int cmd_simulate(const Overrides& o) {
  const olala::RunConfig cfg = load_config(o);
  const olala::Dataset oracle = cfg.load_oracle();
  olala::log::info("oracle: {} pages, {} objects", oracle.pages.size(), oracle.num_objects());
  const auto runs = olala::run_experiments(cfg, oracle);
  for (const auto& path : olala::write_reports(cfg.out_dir, cfg, runs)) {
    std::cout << path.string() << '\n';
  }
  olala::write_summary(std::cout, cfg, runs);
  return 0;
}

int cmd_serve(const Overrides& o, const std::string& bind) {
  const olala::RunConfig cfg = load_config(o);
  const auto [host, port] = as_usage([&] { return olala::parse_bind_address(bind); });
  const std::filesystem::path data_dir =
      o.out_dir ? std::filesystem::path(*o.out_dir) : cfg.data_dir;

  // signals are taken by a dedicated thread so shutdown runs outside a handler
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  olala::SessionManager sessions(data_dir);
  olala::HttpService service(sessions, cfg.image_dir);
  const int bound = service.bind(host, port);
  if (bound < 0) {
    std::cerr << "olala: cannot bind " << host << ":" << port << '\n';
    return kRuntime;
  }
  std::cout << fmt::format("olala: serving on {}:{} (data in {})", host, bound,
                           data_dir.string())
            << std::endl;

  std::thread waiter([&] {
    int sig = 0;
    sigwait(&set, &sig);
    olala::log::info("signal {}; shutting down", sig);
    service.stop();
  });
  const bool ok = service.listen();
  if (!ok) {
    // listener died on its own: wake the waiter
    pthread_kill(waiter.native_handle(), SIGTERM);
  }
  waiter.join();
  sessions.flush();
  return ok ? 0 : kRuntime;
}

int cmd_eval(const std::string& created_path, const Overrides& o) {
  if (!o.oracle) throw CLI::RequiredError("--oracle");
  const olala::Dataset created = olala::load_coco(created_path);
  const olala::Dataset oracle = olala::load_coco(*o.oracle);
  const auto ap = olala::dataset_accuracy(created, oracle);
  if (o.out_dir) {
    std::filesystem::create_directories(*o.out_dir);
    std::ofstream out(std::filesystem::path(*o.out_dir) / "eval.tsv");
    olala::write_ap_report(out, oracle, ap);
  }
  olala::write_ap_report(std::cout, oracle, ap);
  return 0;
}

int cmd_synth(const olala::SynthConfig& sc, const std::string& out) {
  const olala::Dataset ds = olala::make_synthetic_oracle(sc);
  const std::filesystem::path path(out);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  olala::export_coco(ds, path);
  std::cout << fmt::format("{}: {} pages, {} objects\n", out, ds.pages.size(),
                           ds.num_objects());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"olala: object-level active learning for layout annotation"};
  app.require_subcommand(1);
  Overrides o;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", o.config, "run configuration file")->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_option("--out-dir", o.out_dir, "output directory");
    cmd->add_option("--oracle", o.oracle, "oracle COCO file");
  };

  auto* simulate = app.add_subcommand("simulate", "run labeling simulations");
  add_common(simulate);
  simulate->add_option("--mode", o.mode, "comma-separated modes");
  simulate->add_option("--budget", o.budget, "total object budget (inf for unlimited)");
  simulate->add_option("--rounds", o.rounds, "number of rounds T");

  std::string bind = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "run the annotation service");
  add_common(serve);
  serve->add_option("--bind", bind, "host:port to listen on");

  std::string created;
  auto* eval = app.add_subcommand("eval", "dataset accuracy of a created COCO file");
  eval->add_option("created", created, "created dataset")->required()->check(CLI::ExistingFile);
  eval->add_option("--oracle", o.oracle, "oracle COCO file")->required()->check(CLI::ExistingFile);
  eval->add_option("--out-dir", o.out_dir, "also write eval.tsv here");

  olala::SynthConfig sc;
  std::string synth_out;
  std::string weights;
  auto* synth = app.add_subcommand("synth", "generate a synthetic layout oracle");
  synth->add_option("--out", synth_out, "output COCO file")->required();
  synth->add_option("--pages", sc.num_pages, "number of pages");
  synth->add_option("--mean-objects", sc.mean_objects, "mean objects per page");
  synth->add_option("--seed", sc.seed, "random seed");
  synth->add_option("--weights", weights, "comma-separated category weights");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (*simulate) return cmd_simulate(o);
    if (*serve) return cmd_serve(o, bind);
    if (*eval) return cmd_eval(created, o);
    if (*synth) {
      if (!weights.empty()) {
        olala::RunConfig tmp;
        as_usage([&] { tmp.set("synth.weights", weights); });
        sc.category_weights = tmp.synth.category_weights;
        if (sc.category_weights.size() != sc.category_names.size()) {
          sc.category_names.clear();
          for (std::size_t c = 0; c < sc.category_weights.size(); ++c) {
            sc.category_names.push_back(fmt::format("category_{}", c + 1));
          }
        }
      }
      return cmd_synth(sc, synth_out);
    }
  } catch (const UsageError& e) {
    std::cerr << "olala: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "olala: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
