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
#include "olala/report.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>
#include <fmt/ostream.h>

namespace olala {

namespace {

std::string num(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{:.6f}", v);
}

std::string opt(const std::optional<double>& v) { return v ? num(*v) : "-"; }

std::string budget_label(double b) {
  return std::isinf(b) ? "inf" : fmt::format("{:g}", b);
}

}  // namespace

std::vector<ExperimentRun> run_experiments(const RunConfig& cfg, const Dataset& oracle) {
  cfg.validate();
  const bool sweep = !cfg.sweep_budget.empty() || !cfg.sweep_rounds.empty();
  std::vector<double> budgets = cfg.sweep_budget;
  if (budgets.empty()) budgets.push_back(cfg.loop.schedule.budget_total);
  std::vector<std::size_t> rounds = cfg.sweep_rounds;
  if (rounds.empty()) rounds.push_back(cfg.loop.schedule.total_rounds);

  std::vector<ExperimentRun> runs;
  for (double m : budgets) {
    for (std::size_t T : rounds) {
      for (Mode mode : cfg.modes) {
        LoopConfig lc = cfg.loop;
        lc.mode = mode;
        lc.schedule.budget_total = m;
        lc.schedule.total_rounds = T;
        auto detector = make_detector(cfg, oracle);
        auto scorer = make_scorer(cfg.scorer_for_mode(mode), cfg.perturb, cfg.loop.seed);
        SimulatedAnnotator annotator(oracle, cfg.sim, lc.correction.zeta);
        PoolState pool = make_initial_pool(oracle, cfg.seed_pages, cfg.loop.seed);

        ExperimentRun run;
        run.mode = mode;
        run.budget = m;
        run.rounds = T;
        run.name = std::string(to_string(mode));
        if (sweep) run.name += fmt::format("_m{}_T{}", budget_label(m), T);
        run.report = olala::run(pool, *detector, *scorer, annotator, lc, &oracle);
        runs.push_back(std::move(run));
      }
    }
  }
  return runs;
}

void write_round_table(std::ostream& out, const FinalReport& report) {
  out << "round\tratio\tskill\tpages\tcumulative_pages\tobjects\tfull\tdiscounted"
         "\trecovered_charges\tspent\tallowance\tmanual\tmodel_auto"
         "\tmodel_unchanged\trecovered\tpool_ap\tcreated_ap\n";
  for (const auto& r : report.rounds) {
    fmt::print(out, "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
               r.round, num(r.selection_ratio), num(r.skill), r.pages_labeled,
               r.cumulative_pages, r.objects_added, r.ledger.count(ChargeKind::kFull),
               r.ledger.count(ChargeKind::kDiscounted),
               r.ledger.count(ChargeKind::kRecovered), num(r.ledger.spent()),
               num(r.ledger.allowance()), r.sources.manual, r.sources.model_auto,
               r.sources.model_unchanged, r.sources.recovered, opt(r.pool_ap),
               opt(r.created_ap));
  }
}

void write_comparison_table(std::ostream& out, std::span<const ExperimentRun> runs) {
  out << "run\tmode\tbudget\trounds\tlabeled_images\tlabeled_objects\tspent"
         "\tfinal_skill\tpool_ap\tcreated_ap\tmanual\tmodel_auto\tmodel_unchanged"
         "\trecovered\n";
  for (const auto& run : runs) {
    const auto& r = run.report;
    fmt::print(out, "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", run.name,
               to_string(run.mode), budget_label(run.budget), run.rounds,
               r.labeled_images, r.labeled_objects, num(r.total_spent),
               num(r.final_skill), opt(r.pool_ap), opt(r.created_ap),
               num(r.breakdown.manual), num(r.breakdown.model_auto),
               num(r.breakdown.model_unchanged), num(r.breakdown.recovered));
  }
}

void write_summary(std::ostream& out, const RunConfig& cfg,
                   std::span<const ExperimentRun> runs) {
  out << "olala simulation summary\n\nconfiguration:\n";
  for (const auto& [k, v] : cfg.entries()) out << "  " << k << " = " << v << '\n';
  out << '\n';
  for (const auto& run : runs) {
    const auto& r = run.report;
    fmt::print(out,
               "{}: {} images / {} objects labeled for {:.1f} budget over {} rounds;"
               " final skill {:.3f}",
               run.name, r.labeled_images, r.labeled_objects, r.total_spent,
               run.rounds, r.final_skill);
    if (r.pool_ap) fmt::print(out, "; pool AP {:.4f}", *r.pool_ap);
    if (r.created_ap) fmt::print(out, "; created AP {:.4f}", *r.created_ap);
    out << '\n';
  }
}

std::vector<std::filesystem::path> write_reports(const std::filesystem::path& dir,
                                                 const RunConfig& cfg,
                                                 std::span<const ExperimentRun> runs) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  auto open = [&](const std::string& name) {
    written.push_back(dir / name);
    std::ofstream f(written.back());
    if (!f) throw Error("cannot write " + written.back().string());
    return f;
  };
  for (const auto& run : runs) {
    auto f = open(run.name + ".tsv");
    write_round_table(f, run.report);
  }
  {
    auto f = open("comparison.tsv");
    write_comparison_table(f, runs);
  }
  {
    auto f = open("summary.txt");
    write_summary(f, cfg, runs);
  }
  return written;
}

void write_ap_report(std::ostream& out, const Dataset& oracle, const ApSummary& ap) {
  out << "metric\tvalue\n";
  out << "ap\t" << num(ap.ap) << '\n';
  const auto thresholds = coco_iou_thresholds();
  for (std::size_t t = 0; t < thresholds.size(); ++t) {
    fmt::print(out, "ap@{:.2f}\t{}\n", thresholds[t], num(ap.per_threshold[t]));
  }
  for (std::size_t c = 0; c < ap.per_category.size(); ++c) {
    fmt::print(out, "ap[{}]\t{}\n", oracle.categories[c].name, num(ap.per_category[c]));
  }
}

}  // namespace olala
