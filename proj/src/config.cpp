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
#include "olala/config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "olala/coco.hpp"

namespace olala {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> out;
  while (true) {
    const auto comma = s.find(',');
    const auto item = trim(s.substr(0, comma));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return out;
}

[[noreturn]] void bad(std::string_view key, std::string_view value,
                      std::string_view what) {
  throw ParseError("config key '" + std::string(key) + "': " + std::string(what) +
                   " (got '" + std::string(value) + "')");
}

double to_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) bad(key, v, "expected a number");
  return out;
}

std::uint64_t to_u64(std::string_view key, std::string_view v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) {
    bad(key, v, "expected a nonnegative integer");
  }
  return out;
}

bool to_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  bad(key, v, "expected true or false");
}

template <typename F>
auto wrap(std::string_view key, std::string_view v, F&& f) {
  try {
    return f(v);
  } catch (const ParseError& e) {
    bad(key, v, e.what());
  }
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view raw) {
  const std::string_view v = trim(raw);
  entries_.emplace_back(std::string(key), std::string(v));

  if (key == "oracle") {
    oracle = std::string(v);
  } else if (key == "pool") {
    pool = std::string(v);
  } else if (key == "modes" || key == "mode") {
    modes.clear();
    for (auto m : split_list(v)) {
      modes.push_back(wrap(key, m, [](auto s) { return mode_from_string(s); }));
    }
    if (modes.empty()) bad(key, v, "empty mode list");
  } else if (key == "scorer") {
    scorer = wrap(key, v, [](auto s) { return scorer_from_string(s); });
  } else if (key == "r_initial") {
    loop.schedule.r_initial = to_double(key, v);
  } else if (key == "r_last") {
    loop.schedule.r_last = to_double(key, v);
  } else if (key == "decay") {
    loop.schedule.decay = wrap(key, v, [](auto s) { return decay_from_string(s); });
  } else if (key == "rounds") {
    loop.schedule.total_rounds = to_u64(key, v);
  } else if (key == "budget") {
    loop.schedule.budget_total = to_double(key, v);
  } else if (key == "eta") {
    loop.eta = to_double(key, v);
  } else if (key == "xi") {
    loop.correction.xi = to_double(key, v);
  } else if (key == "zeta") {
    loop.correction.zeta = to_double(key, v);
  } else if (key == "grid_step") {
    loop.correction.grid_step = to_double(key, v);
  } else if (key == "recover_missing") {
    loop.correction.recover_missing = to_bool(key, v);
  } else if (key == "remove_duplicates") {
    loop.correction.remove_duplicates = to_bool(key, v);
  } else if (key == "parallel") {
    loop.parallel = to_bool(key, v);
  } else if (key == "seed") {
    loop.seed = to_u64(key, v);
    synthetic.seed = loop.seed;
  } else if (key == "seed_pages") {
    seed_pages = to_u64(key, v);
  } else if (key == "keep_threshold") {
    sim.keep_threshold = to_double(key, v);
  } else if (key == "perturb.pairs") {
    perturb.pairs.clear();
    for (auto item : split_list(v)) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) bad(key, item, "expected alpha:beta");
      perturb.pairs.emplace_back(to_double(key, trim(item.substr(0, colon))),
                                 to_double(key, trim(item.substr(colon + 1))));
    }
  } else if (key == "perturb.lambda") {
    perturb.lambda = to_double(key, v);
  } else if (key == "perturb.divergence") {
    if (v == "cross-entropy") {
      perturb.divergence = Divergence::kCrossEntropy;
    } else if (v == "kl") {
      perturb.divergence = Divergence::kKl;
    } else {
      bad(key, v, "expected cross-entropy or kl");
    }
  } else if (key == "detector") {
    if (v == "synthetic") {
      detector = DetectorKind::kSynthetic;
    } else if (v == "external") {
      detector = DetectorKind::kExternal;
    } else {
      bad(key, v, "expected synthetic or external");
    }
  } else if (key == "detector.tau") {
    synthetic.tau = to_double(key, v);
  } else if (key == "detector.sigma") {
    synthetic.sigma = to_double(key, v);
  } else if (key == "detector.rho") {
    synthetic.rho = to_double(key, v);
  } else if (key == "detector.delta") {
    synthetic.delta = to_double(key, v);
  } else if (key == "detector.phi") {
    synthetic.phi = to_double(key, v);
  } else if (key == "detector.confidence_threshold") {
    synthetic.confidence_threshold = to_double(key, v);
  } else if (key == "detector.fixed_skill") {
    synthetic.fixed_skill = to_double(key, v);
  } else if (key == "detector.command") {
    external.command = std::string(v);
  } else if (key == "detector.socket") {
    external.socket_path = std::string(v);
  } else if (key == "detector.timeout_ms") {
    external.timeout = std::chrono::milliseconds(to_u64(key, v));
  } else if (key == "detector.categories") {
    external.num_categories = to_u64(key, v);
  } else if (key == "synth.pages") {
    synth.num_pages = to_u64(key, v);
  } else if (key == "synth.mean_objects") {
    synth.mean_objects = to_double(key, v);
  } else if (key == "synth.seed") {
    synth.seed = to_u64(key, v);
  } else if (key == "synth.weights") {
    synth.category_weights.clear();
    for (auto w : split_list(v)) synth.category_weights.push_back(to_double(key, w));
  } else if (key == "synth.names") {
    synth.category_names.clear();
    for (auto n : split_list(v)) synth.category_names.emplace_back(n);
  } else if (key == "sweep.budget") {
    sweep_budget.clear();
    for (auto b : split_list(v)) sweep_budget.push_back(to_double(key, b));
  } else if (key == "sweep.rounds") {
    sweep_rounds.clear();
    for (auto t : split_list(v)) sweep_rounds.push_back(to_u64(key, t));
  } else if (key == "out_dir") {
    out_dir = std::string(v);
  } else if (key == "image_dir") {
    image_dir = std::string(v);
  } else if (key == "data_dir") {
    data_dir = std::string(v);
  } else {
    entries_.pop_back();
    throw ParseError("unknown config key '" + std::string(key) + "'");
  }
}

void RunConfig::validate() const {
  loop.validate();
  sim.validate();
  perturb.validate();
  if (modes.empty()) throw ValidationError("config: no modes");
  if (detector == DetectorKind::kSynthetic) {
    synthetic.validate();
  } else if (external.command.empty() == external.socket_path.empty()) {
    throw ValidationError(
        "config: external detector needs exactly one of detector.command and "
        "detector.socket");
  }
  if (oracle.empty()) synth.validate();
  for (double b : sweep_budget) {
    if (!(b >= 0.0)) throw ValidationError("config: sweep budgets must be >= 0");
  }
  for (auto t : sweep_rounds) {
    if (t == 0) throw ValidationError("config: sweep rounds must be >= 1");
  }
}

Dataset RunConfig::load_oracle() const {
  if (!oracle.empty()) return load_coco(oracle);
  return make_synthetic_oracle(synth);
}

ScorerKind RunConfig::scorer_for_mode(Mode m) const {
  return scorer.value_or(olala::scorer_for(m));
}

RunConfig RunConfig::parse(std::string_view text, const std::string& origin) {
  RunConfig cfg;
  std::size_t line_no = 0;
  while (!text.empty()) {
    ++line_no;
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError(origin + ":" + std::to_string(line_no) +
                       ": expected 'key = value'");
    }
    try {
      cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ParseError& e) {
      throw ParseError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  RunConfig cfg = parse(ss.str(), path.string());
  // relative dataset paths resolve against the config file
  const auto base = path.parent_path();
  if (!cfg.oracle.empty() && cfg.oracle.is_relative()) cfg.oracle = base / cfg.oracle;
  if (!cfg.pool.empty() && cfg.pool.is_relative()) cfg.pool = base / cfg.pool;
  if (!cfg.image_dir.empty() && cfg.image_dir.is_relative()) {
    cfg.image_dir = base / cfg.image_dir;
  }
  return cfg;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("config must be a JSON object");
  auto scalar = [](const std::string& key, const nlohmann::json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ParseError("config key '" + key + "': expected a scalar or a list");
  };
  RunConfig cfg;
  for (const auto& [key, value] : doc.items()) {
    if (value.is_array()) {
      std::string joined;
      for (const auto& item : value) {
        if (!joined.empty()) joined += ", ";
        joined += scalar(key, item);
      }
      cfg.set(key, joined);
    } else {
      cfg.set(key, scalar(key, value));
    }
  }
  return cfg;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& [k, v] : entries_) out[k] = v;
  if (!oracle.empty()) out["oracle"] = oracle.string();
  if (!pool.empty()) out["pool"] = pool.string();
  if (!image_dir.empty()) out["image_dir"] = image_dir.string();
  return out;
}

std::unique_ptr<Detector> make_detector(const RunConfig& cfg, const Dataset& oracle) {
  if (cfg.detector == DetectorKind::kSynthetic) {
    return std::make_unique<SyntheticDetector>(oracle, cfg.synthetic);
  }
  ExternalConfig ext = cfg.external;
  if (ext.num_categories == 0) ext.num_categories = oracle.num_categories();
  if (ext.work_dir == ".") ext.work_dir = cfg.out_dir;
  return std::make_unique<ExternalDetector>(std::move(ext));
}

}  // namespace olala
