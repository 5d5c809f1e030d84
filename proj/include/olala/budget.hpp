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

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "olala/types.hpp"

namespace olala {

enum class ChargeKind : std::uint8_t { kFull, kDiscounted, kRecovered };

std::string_view to_string(ChargeKind kind);
ChargeKind charge_kind_from_string(std::string_view name);

struct Charge {
  std::int64_t image_id = 0;
  /// Object position within its page, or -1 when the charge has no object.
  std::int64_t object = -1;
  ChargeKind kind = ChargeKind::kFull;
  double amount = 0.0;
};

/// Per-round object budget. Full and recovered labels cost 1, confirmations
/// of unchanged predictions cost eta. The ledger records every charge; it
/// does not refuse charges, callers check remaining() first.
class BudgetLedger {
 public:
  static constexpr double kDefaultEta = 0.2;

  explicit BudgetLedger(double allowance = 0.0, double eta = kDefaultEta);

  double cost(ChargeKind kind) const {
    return kind == ChargeKind::kDiscounted ? eta_ : 1.0;
  }
  double charge(std::int64_t image_id, std::int64_t object, ChargeKind kind);

  double allowance() const { return allowance_; }
  double eta() const { return eta_; }
  double spent() const { return spent_; }
  double remaining() const { return allowance_ - spent_; }
  /// True while at least one full charge fits.
  bool can_afford_full() const { return remaining() >= 1.0; }

  std::size_t count(ChargeKind kind) const {
    return counts_[static_cast<std::size_t>(kind)];
  }
  /// full + eta * discounted + recovered, from the counts.
  double expected_spent() const;
  const std::vector<Charge>& log() const { return log_; }

 private:
  double allowance_;
  double eta_;
  double spent_ = 0.0;
  std::array<std::size_t, 3> counts_{};
  std::vector<Charge> log_;
};

}  // namespace olala
