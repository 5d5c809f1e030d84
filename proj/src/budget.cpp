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
#include "olala/budget.hpp"

#include <string>

namespace olala {

std::string_view to_string(ChargeKind kind) {
  switch (kind) {
    case ChargeKind::kFull:
      return "full";
    case ChargeKind::kDiscounted:
      return "discounted";
    case ChargeKind::kRecovered:
      return "recovered";
  }
  return "unknown";
}

ChargeKind charge_kind_from_string(std::string_view name) {
  if (name == "full") return ChargeKind::kFull;
  if (name == "discounted") return ChargeKind::kDiscounted;
  if (name == "recovered") return ChargeKind::kRecovered;
  throw ParseError("unknown charge kind '" + std::string(name) + "'");
}

BudgetLedger::BudgetLedger(double allowance, double eta)
    : allowance_(allowance), eta_(eta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("eta must lie in (0, 1]");
  if (!(allowance >= 0.0)) throw ValidationError("allowance must be nonnegative");
}

double BudgetLedger::charge(std::int64_t image_id, std::int64_t object,
                            ChargeKind kind) {
  const double amount = cost(kind);
  spent_ += amount;
  ++counts_[static_cast<std::size_t>(kind)];
  log_.push_back(Charge{image_id, object, kind, amount});
  return amount;
}

double BudgetLedger::expected_spent() const {
  return static_cast<double>(count(ChargeKind::kFull)) +
         eta_ * static_cast<double>(count(ChargeKind::kDiscounted)) +
         static_cast<double>(count(ChargeKind::kRecovered));
}

}  // namespace olala
