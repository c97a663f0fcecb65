// Copyright 2026 The gbfuse Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Runs every acceptance criterion and prints one PASS/FAIL line each. Exits
// nonzero if any criterion fails.

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "support/criteria.hpp"

int main() {
  using namespace gbfuse::testing;
  spdlog::set_level(spdlog::level::err);
  const std::vector<std::pair<std::string, std::function<CheckResult()>>> criteria = {
      {"oracle_equivalence", [] { return check_oracle_equivalence(); }},
      {"gradient_check", [] { return check_gradient(); }},
      {"train_determinism", [] { return check_train_determinism(); }},
      {"synthetic_end_to_end", [] { return check_synthetic_end_to_end(); }},
      {"importance_sanity", [] { return check_importance_sanity(); }},
      {"metrics_arithmetic", [] { return check_metrics_arithmetic(); }},
      {"encoding_invariants", [] { return check_encoding_invariants(); }},
      {"model_persistence", [] { return check_model_persistence(); }},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    CheckResult r;
    try {
      r = run();
    } catch (const std::exception& e) {
      r.pass = false;
      r.detail = std::string("exception: ") + e.what();
    }
    failed += r.pass ? 0 : 1;
    fmt::print("{}  {:<22} {:>7.2f} s  {}\n", r.pass ? "PASS" : "FAIL", name, r.seconds, r.detail);
    std::fflush(stdout);
  }
  fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
