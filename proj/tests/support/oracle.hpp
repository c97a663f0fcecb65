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

// Independent references for the tree learner: an exhaustive exact-greedy
// split search over raw feature values and a small booster built on it. They
// share no code with the histogram engine beyond the data types.

#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "gbfuse/boosting.hpp"

namespace gbfuse::testing {

struct OracleParams {
  double lambda_l2 = 1.0;
  double gamma_split = 0.0;
  double min_child_weight = 1.0;
};

struct OracleSplit {
  bool valid = false;
  std::size_t feature = 0;
  double threshold = 0.0;  // go left iff value <= threshold
  bool default_left = true;
  double gain = 0.0;  // loss reduction minus gamma
};

/// Tries every distinct training value of every candidate feature as a
/// threshold (both default directions when the node has missing values) and
/// returns the best by regularized second-order gain. Near-ties (relative
/// 1e-12) go to the lowest feature, then threshold, then default-left.
OracleSplit exact_greedy_split(const DenseMatrix& x, std::span<const std::uint32_t> rows,
                               std::span<const double> g, std::span<const double> h,
                               std::span<const std::uint32_t> features, const OracleParams& params);

/// Binary logistic booster that grows every tree with exact_greedy_split over
/// all rows and all features. Returns training-set margins after all rounds
/// and the per-round trees.
struct ReferenceModel {
  double base_score = 0.0;
  std::vector<Tree> trees;

  double margin(std::span<const double> x) const;
};

ReferenceModel reference_boost(const DenseMatrix& x, std::span<const int> y, const TrainConfig& config);

/// Random binary dataset for oracle runs: up to `max_rows` rows and
/// `max_features` features mixing continuous, small-integer and
/// partly-missing columns.
struct OracleCase {
  DenseMatrix x;
  std::vector<int> y;
  TrainConfig config;
};
OracleCase random_oracle_case(std::mt19937_64& rng, std::size_t max_rows = 200, std::size_t max_features = 8,
                              int max_depth = 3);

}  // namespace gbfuse::testing
