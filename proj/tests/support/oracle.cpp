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

#include "oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

namespace gbfuse::testing {

namespace {

constexpr double kTieTolerance = 1e-12;

struct Sums {
  double g = 0.0;
  double h = 0.0;
  std::size_t n = 0;
};

double score(const Sums& s, double lambda) { return s.g * s.g / (s.h + lambda); }

std::vector<std::vector<double>> distinct_values(const DenseMatrix& x) {
  std::vector<std::vector<double>> out(x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) {
    std::set<double> s;
    for (std::size_t r = 0; r < x.rows; ++r)
      if (!std::isnan(x.at(r, c))) s.insert(x.at(r, c));
    out[c].assign(s.begin(), s.end());
  }
  return out;
}

struct Candidate {
  std::size_t feature;
  double threshold;
  bool default_left;
  double gain;
};

OracleSplit search(const DenseMatrix& x, const std::vector<std::vector<double>>& values,
                   std::span<const std::uint32_t> rows, std::span<const double> g, std::span<const double> h,
                   std::span<const std::uint32_t> features, const OracleParams& p) {
  Sums total;
  for (auto r : rows) {
    total.g += g[r];
    total.h += h[r];
    ++total.n;
  }
  std::vector<Candidate> candidates;
  for (auto f : features) {
    bool any_missing = false;
    for (auto r : rows) any_missing = any_missing || std::isnan(x.at(r, f));
    for (double t : values[f]) {
      for (bool dl : {true, false}) {
        if (!dl && !any_missing) continue;
        Sums left, right;
        for (auto r : rows) {
          const double v = x.at(r, f);
          const bool go_left = std::isnan(v) ? dl : v <= t;
          Sums& s = go_left ? left : right;
          s.g += g[r];
          s.h += h[r];
          ++s.n;
        }
        if (left.n == 0 || right.n == 0) continue;
        if (left.h < p.min_child_weight || right.h < p.min_child_weight) continue;
        const double gain =
            0.5 * (score(left, p.lambda_l2) + score(right, p.lambda_l2) - score(total, p.lambda_l2)) - p.gamma_split;
        candidates.push_back({f, t, dl, gain});
      }
    }
  }
  OracleSplit out;
  if (candidates.empty()) return out;
  double best = candidates.front().gain;
  for (const auto& c : candidates) best = std::max(best, c.gain);
  if (!(best > 0.0)) return out;
  const double accept = best - kTieTolerance * std::max(1.0, std::fabs(best));
  // Candidates were generated in (feature, threshold, default-left first) order.
  std::vector<std::uint32_t> order(features.begin(), features.end());
  std::sort(order.begin(), order.end());
  for (auto f : order)
    for (const auto& c : candidates)
      if (c.feature == f && c.gain >= accept && c.gain > 0.0) return {true, c.feature, c.threshold, c.default_left, c.gain};
  return out;
}

}  // namespace

OracleSplit exact_greedy_split(const DenseMatrix& x, std::span<const std::uint32_t> rows, std::span<const double> g,
                               std::span<const double> h, std::span<const std::uint32_t> features,
                               const OracleParams& params) {
  return search(x, distinct_values(x), rows, g, h, features, params);
}

double ReferenceModel::margin(std::span<const double> x) const {
  double m = base_score;
  for (const auto& t : trees) {
    std::size_t i = 0;
    while (t.nodes[i].left >= 0) {
      const auto& n = t.nodes[i];
      const double v = x[static_cast<std::size_t>(n.feature)];
      const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
      i = static_cast<std::size_t>(left ? n.left : n.right);
    }
    m += t.nodes[i].leaf_value;
  }
  return m;
}

ReferenceModel reference_boost(const DenseMatrix& x, std::span<const int> y, const TrainConfig& config) {
  const std::size_t n = x.rows;
  const auto values = distinct_values(x);
  std::vector<std::uint32_t> all_features(x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) all_features[c] = static_cast<std::uint32_t>(c);
  const OracleParams params{config.lambda_l2, config.gamma_split, config.min_child_weight};

  ReferenceModel model;
  double positives = 0.0;
  for (int v : y) positives += v;
  const double prior = std::clamp(positives / static_cast<double>(n), 1e-6, 1.0 - 1e-6);
  model.base_score = config.base_score.value_or(std::log(prior / (1.0 - prior)));

  std::vector<double> margin(n, model.base_score), g(n), h(n);
  for (int round = 0; round < config.n_estimators; ++round) {
    for (std::size_t r = 0; r < n; ++r) {
      const double p = 1.0 / (1.0 + std::exp(-margin[r]));
      g[r] = p - y[r];
      h[r] = std::max(p * (1.0 - p), 1e-16);
    }
    Tree tree;
    std::function<void(std::size_t, std::vector<std::uint32_t>, int)> grow =
        [&](std::size_t node, std::vector<std::uint32_t> rows, int depth) {
          double G = 0.0, H = 0.0;
          for (auto r : rows) {
            G += g[r];
            H += h[r];
          }
          OracleSplit s;
          if (depth < config.max_depth) s = search(x, values, rows, g, h, all_features, params);
          if (!s.valid) {
            tree.nodes[node].leaf_value = -config.learning_rate * G / (H + config.lambda_l2);
            return;
          }
          std::vector<std::uint32_t> left, right;
          for (auto r : rows) {
            const double v = x.at(r, s.feature);
            (std::isnan(v) ? s.default_left : v <= s.threshold) ? left.push_back(r) : right.push_back(r);
          }
          const auto l = tree.nodes.size();
          tree.nodes.emplace_back();
          tree.nodes.emplace_back();
          auto& nd = tree.nodes[node];
          nd.left = static_cast<std::int32_t>(l);
          nd.right = static_cast<std::int32_t>(l + 1);
          nd.feature = static_cast<std::int32_t>(s.feature);
          nd.threshold = s.threshold;
          nd.default_left = s.default_left;
          grow(l, std::move(left), depth + 1);
          grow(l + 1, std::move(right), depth + 1);
        };
    tree.nodes.emplace_back();
    std::vector<std::uint32_t> rows(n);
    for (std::size_t r = 0; r < n; ++r) rows[r] = static_cast<std::uint32_t>(r);
    grow(0, std::move(rows), 0);
    for (std::size_t r = 0; r < n; ++r) {
      ReferenceModel single{0.0, {tree}};
      margin[r] += single.margin(x.row(r));
    }
    model.trees.push_back(std::move(tree));
  }
  return model;
}

OracleCase random_oracle_case(std::mt19937_64& rng, std::size_t max_rows, std::size_t max_features, int max_depth) {
  std::uniform_int_distribution<std::size_t> rows_d(20, max_rows), feat_d(1, max_features);
  std::uniform_int_distribution<int> depth_d(1, max_depth), rounds_d(1, 8), kind_d(0, 2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> normal;
  OracleCase c;
  c.x.rows = rows_d(rng);
  c.x.cols = feat_d(rng);
  c.x.values.resize(c.x.rows * c.x.cols);
  std::vector<int> kinds(c.x.cols);
  for (auto& k : kinds) k = kind_d(rng);
  for (std::size_t r = 0; r < c.x.rows; ++r) {
    for (std::size_t f = 0; f < c.x.cols; ++f) {
      double v = 0.0;
      switch (kinds[f]) {
        case 0: v = std::round(normal(rng) * 1000.0) / 1000.0; break;
        case 1: v = static_cast<double>(static_cast<int>(u(rng) * 5.0)); break;
        default: v = u(rng) < 0.15 ? std::nan("") : std::round(u(rng) * 100.0) / 10.0; break;
      }
      c.x.values[r * c.x.cols + f] = v;
    }
    double score = 0.0;
    for (std::size_t f = 0; f < c.x.cols; ++f) {
      const double v = c.x.at(r, f);
      score += std::isnan(v) ? 0.5 : (f % 2 == 0 ? v : -0.3 * v);
    }
    c.y.push_back(score + normal(rng) > 0.0 ? 1 : 0);
  }
  auto& cfg = c.config;
  cfg.max_depth = depth_d(rng);
  cfg.n_estimators = rounds_d(rng);
  cfg.learning_rate = 0.05 + 0.45 * u(rng);
  cfg.lambda_l2 = 2.0 * u(rng);
  cfg.gamma_split = u(rng) < 0.5 ? 0.0 : 0.05 * u(rng);
  const double mcw[] = {0.0, 0.1, 1.0};
  cfg.min_child_weight = mcw[static_cast<std::size_t>(u(rng) * 3.0) % 3];
  cfg.subsample = 1.0;
  cfg.colsample = 1.0;
  cfg.n_bins = 256;
  cfg.seed = rng();
  return c;
}

}  // namespace gbfuse::testing
