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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "gbfuse/boosting.hpp"
#include "support/criteria.hpp"
#include "support/oracle.hpp"

using namespace gbfuse;

namespace {

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed, double missing = 0.1) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  DenseMatrix x;
  x.rows = rows;
  x.cols = cols;
  x.values.resize(rows * cols);
  for (auto& v : x.values) v = u(rng) < missing ? std::nan("") : normal(rng);
  return x;
}

std::vector<int> labels_from(const DenseMatrix& x, int n_classes = 2) {
  std::vector<int> y(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) {
    const double a = std::isnan(x.at(r, 0)) ? 0.0 : x.at(r, 0);
    const double b = std::isnan(x.at(r, 1)) ? 0.0 : x.at(r, 1);
    const double s = a + 0.5 * b;
    y[r] = n_classes == 2 ? (s > 0.0) : (s < -0.5 ? 0 : s < 0.5 ? 1 : 2);
  }
  return y;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("binning: distinct values when few, quantiles otherwise") {
  const std::vector<double> few = {3, 1, 2, 2, std::nan(""), 1};
  CHECK(build_bins(few, 256, 0) == std::vector<double>{1, 2, 3});
  std::vector<double> many(1000);
  std::iota(many.begin(), many.end(), 0.0);
  const auto edges = build_bins(many, 10, 0);
  CHECK(edges.size() == 10);
  CHECK(edges.front() == 99);
  CHECK(edges.back() == 999);
  CHECK(bin_of(3.0, std::vector<double>{1, 2, 3}) == 2);
  CHECK(bin_of(2.5, std::vector<double>{1, 2, 3}) == 2);
  CHECK(bin_of(99.0, std::vector<double>{1, 2, 3}) == 2);
  CHECK(bin_of(-5.0, std::vector<double>{1, 2, 3}) == 0);
  CHECK(bin_of(std::nan(""), std::vector<double>{1, 2, 3}) == 3);
  const std::vector<double> all_missing = {std::nan(""), std::nan("")};
  CHECK(build_bins(all_missing, 8, 0).size() == 1);
}

TEST_CASE("split loss change matches the closed form") {
  const NodeTotals left{-3.0, 2.0, 4}, right{1.0, 3.0, 5}, parent{-2.0, 5.0, 9};
  const double lambda = 0.5;
  const double expect = 0.5 * (9.0 / 2.5 + 1.0 / 3.5 - 4.0 / 5.5);
  CHECK(split_loss_change(left, right, parent, lambda) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("scan_feature picks the best bin and learns the missing direction") {
  // Bins: [g, h, count]; last entry is the missing bin.
  const std::vector<HistBin> hist = {{-2.0, 1.0, 2}, {-1.0, 1.0, 2}, {2.0, 1.0, 2}, {-1.5, 0.5, 1}};
  const NodeTotals totals{-2.5, 3.5, 7};
  const SplitParams params{1.0, 0.0, 0.1};
  const auto s = scan_feature(hist, totals, params);
  REQUIRE(s.valid);
  CHECK(s.bin == 1);
  CHECK(s.default_left);
  CHECK(s.left.count == 5);
  CHECK(s.gain == doctest::Approx(split_loss_change(s.left, s.right, totals, 1.0)));
  SplitParams strict = params;
  strict.gamma_split = 100.0;
  CHECK_FALSE(scan_feature(hist, totals, strict).valid);
  strict = params;
  strict.min_child_weight = 10.0;
  CHECK_FALSE(scan_feature(hist, totals, strict).valid);
}

TEST_CASE("serial and parallel kernels are bit-identical") {
  const auto x = random_matrix(5000, 40, 1);
  const auto y = labels_from(x);
  const auto q = quantize(x, 64, 1);
  std::vector<GradientPair> grads(x.rows);
  for (std::size_t r = 0; r < x.rows; ++r) grads[r] = logistic_grad_hess(0.3 * (r % 7) - 1.0, y[r]);
  std::vector<std::uint32_t> rows, features(x.cols);
  for (std::uint32_t r = 0; r < x.rows; r += 3) rows.push_back(r);
  std::iota(features.begin(), features.end(), 0u);
  std::vector<HistBin> a(q.hist_size()), b(q.hist_size());
  for (int threads : {1, 2, 4}) {
    kernels::set_num_threads(threads);
    kernels::serial::build_histogram(q, grads, rows, features, a);
    kernels::parallel::build_histogram(q, grads, rows, features, b);
    CHECK(a == b);
    std::vector<HistBin> parent(q.hist_size()), sa(q.hist_size()), sb(q.hist_size());
    std::vector<std::uint32_t> all(x.rows);
    std::iota(all.begin(), all.end(), 0u);
    kernels::serial::build_histogram(q, grads, all, features, parent);
    kernels::serial::subtract_histogram(parent, a, sa);
    kernels::parallel::subtract_histogram(parent, a, sb);
    CHECK(sa == sb);
    NodeTotals totals;
    for (auto r : rows) {
      totals.g += grads[r].g;
      totals.h += grads[r].h;
    }
    totals.count = rows.size();
    const auto ss = kernels::serial::scan_features(q, a, features, totals, {});
    const auto ps = kernels::parallel::scan_features(q, a, features, totals, {});
    REQUIRE(ss.size() == ps.size());
    for (std::size_t i = 0; i < ss.size(); ++i) {
      CHECK(ss[i].valid == ps[i].valid);
      CHECK(ss[i].bin == ps[i].bin);
      CHECK(ss[i].gain == ps[i].gain);
    }
  }
  kernels::set_num_threads(0);
}

TEST_CASE("subtraction of a child histogram gives the sibling") {
  const auto x = random_matrix(800, 5, 2);
  const auto q = quantize(x, 32, 2);
  std::vector<GradientPair> grads(x.rows, GradientPair{0.25, 0.5});
  std::vector<std::uint32_t> all(x.rows), left, right, features(x.cols);
  std::iota(all.begin(), all.end(), 0u);
  std::iota(features.begin(), features.end(), 0u);
  for (auto r : all) (r % 3 == 0 ? left : right).push_back(r);
  std::vector<HistBin> parent(q.hist_size()), l(q.hist_size()), r(q.hist_size()), sub(q.hist_size());
  kernels::serial::build_histogram(q, grads, all, features, parent);
  kernels::serial::build_histogram(q, grads, left, features, l);
  kernels::serial::build_histogram(q, grads, right, features, r);
  kernels::serial::subtract_histogram(parent, l, sub);
  for (std::size_t i = 0; i < sub.size(); ++i) {
    CHECK(sub[i].count == r[i].count);
    CHECK(sub[i].g == doctest::Approx(r[i].g).epsilon(1e-12));
  }
}

TEST_CASE("splits agree with the exact-greedy oracle on small random datasets") {
  const auto r = testing::check_oracle_equivalence(10, 77);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("gradients agree with finite differences") {
  const auto r = testing::check_gradient(1000, 3);
  INFO(r.detail);
  CHECK(r.pass);
}

TEST_CASE("objective helpers") {
  CHECK(sigmoid(0.0) == 0.5);
  CHECK(sigmoid(-800.0) >= 0.0);
  CHECK(sigmoid(800.0) == 1.0);
  CHECK(logistic_loss(0.0, 1) == doctest::Approx(std::log(2.0)));
  CHECK(std::isfinite(logistic_loss(-800.0, 1)));
  CHECK(logistic_grad_hess(1000.0, 1).h == 1e-16);
  const std::vector<double> m = {1000.0, 1000.0, -1000.0};
  const auto p = softmax(m);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(p[2] == doctest::Approx(0.0));
}

TEST_CASE("training is independent of thread count and kernel choice") {
  const auto x = random_matrix(3000, 12, 3);
  const auto y = labels_from(x);
  TrainConfig c;
  c.n_estimators = 15;
  ExecutionOptions serial;
  serial.parallel_kernels = false;
  const auto reference = serialize_model(train(x, y, c, serial).model);
  for (int threads : {1, 2, 4}) {
    ExecutionOptions exec;
    exec.n_threads = threads;
    CHECK(serialize_model(train(x, y, c, exec).model) == reference);
  }
  kernels::set_num_threads(0);
}

TEST_CASE("training reduces loss and fits separable data") {
  const auto x = random_matrix(1000, 6, 4, 0.0);
  const auto y = labels_from(x);
  TrainConfig c;
  c.n_estimators = 60;
  std::vector<double> losses;
  TrainHooks hooks;
  hooks.on_round = [&](int, double loss) { losses.push_back(loss); };
  const auto r = train(x, y, c, {}, hooks);
  REQUIRE(losses.size() == 60);
  CHECK(losses == r.round_loss);
  CHECK(losses.back() < losses.front());
  for (std::size_t i = 1; i < losses.size(); ++i) CHECK(losses[i] <= losses[i - 1] + 1e-3);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows; ++i) correct += (r.model.predict_positive(x.row(i)) >= 0.5) == (y[i] == 1);
  CHECK(static_cast<double>(correct) / static_cast<double>(x.rows) > 0.95);
  CHECK(r.model.trees.size() == 60);
  for (const auto& t : r.model.trees) CHECK(t.depth() <= c.max_depth);
}

TEST_CASE("base score is the log-odds of the training prevalence") {
  const auto x = random_matrix(100, 3, 5);
  std::vector<int> y(100, 0);
  for (int i = 0; i < 25; ++i) y[static_cast<std::size_t>(i)] = 1;
  TrainConfig c;
  c.n_estimators = 1;
  CHECK(train(x, y, c).model.base_score[0] == doctest::Approx(std::log(0.25 / 0.75)));
  c.base_score = 0.0;
  CHECK(train(x, y, c).model.base_score[0] == 0.0);
  spdlog::set_level(spdlog::level::off);
  c.base_score.reset();
  const std::vector<int> ones(100, 1);
  const auto single = train(x, ones, c).model;
  CHECK(std::isfinite(single.base_score[0]));
  spdlog::set_level(spdlog::level::info);
}

TEST_CASE("multiclass training uses one tree per class per round") {
  const auto x = random_matrix(900, 5, 6, 0.0);
  const auto y = labels_from(x, 3);
  TrainConfig c;
  c.n_classes = 3;
  c.n_estimators = 30;
  const auto m = train(x, y, c).model;
  CHECK(m.trees.size() == 90);
  CHECK(m.base_score.size() == 3);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto p = m.predict_proba(x.row(i));
    CHECK(p[0] + p[1] + p[2] == doctest::Approx(1.0));
    correct += static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()) == y[i];
  }
  CHECK(static_cast<double>(correct) / 900.0 > 0.9);
}

TEST_CASE("training input validation") {
  const auto x = random_matrix(10, 2, 7);
  std::vector<int> y(10, 0);
  y[0] = 1;
  TrainConfig c;
  CHECK(code_of([&] { train(DenseMatrix{}, {}, c); }) == ErrorCode::EmptyDataset);
  CHECK(code_of([&] { train(x, std::vector<int>(9, 0), c); }) == ErrorCode::LengthMismatch);
  auto bad = y;
  bad[3] = 2;
  CHECK(code_of([&] { train(x, bad, c); }) == ErrorCode::LabelOutOfRange);
  for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
           [](TrainConfig& t) { t.learning_rate = 0.0; }, [](TrainConfig& t) { t.max_depth = -1; },
           [](TrainConfig& t) { t.subsample = 1.5; }, [](TrainConfig& t) { t.colsample = 0.0; },
           [](TrainConfig& t) { t.n_bins = 0; }, [](TrainConfig& t) { t.lambda_l2 = -1.0; },
           [](TrainConfig& t) { t.n_classes = 1; }, [](TrainConfig& t) { t.n_estimators = -1; }}) {
    TrainConfig t;
    mutate(t);
    CHECK(code_of([&] { t.validate(); }) == ErrorCode::InvalidArgument);
  }
}

TEST_CASE("split events report the chosen threshold") {
  const auto x = random_matrix(300, 4, 8);
  const auto y = labels_from(x);
  TrainConfig c;
  c.n_estimators = 3;
  c.max_depth = 3;
  std::size_t splits = 0;
  TrainHooks hooks;
  hooks.on_node = [&](const SplitEvent& ev) {
    if (!ev.split) return;
    ++splits;
    CHECK(ev.threshold == ev.quantized->edges[static_cast<std::size_t>(ev.split_feature)][ev.split->bin]);
    CHECK(ev.split->left.count + ev.split->right.count == ev.rows.size());
  };
  train(x, y, c, {}, hooks);
  CHECK(splits > 0);
}
