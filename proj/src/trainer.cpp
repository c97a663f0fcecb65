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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gbfuse/boosting.hpp"
#include "gbfuse/error.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse {

void TrainConfig::validate() const {
  const auto bad = [](std::string_view field, const std::string& why) {
    throw Error(ErrorCode::InvalidArgument, fmt::format("{} {}", field, why), Location{"", 0, std::string(field)});
  };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) bad("learning_rate", "must be > 0");
  if (max_depth < 0) bad("max_depth", "must be >= 0");
  if (n_estimators < 0) bad("n_estimators", "must be >= 0");
  if (!(subsample > 0.0 && subsample <= 1.0)) bad("subsample", "must lie in (0, 1]");
  if (!(colsample > 0.0 && colsample <= 1.0)) bad("colsample", "must lie in (0, 1]");
  if (n_bins < 1 || n_bins > 65534) bad("n_bins", "must lie in [1, 65534]");
  if (!(lambda_l2 >= 0.0)) bad("lambda_l2", "must be >= 0");
  if (!(gamma_split >= 0.0)) bad("gamma_split", "must be >= 0");
  if (!(min_child_weight >= 0.0)) bad("min_child_weight", "must be >= 0");
  if (n_classes < 2) bad("n_classes", "must be >= 2");
  if (base_score && !std::isfinite(*base_score)) bad("base_score", "must be finite");
}

namespace {

/// Sorted sample of `k` out of `n` indices without replacement (partial
/// Fisher-Yates over [0, n)). k == n consumes no random numbers.
std::vector<std::uint32_t> sample_indices(std::mt19937_64& rng, std::size_t n, std::size_t k) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  if (k >= n) return idx;
  for (std::size_t i = 0; i < k; ++i) {
    const auto j = i + util::uniform_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

std::size_t sample_size(double fraction, std::size_t n) {
  if (fraction >= 1.0) return n;
  const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n);
}

NodeTotals sum_rows(std::span<const GradientPair> grads, std::span<const std::uint32_t> rows) {
  NodeTotals t;
  for (const auto r : rows) {
    t.g += grads[r].g;
    t.h += grads[r].h;
  }
  t.count = rows.size();
  return t;
}

class TreeGrower {
 public:
  TreeGrower(const QuantizedMatrix& q, std::span<const GradientPair> grads, std::span<const std::uint32_t> features,
             const TrainConfig& config, const ExecutionOptions& exec, const TrainHooks& hooks, int round,
             int class_index)
      : q_(q),
        grads_(grads),
        features_(features),
        config_(config),
        params_(config.split_params()),
        exec_(exec),
        hooks_(hooks),
        round_(round),
        class_index_(class_index) {}

  Tree grow(std::vector<std::uint32_t> rows) {
    rows_ = std::move(rows);
    Tree tree;
    tree.nodes.emplace_back();
    Work root{0, 0, rows_.size(), 0, {}, sum_rows(grads_, rows_)};
    if (needs_histogram(root)) root.hist = build(root);
    std::vector<Work> level;
    level.push_back(std::move(root));
    while (!level.empty()) {
      std::vector<Work> next;
      for (auto& item : level) expand(tree, item, next);
      level = std::move(next);
    }
    return tree;
  }

 private:
  struct Work {
    int node;
    std::size_t begin, end;
    int depth;
    std::vector<HistBin> hist;
    NodeTotals totals;
  };

  std::span<const std::uint32_t> rows_of(const Work& w) const {
    return std::span<const std::uint32_t>(rows_).subspan(w.begin, w.end - w.begin);
  }

  bool needs_histogram(const Work& w) const {
    return w.depth < config_.max_depth && w.totals.count >= 2 && w.totals.h >= params_.min_child_weight;
  }

  std::vector<HistBin> build(const Work& w) const {
    std::vector<HistBin> hist(q_.hist_size());
    if (exec_.parallel_kernels) {
      kernels::parallel::build_histogram(q_, grads_, rows_of(w), features_, hist);
    } else {
      kernels::serial::build_histogram(q_, grads_, rows_of(w), features_, hist);
    }
    return hist;
  }

  std::vector<HistBin> subtract(const std::vector<HistBin>& parent, const std::vector<HistBin>& child) const {
    std::vector<HistBin> out(parent.size());
    if (exec_.parallel_kernels) {
      kernels::parallel::subtract_histogram(parent, child, out);
    } else {
      kernels::serial::subtract_histogram(parent, child, out);
    }
    return out;
  }

  std::optional<std::pair<std::size_t, FeatureSplit>> find_split(const Work& w) const {
    if (w.hist.empty()) return std::nullopt;
    const auto per_feature = exec_.parallel_kernels
                                 ? kernels::parallel::scan_features(q_, w.hist, features_, w.totals, params_)
                                 : kernels::serial::scan_features(q_, w.hist, features_, w.totals, params_);
    FeatureSplit chosen;
    const auto i = kernels::select_split(per_feature, q_, w.hist, features_, w.totals, params_, chosen);
    if (i >= features_.size()) return std::nullopt;
    return std::make_pair(static_cast<std::size_t>(features_[i]), chosen);
  }

  void make_leaf(Tree& tree, const Work& w) const {
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.leaf_value = -config_.learning_rate * w.totals.g / (w.totals.h + config_.lambda_l2);
    node.sum_grad = w.totals.g;
    node.sum_hess = w.totals.h;
    node.count = w.totals.count;
  }

  void emit(const Work& w, const std::optional<std::pair<std::size_t, FeatureSplit>>& split) const {
    if (!hooks_.on_node) return;
    SplitEvent ev;
    ev.round = round_;
    ev.class_index = class_index_;
    ev.node = w.node;
    ev.depth = w.depth;
    ev.rows = rows_of(w);
    ev.grads = grads_;
    ev.histogram = w.hist;
    ev.quantized = &q_;
    ev.features = features_;
    ev.totals = w.totals;
    if (split) {
      ev.split = split->second;
      ev.split_feature = static_cast<int>(split->first);
      ev.threshold = q_.edges[split->first][split->second.bin];
    }
    hooks_.on_node(ev);
  }

  void expand(Tree& tree, Work& w, std::vector<Work>& next) {
    const auto split = find_split(w);
    emit(w, split);
    if (!split) {
      make_leaf(tree, w);
      return;
    }
    const auto [feature, fs] = *split;
    const auto column = q_.column(feature);
    const auto missing = q_.missing_bin(feature);
    const auto goes_left = [&](std::uint32_t r) {
      const std::size_t b = column[r];
      return b == missing ? fs.default_left : b <= fs.bin;
    };
    const auto first = rows_.begin() + static_cast<std::ptrdiff_t>(w.begin);
    const auto last = rows_.begin() + static_cast<std::ptrdiff_t>(w.end);
    const auto mid = std::stable_partition(first, last, goes_left);
    const std::size_t split_at = static_cast<std::size_t>(mid - rows_.begin());

    const int left_id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    auto& node = tree.nodes[static_cast<std::size_t>(w.node)];
    node.left = left_id;
    node.right = left_id + 1;
    node.feature = static_cast<std::int32_t>(feature);
    node.threshold = q_.edges[feature][fs.bin];
    node.default_left = fs.default_left;
    node.loss_change = fs.loss_change;
    node.sum_grad = w.totals.g;
    node.sum_hess = w.totals.h;
    node.count = w.totals.count;

    Work left{left_id, w.begin, split_at, w.depth + 1, {}, {}};
    Work right{left_id + 1, split_at, w.end, w.depth + 1, {}, {}};
    left.totals = sum_rows(grads_, rows_of(left));
    right.totals = sum_rows(grads_, rows_of(right));

    const bool need_left = needs_histogram(left);
    const bool need_right = needs_histogram(right);
    if (need_left && need_right) {
      // Build the smaller child, derive its sibling from the parent.
      if (left.totals.count <= right.totals.count) {
        left.hist = build(left);
        right.hist = subtract(w.hist, left.hist);
      } else {
        right.hist = build(right);
        left.hist = subtract(w.hist, right.hist);
      }
    } else if (need_left) {
      left.hist = build(left);
    } else if (need_right) {
      right.hist = build(right);
    }
    w.hist.clear();
    w.hist.shrink_to_fit();
    next.push_back(std::move(left));
    next.push_back(std::move(right));
  }

  const QuantizedMatrix& q_;
  std::span<const GradientPair> grads_;
  std::span<const std::uint32_t> features_;
  const TrainConfig& config_;
  SplitParams params_;
  const ExecutionOptions& exec_;
  const TrainHooks& hooks_;
  int round_;
  int class_index_;
  std::vector<std::uint32_t> rows_;
};

}  // namespace

TrainResult train(const DenseMatrix& x, std::span<const int> labels, const TrainConfig& config,
                  const ExecutionOptions& exec, const TrainHooks& hooks) {
  config.validate();
  if (x.rows == 0 || x.cols == 0) throw Error(ErrorCode::EmptyDataset, "training matrix is empty");
  if (x.values.size() != x.rows * x.cols) throw Error(ErrorCode::DimensionMismatch, "matrix storage size mismatch");
  if (labels.size() != x.rows)
    throw Error(ErrorCode::LengthMismatch, fmt::format("{} labels for {} rows", labels.size(), x.rows));
  if (x.rows > std::numeric_limits<std::uint32_t>::max())
    throw Error(ErrorCode::InvalidArgument, "too many rows");
  const int n_classes = config.n_classes;
  std::vector<std::size_t> class_counts(static_cast<std::size_t>(n_classes), 0);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes)
      throw Error(ErrorCode::LabelOutOfRange,
                  fmt::format("row {} has label {} outside [0, {})", i, labels[i], n_classes));
    ++class_counts[static_cast<std::size_t>(labels[i])];
  }
  const auto present = std::count_if(class_counts.begin(), class_counts.end(), [](auto c) { return c > 0; });
  if (present == 1) spdlog::warn("SingleClassDataset: every training label is the same; the model predicts the base rate");

  if (exec.n_threads > 0) kernels::set_num_threads(exec.n_threads);

  const std::size_t n = x.rows;
  const std::size_t tpr = n_classes > 2 ? static_cast<std::size_t>(n_classes) : 1;
  const auto clamp_p = [](double p) { return std::clamp(p, 1e-6, 1.0 - 1e-6); };

  BoostedModel model;
  model.config = config;
  model.n_features = x.cols;
  model.feature_names.resize(x.cols);
  for (std::size_t c = 0; c < x.cols; ++c) model.feature_names[c] = fmt::format("f{}", c);
  if (tpr == 1) {
    const double p = clamp_p(static_cast<double>(class_counts[1]) / static_cast<double>(n));
    model.base_score = {config.base_score.value_or(std::log(p / (1.0 - p)))};
  } else {
    for (std::size_t k = 0; k < tpr; ++k) {
      const double p = clamp_p(static_cast<double>(class_counts[k]) / static_cast<double>(n));
      model.base_score.push_back(config.base_score.value_or(std::log(p)));
    }
  }

  const QuantizedMatrix q = quantize(x, config.n_bins, config.seed);
  std::vector<double> margins(n * tpr);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < tpr; ++k) margins[r * tpr + k] = model.base_score[k];

  TrainResult result;
  std::mt19937_64 rng(config.seed);
  std::vector<std::vector<GradientPair>> grads(tpr, std::vector<GradientPair>(n));
  const std::size_t row_k = sample_size(config.subsample, n);
  const std::size_t col_k = sample_size(config.colsample, x.cols);
  const auto n_rows_i = static_cast<std::int64_t>(n);

  for (int round = 0; round < config.n_estimators; ++round) {
    auto rows = sample_indices(rng, n, row_k);

#pragma omp parallel for schedule(static) if (exec.parallel_kernels && n > 2048)
    for (std::int64_t ri = 0; ri < n_rows_i; ++ri) {
      const auto r = static_cast<std::size_t>(ri);
      if (tpr == 1) {
        grads[0][r] = logistic_grad_hess(margins[r], labels[r]);
      } else {
        const auto p = softmax(std::span<const double>(margins).subspan(r * tpr, tpr));
        for (std::size_t k = 0; k < tpr; ++k) {
          const double y = labels[r] == static_cast<int>(k) ? 1.0 : 0.0;
          grads[k][r] = {p[k] - y, std::max(p[k] * (1.0 - p[k]), 1e-16)};
        }
      }
    }

    for (std::size_t k = 0; k < tpr; ++k) {
      const auto features = sample_indices(rng, x.cols, col_k);
      TreeGrower grower(q, grads[k], features, config, exec, hooks, round, static_cast<int>(k));
      Tree tree = grower.grow(rows);
#pragma omp parallel for schedule(static) if (exec.parallel_kernels && n > 2048)
      for (std::int64_t ri = 0; ri < n_rows_i; ++ri) {
        const auto r = static_cast<std::size_t>(ri);
        margins[r * tpr + k] += tree.predict(x.row(r));
      }
      model.trees.push_back(std::move(tree));
    }

    double loss = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      if (tpr == 1) {
        loss += logistic_loss(margins[r], labels[r]);
      } else {
        const auto p = softmax(std::span<const double>(margins).subspan(r * tpr, tpr));
        loss -= std::log(std::max(p[static_cast<std::size_t>(labels[r])], 1e-300));
      }
    }
    loss /= static_cast<double>(n);
    result.round_loss.push_back(loss);
    if (hooks.on_round) hooks.on_round(round, loss);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace gbfuse
