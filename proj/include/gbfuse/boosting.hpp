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

// Histogram gradient-boosted trees with a second-order logistic (binary) or
// softmax (multiclass) objective and the complexity penalty
//   gamma * T + 0.5 * lambda * sum(w^2).
//
// Trees grow depth-wise. At each node the best (feature, bin, default
// direction) is chosen by the regularized second-order gain; leaves get
// weight -learning_rate * G / (H + lambda).

#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfuse/error.hpp"
#include "gbfuse/kernels.hpp"

namespace gbfuse {

struct TrainConfig {
  double learning_rate = 0.05;
  int max_depth = 6;
  int n_estimators = 100;
  double subsample = 0.9;
  double colsample = 0.8;
  int n_bins = 256;
  double lambda_l2 = 1.0;
  double gamma_split = 0.0;
  double min_child_weight = 1.0;
  std::uint64_t seed = 42;
  int n_classes = 2;
  std::optional<double> base_score;  // default: log-odds / log-prior of the training labels

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
  SplitParams split_params() const { return {lambda_l2, gamma_split, min_child_weight}; }
  bool operator==(const TrainConfig&) const = default;
};

/// Execution knobs that never change the result.
struct ExecutionOptions {
  int n_threads = 0;          // 0 = OpenMP default
  bool parallel_kernels = true;
};

// ---------------------------------------------------------------------------
// Objective

double sigmoid(double margin);

/// g = sigmoid(m) - y, h = max(sigmoid(m) (1 - sigmoid(m)), 1e-16).
GradientPair logistic_grad_hess(double margin, int y);

/// Per-instance loss -[y log p + (1 - y) log(1 - p)], p = sigmoid(margin),
/// evaluated stably from the margin.
double logistic_loss(double margin, int y);

/// Softmax probabilities of `margins` (max-shifted).
std::vector<double> softmax(std::span<const double> margins);

// ---------------------------------------------------------------------------
// Binning

/// Upper bin edges for one column. NaNs are ignored (they get the missing
/// bin). When the column has at most `n_bins` distinct finite values every
/// distinct value gets its own bin; otherwise edges sit at the k/n_bins
/// quantiles. Columns longer than an internal cap are subsampled with `seed`.
std::vector<double> build_bins(std::span<const double> column, int n_bins, std::uint64_t seed);

/// Bin index of `value` given upper edges: the first edge >= value, clamped to
/// the last bin; NaN maps to edges.size().
std::size_t bin_of(double value, std::span<const double> edges);

/// Row-major dense matrix; NaN marks a missing value.
struct DenseMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  std::span<const double> row(std::size_t r) const { return {values.data() + r * cols, cols}; }
  double at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

QuantizedMatrix quantize(const DenseMatrix& x, int n_bins, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Model

struct TreeNode {
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::int32_t feature = -1;
  double threshold = 0.0;  // go left iff value <= threshold
  bool default_left = true;
  double leaf_value = 0.0;   // leaves only; includes the learning rate
  double loss_change = 0.0;  // internal nodes only; before gamma
  double sum_grad = 0.0;
  double sum_hess = 0.0;
  std::uint64_t count = 0;

  bool is_leaf() const { return left < 0; }
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  /// Index of the leaf reached by `x`.
  std::size_t leaf_index(std::span<const double> x) const;
  double predict(std::span<const double> x) const { return nodes[leaf_index(x)].leaf_value; }
  int depth() const;
  std::size_t n_leaves() const;
  bool operator==(const Tree&) const = default;
};

class BoostedModel {
 public:
  TrainConfig config;
  std::size_t n_features = 0;
  std::vector<std::string> feature_names;
  /// One entry for binary, n_classes entries for multiclass.
  std::vector<double> base_score;
  /// Round-major: tree for round r and class k sits at r * trees_per_round + k.
  std::vector<Tree> trees;
  std::string schema_fingerprint;
  /// Free-form pipeline metadata (mask, layout, ...), serialized sorted.
  std::map<std::string, std::string> metadata;

  int n_classes() const { return config.n_classes; }
  std::size_t trees_per_round() const { return config.n_classes > 2 ? static_cast<std::size_t>(config.n_classes) : 1; }

  /// Raw margins (size 1 for binary). Throws DimensionMismatch.
  std::vector<double> predict_margin(std::span<const double> x) const;
  /// Class probabilities: {1 - p, p} for binary, softmax otherwise.
  std::vector<double> predict_proba(std::span<const double> x) const;
  /// P(class 1) for binary models.
  double predict_positive(std::span<const double> x) const;

  bool operator==(const BoostedModel&) const = default;
};

struct SplitEvent {
  int round = 0;
  int class_index = 0;
  int node = 0;
  int depth = 0;
  std::span<const std::uint32_t> rows;        // node rows, ascending
  std::span<const GradientPair> grads;        // per training row
  std::span<const HistBin> histogram;         // empty when not built (max-depth nodes)
  const QuantizedMatrix* quantized = nullptr;
  std::span<const std::uint32_t> features;    // columns sampled for this tree
  NodeTotals totals;
  std::optional<FeatureSplit> split;          // nullopt: node became a leaf
  int split_feature = -1;
  double threshold = 0.0;
};

struct TrainResult {
  BoostedModel model;
  std::vector<double> round_loss;  // mean training loss after each round
};

struct TrainHooks {
  std::function<void(const SplitEvent&)> on_node;
  std::function<void(int round, double loss)> on_round;
};

/// Labels are class indices in [0, n_classes). Throws EmptyDataset,
/// LabelOutOfRange, InvalidArgument; warns (and still trains) on a single-class
/// dataset.
TrainResult train(const DenseMatrix& x, std::span<const int> labels, const TrainConfig& config,
                  const ExecutionOptions& exec = {}, const TrainHooks& hooks = {});

/// Batch P(class) rows, parallel over rows when enabled.
std::vector<std::vector<double>> predict_proba_batch(const BoostedModel& model, const DenseMatrix& x,
                                                     bool parallel = true);

// ---------------------------------------------------------------------------
// Importance

enum class ImportanceKind { Gain, Weight, Cover };
ImportanceKind parse_importance_kind(std::string_view s);
std::string_view to_string(ImportanceKind k);

/// Normalized to sum 1; empty when the model has no splits.
std::map<std::string, double> feature_importance(const BoostedModel& model, ImportanceKind kind);

/// Per-feature additive contributions to the margin for one class tree set
/// (path attribution using each node's Newton value -lr G/(H+lambda)).
/// contributions.back() is the bias; the sum equals the margin.
std::vector<double> predict_contributions(const BoostedModel& model, std::span<const double> x,
                                          int class_index = 0);

// ---------------------------------------------------------------------------
// Persistence ("GLAMODEL 1")

std::string serialize_model(const BoostedModel& model);
BoostedModel parse_model(std::string_view text, const std::string& file = {});

enum class FingerprintCheck { Error, Warn, Skip };

void save_model(const BoostedModel& model, const std::string& path);
BoostedModel load_model(const std::string& path, const std::string& expected_fingerprint = {},
                        FingerprintCheck check = FingerprintCheck::Error);

}  // namespace gbfuse
