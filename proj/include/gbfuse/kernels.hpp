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

// Inner loops of the tree learner. Every kernel has a plain serial version
// (kept as the reference for tests and benchmarks) and an OpenMP version.
// The parallel versions split work across features or rows only, never across
// the accumulation of a single bin, so their output is bit-identical to the
// serial one for any thread count.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace gbfuse {

struct GradientPair {
  double g = 0.0;
  double h = 0.0;
};

struct HistBin {
  double g = 0.0;
  double h = 0.0;
  std::uint64_t count = 0;

  bool operator==(const HistBin&) const = default;
};

/// Quantized training matrix, feature-major. `bins[f * rows + r]` is the bin of
/// row r in feature f; the value `missing_bin(f)` marks NaN.
struct QuantizedMatrix {
  std::size_t rows = 0;
  std::size_t features = 0;
  std::vector<std::uint16_t> bins;
  /// Upper edges per feature: bin b holds values in (edge[b-1], edge[b]].
  std::vector<std::vector<double>> edges;
  /// Start of each feature's bins inside a node histogram; size features + 1.
  std::vector<std::size_t> hist_offset;

  std::size_t missing_bin(std::size_t f) const { return edges[f].size(); }
  std::size_t hist_size() const { return hist_offset.back(); }
  std::span<const std::uint16_t> column(std::size_t f) const {
    return {bins.data() + f * rows, rows};
  }
};

struct SplitParams {
  double lambda_l2 = 1.0;
  double gamma_split = 0.0;
  double min_child_weight = 1.0;
};

/// Candidates whose gain is within this relative distance of the best gain are
/// ties; ties resolve to the lowest feature index, then the lowest bin, then
/// default-left before default-right.
inline constexpr double kGainTieTolerance = 1e-12;

struct NodeTotals {
  double g = 0.0;
  double h = 0.0;
  std::uint64_t count = 0;
};

struct FeatureSplit {
  bool valid = false;
  std::size_t bin = 0;     // go left iff value <= edges[bin]
  bool default_left = true;
  double gain = 0.0;       // loss reduction minus gamma
  double loss_change = 0.0;  // loss reduction before gamma
  NodeTotals left, right;
};

/// 0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)], before gamma.
double split_loss_change(const NodeTotals& left, const NodeTotals& right, const NodeTotals& parent,
                         double lambda_l2);

/// Best split of one feature's histogram. With `accept_at` set, returns the
/// first candidate whose gain reaches it instead of the maximum.
FeatureSplit scan_feature(std::span<const HistBin> hist, const NodeTotals& totals, const SplitParams& params,
                          const double* accept_at = nullptr);

namespace kernels {

/// Sums g/h/count of `rows` into the histogram of every feature in `features`.
/// `out` is sized QuantizedMatrix::hist_size() and is overwritten for those
/// features only.
namespace serial {
void build_histogram(const QuantizedMatrix& m, std::span<const GradientPair> grads,
                     std::span<const std::uint32_t> rows, std::span<const std::uint32_t> features,
                     std::span<HistBin> out);
void subtract_histogram(std::span<const HistBin> parent, std::span<const HistBin> child,
                        std::span<HistBin> out);
std::vector<FeatureSplit> scan_features(const QuantizedMatrix& m, std::span<const HistBin> hist,
                                        std::span<const std::uint32_t> features, const NodeTotals& totals,
                                        const SplitParams& params);
}  // namespace serial

namespace parallel {
void build_histogram(const QuantizedMatrix& m, std::span<const GradientPair> grads,
                     std::span<const std::uint32_t> rows, std::span<const std::uint32_t> features,
                     std::span<HistBin> out);
void subtract_histogram(std::span<const HistBin> parent, std::span<const HistBin> child,
                        std::span<HistBin> out);
std::vector<FeatureSplit> scan_features(const QuantizedMatrix& m, std::span<const HistBin> hist,
                                        std::span<const std::uint32_t> features, const NodeTotals& totals,
                                        const SplitParams& params);
}  // namespace parallel

/// Picks the winning feature from per-feature results with the tie rule above.
/// Returns features.size() when nothing has positive gain.
std::size_t select_split(std::span<const FeatureSplit> per_feature, const QuantizedMatrix& m,
                         std::span<const HistBin> hist, std::span<const std::uint32_t> features,
                         const NodeTotals& totals, const SplitParams& params, FeatureSplit& chosen);

/// Thread count used by the parallel kernels (0 = OpenMP default).
void set_num_threads(int n);
int num_threads();

}  // namespace kernels
}  // namespace gbfuse
