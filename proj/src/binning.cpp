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
#include <random>

#include "gbfuse/boosting.hpp"
#include "gbfuse/error.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse {

double sigmoid(double margin) {
  if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
  const double e = std::exp(margin);
  return e / (1.0 + e);
}

GradientPair logistic_grad_hess(double margin, int y) {
  const double p = sigmoid(margin);
  return {p - static_cast<double>(y), std::max(p * (1.0 - p), 1e-16)};
}

double logistic_loss(double margin, int y) {
  // log(1 + exp(m)) - y m, written to avoid overflow.
  const double softplus = margin > 0.0 ? margin + std::log1p(std::exp(-margin)) : std::log1p(std::exp(margin));
  return softplus - static_cast<double>(y) * margin;
}

std::vector<double> softmax(std::span<const double> margins) {
  std::vector<double> out(margins.begin(), margins.end());
  if (out.empty()) return out;
  const double mx = *std::max_element(out.begin(), out.end());
  double sum = 0.0;
  for (auto& v : out) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (auto& v : out) v /= sum;
  return out;
}

namespace {

constexpr std::size_t kSketchCap = std::size_t{1} << 20;

}  // namespace

std::vector<double> build_bins(std::span<const double> column, int n_bins, std::uint64_t seed) {
  if (n_bins < 1) throw Error(ErrorCode::InvalidArgument, "n_bins must be >= 1");
  std::vector<double> values;
  values.reserve(column.size());
  for (double v : column)
    if (!std::isnan(v)) values.push_back(v);
  if (values.empty()) return {0.0};  // all missing: one (empty) value bin

  const double column_max = *std::max_element(values.begin(), values.end());
  if (values.size() > kSketchCap) {
    // Partial Fisher-Yates: the first kSketchCap entries become the sample.
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < kSketchCap; ++i) {
      const auto j = i + util::uniform_index(rng, values.size() - i);
      std::swap(values[i], values[j]);
    }
    values.resize(kSketchCap);
  }
  std::sort(values.begin(), values.end());

  std::vector<double> distinct;
  for (double v : values)
    if (distinct.empty() || v != distinct.back()) distinct.push_back(v);

  std::vector<double> edges;
  if (distinct.size() <= static_cast<std::size_t>(n_bins)) {
    edges = std::move(distinct);
  } else {
    const std::size_t n = values.size();
    const auto bins = static_cast<std::size_t>(n_bins);
    for (std::size_t k = 1; k <= bins; ++k) {
      const std::size_t idx = (k * n + bins - 1) / bins - 1;  // ceil(k n / bins) - 1
      const double e = values[idx];
      if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
  }
  // The sketch may miss the true maximum; the last bin must cover it.
  if (edges.back() < column_max) edges.back() = column_max;
  return edges;
}

std::size_t bin_of(double value, std::span<const double> edges) {
  if (std::isnan(value)) return edges.size();
  const auto it = std::lower_bound(edges.begin(), edges.end(), value);
  if (it == edges.end()) return edges.size() - 1;
  return static_cast<std::size_t>(it - edges.begin());
}

QuantizedMatrix quantize(const DenseMatrix& x, int n_bins, std::uint64_t seed) {
  if (n_bins < 1 || n_bins > 65534) throw Error(ErrorCode::InvalidArgument, "n_bins must lie in [1, 65534]");
  QuantizedMatrix q;
  q.rows = x.rows;
  q.features = x.cols;
  q.bins.resize(x.rows * x.cols);
  q.edges.resize(x.cols);
  const auto n_cols = static_cast<std::int64_t>(x.cols);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t ci = 0; ci < n_cols; ++ci) {
    const auto c = static_cast<std::size_t>(ci);
    std::vector<double> column(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) column[r] = x.at(r, c);
    q.edges[c] = build_bins(column, n_bins, seed + c);
    std::uint16_t* out = q.bins.data() + c * x.rows;
    for (std::size_t r = 0; r < x.rows; ++r) out[r] = static_cast<std::uint16_t>(bin_of(column[r], q.edges[c]));
  }
  q.hist_offset.assign(x.cols + 1, 0);
  for (std::size_t c = 0; c < x.cols; ++c) q.hist_offset[c + 1] = q.hist_offset[c] + q.edges[c].size() + 1;
  return q;
}

}  // namespace gbfuse
