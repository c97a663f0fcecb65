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

#include "gbfuse/kernels.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace gbfuse {

double split_loss_change(const NodeTotals& left, const NodeTotals& right, const NodeTotals& parent,
                         double lambda_l2) {
  const auto score = [lambda_l2](const NodeTotals& t) { return t.g * t.g / (t.h + lambda_l2); };
  return 0.5 * (score(left) + score(right) - score(parent));
}

FeatureSplit scan_feature(std::span<const HistBin> hist, const NodeTotals& totals, const SplitParams& params,
                          const double* accept_at) {
  FeatureSplit best;
  if (hist.empty()) return best;
  const std::size_t n_value_bins = hist.size() - 1;
  const HistBin& missing = hist[n_value_bins];
  const bool has_missing = missing.count > 0;

  const auto consider = [&](const NodeTotals& left, std::size_t bin, bool default_left) -> bool {
    const NodeTotals right{totals.g - left.g, totals.h - left.h, totals.count - left.count};
    if (left.count == 0 || right.count == 0) return false;
    if (left.h < params.min_child_weight || right.h < params.min_child_weight) return false;
    const double loss_change = split_loss_change(left, right, totals, params.lambda_l2);
    const double gain = loss_change - params.gamma_split;
    if (accept_at != nullptr) {
      if (gain > 0.0 && gain >= *accept_at) {
        best = {true, bin, default_left, gain, loss_change, left, right};
        return true;
      }
      return false;
    }
    if (!best.valid || gain > best.gain) best = {true, bin, default_left, gain, loss_change, left, right};
    return false;
  };

  NodeTotals acc;
  for (std::size_t b = 0; b < n_value_bins; ++b) {
    acc.g += hist[b].g;
    acc.h += hist[b].h;
    acc.count += hist[b].count;
    if (has_missing) {
      const NodeTotals with_missing{acc.g + missing.g, acc.h + missing.h, acc.count + missing.count};
      if (consider(with_missing, b, true)) return best;
      if (consider(acc, b, false)) return best;
    } else {
      if (consider(acc, b, true)) return best;
    }
  }
  if (accept_at != nullptr) return FeatureSplit{};
  if (best.valid && !(best.gain > 0.0)) best.valid = false;
  return best;
}

namespace kernels {

namespace {

inline void accumulate_feature(const QuantizedMatrix& m, std::span<const GradientPair> grads,
                               std::span<const std::uint32_t> rows, std::size_t f, HistBin* out) {
  const std::size_t width = m.hist_offset[f + 1] - m.hist_offset[f];
  std::fill(out, out + width, HistBin{});
  const std::uint16_t* col = m.bins.data() + f * m.rows;
  for (const std::uint32_t r : rows) {
    HistBin& bin = out[col[r]];
    bin.g += grads[r].g;
    bin.h += grads[r].h;
    ++bin.count;
  }
}

}  // namespace

namespace serial {

void build_histogram(const QuantizedMatrix& m, std::span<const GradientPair> grads,
                     std::span<const std::uint32_t> rows, std::span<const std::uint32_t> features,
                     std::span<HistBin> out) {
  // Row-major sweep: the textbook loop order. Per bin, rows are still added in
  // ascending order, which is what makes the feature-parallel kernel match.
  for (const std::uint32_t f : features) {
    const std::size_t width = m.hist_offset[f + 1] - m.hist_offset[f];
    std::fill_n(out.data() + m.hist_offset[f], width, HistBin{});
  }
  for (const std::uint32_t r : rows) {
    const GradientPair gp = grads[r];
    for (const std::uint32_t f : features) {
      HistBin& bin = out[m.hist_offset[f] + m.bins[f * m.rows + r]];
      bin.g += gp.g;
      bin.h += gp.h;
      ++bin.count;
    }
  }
}

void subtract_histogram(std::span<const HistBin> parent, std::span<const HistBin> child, std::span<HistBin> out) {
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {parent[i].g - child[i].g, parent[i].h - child[i].h, parent[i].count - child[i].count};
}

std::vector<FeatureSplit> scan_features(const QuantizedMatrix& m, std::span<const HistBin> hist,
                                        std::span<const std::uint32_t> features, const NodeTotals& totals,
                                        const SplitParams& params) {
  std::vector<FeatureSplit> out(features.size());
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto f = features[i];
    const auto span = hist.subspan(m.hist_offset[f], m.hist_offset[f + 1] - m.hist_offset[f]);
    out[i] = scan_feature(span, totals, params);
  }
  return out;
}

}  // namespace serial

namespace parallel {

void build_histogram(const QuantizedMatrix& m, std::span<const GradientPair> grads,
                     std::span<const std::uint32_t> rows, std::span<const std::uint32_t> features,
                     std::span<HistBin> out) {
  const auto n = static_cast<std::int64_t>(features.size());
#pragma omp parallel for schedule(dynamic, 4) if (n > 1 && rows.size() * features.size() > 4096)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t f = features[static_cast<std::size_t>(i)];
    accumulate_feature(m, grads, rows, f, out.data() + m.hist_offset[f]);
  }
}

void subtract_histogram(std::span<const HistBin> parent, std::span<const HistBin> child, std::span<HistBin> out) {
  const auto n = static_cast<std::int64_t>(out.size());
#pragma omp parallel for schedule(static) if (n > 65536)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    out[k] = {parent[k].g - child[k].g, parent[k].h - child[k].h, parent[k].count - child[k].count};
  }
}

std::vector<FeatureSplit> scan_features(const QuantizedMatrix& m, std::span<const HistBin> hist,
                                        std::span<const std::uint32_t> features, const NodeTotals& totals,
                                        const SplitParams& params) {
  std::vector<FeatureSplit> out(features.size());
  const auto n = static_cast<std::int64_t>(features.size());
#pragma omp parallel for schedule(dynamic, 8) if (n > 16)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const auto f = features[k];
    const auto span = hist.subspan(m.hist_offset[f], m.hist_offset[f + 1] - m.hist_offset[f]);
    out[k] = scan_feature(span, totals, params);
  }
  return out;
}

}  // namespace parallel

std::size_t select_split(std::span<const FeatureSplit> per_feature, const QuantizedMatrix& m,
                         std::span<const HistBin> hist, std::span<const std::uint32_t> features,
                         const NodeTotals& totals, const SplitParams& params, FeatureSplit& chosen) {
  double best = 0.0;
  bool any = false;
  for (const auto& s : per_feature) {
    if (s.valid && (!any || s.gain > best)) {
      best = s.gain;
      any = true;
    }
  }
  if (!any) return features.size();
  const double accept_at = best - kGainTieTolerance * std::max(1.0, std::fabs(best));
  for (std::size_t i = 0; i < per_feature.size(); ++i) {
    if (!per_feature[i].valid || per_feature[i].gain < accept_at) continue;
    const auto f = features[i];
    const auto span = hist.subspan(m.hist_offset[f], m.hist_offset[f + 1] - m.hist_offset[f]);
    chosen = scan_feature(span, totals, params, &accept_at);
    if (chosen.valid) return i;
  }
  // Unreachable: the feature holding `best` always passes.
  chosen = FeatureSplit{};
  return features.size();
}

void set_num_threads(int n) {
#ifdef _OPENMP
  omp_set_num_threads(n > 0 ? n : omp_get_num_procs());
#else
  (void)n;
#endif
}

int num_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace kernels
}  // namespace gbfuse
