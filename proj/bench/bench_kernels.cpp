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

// Serial reference kernels against their OpenMP counterparts, plus a full
// training run.

#include <map>
#include <numeric>
#include <random>

#include <benchmark/benchmark.h>

#include "gbfuse/boosting.hpp"
#include "gbfuse/util.hpp"

namespace {

using namespace gbfuse;

struct Fixture {
  DenseMatrix x;
  std::vector<int> y;
  QuantizedMatrix q;
  std::vector<GradientPair> grads;
  std::vector<std::uint32_t> rows;
  std::vector<std::uint32_t> features;
};

const Fixture& fixture(std::size_t n, std::size_t d) {
  static std::map<std::pair<std::size_t, std::size_t>, Fixture> cache;
  auto [it, fresh] = cache.try_emplace({n, d});
  Fixture& f = it->second;
  if (!fresh) return f;
  std::mt19937_64 rng(7);
  f.x.rows = n;
  f.x.cols = d;
  f.x.values.resize(n * d);
  for (auto& v : f.x.values) v = util::standard_normal(rng);
  for (std::size_t r = 0; r < n; ++r) f.y.push_back(f.x.at(r, 0) + 0.5 * f.x.at(r, 1) > 0.0 ? 1 : 0);
  f.q = quantize(f.x, 256, 42);
  for (std::size_t r = 0; r < n; ++r) f.grads.push_back(logistic_grad_hess(0.0, f.y[r]));
  f.rows.resize(n);
  std::iota(f.rows.begin(), f.rows.end(), 0u);
  f.features.resize(d);
  std::iota(f.features.begin(), f.features.end(), 0u);
  return f;
}

template <bool Parallel>
void BM_BuildHistogram(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)), 64);
  std::vector<HistBin> hist(f.q.hist_size());
  for (auto _ : state) {
    if constexpr (Parallel) {
      kernels::parallel::build_histogram(f.q, f.grads, f.rows, f.features, hist);
    } else {
      kernels::serial::build_histogram(f.q, f.grads, f.rows, f.features, hist);
    }
    benchmark::DoNotOptimize(hist.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0) * 64);
}

template <bool Parallel>
void BM_ScanFeatures(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)), 64);
  std::vector<HistBin> hist(f.q.hist_size());
  kernels::serial::build_histogram(f.q, f.grads, f.rows, f.features, hist);
  NodeTotals totals;
  for (const auto& g : f.grads) {
    totals.g += g.g;
    totals.h += g.h;
  }
  totals.count = f.grads.size();
  const SplitParams params;
  for (auto _ : state) {
    auto out = Parallel ? kernels::parallel::scan_features(f.q, hist, f.features, totals, params)
                        : kernels::serial::scan_features(f.q, hist, f.features, totals, params);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Parallel>
void BM_Train(benchmark::State& state) {
  const auto& f = fixture(static_cast<std::size_t>(state.range(0)), 64);
  TrainConfig config;
  config.n_estimators = 20;
  ExecutionOptions exec;
  exec.parallel_kernels = Parallel;
  for (auto _ : state) {
    auto r = train(f.x, f.y, config, exec);
    benchmark::DoNotOptimize(r.model.trees.data());
  }
}

BENCHMARK(BM_BuildHistogram<false>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_BuildHistogram<true>)->Arg(4096)->Arg(65536);
BENCHMARK(BM_ScanFeatures<false>)->Arg(65536);
BENCHMARK(BM_ScanFeatures<true>)->Arg(65536);
BENCHMARK(BM_Train<false>)->Arg(4096)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Train<true>)->Arg(4096)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
