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

#include "fixtures.hpp"

#include <atomic>
#include <cmath>

#include <unistd.h>

namespace gbfuse::testing {

namespace {

constexpr const char* kWords[] = {"thin", "rim", "pale", "notched", "inferior", "disc", "intact", "pink"};

double uniform(std::mt19937_64& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

template <typename T, std::size_t N>
const T& pick(std::mt19937_64& rng, const T (&a)[N]) {
  return a[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

std::string random_text(std::mt19937_64& rng) {
  std::string s = pick(rng, kWords);
  const int n = std::uniform_int_distribution<int>(0, 6)(rng);
  for (int i = 0; i < n; ++i) {
    const double r = uniform(rng);
    s += r < 0.1 ? "\n" : r < 0.15 ? " \\ " : r < 0.2 ? " a=b, " : " ";
    s += pick(rng, kWords);
  }
  return s;
}

std::optional<bool> random_bool(std::mt19937_64& rng) {
  const double r = uniform(rng);
  if (r < 0.2) return std::nullopt;
  return r < 0.6;
}

}  // namespace

ClinicalRecord random_clinical_record(std::mt19937_64& rng, std::size_t index, bool unknown_categories) {
  static const char* kSizes[] = {"small", "normal", "large"};
  static const char* kColors[] = {"pink", "orange", "pale"};
  static const char* kRisks[] = {"very healthy", "healthy", "low risk", "moderate risk", "high risk",
                                 "very high risk"};
  ClinicalRecord r;
  r.id = "r" + std::to_string(index);
  auto& f = r.fundus;
  const auto category = [&](const auto& options, const char* unknown) -> std::optional<std::string> {
    const double u = uniform(rng);
    if (u < 0.15) return std::nullopt;
    if (unknown_categories && u < 0.25) return std::string(unknown);
    return std::string(pick(rng, options));
  };
  f.optic_disc_size = category(kSizes, "huge");
  if (uniform(rng) > 0.15) f.cup_to_disc_ratio = std::round(uniform(rng) * 1000.0) / 1000.0;
  for (const auto& bf : fundus_bool_fields()) f.*(bf.member) = random_bool(rng);
  f.rim_color = category(kColors, "violet");
  if (uniform(rng) > 0.3) f.additional_observations = random_text(rng);
  if (uniform(rng) > 0.2) f.neuroretinal_rim = random_text(rng);
  if (uniform(rng) > 0.2) {
    HumanJudgment j;
    j.risk_assessment = category(kRisks, "uncertain");
    if (uniform(rng) > 0.2) j.confidence_level = std::round(uniform(rng) * 100.0) / 100.0;
    if (!j.empty()) r.judgment = j;
  }
  if (uniform(rng) > 0.3) r.image_ref = "img" + std::to_string(index);
  if (uniform(rng) > 0.2) r.label = Label{uniform(rng) < 0.5 ? 0 : 1, LabelSource::Annotated};
  return r;
}

OctBiomarkerRecord random_oct_record(std::mt19937_64& rng, std::size_t index, const NormativeCatalog& catalog) {
  OctBiomarkerRecord r;
  r.id = "p" + std::to_string(index);
  for (const auto& spec : catalog.specs()) {
    if (uniform(rng) < 0.1) continue;
    Measurement m;
    m.biomarker = spec.name;
    const double span = std::max(std::fabs(spec.normal_edge - spec.borderline_edge), 1e-3);
    const auto draw = [&] {
      const double v = spec.borderline_edge + (uniform(rng) * 4.0 - 2.0) * span;
      const double step = std::fabs(spec.normal_edge) >= 10.0 ? 1.0 : 0.001;
      return std::round(v / step) * step;
    };
    m.od = draw();
    m.os = draw();
    if (spec.direction != Direction::SmallerMagnitudeIsHealthier) m.ie = m.od - m.os;
    m.status_od = classify_status(spec, m.od);
    m.status_os = classify_status(spec, m.os);
    r.measurements.push_back(std::move(m));
  }
  r.label = Label{static_cast<int>(index % 3), LabelSource::Annotated};
  return r;
}

TempDir::TempDir(const std::string& tag) {
  static std::atomic<int> counter{0};
  path_ = std::filesystem::temp_directory_path() /
          ("gbfuse-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(path_);
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

namespace {

BruteMetrics from_counts(double tp, double fp, double fn, double correct, double n) {
  BruteMetrics m;
  m.acc = correct / n;
  m.pre = tp + fp > 0 ? tp / (tp + fp) : 0.0;
  m.rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
  m.f1 = m.pre + m.rec > 0 ? 2.0 * m.pre * m.rec / (m.pre + m.rec) : 0.0;
  return m;
}

}  // namespace

BruteMetrics brute_binary(std::span<const double> p, std::span<const int> y, double threshold) {
  double tp = 0, fp = 0, fn = 0, correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const int pred = p[i] >= threshold ? 1 : 0;
    if (pred == y[i]) ++correct;
    if (pred == 1 && y[i] == 1) ++tp;
    if (pred == 1 && y[i] == 0) ++fp;
    if (pred == 0 && y[i] == 1) ++fn;
  }
  return from_counts(tp, fp, fn, correct, static_cast<double>(y.size()));
}

BruteMetrics brute_macro(std::span<const int> predicted, std::span<const int> y, int n_classes) {
  BruteMetrics out;
  double correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) correct += predicted[i] == y[i] ? 1 : 0;
  for (int c = 0; c < n_classes; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (predicted[i] == c && y[i] == c) ++tp;
      if (predicted[i] == c && y[i] != c) ++fp;
      if (predicted[i] != c && y[i] == c) ++fn;
    }
    const auto m = from_counts(tp, fp, fn, correct, static_cast<double>(y.size()));
    out.pre += m.pre;
    out.rec += m.rec;
    out.f1 += m.f1;
    out.acc = m.acc;
  }
  out.pre /= n_classes;
  out.rec /= n_classes;
  out.f1 /= n_classes;
  return out;
}

}  // namespace gbfuse::testing
