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

#include "gbfuse/synth.hpp"

#include <array>
#include <cmath>

#include <fmt/format.h>

#include "gbfuse/util.hpp"

namespace gbfuse {

namespace {

constexpr std::array kGlaucomaWords = {"thin", "notched", "pale", "excavated", "cupping", "eroded"};
constexpr std::array kHealthyWords = {"healthy", "intact", "pink", "robust", "uniform", "plump"};
constexpr std::array kNeutralWords = {"rim",  "disc",     "margin",   "observed", "appears", "region", "vessels",
                                      "superior", "inferior", "temporal", "nasal",    "with",    "the",    "and"};
constexpr std::array kHighRisk = {"high risk", "very high risk"};
constexpr std::array kLowRisk = {"very healthy", "healthy", "low risk"};
constexpr std::array kDiscSizes = {"small", "normal", "large"};
constexpr std::array kRimColors = {"pink", "orange", "pale"};

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  double u() { return util::uniform01(rng_); }
  double u(double lo, double hi) { return lo + (hi - lo) * u(); }
  bool p(double prob) { return u() < prob; }
  template <typename A>
  auto pick(const A& a) {
    return a[util::uniform_index(rng_, a.size())];
  }
  std::mt19937_64& rng() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

double round_to(double v, double step) { return std::round(v / step) * step; }

std::optional<bool> noisy_bool(Draw& d, bool truth, double accuracy, double missing_rate) {
  if (d.p(missing_rate)) return std::nullopt;
  return d.p(accuracy) ? truth : !truth;
}

std::string narrative_tokens(Draw& d, bool glaucoma, std::size_t n_tokens) {
  std::string out;
  for (std::size_t t = 0; t < n_tokens; ++t) {
    const double r = d.u();
    std::string_view w;
    if (r < 0.30) {
      w = glaucoma ? d.pick(kGlaucomaWords) : d.pick(kHealthyWords);
    } else if (r < 0.36) {
      w = glaucoma ? d.pick(kHealthyWords) : d.pick(kGlaucomaWords);
    } else {
      w = d.pick(kNeutralWords);
    }
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

HumanJudgment judgment_for(Draw& d, bool glaucoma) {
  HumanJudgment j;
  const double conf = round_to(d.u(0.5, 1.0), 0.01);
  const bool correct = d.p(conf);
  const bool says_glaucoma = correct ? glaucoma : !glaucoma;
  j.risk_assessment = std::string(says_glaucoma ? d.pick(kHighRisk) : d.pick(kLowRisk));
  j.confidence_level = conf;
  return j;
}

double cup_radius_for(Draw& d, bool glaucoma) { return glaucoma ? d.u(4.9, 7.5) : d.u(2.5, 5.1); }

ClinicalRecord clinical_row(Draw& d, std::size_t i, int y, const SynthOptions& o) {
  const bool g = y == 1;
  ClinicalRecord r;
  r.id = fmt::format("s{:05d}", i);
  r.image_ref = fmt::format("img{:05d}", i);
  r.label = Label{y, LabelSource::Annotated};
  auto& f = r.fundus;
  const bool clear = d.p(0.75);
  double cdr = clear ? (g ? d.u(0.62, 0.9) : d.u(0.2, 0.5)) : d.u(0.5, 0.62);
  if (!d.p(o.missing_rate)) f.cup_to_disc_ratio = round_to(cdr, 0.01);
  if (!d.p(o.missing_rate)) f.optic_disc_size = std::string(d.pick(kDiscSizes));
  f.isnt_rule_followed = noisy_bool(d, !g, 0.7, o.missing_rate);
  f.rim_thinning = noisy_bool(d, g, 0.7, o.missing_rate);
  f.rim_pallor = noisy_bool(d, g, 0.6, o.missing_rate);
  f.notching = noisy_bool(d, g, 0.6, o.missing_rate);
  f.bayoneting = noisy_bool(d, g, 0.5, o.missing_rate);
  f.sharp_edge = noisy_bool(d, g, 0.5, o.missing_rate);
  f.laminar_dot_sign = noisy_bool(d, g, 0.5, o.missing_rate);
  if (!d.p(o.missing_rate)) f.rim_color = std::string(d.pick(kRimColors));
  f.neuroretinal_rim = narrative_tokens(d, g, 4);
  if (!d.p(0.3)) f.additional_observations = narrative_tokens(d, g, 4);
  if (!d.p(o.missing_rate)) r.judgment = judgment_for(d, g);
  return r;
}

/// Value at relative health h: h >= 1 normal, 0 <= h < 1 borderline, h < 0
/// outside normal.
double value_step(const BiomarkerSpec& s) { return std::fabs(s.normal_edge) >= 10.0 ? 1.0 : 0.001; }

double biomarker_value(const BiomarkerSpec& s, double h) {
  return round_to(s.borderline_edge + h * (s.normal_edge - s.borderline_edge), value_step(s));
}

OctBiomarkerRecord oct_row(Draw& d, std::size_t i, int y, const SynthOptions& o) {
  OctBiomarkerRecord r;
  r.id = fmt::format("p{:05d}", i);
  r.image_ref = fmt::format("oimg{:05d}", i);
  r.label = Label{y, LabelSource::Annotated};
  for (const auto& spec : default_catalog().specs()) {
    const auto health = [&] {
      if (y == 0) return d.u(1.05, 1.8);
      if (y == 2) return d.u(0.1, 0.9);
      return d.u(-1.5, 0.6);
    };
    Measurement m;
    m.biomarker = spec.name;
    double od = biomarker_value(spec, health());
    double os = biomarker_value(spec, health());
    if (spec.direction == Direction::SmallerMagnitudeIsHealthier) {
      if (d.p(0.5)) od = -od;
      if (d.p(0.5)) os = -os;
    } else {
      m.ie = round_to(od - os, value_step(spec));
    }
    m.od = od;
    m.os = os;
    m.status_od = classify_status(spec, od);
    m.status_os = classify_status(spec, os);
    r.measurements.push_back(std::move(m));
  }
  if (!d.p(o.missing_rate)) r.judgment = judgment_for(d, y != 0);
  return r;
}

}  // namespace

GrayImage render_fundus(std::size_t size, double cup_radius, std::mt19937_64& rng) {
  GrayImage img;
  img.rows = img.cols = size;
  img.pixels.resize(size * size);
  const double c = (static_cast<double>(size) - 1.0) / 2.0;
  const double cx = c + (util::uniform01(rng) - 0.5) * 2.0;
  const double cy = c + (util::uniform01(rng) - 0.5) * 2.0;
  const double disc = 0.4 * static_cast<double>(size);
  for (std::size_t r = 0; r < size; ++r) {
    for (std::size_t col = 0; col < size; ++col) {
      const double dist = std::hypot(static_cast<double>(r) - cy, static_cast<double>(col) - cx);
      double v = 0.15;
      if (dist <= disc) v = 0.55;
      if (dist <= cup_radius) v = 0.9;
      img.pixels[r * size + col] = v + 0.06 * util::standard_normal(rng);
    }
  }
  return img;
}

SynthDataset generate_synthetic(const SynthOptions& o) {
  SynthDataset out{{}, EmbeddingTable(o.text_dim, "stand-in text"), EmbeddingTable(o.image_dim, "stand-in image")};
  out.data.kind = o.kind;
  Draw d(o.seed);
  Draw pixels(util::fnv1a("pixels", o.seed));
  const int n_classes = o.kind == SourceKind::Biomarker && o.three_class ? 3 : 2;
  for (std::size_t i = 0; i < o.n; ++i) {
    const int y = static_cast<int>(i % static_cast<std::size_t>(n_classes));
    const bool g = y != 0;
    if (o.kind == SourceKind::Clinical) {
      auto rec = clinical_row(d, i, y, o);
      out.text.insert(rec.id, stand_in_text_encoder(rec.narrative(), o.text_dim, o.encoder_seed));
      out.image.insert(*rec.image_ref,
                       stand_in_image_encoder(render_fundus(o.image_size, cup_radius_for(d, g), pixels.rng()),
                                              o.image_dim, o.encoder_seed));
      out.data.clinical.push_back(std::move(rec));
    } else {
      auto rec = oct_row(d, i, y, o);
      out.image.insert(*rec.image_ref,
                       stand_in_image_encoder(render_fundus(o.image_size, cup_radius_for(d, g), pixels.rng()),
                                              o.image_dim, o.encoder_seed));
      out.data.oct.push_back(std::move(rec));
    }
  }
  return out;
}

}  // namespace gbfuse
