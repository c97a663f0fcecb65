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

// Structured / human-indicator encoding and modality fusion.
//
// A FeatureSchema is fitted once on training records and then maps any record
// to fixed-width blocks:
//   struct : one-hot categoricals (+ reserved "missing"), z-scored continuous
//            values with a missing indicator, {false,true,missing} booleans,
//            and for OCT tables per-biomarker od/os/ie plus a status code.
//   human  : one-hot risk assessment (+ "missing"), confidence passthrough
//            with a missing indicator.
// fuse() concatenates blocks in the fixed order text, struct, human, image.

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbfuse/records.hpp"

namespace gbfuse {

enum class Modality { Text, Struct, Human, Image };
std::string_view to_string(Modality m);

enum class SourceKind { Clinical, Biomarker };
enum class ClassMode { Binary, Tristate };
enum class Normalization { ZScore, None };

std::string_view to_string(SourceKind k);

inline constexpr std::string_view kMissingCategory = "missing";

struct FeatureBlock {
  Modality modality = Modality::Struct;
  std::vector<std::string> names;
  std::vector<double> values;
};

/// Which inputs enter the fused vector. Words = free-text embedding, Factor =
/// structured block, Risk / Sure = the two halves of the human block.
struct ModalityMask {
  bool image = false;
  bool words = false;
  bool factor = false;
  bool risk = false;
  bool sure = false;

  static ModalityMask all() { return {true, true, true, true, true}; }
  /// Accepts "all", "none", or '+'/','-joined names (image, words|text,
  /// factor|struct, risk, sure); "<name>-only" is an alias for "<name>".
  static ModalityMask parse(std::string_view spec);

  bool any() const { return image || words || factor || risk || sure; }
  bool human() const { return risk || sure; }
  /// Canonical spelling, e.g. "words+factor+risk" or "none".
  std::string str() const;

  bool operator==(const ModalityMask&) const = default;
};

struct Segment {
  Modality modality = Modality::Struct;
  std::size_t offset = 0;
  std::size_t width = 0;

  bool operator==(const Segment&) const = default;
};

struct FusedVector {
  std::string id;
  std::vector<double> values;
  std::vector<Segment> layout;
};

// ---------------------------------------------------------------------------

struct ContinuousStats {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 when degenerate
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;  // non-missing observations

  bool operator==(const ContinuousStats&) const = default;
};

struct CategoricalField {
  std::string name;
  std::vector<std::string> vocabulary;  // sorted, "missing" last

  bool operator==(const CategoricalField&) const = default;
};

struct ContinuousField {
  std::string name;
  ContinuousStats stats;

  bool operator==(const ContinuousField&) const = default;
};

struct BiomarkerField {
  std::string name;
  ContinuousStats od, os, ie;

  bool operator==(const BiomarkerField&) const = default;
};

struct FitOptions {
  Normalization normalization = Normalization::ZScore;
  /// Emits an extra boolean slot "cup_to_disc_ratio>T" when set.
  std::optional<double> cdr_threshold = 0.6;
};

class FeatureSchema {
 public:
  SourceKind kind = SourceKind::Clinical;
  ClassMode mode = ClassMode::Binary;
  Normalization normalization = Normalization::ZScore;
  std::optional<double> cdr_threshold;

  // Clinical struct block, in slot order:
  //   optic_disc_size, cup_to_disc_ratio, [cdr flag], 7 booleans, rim_color
  std::vector<CategoricalField> categorical;
  std::vector<ContinuousField> continuous;
  // Biomarker struct block, sorted by name.
  std::vector<BiomarkerField> biomarkers;
  // Human block.
  CategoricalField risk{"glaucoma_risk_assessment", {std::string(kMissingCategory)}};

  int n_classes() const { return mode == ClassMode::Tristate ? 3 : 2; }

  std::vector<std::string> struct_names() const;
  std::vector<std::string> human_names() const;
  std::size_t struct_dim() const;
  std::size_t human_dim() const;
  /// Width of the Risk part of the human block (the rest is Sure).
  std::size_t risk_dim() const { return risk.vocabulary.size(); }

  /// 16 hex digits over the canonical serialization.
  std::string fingerprint() const;

  bool operator==(const FeatureSchema&) const = default;
};

FeatureSchema fit_schema(std::span<const ClinicalRecord> records, ClassMode mode,
                         const FitOptions& options = {});
FeatureSchema fit_schema(std::span<const OctBiomarkerRecord> records, ClassMode mode,
                         const FitOptions& options = {});

/// Versioned text form ("GLASCHEMA 1"), ending in a fingerprint line.
std::string serialize_schema(const FeatureSchema& schema);
/// Verifies the version and the fingerprint line.
FeatureSchema parse_schema(std::string_view text, const std::string& file = {});

/// z-score of x under `stats` (or x itself when normalization is off).
double normalize_value(double x, const ContinuousStats& stats, Normalization normalization);

FeatureBlock encode_structured(const ClinicalRecord& record, const FeatureSchema& schema);
FeatureBlock encode_tristate(std::span<const Measurement> measurements, const FeatureSchema& schema);
FeatureBlock encode_human(const std::optional<HumanJudgment>& judgment, const FeatureSchema& schema);

/// Concatenates blocks in the order text, struct, human, image. Input order is
/// irrelevant; masked-out blocks may be omitted from `blocks`.
FusedVector fuse(std::span<const FeatureBlock> blocks, const ModalityMask& mask, std::string id = {});
/// Feature names matching fuse()'s value order.
std::vector<std::string> fused_names(std::span<const FeatureBlock> blocks, const ModalityMask& mask);

/// True for human-block slot names that belong to the Sure (confidence) part.
bool is_confidence_slot(std::string_view name);

}  // namespace gbfuse
