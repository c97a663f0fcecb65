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

// Domain objects for the two record sources: fundus-annotation records
// (key/value text) and per-eye OCT biomarker tables.

#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "gbfuse/error.hpp"

namespace gbfuse {

enum class LabelSource { Annotated, DerivedFromRisk };

struct Label {
  int class_index = 0;
  LabelSource source = LabelSource::Annotated;

  bool operator==(const Label&) const = default;
};

struct FundusFeatures {
  std::optional<std::string> optic_disc_size;  // small | normal | large
  std::optional<double> cup_to_disc_ratio;     // [0, 1]
  std::optional<bool> isnt_rule_followed;
  std::optional<bool> rim_pallor;
  std::optional<bool> bayoneting;
  std::optional<bool> sharp_edge;
  std::optional<bool> laminar_dot_sign;
  std::optional<bool> notching;
  std::optional<bool> rim_thinning;
  std::optional<std::string> rim_color;
  std::optional<std::string> additional_observations;
  std::optional<std::string> neuroretinal_rim;

  bool operator==(const FundusFeatures&) const = default;
};

/// Boolean fundus fields in canonical order, for code that walks them generically.
struct BoolField {
  std::string_view name;
  std::optional<bool> FundusFeatures::*member;
};
const std::vector<BoolField>& fundus_bool_fields();

struct HumanJudgment {
  std::optional<std::string> risk_assessment;
  std::optional<double> confidence_level;  // [0, 1]

  bool empty() const { return !risk_assessment && !confidence_level; }
  bool operator==(const HumanJudgment&) const = default;
};

struct ClinicalRecord {
  std::string id;
  FundusFeatures fundus;
  std::optional<HumanJudgment> judgment;  // present iff at least one field is present
  std::optional<std::string> image_ref;
  std::optional<Label> label;

  /// Free-text narrative fed to the text encoder (rim description + observations).
  std::string narrative() const;

  bool operator==(const ClinicalRecord&) const = default;
};

// ---------------------------------------------------------------------------
// OCT biomarkers

enum class Status { WithinNormal, Borderline, OutsideNormal };

std::string_view to_string(Status s);
/// Numeric code: WithinNormal 1.0, Borderline 0.5, OutsideNormal 0.0.
double status_code(Status s);

/// Which side of the measurement is healthy.
enum class Direction {
  HigherIsHealthier,
  LowerIsHealthier,
  SmallerMagnitudeIsHealthier,  // asymmetry indices such as S-I differences
};

/// Per-biomarker normative bounds. For HigherIsHealthier:
///   value >= normal_edge                 -> WithinNormal
///   borderline_edge <= value < normal    -> Borderline
///   otherwise                            -> OutsideNormal
/// The other directions mirror this (on -value / |value|). Edges belong to the
/// more-normal band.
struct BiomarkerSpec {
  std::string name;
  std::string category;  // RNFL | ONH | GCC
  std::string unit;
  Direction direction = Direction::HigherIsHealthier;
  double normal_edge = 0.0;
  double borderline_edge = 0.0;
};

class NormativeCatalog {
 public:
  NormativeCatalog() = default;
  NormativeCatalog(int version, std::vector<BiomarkerSpec> specs);

  int version() const { return version_; }
  const std::vector<BiomarkerSpec>& specs() const { return specs_; }
  const BiomarkerSpec* find(std::string_view name) const;

 private:
  int version_ = 1;
  std::vector<BiomarkerSpec> specs_;
};

/// The bundled catalog (RNFL, ONH and GCC biomarkers) with
/// placeholder desk-scale bounds. Same content as data/biomarker_catalog.txt.
const NormativeCatalog& default_catalog();
std::string_view default_catalog_text();

NormativeCatalog parse_catalog(std::string_view text, const std::string& file = {});
std::string serialize_catalog(const NormativeCatalog& catalog);

Status classify_status(const BiomarkerSpec& spec, double value);
/// Throws MissingBounds when `biomarker` is not in the catalog.
Status classify_status(std::string_view biomarker, double value, const NormativeCatalog& catalog);

struct Measurement {
  std::string biomarker;
  double od = 0.0;
  double os = 0.0;
  std::optional<double> ie;
  Status status_od = Status::WithinNormal;
  Status status_os = Status::WithinNormal;
  bool annotated = false;  // statuses came from the table, not from classify_status

  bool operator==(const Measurement&) const = default;
};

struct OctBiomarkerRecord {
  std::string id;
  std::vector<Measurement> measurements;
  std::optional<std::string> image_ref;
  std::optional<Label> label;
  std::optional<HumanJudgment> judgment;

  const Measurement* find(std::string_view biomarker) const;
  bool operator==(const OctBiomarkerRecord&) const = default;
};

/// |ie - (od - os)| <= 1e-6 * max(1, |od|, |os|)
bool ie_consistent(double od, double os, double ie);

// ---------------------------------------------------------------------------
// Parsing

/// Parses one record block in the key/value grammar (see README). `origin`
/// supplies the file name and the line number of the block's first line.
ClinicalRecord parse_clinical_record(std::string_view raw, const Location& origin = {});

/// Canonical serialization of a record; parse_clinical_record inverts it.
std::string serialize_clinical_record(const ClinicalRecord& record);

template <typename T>
struct ParseResult {
  std::vector<T> records;
  std::vector<Error> errors;
};

/// Parses a whole clinical record file. With `collect_errors` false the first
/// error is thrown; otherwise bad records are skipped and reported.
ParseResult<ClinicalRecord> parse_clinical_file(std::string_view text, const std::string& file,
                                                bool collect_errors = false);
std::string serialize_clinical_file(const std::vector<ClinicalRecord>& records);

ParseResult<OctBiomarkerRecord> parse_biomarker_table(std::string_view text,
                                                      const NormativeCatalog& catalog,
                                                      const std::string& file = {},
                                                      bool collect_errors = false);
std::string serialize_biomarker_table(const std::vector<OctBiomarkerRecord>& records);

// ---------------------------------------------------------------------------
// Labels

struct LabelPolicy {
  std::map<std::string, int> classes;  // normalized risk category -> class index
  int n_classes = 2;
};

/// The ordered risk scale, healthiest first.
const std::vector<std::string>& risk_scale();
/// Scale categories at or above `first_positive` map to class 1. Throws
/// UnmappedCategory when it is not on the scale.
LabelPolicy threshold_label_policy(std::string_view first_positive);
/// threshold_label_policy("high risk").
LabelPolicy default_label_policy();

Label derive_label(const HumanJudgment& judgment, const LabelPolicy& policy);

/// Fills missing labels from the judgment where possible. Explicit labels win.
/// Returns the number of labels derived.
template <typename Record>
std::size_t resolve_labels(std::vector<Record>& records, const LabelPolicy& policy);

}  // namespace gbfuse
