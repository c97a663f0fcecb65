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

#include "gbfuse/records.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include <fmt/format.h>

#include "gbfuse/util.hpp"

namespace gbfuse {

namespace detail {
extern const std::string_view kDefaultCatalogText;
}

const std::vector<BoolField>& fundus_bool_fields() {
  static const std::vector<BoolField> fields = {
      {"isnt_rule_followed", &FundusFeatures::isnt_rule_followed},
      {"rim_pallor", &FundusFeatures::rim_pallor},
      {"bayoneting", &FundusFeatures::bayoneting},
      {"sharp_edge", &FundusFeatures::sharp_edge},
      {"laminar_dot_sign", &FundusFeatures::laminar_dot_sign},
      {"notching", &FundusFeatures::notching},
      {"rim_thinning", &FundusFeatures::rim_thinning},
  };
  return fields;
}

std::string ClinicalRecord::narrative() const {
  std::string out;
  if (fundus.neuroretinal_rim) out += *fundus.neuroretinal_rim;
  if (fundus.additional_observations) {
    if (!out.empty()) out += ' ';
    out += *fundus.additional_observations;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Status / catalog

std::string_view to_string(Status s) {
  switch (s) {
    case Status::WithinNormal: return "WithinNormal";
    case Status::Borderline: return "Borderline";
    case Status::OutsideNormal: return "OutsideNormal";
  }
  return "?";
}

double status_code(Status s) {
  switch (s) {
    case Status::WithinNormal: return 1.0;
    case Status::Borderline: return 0.5;
    case Status::OutsideNormal: return 0.0;
  }
  return 0.0;
}

NormativeCatalog::NormativeCatalog(int version, std::vector<BiomarkerSpec> specs)
    : version_(version), specs_(std::move(specs)) {}

const BiomarkerSpec* NormativeCatalog::find(std::string_view name) const {
  for (const auto& s : specs_)
    if (s.name == name) return &s;
  return nullptr;
}

namespace {

std::string_view direction_token(Direction d) {
  switch (d) {
    case Direction::HigherIsHealthier: return "higher";
    case Direction::LowerIsHealthier: return "lower";
    case Direction::SmallerMagnitudeIsHealthier: return "magnitude";
  }
  return "?";
}

}  // namespace

NormativeCatalog parse_catalog(std::string_view text, const std::string& file) {
  std::vector<BiomarkerSpec> specs;
  std::optional<int> version;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  for (const auto& raw_line : util::split(text, '\n')) {
    ++line_no;
    const auto line = util::trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    const auto tok = util::split_ws(line);
    const Location where{file, line_no, ""};
    if (tok[0] == "version") {
      if (tok.size() != 2 || !util::parse_int(tok[1]))
        throw Error(ErrorCode::MalformedTable, "bad version line", where);
      version = static_cast<int>(*util::parse_int(tok[1]));
      continue;
    }
    if (!version) throw Error(ErrorCode::MalformedTable, "catalog must start with 'version N'", where);
    if (tok.size() != 6)
      throw Error(ErrorCode::MalformedTable,
                  "expected: name category unit direction normal borderline", where);
    BiomarkerSpec spec;
    spec.name = tok[0];
    spec.category = tok[1];
    spec.unit = tok[2];
    if (tok[3] == "higher") {
      spec.direction = Direction::HigherIsHealthier;
    } else if (tok[3] == "lower") {
      spec.direction = Direction::LowerIsHealthier;
    } else if (tok[3] == "magnitude") {
      spec.direction = Direction::SmallerMagnitudeIsHealthier;
    } else {
      throw Error(ErrorCode::MalformedTable, "unknown direction '" + tok[3] + "'",
                  Location{file, line_no, spec.name});
    }
    const auto normal = util::parse_double(tok[4]);
    const auto border = util::parse_double(tok[5]);
    if (!normal || !border || !std::isfinite(*normal) || !std::isfinite(*border))
      throw Error(ErrorCode::MalformedTable, "bounds must be finite numbers",
                  Location{file, line_no, spec.name});
    spec.normal_edge = *normal;
    spec.borderline_edge = *border;
    const bool ordered = spec.direction == Direction::HigherIsHealthier
                             ? spec.borderline_edge <= spec.normal_edge
                             : spec.borderline_edge >= spec.normal_edge;
    if (!ordered)
      throw Error(ErrorCode::MalformedTable, "borderline edge lies on the healthy side of normal",
                  Location{file, line_no, spec.name});
    if (!seen.insert(spec.name).second)
      throw Error(ErrorCode::MalformedTable, "duplicate biomarker", Location{file, line_no, spec.name});
    specs.push_back(std::move(spec));
  }
  if (!version) throw Error(ErrorCode::MalformedTable, "empty catalog", Location{file, 0, ""});
  return NormativeCatalog(*version, std::move(specs));
}

std::string serialize_catalog(const NormativeCatalog& catalog) {
  std::string out = fmt::format("version {}\n", catalog.version());
  for (const auto& s : catalog.specs()) {
    out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", s.name, s.category, s.unit,
                       direction_token(s.direction), util::format_double(s.normal_edge),
                       util::format_double(s.borderline_edge));
  }
  return out;
}

std::string_view default_catalog_text() { return detail::kDefaultCatalogText; }

const NormativeCatalog& default_catalog() {
  static const NormativeCatalog catalog = parse_catalog(detail::kDefaultCatalogText, "<bundled>");
  return catalog;
}

Status classify_status(const BiomarkerSpec& spec, double value) {
  // Map every direction onto "higher is healthier".
  double v = value;
  double normal = spec.normal_edge;
  double border = spec.borderline_edge;
  switch (spec.direction) {
    case Direction::HigherIsHealthier:
      break;
    case Direction::LowerIsHealthier:
      v = -v, normal = -normal, border = -border;
      break;
    case Direction::SmallerMagnitudeIsHealthier:
      v = -std::fabs(v), normal = -normal, border = -border;
      break;
  }
  if (v >= normal) return Status::WithinNormal;
  if (v >= border) return Status::Borderline;
  return Status::OutsideNormal;
}

Status classify_status(std::string_view biomarker, double value, const NormativeCatalog& catalog) {
  const auto* spec = catalog.find(biomarker);
  if (spec == nullptr)
    throw Error(ErrorCode::MissingBounds, "no normative bounds for biomarker",
                Location{"", 0, std::string(biomarker)});
  return classify_status(*spec, value);
}

const Measurement* OctBiomarkerRecord::find(std::string_view biomarker) const {
  for (const auto& m : measurements)
    if (m.biomarker == biomarker) return &m;
  return nullptr;
}

bool ie_consistent(double od, double os, double ie) {
  const double scale = std::max({1.0, std::fabs(od), std::fabs(os)});
  return std::fabs(ie - (od - os)) <= 1e-6 * scale;
}

// ---------------------------------------------------------------------------
// Clinical record grammar
//
//   [record]
//   id = p0001
//   optic_disc_size = large
//   cup_to_disc_ratio = 0.8
//   ...
//
// One `key = value` per line; `null` (or an absent key) means missing. Text
// values escape backslash and newline as \\ and \n.

namespace {

constexpr std::string_view kRecordHeader = "[record]";

std::string escape_text(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '\\') {
      out += "\\\\";
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out.push_back(c);
    }
  }
  return out;
}

std::string unescape_text(std::string_view s, const Location& where) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '\\') {
      out.push_back(s[i]);
      continue;
    }
    if (i + 1 >= s.size()) throw Error(ErrorCode::MalformedRecord, "dangling escape", where);
    const char next = s[++i];
    if (next == 'n') {
      out.push_back('\n');
    } else if (next == '\\') {
      out.push_back('\\');
    } else {
      throw Error(ErrorCode::MalformedRecord, fmt::format("unknown escape \\{}", next), where);
    }
  }
  return out;
}

bool is_null(std::string_view v) { return v.empty() || util::to_lower(v) == "null"; }

bool parse_bool(std::string_view v, const Location& where) {
  const auto lower = util::to_lower(v);
  if (lower == "true") return true;
  if (lower == "false") return false;
  throw Error(ErrorCode::MalformedRecord, fmt::format("expected true/false, got '{}'", v), where);
}

double parse_unit_interval(std::string_view v, const Location& where) {
  const auto d = util::parse_double(v);
  if (!d || !std::isfinite(*d))
    throw Error(ErrorCode::MalformedRecord, fmt::format("expected a number, got '{}'", v), where);
  if (*d < 0.0 || *d > 1.0)
    throw Error(ErrorCode::OutOfRange, fmt::format("{} is outside [0, 1]", v), where);
  return *d;
}

std::string bool_text(const std::optional<bool>& b) {
  if (!b) return "null";
  return *b ? "true" : "false";
}

std::string opt_text(const std::optional<std::string>& s) {
  return s ? escape_text(*s) : std::string("null");
}

std::string opt_number(const std::optional<double>& d) {
  return d ? util::format_double(*d) : std::string("null");
}

}  // namespace

ClinicalRecord parse_clinical_record(std::string_view raw, const Location& origin) {
  ClinicalRecord rec;
  HumanJudgment judgment;
  std::set<std::string> seen;
  std::optional<int> label_class;
  std::optional<LabelSource> label_source;
  bool have_header = false;

  std::size_t line_no = origin.line == 0 ? 1 : origin.line;
  std::size_t first_line = line_no;
  for (const auto& raw_line : util::split(raw, '\n')) {
    const std::size_t this_line = line_no++;
    const auto line = util::trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    if (line == kRecordHeader) {
      if (have_header || !seen.empty())
        throw Error(ErrorCode::MalformedRecord, "unexpected [record] inside a record",
                    Location{origin.file, this_line, ""});
      have_header = true;
      first_line = this_line;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw Error(ErrorCode::MalformedRecord, "expected 'key = value'",
                  Location{origin.file, this_line, ""});
    const std::string key(util::trim(line.substr(0, eq)));
    const auto value = util::trim(line.substr(eq + 1));
    const Location where{origin.file, this_line, key};
    if (key.empty()) throw Error(ErrorCode::MalformedRecord, "empty key", where);
    if (!seen.insert(key).second) throw Error(ErrorCode::MalformedRecord, "duplicate field", where);

    auto& f = rec.fundus;
    if (key == "id") {
      if (is_null(value)) throw Error(ErrorCode::MalformedRecord, "id must not be empty", where);
      rec.id = std::string(value);
    } else if (key == "optic_disc_size") {
      if (!is_null(value)) {
        auto v = util::normalize_category(value);
        if (v != "small" && v != "normal" && v != "large")
          throw Error(ErrorCode::OutOfRange,
                      fmt::format("'{}' is not one of small/normal/large", value), where);
        f.optic_disc_size = std::move(v);
      }
    } else if (key == "cup_to_disc_ratio") {
      if (!is_null(value)) f.cup_to_disc_ratio = parse_unit_interval(value, where);
    } else if (key == "rim_color") {
      if (!is_null(value)) f.rim_color = util::normalize_category(value);
    } else if (key == "additional_observations") {
      if (!is_null(value)) f.additional_observations = unescape_text(value, where);
    } else if (key == "neuroretinal_rim") {
      if (!is_null(value)) f.neuroretinal_rim = unescape_text(value, where);
    } else if (key == "glaucoma_risk_assessment") {
      if (!is_null(value)) judgment.risk_assessment = util::normalize_category(value);
    } else if (key == "confidence_level") {
      if (!is_null(value)) judgment.confidence_level = parse_unit_interval(value, where);
    } else if (key == "image_ref") {
      if (!is_null(value)) rec.image_ref = std::string(value);
    } else if (key == "label") {
      if (!is_null(value)) {
        const auto v = util::parse_int(value);
        if (!v) throw Error(ErrorCode::MalformedRecord, "label must be an integer", where);
        if (*v < 0 || *v > 2) throw Error(ErrorCode::OutOfRange, "label must be 0, 1 or 2", where);
        label_class = static_cast<int>(*v);
      }
    } else if (key == "label_source") {
      const auto v = util::to_lower(value);
      if (v == "annotated") {
        label_source = LabelSource::Annotated;
      } else if (v == "derived") {
        label_source = LabelSource::DerivedFromRisk;
      } else {
        throw Error(ErrorCode::MalformedRecord, "label_source must be annotated or derived", where);
      }
    } else {
      bool matched = false;
      for (const auto& bf : fundus_bool_fields()) {
        if (bf.name == key) {
          if (!is_null(value)) f.*(bf.member) = parse_bool(value, where);
          matched = true;
          break;
        }
      }
      if (!matched) throw Error(ErrorCode::UnknownField, "unrecognized field", where);
    }
  }
  if (rec.id.empty())
    throw Error(ErrorCode::MalformedRecord, "record has no id", Location{origin.file, first_line, "id"});
  if (label_source && !label_class)
    throw Error(ErrorCode::MalformedRecord, "label_source without label",
                Location{origin.file, first_line, "label_source"});
  if (label_class) rec.label = Label{*label_class, label_source.value_or(LabelSource::Annotated)};
  if (!judgment.empty()) rec.judgment = std::move(judgment);
  return rec;
}

std::string serialize_clinical_record(const ClinicalRecord& r) {
  const auto& f = r.fundus;
  std::string out;
  out += "[record]\n";
  out += fmt::format("id = {}\n", r.id);
  out += fmt::format("optic_disc_size = {}\n", opt_text(f.optic_disc_size));
  out += fmt::format("cup_to_disc_ratio = {}\n", opt_number(f.cup_to_disc_ratio));
  for (const auto& bf : fundus_bool_fields())
    out += fmt::format("{} = {}\n", bf.name, bool_text(f.*(bf.member)));
  out += fmt::format("rim_color = {}\n", opt_text(f.rim_color));
  out += fmt::format("additional_observations = {}\n", opt_text(f.additional_observations));
  out += fmt::format("neuroretinal_rim = {}\n", opt_text(f.neuroretinal_rim));
  const HumanJudgment j = r.judgment.value_or(HumanJudgment{});
  out += fmt::format("glaucoma_risk_assessment = {}\n", opt_text(j.risk_assessment));
  out += fmt::format("confidence_level = {}\n", opt_number(j.confidence_level));
  out += fmt::format("image_ref = {}\n", r.image_ref.value_or("null"));
  if (r.label) {
    out += fmt::format("label = {}\n", r.label->class_index);
    if (r.label->source == LabelSource::DerivedFromRisk) out += "label_source = derived\n";
  } else {
    out += "label = null\n";
  }
  return out;
}

ParseResult<ClinicalRecord> parse_clinical_file(std::string_view text, const std::string& file,
                                                bool collect_errors) {
  ParseResult<ClinicalRecord> result;
  std::unordered_set<std::string> ids;

  // Split into blocks at each [record] line.
  const auto lines = util::split(text, '\n');
  std::size_t i = 0;
  while (i < lines.size()) {
    const auto t = util::trim(lines[i]);
    if (t.empty() || t.front() == '#') {
      ++i;
      continue;
    }
    const std::size_t start = i;
    if (t != kRecordHeader) {
      Error err(ErrorCode::MalformedRecord, "expected [record]", Location{file, i + 1, ""});
      if (!collect_errors) throw err;
      result.errors.push_back(std::move(err));
      // Resynchronize at the next header.
      while (i < lines.size() && util::trim(lines[i]) != kRecordHeader) ++i;
      continue;
    }
    ++i;
    while (i < lines.size() && util::trim(lines[i]) != kRecordHeader) ++i;
    std::string block;
    for (std::size_t k = start; k < i; ++k) {
      block += lines[k];
      block += '\n';
    }
    try {
      auto rec = parse_clinical_record(block, Location{file, start + 1, ""});
      if (!ids.insert(rec.id).second)
        throw Error(ErrorCode::DuplicateId, fmt::format("duplicate record id '{}'", rec.id),
                    Location{file, start + 1, "id"});
      result.records.push_back(std::move(rec));
    } catch (const Error& e) {
      if (!collect_errors) throw;
      result.errors.push_back(e);
    }
  }
  return result;
}

std::string serialize_clinical_file(const std::vector<ClinicalRecord>& records) {
  std::string out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (i > 0) out += '\n';
    out += serialize_clinical_record(records[i]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Biomarker tables
//
//   biomarker od os ie [status_od status_os]
//   subject <id> [image_ref=X] [label=N] [risk=high_risk] [confidence=0.9]
//   AR 97 91 6
//   I-ER -5 3 N/A
//   subject <id> ...

namespace {

std::optional<Status> parse_status_token(std::string_view tok) {
  const auto t = util::to_lower(tok);
  if (t == "-" || t.empty()) return std::nullopt;
  if (t == "normal" || t == "within" || t == "withinnormal" || t == "w" || t == "1" || t == "true")
    return Status::WithinNormal;
  if (t == "borderline" || t == "b" || t == "0.5") return Status::Borderline;
  if (t == "outside" || t == "outsidenormal" || t == "o" || t == "0" || t == "false")
    return Status::OutsideNormal;
  throw std::invalid_argument("bad status");
}

std::string_view status_token(Status s) {
  switch (s) {
    case Status::WithinNormal: return "normal";
    case Status::Borderline: return "borderline";
    case Status::OutsideNormal: return "outside";
  }
  return "-";
}

struct SubjectHeader {
  std::string id;
  std::optional<std::string> image_ref;
  std::optional<Label> label;
  std::optional<HumanJudgment> judgment;
};

SubjectHeader parse_subject_line(const std::vector<std::string>& tok, const Location& where) {
  if (tok.size() < 2) throw Error(ErrorCode::MalformedTable, "subject line needs an id", where);
  SubjectHeader h;
  h.id = tok[1];
  HumanJudgment j;
  for (std::size_t k = 2; k < tok.size(); ++k) {
    const auto eq = tok[k].find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::MalformedTable, fmt::format("expected key=value, got '{}'", tok[k]), where);
    const std::string key = tok[k].substr(0, eq);
    const std::string value = tok[k].substr(eq + 1);
    const Location at{where.file, where.line, key};
    if (key == "image_ref") {
      if (value.empty()) throw Error(ErrorCode::MalformedTable, "empty image_ref", at);
      h.image_ref = value;
    } else if (key == "label") {
      const auto v = util::parse_int(value);
      if (!v || *v < 0 || *v > 2) throw Error(ErrorCode::MalformedTable, "label must be 0, 1 or 2", at);
      h.label = Label{static_cast<int>(*v), LabelSource::Annotated};
    } else if (key == "risk") {
      std::string cat = value;
      std::replace(cat.begin(), cat.end(), '_', ' ');
      j.risk_assessment = util::normalize_category(cat);
    } else if (key == "confidence") {
      const auto v = util::parse_double(value);
      if (!v || *v < 0.0 || *v > 1.0)
        throw Error(ErrorCode::MalformedTable, "confidence must lie in [0, 1]", at);
      j.confidence_level = *v;
    } else {
      throw Error(ErrorCode::MalformedTable, "unknown subject attribute", at);
    }
  }
  if (!j.empty()) h.judgment = j;
  return h;
}

}  // namespace

ParseResult<OctBiomarkerRecord> parse_biomarker_table(std::string_view text,
                                                      const NormativeCatalog& catalog,
                                                      const std::string& file,
                                                      bool collect_errors) {
  ParseResult<OctBiomarkerRecord> result;
  bool have_header = false;
  bool with_status = false;
  std::optional<OctBiomarkerRecord> current;
  bool current_bad = false;
  std::unordered_set<std::string> ids;

  auto fail = [&](Error err) {
    if (!collect_errors) throw err;
    result.errors.push_back(std::move(err));
    current_bad = true;
  };
  auto flush = [&]() {
    if (current && !current_bad) result.records.push_back(std::move(*current));
    current.reset();
    current_bad = false;
  };

  std::size_t line_no = 0;
  for (const auto& raw_line : util::split(text, '\n')) {
    ++line_no;
    const auto line = util::trim(raw_line);
    if (line.empty() || line.front() == '#') continue;
    std::string norm(line);
    std::replace(norm.begin(), norm.end(), ',', ' ');
    const auto tok = util::split_ws(norm);
    const Location where{file, line_no, ""};

    if (!have_header) {
      const bool base = tok.size() >= 4 && util::to_lower(tok[0]) == "biomarker" &&
                        util::to_lower(tok[1]) == "od" && util::to_lower(tok[2]) == "os" &&
                        util::to_lower(tok[3]) == "ie";
      const bool ext = tok.size() == 6 && util::to_lower(tok[4]) == "status_od" &&
                       util::to_lower(tok[5]) == "status_os";
      if (!base || !(tok.size() == 4 || ext))
        throw Error(ErrorCode::MalformedTable,
                    "header must be 'biomarker od os ie [status_od status_os]'", where);
      have_header = true;
      with_status = ext;
      continue;
    }

    if (util::to_lower(tok[0]) == "subject") {
      flush();
      try {
        auto h = parse_subject_line(tok, where);
        if (!ids.insert(h.id).second)
          throw Error(ErrorCode::DuplicateId, fmt::format("duplicate subject id '{}'", h.id), where);
        current = OctBiomarkerRecord{h.id, {}, h.image_ref, h.label, h.judgment};
      } catch (Error& e) {
        current = OctBiomarkerRecord{};
        fail(std::move(e));
      }
      continue;
    }

    if (!current) {
      fail(Error(ErrorCode::MalformedTable, "measurement row before any subject line", where));
      current.reset();
      current_bad = false;
      continue;
    }
    if (current_bad) continue;

    const std::size_t expected = with_status ? 6 : 4;
    if (tok.size() != expected) {
      fail(Error(ErrorCode::MalformedTable, fmt::format("expected {} columns, got {}", expected, tok.size()),
                 where));
      continue;
    }
    const std::string& name = tok[0];
    const Location at{file, line_no, name};
    const auto* spec = catalog.find(name);
    if (spec == nullptr) {
      fail(Error(ErrorCode::UnknownBiomarker, "biomarker not in catalog", at));
      continue;
    }
    if (current->find(name) != nullptr) {
      fail(Error(ErrorCode::MalformedTable, "biomarker repeated within a subject", at));
      continue;
    }
    const auto od = util::parse_double(tok[1]);
    const auto os = util::parse_double(tok[2]);
    if (!od || !os || !std::isfinite(*od) || !std::isfinite(*os)) {
      fail(Error(ErrorCode::MalformedTable, "od/os must be finite numbers", at));
      continue;
    }
    Measurement m;
    m.biomarker = name;
    m.od = *od;
    m.os = *os;
    const auto ie_lower = util::to_lower(tok[3]);
    if (ie_lower != "n/a" && ie_lower != "na") {
      const auto ie = util::parse_double(tok[3]);
      if (!ie || !std::isfinite(*ie)) {
        fail(Error(ErrorCode::MalformedTable, "ie must be a number or N/A", at));
        continue;
      }
      if (!ie_consistent(m.od, m.os, *ie)) {
        fail(Error(ErrorCode::InconsistentIE,
                   fmt::format("ie {} differs from od - os = {}", tok[3], util::format_double(m.od - m.os)),
                   at));
        continue;
      }
      m.ie = *ie;
    }
    m.status_od = classify_status(*spec, m.od);
    m.status_os = classify_status(*spec, m.os);
    if (with_status) {
      try {
        const auto sod = parse_status_token(tok[4]);
        const auto sos = parse_status_token(tok[5]);
        if (sod.has_value() != sos.has_value())
          throw std::invalid_argument("annotate both eyes or neither");
        if (sod) {
          m.status_od = *sod;
          m.status_os = *sos;
          m.annotated = true;
        }
      } catch (const std::invalid_argument& e) {
        fail(Error(ErrorCode::MalformedTable, fmt::format("bad status annotation: {}", e.what()), at));
        continue;
      }
    }
    current->measurements.push_back(std::move(m));
  }
  flush();
  if (!have_header && !collect_errors)
    throw Error(ErrorCode::MalformedTable, "missing header row", Location{file, 0, ""});
  return result;
}

std::string serialize_biomarker_table(const std::vector<OctBiomarkerRecord>& records) {
  std::string out = "biomarker\tod\tos\tie\tstatus_od\tstatus_os\n";
  for (const auto& r : records) {
    out += fmt::format("subject {}", r.id);
    if (r.image_ref) out += fmt::format(" image_ref={}", *r.image_ref);
    if (r.label) out += fmt::format(" label={}", r.label->class_index);
    if (r.judgment) {
      if (r.judgment->risk_assessment) {
        std::string cat = *r.judgment->risk_assessment;
        std::replace(cat.begin(), cat.end(), ' ', '_');
        out += fmt::format(" risk={}", cat);
      }
      if (r.judgment->confidence_level)
        out += fmt::format(" confidence={}", util::format_double(*r.judgment->confidence_level));
    }
    out += '\n';
    for (const auto& m : r.measurements) {
      out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\n", m.biomarker, util::format_double(m.od),
                         util::format_double(m.os), m.ie ? util::format_double(*m.ie) : "N/A",
                         m.annotated ? status_token(m.status_od) : "-",
                         m.annotated ? status_token(m.status_os) : "-");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Labels

const std::vector<std::string>& risk_scale() {
  static const std::vector<std::string> kScale = {"very healthy", "healthy",   "low risk",
                                                  "moderate risk", "high risk", "very high risk"};
  return kScale;
}

LabelPolicy threshold_label_policy(std::string_view first_positive) {
  const auto key = util::normalize_category(first_positive);
  const auto& scale = risk_scale();
  if (std::find(scale.begin(), scale.end(), key) == scale.end())
    throw Error(ErrorCode::UnmappedCategory, fmt::format("'{}' is not on the risk scale", first_positive));
  LabelPolicy policy;
  bool at_or_above = false;
  for (const auto& cat : scale) {
    if (cat == key) at_or_above = true;
    policy.classes[cat] = at_or_above ? 1 : 0;
  }
  policy.n_classes = 2;
  return policy;
}

LabelPolicy default_label_policy() { return threshold_label_policy("high risk"); }

Label derive_label(const HumanJudgment& judgment, const LabelPolicy& policy) {
  if (!judgment.risk_assessment)
    throw Error(ErrorCode::UnmappedCategory, "no risk assessment to derive a label from",
                Location{"", 0, "glaucoma_risk_assessment"});
  const auto key = util::normalize_category(*judgment.risk_assessment);
  const auto it = policy.classes.find(key);
  if (it == policy.classes.end())
    throw Error(ErrorCode::UnmappedCategory, fmt::format("risk category '{}' has no class", key),
                Location{"", 0, "glaucoma_risk_assessment"});
  if (it->second < 0 || it->second >= policy.n_classes)
    throw Error(ErrorCode::UnmappedCategory, "policy maps outside its class count",
                Location{"", 0, "glaucoma_risk_assessment"});
  return Label{it->second, LabelSource::DerivedFromRisk};
}

template <typename Record>
std::size_t resolve_labels(std::vector<Record>& records, const LabelPolicy& policy) {
  std::size_t derived = 0;
  for (auto& r : records) {
    if (r.label || !r.judgment || !r.judgment->risk_assessment) continue;
    r.label = derive_label(*r.judgment, policy);
    ++derived;
  }
  return derived;
}

template std::size_t resolve_labels(std::vector<ClinicalRecord>&, const LabelPolicy&);
template std::size_t resolve_labels(std::vector<OctBiomarkerRecord>&, const LabelPolicy&);

}  // namespace gbfuse
