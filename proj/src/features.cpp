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

#include "gbfuse/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gbfuse/util.hpp"

namespace gbfuse {

std::string_view to_string(Modality m) {
  switch (m) {
    case Modality::Text: return "text";
    case Modality::Struct: return "struct";
    case Modality::Human: return "human";
    case Modality::Image: return "img";
  }
  return "?";
}

std::string_view to_string(SourceKind k) {
  return k == SourceKind::Clinical ? "clinical" : "biomarker";
}

// ---------------------------------------------------------------------------
// ModalityMask

ModalityMask ModalityMask::parse(std::string_view spec) {
  const auto s = util::to_lower(util::trim(spec));
  if (s == "all") return all();
  ModalityMask m;
  if (s == "none" || s.empty()) return m;
  std::string norm = s;
  std::replace(norm.begin(), norm.end(), ',', '+');
  for (auto part : util::split(norm, '+')) {
    auto name = std::string(util::trim(part));
    if (name.size() > 5 && name.ends_with("-only")) name.resize(name.size() - 5);
    if (name == "image" || name == "img") {
      m.image = true;
    } else if (name == "words" || name == "text") {
      m.words = true;
    } else if (name == "factor" || name == "struct") {
      m.factor = true;
    } else if (name == "risk") {
      m.risk = true;
    } else if (name == "sure" || name == "confidence") {
      m.sure = true;
    } else if (name == "judgment" || name == "human") {
      m.risk = m.sure = true;
    } else {
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown modality '{}' in mask '{}'", name, spec));
    }
  }
  return m;
}

std::string ModalityMask::str() const {
  std::vector<std::string_view> parts;
  if (image) parts.push_back("image");
  if (words) parts.push_back("words");
  if (factor) parts.push_back("factor");
  if (risk) parts.push_back("risk");
  if (sure) parts.push_back("sure");
  if (parts.empty()) return "none";
  return fmt::format("{}", fmt::join(parts, "+"));
}

// ---------------------------------------------------------------------------
// Schema layout

namespace {

constexpr std::string_view kDiscSize = "optic_disc_size";
constexpr std::string_view kCdr = "cup_to_disc_ratio";
constexpr std::string_view kRimColor = "rim_color";
constexpr std::string_view kConfidence = "confidence_level";

std::string cdr_flag_name(double threshold) {
  return fmt::format("{}>{}", kCdr, util::format_double(threshold));
}

void append_categorical_names(const CategoricalField& f, std::vector<std::string>& out) {
  for (const auto& v : f.vocabulary) out.push_back(fmt::format("{}={}", f.name, v));
}

void append_bool_names(std::string_view name, std::vector<std::string>& out) {
  out.push_back(fmt::format("{}=false", name));
  out.push_back(fmt::format("{}=true", name));
  out.push_back(fmt::format("{}={}", name, kMissingCategory));
}

const CategoricalField* find_categorical(const FeatureSchema& s, std::string_view name) {
  for (const auto& f : s.categorical)
    if (f.name == name) return &f;
  return nullptr;
}

const ContinuousField* find_continuous(const FeatureSchema& s, std::string_view name) {
  for (const auto& f : s.continuous)
    if (f.name == name) return &f;
  return nullptr;
}

}  // namespace

bool is_confidence_slot(std::string_view name) { return name.starts_with(kConfidence); }

std::vector<std::string> FeatureSchema::struct_names() const {
  std::vector<std::string> out;
  if (kind == SourceKind::Clinical) {
    if (const auto* f = find_categorical(*this, kDiscSize)) append_categorical_names(*f, out);
    for (const auto& c : continuous) {
      out.push_back(c.name);
      out.push_back(fmt::format("{}:missing", c.name));
    }
    if (cdr_threshold) append_bool_names(cdr_flag_name(*cdr_threshold), out);
    for (const auto& bf : fundus_bool_fields()) append_bool_names(bf.name, out);
    if (const auto* f = find_categorical(*this, kRimColor)) append_categorical_names(*f, out);
  } else {
    for (const auto& b : biomarkers) {
      out.push_back(b.name + ".od");
      out.push_back(b.name + ".os");
      out.push_back(b.name + ".ie");
      out.push_back(b.name + ".ie:missing");
      out.push_back(b.name + ".status");
      out.push_back(b.name + ":absent");
    }
  }
  return out;
}

std::vector<std::string> FeatureSchema::human_names() const {
  std::vector<std::string> out;
  append_categorical_names(risk, out);
  out.emplace_back(kConfidence);
  out.push_back(fmt::format("{}:missing", kConfidence));
  return out;
}

std::size_t FeatureSchema::struct_dim() const {
  if (kind == SourceKind::Biomarker) return biomarkers.size() * 6;
  std::size_t d = 0;
  for (const auto& c : categorical) d += c.vocabulary.size();
  d += continuous.size() * 2;
  if (cdr_threshold) d += 3;
  d += fundus_bool_fields().size() * 3;
  return d;
}

std::size_t FeatureSchema::human_dim() const { return risk.vocabulary.size() + 2; }

std::string FeatureSchema::fingerprint() const {
  const std::string text = serialize_schema(*this);
  // The serialization ends with its own fingerprint line; hash the body.
  const auto pos = text.rfind("fingerprint ");
  return util::hex64(util::fnv1a(std::string_view(text).substr(0, pos)));
}

// ---------------------------------------------------------------------------
// Fitting

namespace {

ContinuousStats compute_stats(std::vector<double> values) {
  ContinuousStats s;
  if (values.empty()) return s;
  // Sorted summation makes the statistics independent of record order.
  std::sort(values.begin(), values.end());
  s.count = values.size();
  s.min = values.front();
  s.max = values.back();
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double ss = 0.0;
  for (double v : values) ss += (v - s.mean) * (v - s.mean);
  s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  if (!(s.sd > 0.0) || !std::isfinite(s.sd)) s.sd = 0.0;
  return s;
}

CategoricalField make_categorical(std::string name, const std::set<std::string>& observed) {
  CategoricalField f{std::move(name), {}};
  for (const auto& v : observed)
    if (v != kMissingCategory) f.vocabulary.push_back(v);  // std::set is already lexicographic
  f.vocabulary.emplace_back(kMissingCategory);
  return f;
}

template <typename Record>
CategoricalField fit_risk(std::span<const Record> records) {
  std::set<std::string> risks;
  for (const auto& r : records)
    if (r.judgment && r.judgment->risk_assessment) risks.insert(*r.judgment->risk_assessment);
  return make_categorical("glaucoma_risk_assessment", risks);
}

}  // namespace

FeatureSchema fit_schema(std::span<const ClinicalRecord> records, ClassMode mode,
                         const FitOptions& options) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit a schema on zero records");
  FeatureSchema s;
  s.kind = SourceKind::Clinical;
  s.mode = mode;
  s.normalization = options.normalization;
  s.cdr_threshold = options.cdr_threshold;

  std::set<std::string> sizes, colors;
  std::vector<double> cdr;
  for (const auto& r : records) {
    if (r.fundus.optic_disc_size) sizes.insert(*r.fundus.optic_disc_size);
    if (r.fundus.rim_color) colors.insert(*r.fundus.rim_color);
    if (r.fundus.cup_to_disc_ratio) cdr.push_back(*r.fundus.cup_to_disc_ratio);
  }
  s.categorical.push_back(make_categorical(std::string(kDiscSize), sizes));
  s.categorical.push_back(make_categorical(std::string(kRimColor), colors));
  s.continuous.push_back({std::string(kCdr), compute_stats(std::move(cdr))});
  if (s.continuous.back().stats.count > 0 && s.continuous.back().stats.sd == 0.0)
    spdlog::warn("{} has zero variance; it will encode as a constant 0", kCdr);
  s.risk = fit_risk(records);
  return s;
}

FeatureSchema fit_schema(std::span<const OctBiomarkerRecord> records, ClassMode mode,
                         const FitOptions& options) {
  if (records.empty()) throw Error(ErrorCode::EmptyDataset, "cannot fit a schema on zero records");
  FeatureSchema s;
  s.kind = SourceKind::Biomarker;
  s.mode = mode;
  s.normalization = options.normalization;

  struct Columns {
    std::vector<double> od, os, ie;
  };
  std::map<std::string, Columns> columns;
  for (const auto& r : records) {
    for (const auto& m : r.measurements) {
      auto& c = columns[m.biomarker];
      c.od.push_back(m.od);
      c.os.push_back(m.os);
      if (m.ie) c.ie.push_back(*m.ie);
    }
  }
  for (auto& [name, c] : columns) {
    s.biomarkers.push_back(
        {name, compute_stats(std::move(c.od)), compute_stats(std::move(c.os)), compute_stats(std::move(c.ie))});
  }
  s.risk = fit_risk(records);
  return s;
}

// ---------------------------------------------------------------------------
// Schema text form

namespace {

std::string stats_text(const ContinuousStats& s) {
  return fmt::format("{}\t{}\t{}\t{}\t{}", util::format_double(s.mean), util::format_double(s.sd),
                     util::format_double(s.min), util::format_double(s.max), s.count);
}

ContinuousStats parse_stats(const std::vector<std::string>& tok, std::size_t at, const Location& where) {
  if (tok.size() < at + 5) throw Error(ErrorCode::SchemaMismatch, "truncated statistics", where);
  ContinuousStats s;
  const auto mean = util::parse_double(tok[at]);
  const auto sd = util::parse_double(tok[at + 1]);
  const auto mn = util::parse_double(tok[at + 2]);
  const auto mx = util::parse_double(tok[at + 3]);
  const auto n = util::parse_int(tok[at + 4]);
  if (!mean || !sd || !mn || !mx || !n || *n < 0)
    throw Error(ErrorCode::SchemaMismatch, "bad statistics", where);
  s.mean = *mean, s.sd = *sd, s.min = *mn, s.max = *mx;
  s.count = static_cast<std::size_t>(*n);
  return s;
}

std::string categorical_text(std::string_view tag, const CategoricalField& f) {
  return fmt::format("{}\t{}\t{}\n", tag, f.name, fmt::join(f.vocabulary, "\t"));
}

}  // namespace

std::string serialize_schema(const FeatureSchema& s) {
  std::string out = "GLASCHEMA 1\n";
  out += fmt::format("kind\t{}\n", to_string(s.kind));
  out += fmt::format("mode\t{}\n", s.mode == ClassMode::Tristate ? "tristate" : "binary");
  out += fmt::format("normalization\t{}\n", s.normalization == Normalization::ZScore ? "zscore" : "none");
  out += fmt::format("cdr_threshold\t{}\n", s.cdr_threshold ? util::format_double(*s.cdr_threshold) : "none");
  for (const auto& c : s.categorical) out += categorical_text("categorical", c);
  for (const auto& c : s.continuous) out += fmt::format("continuous\t{}\t{}\n", c.name, stats_text(c.stats));
  for (const auto& b : s.biomarkers)
    out += fmt::format("biomarker\t{}\t{}\t{}\t{}\n", b.name, stats_text(b.od), stats_text(b.os),
                       stats_text(b.ie));
  out += categorical_text("risk", s.risk);
  const auto fp = util::hex64(util::fnv1a(out));
  out += fmt::format("fingerprint {}\n", fp);
  return out;
}

FeatureSchema parse_schema(std::string_view text, const std::string& file) {
  FeatureSchema s;
  s.cdr_threshold.reset();
  bool have_version = false;
  bool have_fingerprint = false;
  bool have_risk = false;
  std::size_t line_no = 0;
  std::size_t body_end = 0;
  std::string stated_fp;
  std::size_t offset = 0;
  for (const auto& raw : util::split(text, '\n')) {
    ++line_no;
    const std::size_t line_start = offset;
    offset += raw.size() + 1;
    const auto line = util::trim(raw);
    if (line.empty()) continue;
    const Location where{file, line_no, ""};
    if (have_fingerprint) throw Error(ErrorCode::SchemaMismatch, "content after fingerprint", where);
    if (!have_version) {
      if (line != "GLASCHEMA 1") {
        if (line.starts_with("GLASCHEMA "))
          throw Error(ErrorCode::VersionMismatch, fmt::format("unsupported schema version '{}'", line), where);
        throw Error(ErrorCode::SchemaMismatch, "not a schema file (missing GLASCHEMA header)", where);
      }
      have_version = true;
      continue;
    }
    if (line.starts_with("fingerprint ")) {
      stated_fp = std::string(util::trim(line.substr(12)));
      body_end = line_start;
      have_fingerprint = true;
      continue;
    }
    const auto tok = util::split(line, '\t');
    const auto& tag = tok[0];
    const auto need = [&](std::size_t n) {
      if (tok.size() < n) throw Error(ErrorCode::SchemaMismatch, fmt::format("truncated '{}' line", tag), where);
    };
    if (tag == "kind") {
      need(2);
      if (tok[1] == "clinical") {
        s.kind = SourceKind::Clinical;
      } else if (tok[1] == "biomarker") {
        s.kind = SourceKind::Biomarker;
      } else {
        throw Error(ErrorCode::SchemaMismatch, "unknown kind", where);
      }
    } else if (tag == "mode") {
      need(2);
      s.mode = tok[1] == "tristate" ? ClassMode::Tristate : ClassMode::Binary;
    } else if (tag == "normalization") {
      need(2);
      s.normalization = tok[1] == "none" ? Normalization::None : Normalization::ZScore;
    } else if (tag == "cdr_threshold") {
      need(2);
      if (tok[1] != "none") {
        const auto v = util::parse_double(tok[1]);
        if (!v) throw Error(ErrorCode::SchemaMismatch, "bad cdr_threshold", where);
        s.cdr_threshold = *v;
      }
    } else if (tag == "categorical" || tag == "risk") {
      need(3);
      CategoricalField f{tok[1], {tok.begin() + 2, tok.end()}};
      if (f.vocabulary.back() != kMissingCategory)
        throw Error(ErrorCode::SchemaMismatch, "vocabulary must end with 'missing'", where);
      if (std::set<std::string>(f.vocabulary.begin(), f.vocabulary.end()).size() != f.vocabulary.size())
        throw Error(ErrorCode::SchemaMismatch, "duplicate vocabulary entry", where);
      if (tag == "risk") {
        s.risk = std::move(f);
        have_risk = true;
      } else {
        s.categorical.push_back(std::move(f));
      }
    } else if (tag == "continuous") {
      need(7);
      s.continuous.push_back({tok[1], parse_stats(tok, 2, where)});
    } else if (tag == "biomarker") {
      need(17);
      s.biomarkers.push_back({tok[1], parse_stats(tok, 2, where), parse_stats(tok, 7, where),
                              parse_stats(tok, 12, where)});
    } else {
      throw Error(ErrorCode::SchemaMismatch, fmt::format("unknown schema line '{}'", tag), where);
    }
  }
  if (!have_version) throw Error(ErrorCode::SchemaMismatch, "empty schema file", Location{file, 0, ""});
  if (!have_fingerprint || !have_risk)
    throw Error(ErrorCode::SchemaMismatch, "truncated schema file", Location{file, line_no, ""});
  const auto actual = util::hex64(util::fnv1a(text.substr(0, body_end)));
  if (actual != stated_fp)
    throw Error(ErrorCode::FingerprintMismatch,
                fmt::format("schema body hashes to {} but file states {}", actual, stated_fp),
                Location{file, 0, "fingerprint"});
  return s;
}

// ---------------------------------------------------------------------------
// Encoding

double normalize_value(double x, const ContinuousStats& stats, Normalization normalization) {
  if (normalization == Normalization::None) return x;
  if (stats.sd == 0.0) return 0.0;
  return (x - stats.mean) / stats.sd;
}

namespace {

void push_onehot(const CategoricalField& f, const std::optional<std::string>& value, FeatureBlock& out) {
  std::size_t hot = f.vocabulary.size() - 1;  // "missing"
  if (value) {
    const auto it = std::find(f.vocabulary.begin(), f.vocabulary.end() - 1, *value);
    if (it != f.vocabulary.end() - 1) {
      hot = static_cast<std::size_t>(it - f.vocabulary.begin());
    } else {
      spdlog::warn("{}: category '{}' unseen at fit time, encoded as missing", f.name, *value);
    }
  }
  for (std::size_t i = 0; i < f.vocabulary.size(); ++i) {
    out.names.push_back(fmt::format("{}={}", f.name, f.vocabulary[i]));
    out.values.push_back(i == hot ? 1.0 : 0.0);
  }
}

void push_bool(std::string_view name, const std::optional<bool>& value, FeatureBlock& out) {
  const std::array<double, 3> slots = {value && !*value ? 1.0 : 0.0, value && *value ? 1.0 : 0.0,
                                       value ? 0.0 : 1.0};
  std::vector<std::string> names;
  append_bool_names(name, names);
  for (std::size_t i = 0; i < 3; ++i) {
    out.names.push_back(std::move(names[i]));
    out.values.push_back(slots[i]);
  }
}

void push_continuous(const ContinuousField& f, const std::optional<double>& value, Normalization norm,
                     FeatureBlock& out) {
  out.names.push_back(f.name);
  out.values.push_back(value ? normalize_value(*value, f.stats, norm) : 0.0);
  out.names.push_back(fmt::format("{}:missing", f.name));
  out.values.push_back(value ? 0.0 : 1.0);
}

}  // namespace

FeatureBlock encode_structured(const ClinicalRecord& record, const FeatureSchema& schema) {
  if (schema.kind != SourceKind::Clinical)
    throw Error(ErrorCode::SchemaMismatch, "clinical record encoded against a biomarker schema",
                Location{"", 0, record.id});
  const auto* size = find_categorical(schema, kDiscSize);
  const auto* color = find_categorical(schema, kRimColor);
  const auto* cdr = find_continuous(schema, kCdr);
  if (size == nullptr || color == nullptr || cdr == nullptr)
    throw Error(ErrorCode::SchemaMismatch, "schema lacks a required fundus field");

  FeatureBlock out;
  out.modality = Modality::Struct;
  const auto& f = record.fundus;
  push_onehot(*size, f.optic_disc_size, out);
  push_continuous(*cdr, f.cup_to_disc_ratio, schema.normalization, out);
  if (schema.cdr_threshold) {
    std::optional<bool> above;
    if (f.cup_to_disc_ratio) above = *f.cup_to_disc_ratio > *schema.cdr_threshold;
    push_bool(cdr_flag_name(*schema.cdr_threshold), above, out);
  }
  for (const auto& bf : fundus_bool_fields()) push_bool(bf.name, f.*(bf.member), out);
  push_onehot(*color, f.rim_color, out);
  return out;
}

FeatureBlock encode_tristate(std::span<const Measurement> measurements, const FeatureSchema& schema) {
  if (schema.kind != SourceKind::Biomarker)
    throw Error(ErrorCode::SchemaMismatch, "biomarker measurements encoded against a clinical schema");
  FeatureBlock out;
  out.modality = Modality::Struct;
  out.names = schema.struct_names();
  out.values.assign(out.names.size(), 0.0);
  std::size_t matched = 0;
  for (std::size_t b = 0; b < schema.biomarkers.size(); ++b) {
    const auto& field = schema.biomarkers[b];
    double* slot = out.values.data() + 6 * b;
    const auto it = std::find_if(measurements.begin(), measurements.end(),
                                 [&](const Measurement& m) { return m.biomarker == field.name; });
    if (it == measurements.end()) {
      slot[5] = 1.0;  // absent
      continue;
    }
    ++matched;
    slot[0] = normalize_value(it->od, field.od, schema.normalization);
    slot[1] = normalize_value(it->os, field.os, schema.normalization);
    if (it->ie) {
      slot[2] = normalize_value(*it->ie, field.ie, schema.normalization);
    } else {
      slot[3] = 1.0;
    }
    // One code per biomarker: the worse eye decides.
    slot[4] = std::min(status_code(it->status_od), status_code(it->status_os));
  }
  if (matched < measurements.size())
    spdlog::warn("{} biomarker(s) unseen at fit time were ignored", measurements.size() - matched);
  return out;
}

FeatureBlock encode_human(const std::optional<HumanJudgment>& judgment, const FeatureSchema& schema) {
  FeatureBlock out;
  out.modality = Modality::Human;
  std::optional<std::string> risk;
  std::optional<double> confidence;
  if (judgment) {
    risk = judgment->risk_assessment;
    confidence = judgment->confidence_level;
  }
  push_onehot(schema.risk, risk, out);
  out.names.emplace_back(kConfidence);
  out.values.push_back(confidence.value_or(0.0));
  out.names.push_back(fmt::format("{}:missing", kConfidence));
  out.values.push_back(confidence ? 0.0 : 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Fusion

namespace {

constexpr std::array<Modality, 4> kFusionOrder = {Modality::Text, Modality::Struct, Modality::Human,
                                                  Modality::Image};

bool wanted(Modality m, const ModalityMask& mask) {
  switch (m) {
    case Modality::Text: return mask.words;
    case Modality::Struct: return mask.factor;
    case Modality::Human: return mask.human();
    case Modality::Image: return mask.image;
  }
  return false;
}

/// Index of each modality's block, or -1. Checks duplicates and presence.
std::array<int, 4> index_blocks(std::span<const FeatureBlock> blocks, const ModalityMask& mask) {
  if (!mask.any()) throw Error(ErrorCode::EmptyFusion, "modality mask selects nothing");
  std::array<int, 4> at = {-1, -1, -1, -1};
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const auto m = static_cast<std::size_t>(blocks[i].modality);
    if (at[m] >= 0)
      throw Error(ErrorCode::DuplicateModality,
                  fmt::format("two {} blocks passed to fuse", to_string(blocks[i].modality)));
    if (blocks[i].names.size() != blocks[i].values.size())
      throw Error(ErrorCode::DimensionMismatch, "block names and values differ in length");
    at[m] = static_cast<int>(i);
  }
  for (auto m : kFusionOrder)
    if (wanted(m, mask) && at[static_cast<std::size_t>(m)] < 0)
      throw Error(ErrorCode::MissingModality, fmt::format("mask selects {} but no block was given", to_string(m)));
  return at;
}

template <typename Fn>
void for_each_selected(std::span<const FeatureBlock> blocks, const ModalityMask& mask, Fn&& fn) {
  const auto at = index_blocks(blocks, mask);
  for (auto m : kFusionOrder) {
    if (!wanted(m, mask)) continue;
    const auto& block = blocks[static_cast<std::size_t>(at[static_cast<std::size_t>(m)])];
    for (std::size_t i = 0; i < block.values.size(); ++i) {
      if (m == Modality::Human) {
        const bool sure = is_confidence_slot(block.names[i]);
        if (sure ? !mask.sure : !mask.risk) continue;
      }
      fn(m, block, i);
    }
  }
}

}  // namespace

FusedVector fuse(std::span<const FeatureBlock> blocks, const ModalityMask& mask, std::string id) {
  FusedVector out;
  out.id = std::move(id);
  for_each_selected(blocks, mask, [&](Modality m, const FeatureBlock& block, std::size_t i) {
    if (out.layout.empty() || out.layout.back().modality != m)
      out.layout.push_back({m, out.values.size(), 0});
    out.values.push_back(block.values[i]);
    ++out.layout.back().width;
  });
  if (out.values.empty()) throw Error(ErrorCode::EmptyFusion, "selected blocks are all empty");
  return out;
}

std::vector<std::string> fused_names(std::span<const FeatureBlock> blocks, const ModalityMask& mask) {
  std::vector<std::string> out;
  for_each_selected(blocks, mask,
                    [&](Modality, const FeatureBlock& block, std::size_t i) { out.push_back(block.names[i]); });
  return out;
}

}  // namespace gbfuse
