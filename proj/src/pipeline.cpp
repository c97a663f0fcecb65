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

#include "gbfuse/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "gbfuse/error.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse {

const std::string& Dataset::id(std::size_t i) const {
  return kind == SourceKind::Clinical ? clinical[i].id : oct[i].id;
}

std::optional<Label> Dataset::label(std::size_t i) const {
  return kind == SourceKind::Clinical ? clinical[i].label : oct[i].label;
}

const std::string& Dataset::image_key(std::size_t i) const {
  const auto& ref = kind == SourceKind::Clinical ? clinical[i].image_ref : oct[i].image_ref;
  return ref ? *ref : id(i);
}

std::optional<HumanJudgment> Dataset::judgment(std::size_t i) const {
  return kind == SourceKind::Clinical ? clinical[i].judgment : oct[i].judgment;
}

std::string Dataset::narrative(std::size_t i) const {
  return kind == SourceKind::Clinical ? clinical[i].narrative() : std::string{};
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out(size(), -1);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (const auto l = label(i)) out[i] = l->class_index;
  return out;
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.kind = kind;
  for (const auto r : rows) {
    if (kind == SourceKind::Clinical) {
      out.clinical.push_back(clinical.at(r));
    } else {
      out.oct.push_back(oct.at(r));
    }
  }
  return out;
}

Dataset load_dataset(const std::string& path, SourceKind kind, const NormativeCatalog& catalog,
                     const LabelPolicy& policy) {
  const auto text = util::read_file(path);
  Dataset d;
  d.kind = kind;
  if (kind == SourceKind::Clinical) {
    d.clinical = parse_clinical_file(text, path).records;
    resolve_labels(d.clinical, policy);
  } else {
    d.oct = parse_biomarker_table(text, catalog, path).records;
    resolve_labels(d.oct, policy);
  }
  return d;
}

FeatureSchema fit_schema(const Dataset& data, ClassMode mode, const FitOptions& options) {
  if (data.kind == SourceKind::Clinical) return fit_schema(std::span<const ClinicalRecord>(data.clinical), mode, options);
  return fit_schema(std::span<const OctBiomarkerRecord>(data.oct), mode, options);
}

// ---------------------------------------------------------------------------

std::string embedding_slot_name(Modality m, std::size_t k) { return fmt::format("{}:{}", to_string(m), k); }

std::string format_layout(std::span<const Segment> layout) {
  std::vector<std::string> parts;
  for (const auto& s : layout) parts.push_back(fmt::format("{}:{}:{}", to_string(s.modality), s.offset, s.width));
  return parts.empty() ? std::string("-") : fmt::format("{}", fmt::join(parts, ","));
}

namespace {

Modality parse_modality(std::string_view s) {
  if (s == "text") return Modality::Text;
  if (s == "struct") return Modality::Struct;
  if (s == "human") return Modality::Human;
  if (s == "img") return Modality::Image;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown modality '{}'", s));
}

FeatureBlock embedding_block(Modality m, std::vector<double> values) {
  FeatureBlock b;
  b.modality = m;
  b.names.reserve(values.size());
  for (std::size_t k = 0; k < values.size(); ++k) b.names.push_back(embedding_slot_name(m, k));
  b.values = std::move(values);
  return b;
}

[[noreturn]] void missing_ids(std::string_view what, const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 10;
  std::vector<std::string> shown(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(ids.size(), kShown)));
  throw Error(ErrorCode::MissingEmbedding,
              fmt::format("{} {} embedding(s) missing: {}{}", ids.size(), what, fmt::join(shown, ", "),
                          ids.size() > kShown ? ", ..." : ""));
}

}  // namespace

std::vector<Segment> parse_layout(std::string_view text) {
  std::vector<Segment> out;
  if (util::trim(text).empty() || util::trim(text) == "-") return out;
  for (const auto& part : util::split(util::trim(text), ',')) {
    const auto f = util::split(part, ':');
    const auto bad = [&] { return Error(ErrorCode::InvalidArgument, fmt::format("bad layout segment '{}'", part)); };
    if (f.size() != 3) throw bad();
    const auto off = util::parse_int(f[1]).value_or(-1);
    const auto width = util::parse_int(f[2]).value_or(-1);
    if (off < 0 || width < 0) throw bad();
    out.push_back({parse_modality(f[0]), static_cast<std::size_t>(off), static_cast<std::size_t>(width)});
  }
  return out;
}

EncodedMatrix encode_dataset(const Dataset& data, const FeatureSchema& schema, const ModalityMask& mask,
                             const EmbeddingInputs& embeddings) {
  if (!mask.any()) throw Error(ErrorCode::EmptyFusion, "modality mask selects nothing");
  if (data.size() == 0) throw Error(ErrorCode::EmptyDataset, "no records to encode");
  if (data.kind != schema.kind)
    throw Error(ErrorCode::SchemaMismatch,
                fmt::format("{} records against a {} schema", to_string(data.kind), to_string(schema.kind)));
  if (mask.words && embeddings.text == nullptr && !embeddings.stand_in_text)
    throw Error(ErrorCode::MissingModality, "mask selects words but no text embeddings were given");
  if (mask.image && embeddings.image == nullptr)
    throw Error(ErrorCode::MissingModality, "mask selects image but no image embeddings were given");

  if (mask.words && embeddings.text != nullptr) {
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!embeddings.text->contains(data.id(i))) missing.push_back(data.id(i));
    if (!missing.empty()) missing_ids("text", missing);
  }
  if (mask.image) {
    std::vector<std::string> missing;
    for (std::size_t i = 0; i < data.size(); ++i)
      if (!embeddings.image->contains(data.image_key(i))) missing.push_back(data.image_key(i));
    if (!missing.empty()) missing_ids("image", missing);
  }

  EncodedMatrix out;
  out.mask = mask;
  out.fingerprint = schema.fingerprint();
  out.ids.reserve(data.size());
  out.labels = data.labels();

  std::vector<FusedVector> rows(data.size());
  std::vector<std::exception_ptr> failures(data.size());
  const auto n = static_cast<std::int64_t>(data.size());
#pragma omp parallel for schedule(static) if (n > 512)
  for (std::int64_t ii = 0; ii < n; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    try {
      std::vector<FeatureBlock> blocks;
      if (mask.words) {
        blocks.push_back(embedding_block(
            Modality::Text, embeddings.text != nullptr
                                ? embeddings.text->at(data.id(i))
                                : stand_in_text_encoder(data.narrative(i), embeddings.text_dim, embeddings.text_seed)));
      }
      if (mask.factor) {
        blocks.push_back(data.kind == SourceKind::Clinical ? encode_structured(data.clinical[i], schema)
                                                           : encode_tristate(data.oct[i].measurements, schema));
      }
      if (mask.human()) blocks.push_back(encode_human(data.judgment(i), schema));
      if (mask.image) blocks.push_back(embedding_block(Modality::Image, embeddings.image->at(data.image_key(i))));
      rows[i] = fuse(blocks, mask, data.id(i));
      if (i == 0) out.names = fused_names(blocks, mask);
    } catch (...) {
      failures[i] = std::current_exception();
    }
  }
  for (const auto& f : failures)
    if (f) std::rethrow_exception(f);

  out.x.rows = rows.size();
  out.x.cols = rows[0].values.size();
  out.layout = rows[0].layout;
  out.x.values.reserve(out.x.rows * out.x.cols);
  for (auto& r : rows) {
    if (r.values.size() != out.x.cols)
      throw Error(ErrorCode::DimensionMismatch, fmt::format("record {} encodes to {} values, expected {}", r.id,
                                                            r.values.size(), out.x.cols));
    out.x.values.insert(out.x.values.end(), r.values.begin(), r.values.end());
    out.ids.push_back(std::move(r.id));
  }
  return out;
}

EncodedMatrix EncodedMatrix::select(std::span<const std::size_t> rows) const {
  EncodedMatrix out;
  out.names = names;
  out.layout = layout;
  out.fingerprint = fingerprint;
  out.mask = mask;
  out.x.cols = x.cols;
  out.x.rows = rows.size();
  out.x.values.reserve(rows.size() * x.cols);
  for (const auto r : rows) {
    out.ids.push_back(ids.at(r));
    out.labels.push_back(labels.at(r));
    const auto row = x.row(r);
    out.x.values.insert(out.x.values.end(), row.begin(), row.end());
  }
  return out;
}

LabeledView labeled_rows(const EncodedMatrix& m) {
  LabeledView v;
  v.x.cols = m.x.cols;
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (m.labels[r] < 0) continue;
    v.rows.push_back(r);
    v.labels.push_back(m.labels[r]);
    const auto row = m.x.row(r);
    v.x.values.insert(v.x.values.end(), row.begin(), row.end());
  }
  v.x.rows = v.rows.size();
  return v;
}

void stamp_model(BoostedModel& model, const EncodedMatrix& m, const EmbeddingInputs& embeddings) {
  model.feature_names = m.names;
  model.schema_fingerprint = m.fingerprint;
  model.metadata["mask"] = m.mask.str();
  model.metadata["layout"] = format_layout(m.layout);
  if (m.mask.words) {
    model.metadata["text_source"] =
        embeddings.text != nullptr
            ? fmt::format("table dim={}", embeddings.text->dim())
            : fmt::format("stand-in dim={} seed={}", embeddings.text_dim, embeddings.text_seed);
  }
}

// ---------------------------------------------------------------------------
// GLAMAT 1

std::string serialize_matrix(const EncodedMatrix& m) {
  std::string out;
  out += fmt::format("GLAMAT 1 {} {}\n", m.rows(), m.dim());
  out += fmt::format("fingerprint {}\n", m.fingerprint.empty() ? "-" : m.fingerprint);
  out += fmt::format("mask {}\n", m.mask.str());
  out += fmt::format("layout {}\n", format_layout(m.layout));
  out += "names";
  for (const auto& n : m.names) out += "\t" + n;
  out += "\n";
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out += m.ids[r];
    out += '\t';
    out += m.labels[r] < 0 ? std::string("-") : std::to_string(m.labels[r]);
    out += '\t';
    const auto row = m.x.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += ' ';
      out += util::format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

EncodedMatrix parse_matrix(std::string_view text, const std::string& file) {
  std::vector<std::string_view> lines;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.push_back(line);
    pos = nl + 1;
  }
  const auto bad = [&](std::size_t line, const std::string& what) -> Error {
    return Error(ErrorCode::BadHeader, what, Location{file, line, ""});
  };
  if (lines.size() < 5) throw bad(lines.size(), "truncated matrix header");
  const auto head = util::split_ws(lines[0]);
  if (head.size() != 4 || head[0] != "GLAMAT") throw bad(1, "not a GLAMAT file");
  if (head[1] != "1") throw Error(ErrorCode::VersionMismatch, fmt::format("matrix version {} not supported", head[1]),
                                  Location{file, 1, ""});
  const auto rows = util::parse_int(head[2]);
  const auto dim = util::parse_int(head[3]);
  if (!rows || !dim || *rows < 0 || *dim < 0) throw bad(1, "bad row or column count");

  const auto field = [&](std::size_t i, std::string_view key) {
    const auto l = lines[i];
    if (!l.starts_with(key) || l.size() < key.size() + 1) throw bad(i + 1, fmt::format("expected '{}'", key));
    return l.substr(key.size() + 1);
  };
  EncodedMatrix m;
  const auto fp = std::string(util::trim(field(1, "fingerprint")));
  m.fingerprint = fp == "-" ? std::string{} : fp;
  m.mask = ModalityMask::parse(field(2, "mask"));
  m.layout = parse_layout(field(3, "layout"));
  if (!lines[4].starts_with("names")) throw bad(5, "expected 'names'");
  const auto names = util::split(lines[4], '\t');
  m.names.assign(names.begin() + 1, names.end());
  if (m.names.size() != static_cast<std::size_t>(*dim))
    throw Error(ErrorCode::DimensionMismatch, fmt::format("{} names for dimension {}", m.names.size(), *dim),
                Location{file, 5, "names"});

  m.x.cols = static_cast<std::size_t>(*dim);
  std::size_t count = 0;
  for (std::size_t i = 5; i < lines.size(); ++i) {
    if (util::trim(lines[i]).empty()) continue;
    const auto parts = util::split(lines[i], '\t');
    if (parts.size() != 3) throw Error(ErrorCode::MalformedTable, "row needs id, label and values", Location{file, i + 1, ""});
    int label = -1;
    if (parts[1] != "-") {
      const auto l = util::parse_int(parts[1]);
      if (!l || *l < 0) throw Error(ErrorCode::LabelOutOfRange, fmt::format("bad label '{}'", parts[1]), Location{file, i + 1, "label"});
      label = static_cast<int>(*l);
    }
    const auto values = util::split_ws(parts[2]);
    if (values.size() != m.x.cols)
      throw Error(ErrorCode::DimensionMismatch, fmt::format("row has {} values, expected {}", values.size(), m.x.cols),
                  Location{file, i + 1, parts[0]});
    for (const auto& v : values) {
      const auto d = util::parse_double(v);
      if (!d) throw Error(ErrorCode::MalformedTable, fmt::format("bad number '{}'", v), Location{file, i + 1, parts[0]});
      m.x.values.push_back(*d);
    }
    m.ids.push_back(parts[0]);
    m.labels.push_back(label);
    ++count;
  }
  if (count != static_cast<std::size_t>(*rows))
    throw bad(1, fmt::format("header promises {} rows, file has {}", *rows, count));
  m.x.rows = count;
  return m;
}

void write_matrix(const EncodedMatrix& m, const std::string& path) { util::write_file(path, serialize_matrix(m)); }

EncodedMatrix read_matrix(const std::string& path) { return parse_matrix(util::read_file(path), path); }

}  // namespace gbfuse
