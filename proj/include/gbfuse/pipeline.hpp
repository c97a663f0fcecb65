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

// Glue between records, embeddings and the booster: a dataset of either
// source kind, its encoding into one dense matrix under a modality mask, and
// the "GLAMAT 1" text form of that matrix.

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gbfuse/boosting.hpp"
#include "gbfuse/embedding.hpp"
#include "gbfuse/features.hpp"
#include "gbfuse/records.hpp"

namespace gbfuse {

struct Dataset {
  SourceKind kind = SourceKind::Clinical;
  std::vector<ClinicalRecord> clinical;
  std::vector<OctBiomarkerRecord> oct;

  std::size_t size() const { return kind == SourceKind::Clinical ? clinical.size() : oct.size(); }
  const std::string& id(std::size_t i) const;
  std::optional<Label> label(std::size_t i) const;
  /// Key into the image table: image_ref when present, else the id.
  const std::string& image_key(std::size_t i) const;
  std::optional<HumanJudgment> judgment(std::size_t i) const;
  /// Text fed to the stand-in text encoder (empty for biomarker records).
  std::string narrative(std::size_t i) const;

  /// Class index per record, -1 when unlabeled.
  std::vector<int> labels() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

/// Parses a clinical record file or (kind = Biomarker) a biomarker table.
/// Labels missing from the file are derived from the judgment via `policy`.
Dataset load_dataset(const std::string& path, SourceKind kind, const NormativeCatalog& catalog = default_catalog(),
                     const LabelPolicy& policy = default_label_policy());

FeatureSchema fit_schema(const Dataset& data, ClassMode mode, const FitOptions& options = {});

/// Where the embedding blocks come from. Text vectors are looked up by record
/// id, image vectors by image key. Without a text table, `stand_in_text`
/// encodes each record's narrative on the fly.
struct EmbeddingInputs {
  const EmbeddingTable* text = nullptr;
  const EmbeddingTable* image = nullptr;
  bool stand_in_text = false;
  std::size_t text_dim = kDefaultTextDim;
  std::uint64_t text_seed = kDefaultEncoderSeed;
};

struct EncodedMatrix {
  std::vector<std::string> ids;
  std::vector<int> labels;  // -1 = unlabeled
  DenseMatrix x;
  std::vector<std::string> names;
  std::vector<Segment> layout;
  std::string fingerprint;
  ModalityMask mask;

  std::size_t rows() const { return x.rows; }
  std::size_t dim() const { return x.cols; }
  EncodedMatrix select(std::span<const std::size_t> rows) const;
};

/// Encodes every record. Throws MissingModality when a masked-in embedding
/// block has no source and MissingEmbedding listing the ids without vectors.
EncodedMatrix encode_dataset(const Dataset& data, const FeatureSchema& schema, const ModalityMask& mask,
                             const EmbeddingInputs& embeddings);

/// Embedding slot names: "text:<k>" and "img:<k>".
std::string embedding_slot_name(Modality m, std::size_t k);
/// "text:0:64,struct:64:30"
std::string format_layout(std::span<const Segment> layout);
std::vector<Segment> parse_layout(std::string_view text);

/// GLAMAT 1:
///   GLAMAT 1 <rows> <dim>
///   fingerprint <hex or ->
///   mask <mask>
///   layout <layout>
///   names\t<name>\t...
///   <id>\t<label or ->\t<v1> ... <vdim>
std::string serialize_matrix(const EncodedMatrix& m);
EncodedMatrix parse_matrix(std::string_view text, const std::string& file = {});
void write_matrix(const EncodedMatrix& m, const std::string& path);
EncodedMatrix read_matrix(const std::string& path);

/// Labeled rows only, as training inputs.
struct LabeledView {
  DenseMatrix x;
  std::vector<int> labels;
  std::vector<std::size_t> rows;  // row indices into the source matrix
};
LabeledView labeled_rows(const EncodedMatrix& m);

/// Pipeline facts stored in model metadata so predict can rebuild inputs.
void stamp_model(BoostedModel& model, const EncodedMatrix& m, const EmbeddingInputs& embeddings);

}  // namespace gbfuse
