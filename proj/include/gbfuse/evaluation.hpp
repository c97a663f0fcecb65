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

// Train/validation splits, ACC/PRE/F1, the modality ablation grid, and the
// ranked importance report.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "gbfuse/boosting.hpp"
#include "gbfuse/features.hpp"
#include "gbfuse/pipeline.hpp"

namespace gbfuse {

struct SplitOptions {
  double val_fraction = 0.2;
  std::uint64_t seed = 42;
  bool stratify = true;
};

/// Row indices, each list ascending.
struct TrainValSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
};

/// Deterministic for fixed (labels, options). Stratified splits shuffle each
/// class separately and send round(fraction * class size) rows to validation.
/// Throws InvalidArgument (fraction outside (0,1), unlabeled rows) and
/// TooFewRecords (a side would be empty).
TrainValSplit split_train_val(std::span<const int> labels, const SplitOptions& options = {});

struct ConfusionCounts {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;  // binary
  /// matrix[actual][predicted]; always filled.
  std::vector<std::vector<std::size_t>> matrix;

  std::size_t total() const;
};

enum class Averaging { Binary, Macro };

struct MetricsReport {
  double acc = 0.0;
  double pre = 0.0;
  double rec = 0.0;
  double f1 = 0.0;
  double threshold = 0.5;
  std::size_t n = 0;
  int n_classes = 2;
  Averaging averaging = Averaging::Binary;
  ConfusionCounts counts;
  std::vector<std::string> warnings;
};

ConfusionCounts confusion_from_predictions(std::span<const int> predicted, std::span<const int> actual,
                                           int n_classes);
/// Metrics from counts. Binary averaging scores the positive class; macro
/// averages per-class precision/recall/F1. A zero denominator gives 0 and a
/// warning.
MetricsReport metrics_from_counts(const ConfusionCounts& counts, int n_classes, Averaging averaging);

/// Binary: predicted positive iff p >= threshold. Throws LengthMismatch,
/// EmptyInput.
MetricsReport compute_metrics(std::span<const double> probabilities, std::span<const int> labels,
                              double threshold = 0.5, Averaging averaging = Averaging::Binary);
/// Multiclass: argmax (lowest class on ties), macro averaged by default.
MetricsReport compute_metrics(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels,
                              Averaging averaging = Averaging::Macro);

/// Scores a model on labeled rows of `m`.
MetricsReport evaluate_model(const BoostedModel& model, const EncodedMatrix& m, double threshold = 0.5,
                             bool parallel = true);

// ---------------------------------------------------------------------------
// Ablation

/// True when the mask carries interpretable factors (Factor or Risk).
bool cause_flag(const ModalityMask& mask);

struct AblationRow {
  ModalityMask mask;
  MetricsReport metrics;
  bool cause = false;
  bool failed = false;
  bool placeholder = false;  // the all-off row of a preset, never trained
  std::string error;
  std::size_t dim = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> val_ids;
};

struct AblationGrid {
  std::vector<AblationRow> rows;
  bool any_failed() const;
};

struct AblationOptions {
  TrainConfig config;
  ExecutionOptions exec;
  ClassMode mode = ClassMode::Binary;
  FitOptions fit;
  double threshold = 0.5;
};

/// Mask sets by name:
///   public   the 24 rows of the public-dataset modality table
///   factor   none/sure/risk/risk+sure, then the same with factor (8 rows)
///   basic    factor, words, image, all
/// Rows that are all off become placeholders.
std::vector<ModalityMask> ablation_preset(std::string_view name);

/// One schema fit (on the train rows) and one train+evaluate per mask, all on
/// the same split. Training or encoding errors mark the row failed. Throws
/// EmptyFusion for an explicit empty mask (outside a preset) and DuplicateMask.
AblationGrid run_ablation(const Dataset& data, std::span<const ModalityMask> masks, const EmbeddingInputs& embeddings,
                          const TrainValSplit& split, const AblationOptions& options,
                          std::span<const std::size_t> placeholder_rows = {});

/// Aligned table: Image Words Factor Risk Sure | ACC PRE F1 | Cause, with
/// check marks and percentages.
std::string format_ablation_table(const AblationGrid& grid);
/// Tab-separated, one header line.
std::string format_ablation_tsv(const AblationGrid& grid);

// ---------------------------------------------------------------------------
// Importance report

struct ImportanceRow {
  std::string name;   // source field, or "<block> (embedding)"
  double importance = 0.0;
  std::string value;  // representative value / range
};

struct ImportanceReport {
  ImportanceKind kind = ImportanceKind::Gain;
  std::vector<ImportanceRow> rows;
};

/// Slots are grouped back to their source field; embedding dimensions are
/// grouped per block. Rows are sorted by importance (then name) and cut to
/// top_k (0 = all).
ImportanceReport importance_report(const BoostedModel& model, const FeatureSchema& schema, std::size_t top_k,
                                   ImportanceKind kind = ImportanceKind::Gain);

/// "name | 0.5180 | value" lines.
std::string format_importance(const ImportanceReport& report);
std::string format_importance_tsv(const ImportanceReport& report);

}  // namespace gbfuse
