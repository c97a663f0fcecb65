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

#include "cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <fmt/ostream.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include "gbfuse/boosting.hpp"
#include "gbfuse/embedding.hpp"
#include "gbfuse/evaluation.hpp"
#include "gbfuse/features.hpp"
#include "gbfuse/pipeline.hpp"
#include "gbfuse/records.hpp"
#include "gbfuse/synth.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse::cli {

int exit_code(ErrorCode code) { return kExitErrorBase + static_cast<int>(code); }

namespace {

// ---------------------------------------------------------------------------
// Option groups shared by several subcommands

struct DataArgs {
  std::string records;
  std::string format = "clinical";
  std::string catalog;
  std::string label_threshold = "high risk";

  SourceKind kind() const {
    const auto f = util::to_lower(format);
    if (f == "clinical") return SourceKind::Clinical;
    if (f == "oct" || f == "biomarker") return SourceKind::Biomarker;
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown --format '{}' (clinical|oct)", format));
  }
  NormativeCatalog load_catalog() const {
    if (catalog.empty()) return default_catalog();
    return parse_catalog(util::read_file(catalog), catalog);
  }
  Dataset load() const {
    return load_dataset(records, kind(), load_catalog(), threshold_label_policy(label_threshold));
  }
};

void add_data_options(CLI::App* app, DataArgs& a, bool records_required = true) {
  auto* r = app->add_option("--records", a.records, "Clinical record file or biomarker table");
  if (records_required) {
    r->required();
  } else {
    r->description("Clinical record file or biomarker table (default: none)");
  }
  app->add_option("--format", a.format, "Record format: clinical | oct")->capture_default_str();
  app->add_option("--catalog", a.catalog, "Normative catalog file (default: bundled)");
  app->add_option("--label-threshold", a.label_threshold,
                  "Risk category from which derived labels are positive")
      ->capture_default_str();
}

struct EmbeddingArgs {
  std::string text_emb;
  std::string image_emb;
  bool stand_in_text = false;
  std::size_t text_dim = kDefaultTextDim;
  std::uint64_t text_seed = kDefaultEncoderSeed;

  std::optional<EmbeddingTable> text;
  std::optional<EmbeddingTable> image;

  EmbeddingInputs load() {
    if (!text_emb.empty()) text = read_embedding_table(text_emb);
    if (!image_emb.empty()) image = read_embedding_table(image_emb);
    EmbeddingInputs in;
    in.text = text ? &*text : nullptr;
    in.image = image ? &*image : nullptr;
    in.stand_in_text = stand_in_text;
    in.text_dim = text_dim;
    in.text_seed = text_seed;
    return in;
  }
};

void add_embedding_options(CLI::App* app, EmbeddingArgs& a) {
  app->add_option("--text-emb", a.text_emb, "GLAEMB table of text embeddings, keyed by record id (default: none)");
  app->add_option("--image-emb", a.image_emb, "GLAEMB table of image embeddings, keyed by image_ref (default: none)");
  app->add_flag("--stand-in-text", a.stand_in_text, "Encode narratives with the built-in stand-in text encoder");
  app->add_option("--text-dim", a.text_dim, "Stand-in text encoder dimension")->capture_default_str();
  app->add_option("--text-seed", a.text_seed, "Stand-in text encoder seed")->capture_default_str();
}

struct TrainArgs {
  TrainConfig config;
  std::string base_score = "auto";

  TrainConfig resolve(int n_classes) const {
    TrainConfig c = config;
    c.n_classes = n_classes;
    if (base_score != "auto") {
      const auto v = util::parse_double(base_score);
      if (!v) throw Error(ErrorCode::InvalidArgument, fmt::format("--base_score '{}' is not a number", base_score));
      c.base_score = *v;
    }
    c.validate();
    return c;
  }
};

void add_train_options(CLI::App* app, TrainArgs& a) {
  auto& c = a.config;
  app->add_option("--learning_rate", c.learning_rate, "Shrinkage per tree")->capture_default_str();
  app->add_option("--max_depth", c.max_depth, "Maximum tree depth")->capture_default_str();
  app->add_option("--n_estimators", c.n_estimators, "Boosting rounds")->capture_default_str();
  app->add_option("--subsample", c.subsample, "Row fraction per round, in (0,1]")->capture_default_str();
  app->add_option("--colsample", c.colsample, "Column fraction per tree, in (0,1]")->capture_default_str();
  app->add_option("--n_bins", c.n_bins, "Histogram bins per feature")->capture_default_str();
  app->add_option("--lambda_l2", c.lambda_l2, "L2 penalty on leaf weights")->capture_default_str();
  app->add_option("--gamma_split", c.gamma_split, "Minimum loss reduction per split")->capture_default_str();
  app->add_option("--min_child_weight", c.min_child_weight, "Minimum hessian sum per child")
      ->capture_default_str();
  app->add_option("--seed", c.seed, "Sampling seed")->capture_default_str();
  app->add_option("--base_score", a.base_score, "Initial margin, or 'auto' for the training log-odds")
      ->capture_default_str();
}

struct SplitArgs {
  double val_fraction = 0.2;
  std::uint64_t split_seed = 42;
  bool no_stratify = false;

  SplitOptions options() const { return {val_fraction, split_seed, !no_stratify}; }
};

void add_split_options(CLI::App* app, SplitArgs& a, std::string_view fraction_help) {
  app->add_option("--val-fraction", a.val_fraction, std::string(fraction_help))->capture_default_str();
  app->add_option("--split-seed", a.split_seed, "Seed of the train/validation split")->capture_default_str();
  app->add_flag("--no-stratify", a.no_stratify, "Split without stratifying by class");
}

ClassMode parse_mode(std::string_view s) {
  const auto m = util::to_lower(s);
  if (m == "binary") return ClassMode::Binary;
  if (m == "tristate") return ClassMode::Tristate;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown --mode '{}' (binary|tristate)", s));
}

FingerprintCheck parse_check(std::string_view s) {
  const auto m = util::to_lower(s);
  if (m == "error") return FingerprintCheck::Error;
  if (m == "warn") return FingerprintCheck::Warn;
  if (m == "skip") return FingerprintCheck::Skip;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown --fingerprint-check '{}' (error|warn|skip)", s));
}

/// Labeled row indices, and a split of them (indices into the dataset).
struct Partition {
  std::vector<std::size_t> train, val;
};

Partition partition(const Dataset& data, const SplitArgs& split) {
  const auto labels = data.labels();
  std::vector<std::size_t> labeled;
  std::vector<int> y;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= 0) {
      labeled.push_back(i);
      y.push_back(labels[i]);
    }
  if (labeled.empty()) throw Error(ErrorCode::EmptyDataset, "no labeled records");
  Partition p;
  if (split.val_fraction <= 0.0) {
    p.train = labeled;
    return p;
  }
  const auto s = split_train_val(y, split.options());
  for (auto i : s.train) p.train.push_back(labeled[i]);
  for (auto i : s.val) p.val.push_back(labeled[i]);
  return p;
}

void print_metrics(std::ostream& out, std::string_view name, const MetricsReport& m) {
  fmt::print(out, "{}\tn={}\tACC={:.4f}\tPRE={:.4f}\tREC={:.4f}\tF1={:.4f}\n", name, m.n, m.acc, m.pre, m.rec, m.f1);
}

/// Every modality whose inputs are at hand.
ModalityMask available_mask(SourceKind kind, const EmbeddingInputs& in) {
  ModalityMask m = ModalityMask::all();
  m.image = in.image != nullptr;
  m.words = kind == SourceKind::Clinical && (in.text != nullptr || in.stand_in_text);
  return m;
}

std::string default_schema_path(const std::string& model) { return model + ".schema"; }

FeatureSchema read_schema(const std::string& path) { return parse_schema(util::read_file(path), path); }

// ---------------------------------------------------------------------------
// Subcommands

struct IngestArgs {
  DataArgs data;
};

int cmd_ingest(const IngestArgs& a, std::ostream& out, std::ostream& err) {
  const auto text = util::read_file(a.data.records);
  const auto kind = a.data.kind();
  std::vector<Error> errors;
  Dataset d;
  d.kind = kind;
  if (kind == SourceKind::Clinical) {
    auto r = parse_clinical_file(text, a.data.records, true);
    d.clinical = std::move(r.records);
    errors = std::move(r.errors);
  } else {
    auto r = parse_biomarker_table(text, a.data.load_catalog(), a.data.records, true);
    d.oct = std::move(r.records);
    errors = std::move(r.errors);
  }
  for (const auto& e : errors) fmt::print(err, "error: {}\n", e.what());

  const auto policy = threshold_label_policy(a.data.label_threshold);
  std::size_t derived = 0;
  if (kind == SourceKind::Clinical) {
    for (const auto& r : d.clinical)
      if (!r.label && r.judgment && r.judgment->risk_assessment) ++derived;
    try {
      resolve_labels(d.clinical, policy);
    } catch (const Error& e) {
      errors.push_back(e);
      fmt::print(err, "error: {}\n", e.what());
    }
  } else {
    for (const auto& r : d.oct)
      if (!r.label && r.judgment && r.judgment->risk_assessment) ++derived;
    try {
      resolve_labels(d.oct, policy);
    } catch (const Error& e) {
      errors.push_back(e);
      fmt::print(err, "error: {}\n", e.what());
    }
  }

  fmt::print(out, "records\t{}\t{}\n", d.size(), to_string(kind));
  std::map<int, std::size_t> classes;
  for (auto l : d.labels()) ++classes[l];
  for (const auto& [cls, n] : classes)
    fmt::print(out, "class\t{}\t{}\n", cls < 0 ? std::string("unlabeled") : std::to_string(cls), n);
  fmt::print(out, "derived_labels\t{}\n", derived);

  const auto pct = [&](std::size_t missing) {
    return d.size() == 0 ? 0.0 : 100.0 * static_cast<double>(missing) / static_cast<double>(d.size());
  };
  if (kind == SourceKind::Clinical) {
    std::vector<std::pair<std::string, std::size_t>> miss;
    const auto count = [&](std::string name, auto pred) {
      std::size_t n = 0;
      for (const auto& r : d.clinical)
        if (pred(r)) ++n;
      miss.emplace_back(std::move(name), n);
    };
    count("optic_disc_size", [](const ClinicalRecord& r) { return !r.fundus.optic_disc_size; });
    count("cup_to_disc_ratio", [](const ClinicalRecord& r) { return !r.fundus.cup_to_disc_ratio; });
    for (const auto& bf : fundus_bool_fields())
      count(std::string(bf.name), [&bf](const ClinicalRecord& r) { return !(r.fundus.*(bf.member)); });
    count("rim_color", [](const ClinicalRecord& r) { return !r.fundus.rim_color; });
    count("additional_observations", [](const ClinicalRecord& r) { return !r.fundus.additional_observations; });
    count("neuroretinal_rim", [](const ClinicalRecord& r) { return !r.fundus.neuroretinal_rim; });
    count("glaucoma_risk_assessment",
          [](const ClinicalRecord& r) { return !r.judgment || !r.judgment->risk_assessment; });
    count("confidence_level", [](const ClinicalRecord& r) { return !r.judgment || !r.judgment->confidence_level; });
    count("image_ref", [](const ClinicalRecord& r) { return !r.image_ref; });
    for (const auto& [name, n] : miss) fmt::print(out, "missing\t{}\t{}\t{:.1f}%\n", name, n, pct(n));
  } else {
    struct Tally {
      std::size_t within = 0, borderline = 0, outside = 0, present = 0, ie_undefined = 0;
    };
    std::map<std::string, Tally> tally;
    for (const auto& r : d.oct)
      for (const auto& m : r.measurements) {
        auto& t = tally[m.biomarker];
        ++t.present;
        if (!m.ie) ++t.ie_undefined;
        for (const auto s : {m.status_od, m.status_os}) {
          if (s == Status::WithinNormal) ++t.within;
          if (s == Status::Borderline) ++t.borderline;
          if (s == Status::OutsideNormal) ++t.outside;
        }
      }
    fmt::print(out, "status\tbiomarker\tWithinNormal\tBorderline\tOutsideNormal\tmissing\tie_undefined\n");
    for (const auto& [name, t] : tally)
      fmt::print(out, "status\t{}\t{}\t{}\t{}\t{}\t{}\n", name, t.within, t.borderline, t.outside,
                 d.size() - t.present, t.ie_undefined);
  }
  return errors.empty() ? kExitOk : exit_code(errors.front().code());
}

struct FitArgs {
  DataArgs data;
  std::string mode = "binary";
  std::string normalization = "zscore";
  double cdr_threshold = 0.6;
  bool no_cdr_flag = false;
  std::string out;
};

FitOptions fit_options(const FitArgs& a) {
  FitOptions o;
  const auto n = util::to_lower(a.normalization);
  if (n == "zscore") {
    o.normalization = Normalization::ZScore;
  } else if (n == "none") {
    o.normalization = Normalization::None;
  } else {
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown --normalization '{}' (zscore|none)", a.normalization));
  }
  if (a.no_cdr_flag) {
    o.cdr_threshold.reset();
  } else {
    o.cdr_threshold = a.cdr_threshold;
  }
  return o;
}

void add_fit_options(CLI::App* app, FitArgs& a) {
  app->add_option("--mode", a.mode, "Class mode: binary | tristate")->capture_default_str();
  app->add_option("--normalization", a.normalization, "Continuous scaling: zscore | none")->capture_default_str();
  app->add_option("--cdr-threshold", a.cdr_threshold, "Threshold of the extra cup_to_disc_ratio flag")
      ->capture_default_str();
  app->add_flag("--no-cdr-flag", a.no_cdr_flag, "Omit the thresholded cup_to_disc_ratio flag");
}

int cmd_fit_schema(const FitArgs& a, std::ostream& out) {
  const auto data = a.data.load();
  const auto schema = fit_schema(data, parse_mode(a.mode), fit_options(a));
  const auto text = serialize_schema(schema);
  if (a.out.empty()) {
    out << text;
  } else {
    util::write_file(a.out, text);
    fmt::print(out, "schema\t{}\tstruct_dim={}\thuman_dim={}\tfingerprint={}\n", a.out, schema.struct_dim(),
               schema.human_dim(), schema.fingerprint());
  }
  return kExitOk;
}

struct TrainCmdArgs {
  DataArgs data;
  EmbeddingArgs emb;
  TrainArgs train;
  SplitArgs split;
  FitArgs fit;
  std::string mask;
  std::string schema;
  std::string schema_out;
  std::string model = "model.glamodel";
  std::string log;
};

int cmd_train(TrainCmdArgs& a, const ExecutionOptions& exec, std::ostream& out) {
  const auto data = a.data.load();
  const auto part = partition(data, a.split);
  const auto train_data = data.subset(part.train);

  FeatureSchema schema;
  if (!a.schema.empty()) {
    schema = read_schema(a.schema);
  } else {
    schema = fit_schema(train_data, parse_mode(a.fit.mode), fit_options(a.fit));
    const auto path = a.schema_out.empty() ? default_schema_path(a.model) : a.schema_out;
    util::write_file(path, serialize_schema(schema));
    spdlog::info("schema fitted on {} training records, written to {}", train_data.size(), path);
  }
  const auto inputs = a.emb.load();
  const auto mask = a.mask.empty() ? available_mask(data.kind, inputs) : ModalityMask::parse(a.mask);
  const auto config = a.train.resolve(schema.n_classes());

  const auto enc = encode_dataset(train_data, schema, mask, inputs);
  const auto view = labeled_rows(enc);
  spdlog::info("training on {} rows x {} features ({}), {} rounds", view.x.rows, view.x.cols, mask.str(),
               config.n_estimators);
  std::string log_text = "round\tloss\n";
  TrainHooks hooks;
  hooks.on_round = [&log_text](int round, double loss) {
    spdlog::debug("round {:>4}  loss {:.6f}", round + 1, loss);
    log_text += fmt::format("{}\t{}\n", round + 1, util::format_double(loss));
  };
  auto result = train(view.x, view.labels, config, exec, hooks);
  stamp_model(result.model, enc, inputs);
  result.model.metadata["source"] = std::string(to_string(data.kind));
  save_model(result.model, a.model);
  util::write_file(a.log.empty() ? a.model + ".log" : a.log, log_text);
  if (!result.round_loss.empty())
    spdlog::info("final training loss {:.6f} (first round {:.6f})", result.round_loss.back(),
                 result.round_loss.front());

  fmt::print(out, "model\t{}\tdim={}\ttrees={}\n", a.model, enc.dim(), result.model.trees.size());
  print_metrics(out, "train", evaluate_model(result.model, enc, 0.5, exec.parallel_kernels));
  if (!part.val.empty()) {
    const auto val = encode_dataset(data.subset(part.val), schema, mask, inputs);
    print_metrics(out, "val", evaluate_model(result.model, val, 0.5, exec.parallel_kernels));
  }
  return kExitOk;
}

struct ModelArgs {
  std::string model = "model.glamodel";
  std::string schema;
  std::string fingerprint_check = "error";

  FeatureSchema load_schema() const { return read_schema(schema.empty() ? default_schema_path(model) : schema); }
  BoostedModel load(const FeatureSchema& s) const {
    return load_model(model, s.fingerprint(), parse_check(fingerprint_check));
  }
};

void add_model_options(CLI::App* app, ModelArgs& a) {
  app->add_option("--model", a.model, "Model file")->capture_default_str();
  app->add_option("--schema", a.schema, "Schema file (default: <model>.schema)");
  app->add_option("--fingerprint-check", a.fingerprint_check,
                  "On schema/model fingerprint mismatch: error | warn | skip")
      ->capture_default_str();
}

ModalityMask model_mask(const BoostedModel& m) {
  const auto it = m.metadata.find("mask");
  if (it == m.metadata.end()) throw Error(ErrorCode::CorruptModel, "model carries no modality mask");
  return ModalityMask::parse(it->second);
}

struct EvalArgs {
  ModelArgs model;
  DataArgs data;
  EmbeddingArgs emb;
  SplitArgs split;
  std::string subset = "all";
  double threshold = 0.5;
  std::string report;
};

int cmd_evaluate(EvalArgs& a, const ExecutionOptions& exec, std::ostream& out) {
  const auto schema = a.model.load_schema();
  const auto model = a.model.load(schema);
  const auto data = a.data.load();
  std::vector<std::size_t> rows;
  const auto which = util::to_lower(a.subset);
  if (which == "all") {
    for (std::size_t i = 0; i < data.size(); ++i) rows.push_back(i);
  } else {
    const auto part = partition(data, a.split);
    if (which == "train") {
      rows = part.train;
    } else if (which == "val") {
      rows = part.val;
    } else {
      throw Error(ErrorCode::InvalidArgument, fmt::format("unknown --subset '{}' (all|train|val)", a.subset));
    }
  }
  const auto inputs = a.emb.load();
  const auto enc = encode_dataset(data.subset(rows), schema, model_mask(model), inputs);
  const auto m = evaluate_model(model, enc, a.threshold, exec.parallel_kernels);
  print_metrics(out, which, m);
  fmt::print(out, "confusion (rows actual, columns predicted)\n");
  for (const auto& row : m.counts.matrix) fmt::print(out, "{}\n", fmt::join(row, "\t"));
  if (!a.report.empty()) {
    util::write_file(a.report, fmt::format("subset\tn\tthreshold\tacc\tpre\trec\tf1\n{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                                           which, m.n, util::format_double(m.threshold), util::format_double(m.acc),
                                           util::format_double(m.pre), util::format_double(m.rec),
                                           util::format_double(m.f1)));
  }
  return kExitOk;
}

struct AblateArgs {
  DataArgs data;
  EmbeddingArgs emb;
  TrainArgs train;
  SplitArgs split;
  FitArgs fit;
  std::string preset = "public";
  std::vector<std::string> masks;
  double threshold = 0.5;
  std::string tsv;
};

int cmd_ablate(AblateArgs& a, const ExecutionOptions& exec, std::ostream& out) {
  const auto data = a.data.load();
  std::vector<ModalityMask> masks;
  std::vector<std::size_t> placeholders;
  if (!a.masks.empty()) {
    for (const auto& m : a.masks) masks.push_back(ModalityMask::parse(m));
  } else {
    masks = ablation_preset(a.preset);
    for (std::size_t i = 0; i < masks.size(); ++i)
      if (!masks[i].any()) placeholders.push_back(i);
  }
  const auto part = partition(data, a.split);
  if (part.val.empty()) throw Error(ErrorCode::InvalidArgument, "ablation needs a validation split");
  // Indices into the labeled-only dataset keep the split and the records aligned.
  TrainValSplit split{part.train, part.val};
  AblationOptions opts;
  opts.mode = parse_mode(a.fit.mode);
  opts.config = a.train.resolve(opts.mode == ClassMode::Tristate ? 3 : 2);
  opts.exec = exec;
  opts.fit = fit_options(a.fit);
  opts.threshold = a.threshold;
  const auto inputs = a.emb.load();
  const auto grid = run_ablation(data, masks, inputs, split, opts, placeholders);
  out << format_ablation_table(grid);
  if (!a.tsv.empty()) util::write_file(a.tsv, format_ablation_tsv(grid));
  return grid.any_failed() ? kExitRowFailed : kExitOk;
}

struct ImportanceArgs {
  ModelArgs model;
  std::size_t top = 5;
  std::string kind = "gain";
  bool tsv = false;
};

int cmd_importance(const ImportanceArgs& a, std::ostream& out) {
  const auto schema = a.model.load_schema();
  const auto model = a.model.load(schema);
  const auto report = importance_report(model, schema, a.top, parse_importance_kind(a.kind));
  out << (a.tsv ? format_importance_tsv(report) : format_importance(report));
  return kExitOk;
}

struct PredictArgs {
  ModelArgs model;
  DataArgs data;
  EmbeddingArgs emb;
  std::string matrix;
  std::size_t top = 3;
};

bool nothing_observed(const Dataset& d, std::size_t i) {
  if (d.kind == SourceKind::Clinical) {
    const auto& r = d.clinical[i];
    return r.fundus == FundusFeatures{} && !r.judgment;
  }
  return d.oct[i].measurements.empty() && !d.oct[i].judgment;
}

int cmd_predict(PredictArgs& a, std::ostream& out) {
  const auto schema = a.model.load_schema();
  const auto model = a.model.load(schema);
  EncodedMatrix enc;
  if (!a.matrix.empty()) {
    enc = read_matrix(a.matrix);
    if (!enc.fingerprint.empty() && enc.fingerprint != model.schema_fingerprint)
      throw Error(ErrorCode::FingerprintMismatch, "matrix and model were encoded with different schemas");
  } else {
    if (a.data.records.empty()) throw Error(ErrorCode::InvalidArgument, "predict needs --records or --matrix");
    const auto data = a.data.load();
    for (std::size_t i = 0; i < data.size(); ++i)
      if (nothing_observed(data, i))
        spdlog::warn("record '{}' has no observed fields; its prediction is dominated by the base rate", data.id(i));
    const auto inputs = a.emb.load();
    enc = encode_dataset(data, schema, model_mask(model), inputs);
  }
  const bool binary = model.n_classes() == 2;
  fmt::print(out, "id\t{}\ttop_features\n",
             binary ? std::string("p_positive") : fmt::format("p_class0..p_class{}", model.n_classes() - 1));
  for (std::size_t r = 0; r < enc.rows(); ++r) {
    const auto x = enc.x.row(r);
    const auto p = model.predict_proba(x);
    const int cls = binary ? 0 : static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
    auto contrib = predict_contributions(model, x, cls);
    contrib.pop_back();
    std::vector<std::size_t> order(contrib.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t l, std::size_t rr) { return std::fabs(contrib[l]) > std::fabs(contrib[rr]); });
    std::vector<std::string> tops;
    for (std::size_t k = 0; k < std::min(a.top, order.size()); ++k) {
      if (contrib[order[k]] == 0.0) break;
      tops.push_back(fmt::format("{}:{:+.4f}", model.feature_names[order[k]], contrib[order[k]]));
    }
    std::vector<std::string> probs;
    if (binary) {
      probs.push_back(fmt::format("{:.6f}", p[1]));
    } else {
      for (double v : p) probs.push_back(fmt::format("{:.6f}", v));
    }
    fmt::print(out, "{}\t{}\t{}\n", enc.ids[r], fmt::join(probs, ","), tops.empty() ? "-" : fmt::format("{}", fmt::join(tops, ",")));
  }
  return kExitOk;
}

struct SynthArgs {
  std::string out_dir = "synth";
  std::size_t n = 2000;
  std::uint64_t seed = 42;
  std::string format = "clinical";
  bool three_class = false;
  double missing_rate = 0.05;
  std::size_t text_dim = kDefaultTextDim;
  std::size_t image_dim = kDefaultImageDim;
};

int cmd_synth(const SynthArgs& a, std::ostream& out) {
  SynthOptions o;
  o.n = a.n;
  o.seed = a.seed;
  DataArgs probe;
  probe.format = a.format;
  o.kind = probe.kind();
  o.three_class = a.three_class;
  o.missing_rate = a.missing_rate;
  o.text_dim = a.text_dim;
  o.image_dim = a.image_dim;
  const auto s = generate_synthetic(o);
  std::filesystem::create_directories(a.out_dir);
  const auto dir = std::filesystem::path(a.out_dir);
  std::vector<std::string> written;
  if (o.kind == SourceKind::Clinical) {
    const auto rec = (dir / "records.txt").string();
    util::write_file(rec, serialize_clinical_file(s.data.clinical));
    const auto text = (dir / "text.glaemb").string();
    write_embedding_table(s.text, text);
    written = {rec, text};
  } else {
    const auto rec = (dir / "biomarkers.txt").string();
    util::write_file(rec, serialize_biomarker_table(s.data.oct));
    written = {rec};
  }
  const auto image = (dir / "image.glaemb").string();
  write_embedding_table(s.image, image);
  written.push_back(image);
  for (const auto& w : written) fmt::print(out, "wrote\t{}\n", w);
  return kExitOk;
}

// ---------------------------------------------------------------------------
// App

struct State {
  std::string config;
  int threads = 0;
  bool serial = false;
  int verbose = 0;
  bool quiet = false;

  IngestArgs ingest;
  FitArgs fit;
  TrainCmdArgs train;
  EvalArgs evaluate;
  AblateArgs ablate;
  ImportanceArgs importance;
  PredictArgs predict;
  SynthArgs synth;

  std::map<std::string, CLI::App*> subs;
};

void build(CLI::App& app, State& s) {
  app.description("Multimodal glaucoma classification: record parsing, feature fusion and boosted trees.");
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "INI config file; keys of a subcommand go in a [subcommand] section");
  app.add_option("--threads", s.threads, "Worker threads for parallel kernels (0 = all cores)")->capture_default_str();
  app.add_flag("--serial", s.serial, "Use the serial reference kernels");
  app.add_flag("-v,--verbose", s.verbose, "More log output (repeatable)");
  app.add_flag("-q,--quiet", s.quiet, "Only log errors");
  app.footer(fmt::format("Exit codes: 0 ok, {} unexpected failure, {} usage error, {} ablation row failed,\n"
                         "{}+n library error class n (see README). Verbosity may also be set with GBFUSE_VERBOSITY.",
                         kExitUnexpected, kExitUsage, kExitRowFailed, kExitErrorBase));

  auto* ingest = app.add_subcommand("ingest", "Parse and validate records; print a dataset summary");
  add_data_options(ingest, s.ingest.data);
  s.subs["ingest"] = ingest;

  auto* fit = app.add_subcommand("fit-schema", "Fit the feature schema on a record file");
  add_data_options(fit, s.fit.data);
  add_fit_options(fit, s.fit);
  fit->add_option("--out", s.fit.out, "Schema output file (default: print)");
  s.subs["fit-schema"] = fit;

  auto* train = app.add_subcommand("train", "Encode, fuse and train a boosted model");
  add_data_options(train, s.train.data);
  add_embedding_options(train, s.train.emb);
  add_fit_options(train, s.train.fit);
  add_train_options(train, s.train.train);
  add_split_options(train, s.train.split, "Validation fraction held out (0 = train on all labeled records)");
  train->add_option("--mask", s.train.mask, "Modality mask, e.g. all, factor, words+factor+risk (default: every modality with inputs)");
  train->add_option("--schema", s.train.schema, "Use this schema instead of fitting one (default: none)");
  train->add_option("--schema-out", s.train.schema_out, "Where to write a fitted schema (default: <model>.schema)");
  train->add_option("--model", s.train.model, "Model output file")->capture_default_str();
  train->add_option("--log", s.train.log, "Per-round loss log (default: <model>.log)");
  s.subs["train"] = train;

  auto* evaluate = app.add_subcommand("evaluate", "Score a model: ACC, PRE, F1 and the confusion matrix");
  add_model_options(evaluate, s.evaluate.model);
  add_data_options(evaluate, s.evaluate.data);
  add_embedding_options(evaluate, s.evaluate.emb);
  add_split_options(evaluate, s.evaluate.split, "Validation fraction used to rebuild the training split");
  evaluate->add_option("--subset", s.evaluate.subset, "Rows to score: all | train | val")->capture_default_str();
  evaluate->add_option("--threshold", s.evaluate.threshold, "Decision threshold on P(positive)")
      ->capture_default_str();
  evaluate->add_option("--report", s.evaluate.report, "Also write the metrics as TSV (default: none)");
  s.subs["evaluate"] = evaluate;

  auto* ablate = app.add_subcommand("ablate", "Train and score one model per modality mask");
  add_data_options(ablate, s.ablate.data);
  add_embedding_options(ablate, s.ablate.emb);
  add_fit_options(ablate, s.ablate.fit);
  add_train_options(ablate, s.ablate.train);
  add_split_options(ablate, s.ablate.split, "Validation fraction");
  ablate->add_option("--preset", s.ablate.preset, "Mask set: public | factor | basic")->capture_default_str();
  ablate->add_option("--masks", s.ablate.masks, "Explicit masks overriding --preset (default: none)");
  ablate->add_option("--threshold", s.ablate.threshold, "Decision threshold on P(positive)")->capture_default_str();
  ablate->add_option("--tsv", s.ablate.tsv, "Also write the grid as TSV (default: none)");
  s.subs["ablate"] = ablate;

  auto* importance = app.add_subcommand("importance", "Ranked feature importance grouped by source field");
  add_model_options(importance, s.importance.model);
  importance->add_option("--top", s.importance.top, "Rows to print (0 = all)")->capture_default_str();
  importance->add_option("--kind", s.importance.kind, "gain | weight | cover")->capture_default_str();
  importance->add_flag("--tsv", s.importance.tsv, "Tab-separated output");
  s.subs["importance"] = importance;

  auto* predict = app.add_subcommand("predict", "Probabilities and top contributing features per record");
  add_model_options(predict, s.predict.model);
  add_data_options(predict, s.predict.data, false);
  add_embedding_options(predict, s.predict.emb);
  predict->add_option("--matrix", s.predict.matrix, "Encoded GLAMAT file instead of records (default: none)");
  predict->add_option("--top", s.predict.top, "Contributing features to list")->capture_default_str();
  s.subs["predict"] = predict;

  auto* synth = app.add_subcommand("synth", "Write the deterministic multimodal synthetic dataset");
  synth->add_option("--out-dir", s.synth.out_dir, "Output directory")->capture_default_str();
  synth->add_option("--n", s.synth.n, "Records")->capture_default_str();
  synth->add_option("--seed", s.synth.seed, "Generator seed")->capture_default_str();
  synth->add_option("--format", s.synth.format, "clinical | oct")->capture_default_str();
  synth->add_flag("--three-class", s.synth.three_class, "oct only: add a borderline class");
  synth->add_option("--missing-rate", s.synth.missing_rate, "Probability that a field is missing")
      ->capture_default_str();
  synth->add_option("--text-dim", s.synth.text_dim, "Text embedding dimension")->capture_default_str();
  synth->add_option("--image-dim", s.synth.image_dim, "Image embedding dimension")->capture_default_str();
  s.subs["synth"] = synth;
}

spdlog::level::level_enum log_level(const State& s) {
  if (s.quiet) return spdlog::level::err;
  if (s.verbose >= 2) return spdlog::level::trace;
  if (s.verbose == 1) return spdlog::level::debug;
  if (const char* env = std::getenv("GBFUSE_VERBOSITY")) {
    const auto lvl = spdlog::level::from_str(util::to_lower(env));
    if (lvl != spdlog::level::off || util::to_lower(env) == "off") return lvl;
  }
  return spdlog::level::info;
}

/// Routes the default logger to `err` for the lifetime of one run.
class LogScope {
 public:
  explicit LogScope(std::ostream& err) : previous_(spdlog::default_logger()) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err, true);
    auto logger = std::make_shared<spdlog::logger>("gbfuse", sink);
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
  }
  ~LogScope() { spdlog::set_default_logger(previous_); }
  LogScope(const LogScope&) = delete;
  LogScope& operator=(const LogScope&) = delete;

 private:
  std::shared_ptr<spdlog::logger> previous_;
};

}  // namespace

std::string help_text(std::string_view subcommand) {
  CLI::App app{"", "gbfuse"};
  State s;
  build(app, s);
  if (subcommand.empty()) return app.help();
  return s.subs.at(std::string(subcommand))->help();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  LogScope logs(err);
  CLI::App app{"", args.empty() ? std::string("gbfuse") : args[0]};
  State s;
  build(app, s);
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }
  spdlog::set_level(log_level(s));
  ExecutionOptions exec;
  exec.n_threads = s.threads;
  exec.parallel_kernels = !s.serial;
  if (s.threads > 0) kernels::set_num_threads(s.threads);

  try {
    if (s.subs["ingest"]->parsed()) return cmd_ingest(s.ingest, out, err);
    if (s.subs["fit-schema"]->parsed()) return cmd_fit_schema(s.fit, out);
    if (s.subs["train"]->parsed()) return cmd_train(s.train, exec, out);
    if (s.subs["evaluate"]->parsed()) return cmd_evaluate(s.evaluate, exec, out);
    if (s.subs["ablate"]->parsed()) return cmd_ablate(s.ablate, exec, out);
    if (s.subs["importance"]->parsed()) return cmd_importance(s.importance, out);
    if (s.subs["predict"]->parsed()) return cmd_predict(s.predict, out);
    if (s.subs["synth"]->parsed()) return cmd_synth(s.synth, out);
  } catch (const Error& e) {
    fmt::print(err, "error: {}\n", e.what());
    return exit_code(e.code());
  } catch (const std::exception& e) {
    fmt::print(err, "error: {}\n", e.what());
    return kExitUnexpected;
  }
  return kExitUsage;
}

}  // namespace gbfuse::cli
