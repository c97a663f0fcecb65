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

#include "gbfuse/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gbfuse/error.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse {

// ---------------------------------------------------------------------------
// Split

TrainValSplit split_train_val(std::span<const int> labels, const SplitOptions& options) {
  if (!(options.val_fraction > 0.0 && options.val_fraction < 1.0))
    throw Error(ErrorCode::InvalidArgument,
                fmt::format("val_fraction must lie in (0, 1), got {}", options.val_fraction));
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0)
      throw Error(ErrorCode::InvalidArgument, fmt::format("row {} is unlabeled and cannot be split", i));
  if (labels.size() < 2) throw Error(ErrorCode::TooFewRecords, fmt::format("{} record(s) cannot be split", labels.size()));

  std::mt19937_64 rng(options.seed);
  const auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[util::uniform_index(rng, i)]);
  };
  const auto take = [&](std::vector<std::size_t> pool, std::vector<bool>& in_val) {
    shuffle(pool);
    const auto k = static_cast<std::size_t>(std::llround(options.val_fraction * static_cast<double>(pool.size())));
    for (std::size_t i = 0; i < k; ++i) in_val[pool[i]] = true;
  };

  std::vector<bool> in_val(labels.size(), false);
  if (options.stratify) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (auto& [cls, rows] : by_class) take(std::move(rows), in_val);
  } else {
    std::vector<std::size_t> all(labels.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    take(std::move(all), in_val);
  }

  TrainValSplit out;
  for (std::size_t i = 0; i < labels.size(); ++i) (in_val[i] ? out.val : out.train).push_back(i);
  if (out.train.empty() || out.val.empty())
    throw Error(ErrorCode::TooFewRecords,
                fmt::format("split of {} records at fraction {} leaves one side empty", labels.size(),
                            options.val_fraction));
  return out;
}

// ---------------------------------------------------------------------------
// Metrics

std::size_t ConfusionCounts::total() const {
  std::size_t t = 0;
  for (const auto& row : matrix)
    for (auto v : row) t += v;
  return t;
}

ConfusionCounts confusion_from_predictions(std::span<const int> predicted, std::span<const int> actual,
                                           int n_classes) {
  if (predicted.size() != actual.size())
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("{} predictions for {} labels", predicted.size(), actual.size()));
  const auto k = static_cast<std::size_t>(n_classes);
  ConfusionCounts c;
  c.matrix.assign(k, std::vector<std::size_t>(k, 0));
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] < 0 || actual[i] >= n_classes)
      throw Error(ErrorCode::LabelOutOfRange, fmt::format("label {} outside [0, {})", actual[i], n_classes));
    if (predicted[i] < 0 || predicted[i] >= n_classes)
      throw Error(ErrorCode::LabelOutOfRange, fmt::format("prediction {} outside [0, {})", predicted[i], n_classes));
    ++c.matrix[static_cast<std::size_t>(actual[i])][static_cast<std::size_t>(predicted[i])];
  }
  if (n_classes == 2) {
    c.tn = c.matrix[0][0];
    c.fp = c.matrix[0][1];
    c.fn = c.matrix[1][0];
    c.tp = c.matrix[1][1];
  }
  return c;
}

namespace {

struct ClassScores {
  double pre, rec, f1;
};

ClassScores class_scores(std::size_t tp, std::size_t fp, std::size_t fn, const std::string& what,
                         std::vector<std::string>& warnings) {
  ClassScores s{0.0, 0.0, 0.0};
  if (tp + fp == 0) {
    warnings.push_back(fmt::format("no predicted positives for {}; precision set to 0", what));
  } else {
    s.pre = static_cast<double>(tp) / static_cast<double>(tp + fp);
  }
  if (tp + fn == 0) {
    warnings.push_back(fmt::format("no actual positives for {}; recall set to 0", what));
  } else {
    s.rec = static_cast<double>(tp) / static_cast<double>(tp + fn);
  }
  s.f1 = s.pre + s.rec > 0.0 ? 2.0 * s.pre * s.rec / (s.pre + s.rec) : 0.0;
  return s;
}

}  // namespace

MetricsReport metrics_from_counts(const ConfusionCounts& counts, int n_classes, Averaging averaging) {
  MetricsReport r;
  r.counts = counts;
  r.n_classes = n_classes;
  r.averaging = averaging;
  r.n = counts.total();
  if (r.n == 0) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  std::size_t correct = 0;
  for (std::size_t c = 0; c < counts.matrix.size(); ++c) correct += counts.matrix[c][c];
  r.acc = static_cast<double>(correct) / static_cast<double>(r.n);

  if (averaging == Averaging::Binary) {
    if (n_classes != 2) throw Error(ErrorCode::InvalidArgument, "binary averaging needs two classes");
    const auto s = class_scores(counts.tp, counts.fp, counts.fn, "the positive class", r.warnings);
    r.pre = s.pre;
    r.rec = s.rec;
    r.f1 = s.f1;
  } else {
    const auto k = counts.matrix.size();
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t fp = 0, fn = 0;
      for (std::size_t o = 0; o < k; ++o) {
        if (o == c) continue;
        fp += counts.matrix[o][c];
        fn += counts.matrix[c][o];
      }
      const auto s = class_scores(counts.matrix[c][c], fp, fn, fmt::format("class {}", c), r.warnings);
      r.pre += s.pre;
      r.rec += s.rec;
      r.f1 += s.f1;
    }
    r.pre /= static_cast<double>(k);
    r.rec /= static_cast<double>(k);
    r.f1 /= static_cast<double>(k);
  }
  for (const auto& w : r.warnings) spdlog::warn("{}", w);
  return r;
}

MetricsReport compute_metrics(std::span<const double> probabilities, std::span<const int> labels, double threshold,
                              Averaging averaging) {
  if (probabilities.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("{} probabilities for {} labels", probabilities.size(), labels.size()));
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  std::vector<int> predicted(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) predicted[i] = probabilities[i] >= threshold ? 1 : 0;
  auto r = metrics_from_counts(confusion_from_predictions(predicted, labels, 2), 2, averaging);
  r.threshold = threshold;
  return r;
}

MetricsReport compute_metrics(const std::vector<std::vector<double>>& probabilities, std::span<const int> labels,
                              Averaging averaging) {
  if (probabilities.size() != labels.size())
    throw Error(ErrorCode::LengthMismatch,
                fmt::format("{} probability rows for {} labels", probabilities.size(), labels.size()));
  if (labels.empty()) throw Error(ErrorCode::EmptyInput, "no predictions to score");
  const auto k = probabilities[0].size();
  std::vector<int> predicted(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (probabilities[i].size() != k) throw Error(ErrorCode::RaggedInput, "probability rows differ in width");
    predicted[i] = static_cast<int>(std::max_element(probabilities[i].begin(), probabilities[i].end()) -
                                    probabilities[i].begin());
  }
  return metrics_from_counts(confusion_from_predictions(predicted, labels, static_cast<int>(k)), static_cast<int>(k),
                             averaging);
}

MetricsReport evaluate_model(const BoostedModel& model, const EncodedMatrix& m, double threshold, bool parallel) {
  const auto view = labeled_rows(m);
  if (view.x.rows == 0) throw Error(ErrorCode::EmptyInput, "no labeled rows to evaluate");
  const auto proba = predict_proba_batch(model, view.x, parallel);
  if (model.n_classes() == 2) {
    std::vector<double> p(proba.size());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = proba[i][1];
    return compute_metrics(p, view.labels, threshold);
  }
  return compute_metrics(proba, view.labels);
}

// ---------------------------------------------------------------------------
// Ablation

bool cause_flag(const ModalityMask& mask) { return mask.factor || mask.risk; }

bool AblationGrid::any_failed() const {
  return std::any_of(rows.begin(), rows.end(), [](const AblationRow& r) { return r.failed; });
}

std::vector<ModalityMask> ablation_preset(std::string_view name) {
  const auto judged = [](ModalityMask base, bool sure_first) {
    std::vector<ModalityMask> out;
    auto a = base, b = base, c = base, d = base;
    b.risk = true;
    c.sure = true;
    d.risk = d.sure = true;
    if (sure_first) {
      out = {a, c, b, d};
    } else {
      out = {a, b, c, d};
    }
    return out;
  };
  const auto mk = [](bool image, bool words, bool factor) {
    ModalityMask m;
    m.image = image;
    m.words = words;
    m.factor = factor;
    return m;
  };
  const auto n = util::to_lower(util::trim(name));
  std::vector<ModalityMask> out;
  const auto add = [&out](const std::vector<ModalityMask>& v) { out.insert(out.end(), v.begin(), v.end()); };
  if (n == "public") {
    add(judged(mk(false, false, false), true));
    add(judged(mk(false, false, true), false));
    add(judged(mk(false, true, false), false));
    add(judged(mk(false, true, true), false));
    add(judged(mk(true, false, false), false));
    add(judged(mk(true, false, true), false));
  } else if (n == "factor") {
    add(judged(mk(false, false, false), true));
    add(judged(mk(false, false, true), false));
  } else if (n == "basic") {
    out = {mk(false, false, true), mk(false, true, false), mk(true, false, false), ModalityMask::all()};
  } else {
    throw Error(ErrorCode::InvalidArgument, fmt::format("unknown ablation preset '{}'", name));
  }
  return out;
}

AblationGrid run_ablation(const Dataset& data, std::span<const ModalityMask> masks, const EmbeddingInputs& embeddings,
                          const TrainValSplit& split, const AblationOptions& options,
                          std::span<const std::size_t> placeholder_rows) {
  const auto is_placeholder = [&](std::size_t i) {
    return std::find(placeholder_rows.begin(), placeholder_rows.end(), i) != placeholder_rows.end();
  };
  std::set<std::string> seen;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!masks[i].any() && !is_placeholder(i))
      throw Error(ErrorCode::EmptyFusion, fmt::format("ablation row {} selects no modality", i + 1));
    if (!seen.insert(masks[i].str()).second)
      throw Error(ErrorCode::DuplicateMask, fmt::format("mask '{}' appears twice", masks[i].str()));
  }

  const Dataset train_data = data.subset(split.train);
  const Dataset val_data = data.subset(split.val);
  std::vector<std::string> train_ids, val_ids;
  for (std::size_t i = 0; i < train_data.size(); ++i) train_ids.push_back(train_data.id(i));
  for (std::size_t i = 0; i < val_data.size(); ++i) val_ids.push_back(val_data.id(i));
  const FeatureSchema schema = fit_schema(train_data, options.mode, options.fit);
  TrainConfig config = options.config;
  config.n_classes = schema.n_classes();

  AblationGrid grid;
  for (std::size_t i = 0; i < masks.size(); ++i) {
    AblationRow row;
    row.mask = masks[i];
    row.cause = cause_flag(masks[i]);
    row.train_ids = train_ids;
    row.val_ids = val_ids;
    if (is_placeholder(i) && !masks[i].any()) {
      row.placeholder = true;
      grid.rows.push_back(std::move(row));
      continue;
    }
    try {
      const auto train_m = encode_dataset(train_data, schema, masks[i], embeddings);
      const auto view = labeled_rows(train_m);
      auto result = train(view.x, view.labels, config, options.exec);
      stamp_model(result.model, train_m, embeddings);
      const auto val_m = encode_dataset(val_data, schema, masks[i], embeddings);
      row.metrics = evaluate_model(result.model, val_m, options.threshold, options.exec.parallel_kernels);
      row.dim = train_m.dim();
      spdlog::info("ablation {:<28} dim {:>4}  ACC {:.4f}", masks[i].str(), row.dim, row.metrics.acc);
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
      spdlog::error("ablation row '{}' failed: {}", masks[i].str(), row.error);
    }
    grid.rows.push_back(std::move(row));
  }
  return grid;
}

namespace {

constexpr std::string_view kYes = "✓";
constexpr std::string_view kNo = "✗";

std::string pct(double v) { return fmt::format("{:.2f}", 100.0 * v); }

}  // namespace

std::string format_ablation_table(const AblationGrid& grid) {
  // Glyphs are multi-byte, so columns are padded by hand to 7 cells.
  const auto flag = [](bool on) { return std::string(on ? kYes : kNo) + "      "; };
  std::string out = "Image  Words  Factor Risk   Sure   |    ACC    PRE     F1 | Cause\n";
  out += "-----------------------------------+----------------------+------\n";
  for (const auto& r : grid.rows) {
    out += flag(r.mask.image) + flag(r.mask.words) + flag(r.mask.factor) + flag(r.mask.risk) + flag(r.mask.sure);
    if (r.placeholder) {
      out += fmt::format("| {:>6} {:>6} {:>6} | {}\n", "-", "-", "-", "-");
    } else if (r.failed) {
      out += fmt::format("| {:>6} {:>6} {:>6} | {}\n", "fail", "fail", "fail", r.cause ? "Yes" : "No");
    } else {
      out += fmt::format("| {:>6} {:>6} {:>6} | {}\n", pct(r.metrics.acc), pct(r.metrics.pre), pct(r.metrics.f1),
                         r.cause ? "Yes" : "No");
    }
  }
  return out;
}

std::string format_ablation_tsv(const AblationGrid& grid) {
  std::string out = "mask\timage\twords\tfactor\trisk\tsure\tdim\tacc\tpre\tf1\tcause\tstatus\n";
  for (const auto& r : grid.rows) {
    const auto& m = r.mask;
    out += fmt::format("{}\t{:d}\t{:d}\t{:d}\t{:d}\t{:d}\t{}\t", m.str(), m.image, m.words, m.factor, m.risk, m.sure,
                       r.dim);
    if (r.placeholder) {
      out += "-\t-\t-\t-\tskipped\n";
    } else if (r.failed) {
      out += fmt::format("-\t-\t-\t{}\tfailed: {}\n", r.cause ? "Yes" : "No", r.error);
    } else {
      out += fmt::format("{:.6f}\t{:.6f}\t{:.6f}\t{}\tok\n", r.metrics.acc, r.metrics.pre, r.metrics.f1,
                         r.cause ? "Yes" : "No");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Importance report

namespace {

struct SlotKey {
  std::string group;
  enum class Kind { Category, Flag, Numeric, Embedding } kind = Kind::Numeric;
  std::string category;  // Category / Flag: the level
};

std::string capitalize_bool(std::string_view v) {
  if (v == "true") return "True";
  if (v == "false") return "False";
  return std::string(v);
}

SlotKey classify_slot(std::string_view name, const FeatureSchema& schema) {
  SlotKey k;
  for (const auto m : {Modality::Text, Modality::Image}) {
    const auto prefix = fmt::format("{}:", to_string(m));
    if (name.starts_with(prefix) && util::parse_int(name.substr(prefix.size()))) {
      k.group = fmt::format("{} (embedding)", to_string(m));
      k.kind = SlotKey::Kind::Embedding;
      return k;
    }
  }
  const auto eq = name.find('=');
  if (eq != std::string_view::npos) {
    auto field = name.substr(0, eq);
    k.category = capitalize_bool(name.substr(eq + 1));
    k.kind = SlotKey::Kind::Category;
    if (const auto gt = field.find('>'); gt != std::string_view::npos) field = field.substr(0, gt);
    k.group = std::string(field);
    return k;
  }
  const auto colon = name.rfind(':');
  if (colon != std::string_view::npos) {
    k.category = std::string(name.substr(colon + 1));
    k.kind = SlotKey::Kind::Flag;
    name = name.substr(0, colon);
  }
  if (schema.kind == SourceKind::Biomarker) {
    const auto dot = name.rfind('.');
    if (dot != std::string_view::npos) name = name.substr(0, dot);
  }
  k.group = std::string(name);
  return k;
}

/// Raw-unit statistics for a numeric slot, or nullptr when not normalized.
const ContinuousStats* slot_stats(std::string_view name, const FeatureSchema& schema) {
  for (const auto& c : schema.continuous)
    if (c.name == name) return &c.stats;
  for (const auto& b : schema.biomarkers) {
    if (name == b.name + ".od") return &b.od;
    if (name == b.name + ".os") return &b.os;
    if (name == b.name + ".ie") return &b.ie;
  }
  return nullptr;
}

std::string number(double v) { return fmt::format("{:.4g}", v); }

}  // namespace

ImportanceReport importance_report(const BoostedModel& model, const FeatureSchema& schema, std::size_t top_k,
                                   ImportanceKind kind) {
  ImportanceReport report;
  report.kind = kind;
  const auto imp = feature_importance(model, kind);

  struct Group {
    double total = 0.0;
    double best = -1.0;
    std::string best_slot;
    SlotKey best_key;
    std::size_t first = 0, width = 0;
  };
  std::map<std::string, Group> groups;
  std::map<std::string, std::size_t> index_of;
  for (std::size_t f = 0; f < model.feature_names.size(); ++f) {
    const auto& name = model.feature_names[f];
    index_of.emplace(name, f);
    const auto key = classify_slot(name, schema);
    auto [it, fresh] = groups.try_emplace(key.group);
    auto& g = it->second;
    if (fresh) g.first = f;
    ++g.width;
    const auto found = imp.find(name);
    if (found == imp.end()) continue;
    g.total += found->second;
    if (found->second > g.best) {
      g.best = found->second;
      g.best_slot = name;
      g.best_key = key;
    }
  }

  for (const auto& [group, g] : groups) {
    if (g.best < 0.0) continue;
    ImportanceRow row{group, g.total, {}};
    switch (g.best_key.kind) {
      case SlotKey::Kind::Embedding:
        row.value = fmt::format("offset {}, width {}", g.first, g.width);
        break;
      case SlotKey::Kind::Category:
      case SlotKey::Kind::Flag:
        row.value = g.best_key.category;
        break;
      case SlotKey::Kind::Numeric: {
        const auto f = index_of.at(g.best_slot);
        double lo = INFINITY, hi = -INFINITY;
        for (const auto& tree : model.trees)
          for (const auto& node : tree.nodes)
            if (!node.is_leaf() && static_cast<std::size_t>(node.feature) == f) {
              lo = std::min(lo, node.threshold);
              hi = std::max(hi, node.threshold);
            }
        const auto* stats = slot_stats(g.best_slot, schema);
        const auto raw = [&](double z) {
          return stats != nullptr && schema.normalization == Normalization::ZScore && stats->sd > 0.0
                     ? z * stats->sd + stats->mean
                     : z;
        };
        row.value = lo == hi ? number(raw(lo)) : fmt::format("{} - {}", number(raw(lo)), number(raw(hi)));
        break;
      }
    }
    report.rows.push_back(std::move(row));
  }
  std::sort(report.rows.begin(), report.rows.end(), [](const ImportanceRow& a, const ImportanceRow& b) {
    if (a.importance != b.importance) return a.importance > b.importance;
    return a.name < b.name;
  });
  if (top_k > 0 && report.rows.size() > top_k) report.rows.resize(top_k);
  return report;
}

std::string format_importance(const ImportanceReport& report) {
  std::string out;
  for (const auto& r : report.rows) out += fmt::format("{} | {:.4f} | {}\n", r.name, r.importance, r.value);
  return out;
}

std::string format_importance_tsv(const ImportanceReport& report) {
  std::string out = fmt::format("feature\t{}\tvalue\n", to_string(report.kind));
  for (const auto& r : report.rows) out += fmt::format("{}\t{}\t{}\n", r.name, util::format_double(r.importance), r.value);
  return out;
}

}  // namespace gbfuse
