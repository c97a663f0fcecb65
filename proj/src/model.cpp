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

#include <algorithm>
#include <cmath>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "gbfuse/boosting.hpp"
#include "gbfuse/error.hpp"
#include "gbfuse/util.hpp"

namespace gbfuse {

std::size_t Tree::leaf_index(std::span<const double> x) const {
  std::size_t i = 0;
  while (!nodes[i].is_leaf()) {
    const auto& n = nodes[i];
    const double v = x[static_cast<std::size_t>(n.feature)];
    const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
    i = static_cast<std::size_t>(left ? n.left : n.right);
  }
  return i;
}

int Tree::depth() const {
  if (nodes.empty()) return 0;
  std::vector<int> d(nodes.size(), 0);
  int deepest = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    deepest = std::max(deepest, d[i]);
    if (!nodes[i].is_leaf()) {
      d[static_cast<std::size_t>(nodes[i].left)] = d[i] + 1;
      d[static_cast<std::size_t>(nodes[i].right)] = d[i] + 1;
    }
  }
  return deepest;
}

std::size_t Tree::n_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const auto& n) { return n.is_leaf(); }));
}

std::vector<double> BoostedModel::predict_margin(std::span<const double> x) const {
  if (x.size() != n_features)
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("vector has {} values, model expects {}", x.size(), n_features));
  const std::size_t tpr = trees_per_round();
  std::vector<double> m(base_score.begin(), base_score.end());
  m.resize(tpr, 0.0);
  for (std::size_t t = 0; t < trees.size(); ++t) m[t % tpr] += trees[t].predict(x);
  return m;
}

std::vector<double> BoostedModel::predict_proba(std::span<const double> x) const {
  const auto m = predict_margin(x);
  if (m.size() == 1) {
    const double p = sigmoid(m[0]);
    return {1.0 - p, p};
  }
  return softmax(m);
}

double BoostedModel::predict_positive(std::span<const double> x) const {
  const auto m = predict_margin(x);
  if (m.size() == 1) return sigmoid(m[0]);
  return softmax(m)[1];
}

std::vector<std::vector<double>> predict_proba_batch(const BoostedModel& model, const DenseMatrix& x, bool parallel) {
  if (x.cols != model.n_features)
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("matrix has {} columns, model expects {}", x.cols, model.n_features));
  std::vector<std::vector<double>> out(x.rows);
  const auto n = static_cast<std::int64_t>(x.rows);
#pragma omp parallel for schedule(static) if (parallel && n > 256)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto r = static_cast<std::size_t>(i);
    out[r] = model.predict_proba(x.row(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Importance

ImportanceKind parse_importance_kind(std::string_view s) {
  const auto k = util::to_lower(util::trim(s));
  if (k == "gain") return ImportanceKind::Gain;
  if (k == "weight") return ImportanceKind::Weight;
  if (k == "cover") return ImportanceKind::Cover;
  throw Error(ErrorCode::InvalidArgument, fmt::format("unknown importance kind '{}'", s));
}

std::string_view to_string(ImportanceKind k) {
  switch (k) {
    case ImportanceKind::Gain:
      return "gain";
    case ImportanceKind::Weight:
      return "weight";
    case ImportanceKind::Cover:
      return "cover";
  }
  return "?";
}

std::map<std::string, double> feature_importance(const BoostedModel& model, ImportanceKind kind) {
  std::vector<double> raw(model.n_features, 0.0);
  bool any = false;
  for (const auto& tree : model.trees) {
    for (const auto& node : tree.nodes) {
      if (node.is_leaf()) continue;
      any = true;
      double v = 0.0;
      switch (kind) {
        case ImportanceKind::Gain:
          v = node.loss_change;
          break;
        case ImportanceKind::Weight:
          v = 1.0;
          break;
        case ImportanceKind::Cover:
          v = node.sum_hess;
          break;
      }
      raw[static_cast<std::size_t>(node.feature)] += v;
    }
  }
  std::map<std::string, double> out;
  if (!any) return out;
  double total = 0.0;
  for (double v : raw) total += v;
  if (!(total > 0.0)) return out;
  for (std::size_t f = 0; f < raw.size(); ++f) {
    if (raw[f] == 0.0) continue;
    const auto name = f < model.feature_names.size() ? model.feature_names[f] : fmt::format("f{}", f);
    out[name] += raw[f] / total;
  }
  return out;
}

std::vector<double> predict_contributions(const BoostedModel& model, std::span<const double> x, int class_index) {
  if (x.size() != model.n_features)
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("vector has {} values, model expects {}", x.size(), model.n_features));
  const std::size_t tpr = model.trees_per_round();
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= tpr)
    throw Error(ErrorCode::InvalidArgument, fmt::format("class index {} out of range", class_index));
  const double lr = model.config.learning_rate;
  const double lambda = model.config.lambda_l2;
  const auto value = [&](const TreeNode& n) { return -lr * n.sum_grad / (n.sum_hess + lambda); };

  std::vector<double> c(model.n_features + 1, 0.0);
  c.back() = model.base_score.empty() ? 0.0 : model.base_score[static_cast<std::size_t>(class_index)];
  for (std::size_t t = static_cast<std::size_t>(class_index); t < model.trees.size(); t += tpr) {
    const auto& nodes = model.trees[t].nodes;
    std::size_t i = 0;
    double current = nodes[0].is_leaf() ? nodes[0].leaf_value : value(nodes[0]);
    c.back() += current;
    while (!nodes[i].is_leaf()) {
      const auto& n = nodes[i];
      const double v = x[static_cast<std::size_t>(n.feature)];
      const bool left = std::isnan(v) ? n.default_left : v <= n.threshold;
      i = static_cast<std::size_t>(left ? n.left : n.right);
      const double next = nodes[i].is_leaf() ? nodes[i].leaf_value : value(nodes[i]);
      c[static_cast<std::size_t>(n.feature)] += next - current;
      current = next;
    }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Persistence
//
//   GLAMODEL 1
//   config <key>=<value> ...
//   n_features <d>
//   base_score <v> ...
//   fingerprint <hex or ->
//   feature <name>            (d lines, in column order)
//   meta <key>\t<value>       (sorted by key)
//   trees <count>
//   tree <n_nodes>
//   <left> <right> <feature> <threshold> <default_left> <leaf_value> <loss_change> <sum_grad> <sum_hess> <count>
//   ...
//   end

namespace {

constexpr std::string_view kModelMagic = "GLAMODEL";
constexpr int kModelVersion = 1;

std::string fd(double v) { return util::format_double(v); }

[[noreturn]] void corrupt(const std::string& file, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::CorruptModel, what, Location{file, line, ""});
}

class LineReader {
 public:
  LineReader(std::string_view text, std::string file) : text_(text), file_(std::move(file)) {}

  std::string_view next(std::string_view expecting) {
    if (pos_ >= text_.size()) corrupt(file_, line_ + 1, fmt::format("unexpected end of file, expected {}", expecting));
    auto nl = text_.find('\n', pos_);
    if (nl == std::string_view::npos) nl = text_.size();
    auto s = text_.substr(pos_, nl - pos_);
    pos_ = nl + 1;
    ++line_;
    if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
    return s;
  }

  bool at_end() const { return pos_ >= text_.size(); }
  std::size_t line() const { return line_; }
  const std::string& file() const { return file_; }

  /// Next line split as "<keyword> <rest>".
  std::string_view expect(std::string_view keyword) {
    const auto s = next(keyword);
    if (s.size() < keyword.size() || s.substr(0, keyword.size()) != keyword ||
        (s.size() > keyword.size() && s[keyword.size()] != ' ' && s[keyword.size()] != '\t'))
      corrupt(file_, line_, fmt::format("expected '{}'", keyword));
    return s.size() > keyword.size() ? s.substr(keyword.size() + 1) : std::string_view{};
  }

 private:
  std::string_view text_;
  std::string file_;
  std::size_t pos_ = 0;
  std::size_t line_ = 0;
};

double num(const LineReader& r, std::string_view s) {
  const auto v = util::parse_double(s);
  if (!v) corrupt(r.file(), r.line(), fmt::format("bad number '{}'", s));
  return *v;
}

std::int64_t integer(const LineReader& r, std::string_view s) {
  const auto v = util::parse_int(s);
  if (!v) corrupt(r.file(), r.line(), fmt::format("bad integer '{}'", s));
  return *v;
}

}  // namespace

std::string serialize_model(const BoostedModel& model) {
  const auto& c = model.config;
  std::string out;
  out += fmt::format("{} {}\n", kModelMagic, kModelVersion);
  out += fmt::format(
      "config learning_rate={} max_depth={} n_estimators={} subsample={} colsample={} n_bins={} lambda_l2={} "
      "gamma_split={} min_child_weight={} seed={} n_classes={} base_score={}\n",
      fd(c.learning_rate), c.max_depth, c.n_estimators, fd(c.subsample), fd(c.colsample), c.n_bins, fd(c.lambda_l2),
      fd(c.gamma_split), fd(c.min_child_weight), c.seed, c.n_classes, c.base_score ? fd(*c.base_score) : "auto");
  out += fmt::format("n_features {}\n", model.n_features);
  out += "base_score";
  for (double b : model.base_score) out += " " + fd(b);
  out += "\n";
  out += fmt::format("fingerprint {}\n", model.schema_fingerprint.empty() ? "-" : model.schema_fingerprint);
  for (std::size_t f = 0; f < model.n_features; ++f)
    out += fmt::format("feature {}\n", f < model.feature_names.size() ? model.feature_names[f] : fmt::format("f{}", f));
  for (const auto& [k, v] : model.metadata) out += fmt::format("meta {}\t{}\n", k, v);
  out += fmt::format("trees {}\n", model.trees.size());
  for (const auto& tree : model.trees) {
    out += fmt::format("tree {}\n", tree.nodes.size());
    for (const auto& n : tree.nodes)
      out += fmt::format("{} {} {} {} {} {} {} {} {} {}\n", n.left, n.right, n.feature, fd(n.threshold),
                         n.default_left ? 1 : 0, fd(n.leaf_value), fd(n.loss_change), fd(n.sum_grad), fd(n.sum_hess),
                         n.count);
  }
  out += "end\n";
  return out;
}

BoostedModel parse_model(std::string_view text, const std::string& file) {
  LineReader r(text, file);
  {
    const auto head = util::split_ws(r.next("header"));
    if (head.size() != 2 || head[0] != kModelMagic) throw Error(ErrorCode::CorruptModel, "not a GLAMODEL file", Location{file, 1, ""});
    if (head[1] != std::to_string(kModelVersion))
      throw Error(ErrorCode::VersionMismatch, fmt::format("model version {} is not supported (expected {})", head[1], kModelVersion),
                  Location{file, 1, ""});
  }
  BoostedModel m;
  for (const auto& kv : util::split_ws(r.expect("config"))) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) corrupt(file, r.line(), fmt::format("bad config entry '{}'", kv));
    const std::string_view key = std::string_view(kv).substr(0, eq);
    const std::string_view val = std::string_view(kv).substr(eq + 1);
    auto& c = m.config;
    if (key == "learning_rate") c.learning_rate = num(r, val);
    else if (key == "max_depth") c.max_depth = static_cast<int>(integer(r, val));
    else if (key == "n_estimators") c.n_estimators = static_cast<int>(integer(r, val));
    else if (key == "subsample") c.subsample = num(r, val);
    else if (key == "colsample") c.colsample = num(r, val);
    else if (key == "n_bins") c.n_bins = static_cast<int>(integer(r, val));
    else if (key == "lambda_l2") c.lambda_l2 = num(r, val);
    else if (key == "gamma_split") c.gamma_split = num(r, val);
    else if (key == "min_child_weight") c.min_child_weight = num(r, val);
    else if (key == "seed") c.seed = static_cast<std::uint64_t>(integer(r, val));
    else if (key == "n_classes") c.n_classes = static_cast<int>(integer(r, val));
    else if (key == "base_score") c.base_score = val == "auto" ? std::nullopt : std::optional<double>(num(r, val));
    else corrupt(file, r.line(), fmt::format("unknown config key '{}'", key));
  }
  if (m.config.n_classes < 2) corrupt(file, r.line(), "n_classes must be >= 2");
  const auto n_features = integer(r, util::trim(r.expect("n_features")));
  if (n_features < 0) corrupt(file, r.line(), "negative n_features");
  m.n_features = static_cast<std::size_t>(n_features);
  for (const auto& b : util::split_ws(r.expect("base_score"))) m.base_score.push_back(num(r, b));
  if (m.base_score.size() != m.trees_per_round()) corrupt(file, r.line(), "base_score count does not match n_classes");
  const auto fp = std::string(util::trim(r.expect("fingerprint")));
  m.schema_fingerprint = fp == "-" ? std::string{} : fp;
  for (std::size_t f = 0; f < m.n_features; ++f) m.feature_names.emplace_back(r.expect("feature"));

  std::string_view line = r.next("trees");
  while (line.substr(0, 5) == "meta ") {
    const auto body = line.substr(5);
    const auto tab = body.find('\t');
    if (tab == std::string_view::npos) corrupt(file, r.line(), "meta line without tab");
    m.metadata[std::string(body.substr(0, tab))] = std::string(body.substr(tab + 1));
    line = r.next("trees");
  }
  const auto parts = util::split_ws(line);
  if (parts.size() != 2 || parts[0] != "trees") corrupt(file, r.line(), "expected 'trees'");
  const auto n_trees = integer(r, parts[1]);
  if (n_trees < 0) corrupt(file, r.line(), "negative tree count");
  if (static_cast<std::size_t>(n_trees) % m.trees_per_round() != 0)
    corrupt(file, r.line(), "tree count is not a multiple of trees per round");

  m.trees.resize(static_cast<std::size_t>(n_trees));
  for (auto& tree : m.trees) {
    const auto n_nodes = integer(r, util::trim(r.expect("tree")));
    if (n_nodes < 1) corrupt(file, r.line(), "tree without nodes");
    tree.nodes.resize(static_cast<std::size_t>(n_nodes));
    for (std::size_t i = 0; i < tree.nodes.size(); ++i) {
      const auto f = util::split_ws(r.next("node"));
      if (f.size() != 10) corrupt(file, r.line(), fmt::format("node line has {} fields, expected 10", f.size()));
      auto& n = tree.nodes[i];
      n.left = static_cast<std::int32_t>(integer(r, f[0]));
      n.right = static_cast<std::int32_t>(integer(r, f[1]));
      n.feature = static_cast<std::int32_t>(integer(r, f[2]));
      n.threshold = num(r, f[3]);
      n.default_left = integer(r, f[4]) != 0;
      n.leaf_value = num(r, f[5]);
      n.loss_change = num(r, f[6]);
      n.sum_grad = num(r, f[7]);
      n.sum_hess = num(r, f[8]);
      n.count = static_cast<std::uint64_t>(integer(r, f[9]));
      if (!n.is_leaf()) {
        const auto size = static_cast<std::int64_t>(tree.nodes.size());
        // Children always follow their parent, which also rules out cycles.
        if (n.left <= static_cast<std::int64_t>(i) || n.right <= static_cast<std::int64_t>(i) || n.left >= size ||
            n.right >= size)
          corrupt(file, r.line(), "child index out of range");
        if (n.feature < 0 || static_cast<std::size_t>(n.feature) >= m.n_features)
          corrupt(file, r.line(), "split feature out of range");
      } else if (!std::isfinite(n.leaf_value)) {
        corrupt(file, r.line(), "non-finite leaf value");
      }
    }
  }
  if (util::trim(r.next("end")) != "end") corrupt(file, r.line(), "expected 'end'");
  return m;
}

void save_model(const BoostedModel& model, const std::string& path) { util::write_file(path, serialize_model(model)); }

BoostedModel load_model(const std::string& path, const std::string& expected_fingerprint, FingerprintCheck check) {
  auto model = parse_model(util::read_file(path), path);
  if (check != FingerprintCheck::Skip && !expected_fingerprint.empty() &&
      model.schema_fingerprint != expected_fingerprint) {
    const auto msg = fmt::format("model was trained against schema {} but schema {} was supplied",
                                 model.schema_fingerprint.empty() ? "-" : model.schema_fingerprint,
                                 expected_fingerprint);
    if (check == FingerprintCheck::Error) throw Error(ErrorCode::FingerprintMismatch, msg, Location{path, 0, ""});
    spdlog::warn("FingerprintMismatch: {}", msg);
  }
  return model;
}

}  // namespace gbfuse
