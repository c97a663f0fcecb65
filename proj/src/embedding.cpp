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

#include "gbfuse/embedding.hpp"

#include <cctype>
#include <cmath>

#include <fmt/format.h>

#include "gbfuse/util.hpp"

namespace gbfuse {

EmbeddingTable::EmbeddingTable(std::size_t dim, std::string provenance)
    : dim_(dim), provenance_(std::move(provenance)) {
  if (dim_ == 0) throw Error(ErrorCode::InvalidArgument, "embedding dim must be positive");
}

void EmbeddingTable::insert(const std::string& id, std::vector<double> vector) {
  if (id.empty() || id.find('\t') != std::string::npos || id.find('\n') != std::string::npos)
    throw Error(ErrorCode::InvalidArgument, "embedding id must be non-empty without tab/newline",
                Location{"", 0, id});
  if (vector.size() != dim_)
    throw Error(ErrorCode::DimensionMismatch,
                fmt::format("vector has {} values, table dim is {}", vector.size(), dim_), Location{"", 0, id});
  for (double v : vector)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "non-finite component", Location{"", 0, id});
  if (!entries_.emplace(id, std::move(vector)).second)
    throw Error(ErrorCode::DuplicateId, "duplicate embedding id", Location{"", 0, id});
}

const std::vector<double>& EmbeddingTable::at(const std::string& id) const {
  const auto it = entries_.find(id);
  if (it == entries_.end())
    throw Error(ErrorCode::MissingEmbedding, fmt::format("no embedding for '{}'", id), Location{provenance_, 0, id});
  return it->second;
}

EmbeddingTable parse_embedding_table(std::string_view text, const std::string& file) {
  const auto lines = util::split(text, '\n');
  if (lines.empty() || util::trim(lines[0]).empty())
    throw Error(ErrorCode::BadHeader, "empty file", Location{file, 1, ""});
  const auto head = util::split_ws(lines[0]);
  if (head.size() != 4 || head[0] != "GLAEMB")
    throw Error(ErrorCode::BadHeader, "expected 'GLAEMB 1 <count> <dim>'", Location{file, 1, ""});
  if (head[1] != "1")
    throw Error(ErrorCode::BadHeader, fmt::format("unsupported GLAEMB version {}", head[1]), Location{file, 1, ""});
  const auto count = util::parse_int(head[2]);
  const auto dim = util::parse_int(head[3]);
  if (!count || !dim || *count < 0 || *dim <= 0)
    throw Error(ErrorCode::BadHeader, "count and dim must be non-negative / positive integers",
                Location{file, 1, ""});

  EmbeddingTable table(static_cast<std::size_t>(*dim), file);
  std::size_t rows = 0;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty()) {
      if (i + 1 == lines.size()) break;  // trailing newline
      throw Error(ErrorCode::BadHeader, "blank line inside table", Location{file, i + 1, ""});
    }
    const auto tab = line.find('\t');
    if (tab == std::string_view::npos || tab == 0)
      throw Error(ErrorCode::BadHeader, "expected '<id>\\t<values>'", Location{file, i + 1, ""});
    const std::string id(line.substr(0, tab));
    const Location where{file, i + 1, id};
    const auto tok = util::split_ws(line.substr(tab + 1));
    if (tok.size() != table.dim())
      throw Error(ErrorCode::DimensionMismatch,
                  fmt::format("{} values under dim {}", tok.size(), table.dim()), where);
    std::vector<double> v(tok.size());
    for (std::size_t k = 0; k < tok.size(); ++k) {
      const auto d = util::parse_double(tok[k]);
      if (!d) throw Error(ErrorCode::BadHeader, fmt::format("'{}' is not a number", tok[k]), where);
      if (!std::isfinite(*d)) throw Error(ErrorCode::NonFiniteValue, "non-finite component", where);
      v[k] = *d;
    }
    if (table.contains(id)) throw Error(ErrorCode::DuplicateId, "duplicate embedding id", where);
    table.insert(id, std::move(v));
    ++rows;
  }
  if (rows != static_cast<std::size_t>(*count))
    throw Error(ErrorCode::BadHeader, fmt::format("header promises {} rows, file has {}", *count, rows),
                Location{file, 1, ""});
  return table;
}

std::string serialize_embedding_table(const EmbeddingTable& table) {
  std::string out = fmt::format("GLAEMB 1 {} {}\n", table.size(), table.dim());
  for (const auto& [id, v] : table.entries()) {
    out += id;
    out += '\t';
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k > 0) out += ' ';
      out += util::format_double(v[k]);
    }
    out += '\n';
  }
  return out;
}

EmbeddingTable read_embedding_table(const std::string& path) {
  return parse_embedding_table(util::read_file(path), path);
}

void write_embedding_table(const EmbeddingTable& table, const std::string& path) {
  util::write_file(path, serialize_embedding_table(table));
}

std::vector<double> mean_pool(std::span<const std::vector<double>> token_vectors) {
  if (token_vectors.empty()) throw Error(ErrorCode::EmptySequence, "mean_pool of zero vectors");
  const std::size_t dim = token_vectors.front().size();
  std::vector<double> out(dim, 0.0);
  for (const auto& v : token_vectors) {
    if (v.size() != dim) throw Error(ErrorCode::RaggedInput, "token vectors differ in length");
    for (std::size_t k = 0; k < dim; ++k) out[k] += v[k];
  }
  const double n = static_cast<double>(token_vectors.size());
  for (auto& x : out) x /= n;
  return out;
}

// ---------------------------------------------------------------------------
// Stand-in encoders

std::vector<std::string> tokenize_text(std::string_view text) {
  std::string norm;
  norm.reserve(text.size());
  for (char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::ispunct(u)) {
      norm.push_back(' ');
    } else {
      norm.push_back(static_cast<char>(std::tolower(u)));
    }
  }
  return util::split_ws(norm);
}

std::vector<double> token_vector(std::string_view token, std::size_t dim, std::uint64_t seed) {
  std::uint64_t state = util::fnv1a(token) ^ (seed * 0x9e3779b97f4a7c15ULL);
  std::vector<double> v(dim);
  double norm2 = 0.0;
  for (auto& x : v) {
    x = 2.0 * util::unit_double(util::splitmix64(state)) - 1.0;
    norm2 += x * x;
  }
  const double norm = std::sqrt(norm2);
  if (norm > 0.0)
    for (auto& x : v) x /= norm;
  return v;
}

std::vector<double> stand_in_text_encoder(std::string_view text, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  const auto tokens = tokenize_text(text);
  if (tokens.empty()) return std::vector<double>(dim, 0.0);
  std::vector<std::vector<double>> vectors;
  vectors.reserve(tokens.size());
  for (const auto& t : tokens) vectors.push_back(token_vector(t, dim, seed));
  return mean_pool(vectors);
}

GrayImage GrayImage::flipped_horizontally() const {
  GrayImage out{rows, cols, std::vector<double>(pixels.size())};
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.pixels[r * cols + c] = at(r, cols - 1 - c);
  return out;
}

std::vector<double> image_raw_features(const GrayImage& image) {
  if (image.rows == 0 || image.cols == 0 || image.pixels.size() != image.rows * image.cols)
    throw Error(ErrorCode::EmptyImage, "image has no pixels or inconsistent size");
  std::vector<double> out;
  out.reserve(kImageRawFeatures);
  std::vector<double> variances;
  for (std::size_t gr = 0; gr < kImageGrid; ++gr) {
    for (std::size_t gc = 0; gc < kImageGrid; ++gc) {
      // Cell bounds; small images reuse edge pixels so every cell is non-empty.
      std::size_t r0 = gr * image.rows / kImageGrid, r1 = (gr + 1) * image.rows / kImageGrid;
      std::size_t c0 = gc * image.cols / kImageGrid, c1 = (gc + 1) * image.cols / kImageGrid;
      if (r1 <= r0) r1 = std::min(image.rows, r0 + 1), r0 = r1 - 1;
      if (c1 <= c0) c1 = std::min(image.cols, c0 + 1), c0 = c1 - 1;
      double sum = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) sum += image.at(r, c);
      const double n = static_cast<double>((r1 - r0) * (c1 - c0));
      const double mean = sum / n;
      double ss = 0.0;
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) ss += (image.at(r, c) - mean) * (image.at(r, c) - mean);
      out.push_back(mean);
      variances.push_back(ss / n);
    }
  }
  out.insert(out.end(), variances.begin(), variances.end());

  auto moments = [](const std::vector<double>& d) -> std::pair<double, double> {
    if (d.empty()) return {0.0, 0.0};
    double s = 0.0, sa = 0.0;
    for (double x : d) s += x, sa += std::fabs(x);
    const double mean = s / static_cast<double>(d.size());
    double ss = 0.0;
    for (double x : d) ss += (x - mean) * (x - mean);
    return {sa / static_cast<double>(d.size()), ss / static_cast<double>(d.size())};
  };
  std::vector<double> dx, dy;
  for (std::size_t r = 0; r < image.rows; ++r)
    for (std::size_t c = 0; c + 1 < image.cols; ++c) dx.push_back(image.at(r, c + 1) - image.at(r, c));
  for (std::size_t r = 0; r + 1 < image.rows; ++r)
    for (std::size_t c = 0; c < image.cols; ++c) dy.push_back(image.at(r + 1, c) - image.at(r, c));
  const auto [adx, vdx] = moments(dx);
  const auto [ady, vdy] = moments(dy);
  out.push_back(adx);
  out.push_back(ady);
  out.push_back(vdx);
  out.push_back(vdy);
  return out;
}

std::vector<double> stand_in_image_encoder(const GrayImage& image, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dim must be >= 1");
  const auto raw = image_raw_features(image);
  std::uint64_t state = seed ^ 0x696d672d70726f6aULL;
  const double scale = 1.0 / std::sqrt(static_cast<double>(raw.size()));
  std::vector<double> out(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    double acc = 0.0;
    for (double x : raw) acc += (2.0 * util::unit_double(util::splitmix64(state)) - 1.0) * scale * x;
    out[i] = acc;
  }
  return out;
}

}  // namespace gbfuse
