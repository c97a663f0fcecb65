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

// Per-instance embedding vectors (image and text), the GLAEMB v1 text format,
// mean pooling, and deterministic stand-in encoders.
//
// GLAEMB v1:
//   GLAEMB 1 <count> <dim>
//   <id>\t<v1> <v2> ... <vdim>
// UTF-8, LF line endings; ids contain no tab.

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gbfuse/error.hpp"

namespace gbfuse {

inline constexpr std::size_t kDefaultTextDim = 64;
inline constexpr std::size_t kDefaultImageDim = 128;
inline constexpr std::uint64_t kDefaultEncoderSeed = 42;

class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim = 1, std::string provenance = {});

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return entries_.size(); }
  const std::string& provenance() const { return provenance_; }
  void set_provenance(std::string p) { provenance_ = std::move(p); }

  /// Throws DimensionMismatch, DuplicateId or NonFiniteValue.
  void insert(const std::string& id, std::vector<double> vector);
  bool contains(const std::string& id) const { return entries_.count(id) != 0; }
  /// Throws MissingEmbedding.
  const std::vector<double>& at(const std::string& id) const;

  /// Entries in id order.
  const std::map<std::string, std::vector<double>>& entries() const { return entries_; }

  bool operator==(const EmbeddingTable& o) const { return dim_ == o.dim_ && entries_ == o.entries_; }

 private:
  std::size_t dim_;
  std::string provenance_;
  std::map<std::string, std::vector<double>> entries_;
};

EmbeddingTable parse_embedding_table(std::string_view text, const std::string& file = {});
std::string serialize_embedding_table(const EmbeddingTable& table);

EmbeddingTable read_embedding_table(const std::string& path);
void write_embedding_table(const EmbeddingTable& table, const std::string& path);

/// Component-wise arithmetic mean. Throws EmptySequence / RaggedInput.
std::vector<double> mean_pool(std::span<const std::vector<double>> token_vectors);

/// Lowercase, punctuation to spaces, whitespace split.
std::vector<std::string> tokenize_text(std::string_view text);

/// Seeded pseudo-random unit vector for one token.
std::vector<double> token_vector(std::string_view token, std::size_t dim, std::uint64_t seed);

/// Mean of token_vector over tokenize_text(text); zero vector for empty text.
std::vector<double> stand_in_text_encoder(std::string_view text, std::size_t dim,
                                          std::uint64_t seed = kDefaultEncoderSeed);

struct GrayImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pixels;  // row-major

  double at(std::size_t r, std::size_t c) const { return pixels[r * cols + c]; }
  GrayImage flipped_horizontally() const;
};

/// Number of raw features produced by image_raw_features.
inline constexpr std::size_t kImageGrid = 4;
inline constexpr std::size_t kImageRawFeatures = kImageGrid * kImageGrid * 2 + 4;

/// Block means and variances over a 4x4 grid (row-major, means first), then
/// mean |dx|, mean |dy|, var dx, var dy of the forward differences.
std::vector<double> image_raw_features(const GrayImage& image);

/// image_raw_features projected to `dim` through a fixed seeded matrix.
std::vector<double> stand_in_image_encoder(const GrayImage& image, std::size_t dim,
                                           std::uint64_t seed = kDefaultEncoderSeed);

}  // namespace gbfuse
