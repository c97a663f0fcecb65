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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "gbfuse/embedding.hpp"
#include "gbfuse/synth.hpp"

using namespace gbfuse;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("GLAEMB tables round-trip exactly") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  EmbeddingTable t(7);
  for (int i = 0; i < 100; ++i) {
    std::vector<double> v(7);
    for (auto& x : v) x = normal(rng) * std::pow(10.0, static_cast<int>(rng() % 9) - 4);
    t.insert("id" + std::to_string(i), v);
  }
  const auto back = parse_embedding_table(serialize_embedding_table(t));
  CHECK(back == t);
  CHECK(back.size() == 100);
  CHECK(back.dim() == 7);
}

TEST_CASE("GLAEMB header and row errors") {
  CHECK(code_of([] { parse_embedding_table(""); }) == ErrorCode::BadHeader);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 2 1 2\na\t1 2\n"); }) == ErrorCode::BadHeader);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 1 2 2\na\t1 2\n"); }) == ErrorCode::BadHeader);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 1 1 3\na\t1 2\n"); }) == ErrorCode::DimensionMismatch);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 1 2 2\na\t1 2\na\t3 4\n"); }) == ErrorCode::DuplicateId);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 1 1 2\na\t1 nan\n"); }) == ErrorCode::NonFiniteValue);
  CHECK(code_of([] { parse_embedding_table("GLAEMB 1 1 2\na\t1 x\n"); }) == ErrorCode::BadHeader);
  EmbeddingTable t(2, "table.glaemb");
  CHECK(code_of([&] { t.insert("a", {1.0}); }) == ErrorCode::DimensionMismatch);
  try {
    t.at("nobody");
    FAIL("expected MissingEmbedding");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingEmbedding);
    CHECK(e.where().field == "nobody");
  }
}

TEST_CASE("mean pooling") {
  const std::vector<std::vector<double>> v = {{1, 2}, {3, 6}};
  CHECK(mean_pool(v) == std::vector<double>{2, 4});
  CHECK(code_of([] { mean_pool(std::span<const std::vector<double>>()); }) == ErrorCode::EmptySequence);
  const std::vector<std::vector<double>> ragged = {{1, 2}, {3}};
  CHECK(code_of([&] { mean_pool(ragged); }) == ErrorCode::RaggedInput);
}

TEST_CASE("stand-in text encoder is deterministic and mean-pooled") {
  CHECK(tokenize_text("Thin, PALE rim!") == std::vector<std::string>{"thin", "pale", "rim"});
  const auto a = stand_in_text_encoder("thin pale rim", 16);
  CHECK(a == stand_in_text_encoder("Thin, pale  rim.", 16));
  CHECK(a != stand_in_text_encoder("thin pale rim", 16, 7));
  const std::vector<std::vector<double>> tokens = {token_vector("thin", 16, kDefaultEncoderSeed),
                                                   token_vector("pale", 16, kDefaultEncoderSeed),
                                                   token_vector("rim", 16, kDefaultEncoderSeed)};
  const auto pooled = mean_pool(tokens);
  for (std::size_t k = 0; k < 16; ++k) CHECK(a[k] == doctest::Approx(pooled[k]).epsilon(1e-12));
  CHECK(norm(tokens[0]) == doctest::Approx(1.0));
  CHECK(stand_in_text_encoder("", 8) == std::vector<double>(8, 0.0));
}

TEST_CASE("stand-in image encoder") {
  std::mt19937_64 rng(2);
  const auto small_cup = render_fundus(24, 3.0, rng);
  const auto big_cup = render_fundus(24, 7.0, rng);
  CHECK(image_raw_features(small_cup).size() == kImageRawFeatures);
  const auto a = stand_in_image_encoder(small_cup, 32);
  CHECK(a.size() == 32);
  CHECK(a == stand_in_image_encoder(small_cup, 32));
  CHECK(a != stand_in_image_encoder(big_cup, 32));
  CHECK(code_of([] { image_raw_features(GrayImage{}); }) == ErrorCode::EmptyImage);
  const auto flipped = small_cup.flipped_horizontally();
  CHECK(flipped.at(3, 0) == small_cup.at(3, 23));
}
