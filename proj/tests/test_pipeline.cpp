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
#include <fstream>
#include <functional>

#include "gbfuse/pipeline.hpp"
#include "gbfuse/synth.hpp"
#include "support/fixtures.hpp"

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

const SynthDataset& synth() {
  static const SynthDataset s = [] {
    SynthOptions o;
    o.n = 120;
    o.seed = 3;
    return generate_synthetic(o);
  }();
  return s;
}

EmbeddingInputs inputs() {
  EmbeddingInputs in;
  in.text = &synth().text;
  in.image = &synth().image;
  return in;
}

}  // namespace

TEST_CASE("dataset accessors and subsets") {
  const auto& d = synth().data;
  REQUIRE(d.size() == 120);
  const auto labels = d.labels();
  CHECK(labels.size() == 120);
  for (int l : labels) CHECK((l == 0 || l == 1));
  const std::vector<std::size_t> rows{5, 2, 9};
  const auto sub = d.subset(rows);
  REQUIRE(sub.size() == 3);
  CHECK(sub.id(0) == d.id(5));
  CHECK(sub.id(2) == d.id(9));
  CHECK(sub.narrative(1) == d.narrative(2));
  CHECK(sub.image_key(1) == d.image_key(2));
}

TEST_CASE("encode_dataset dimensions follow the mask") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  const auto text_dim = synth().text.dim();
  const auto image_dim = synth().image.dim();
  struct Case {
    const char* mask;
    std::size_t dim;
  };
  const Case cases[] = {
      {"factor", schema.struct_dim()},
      {"risk", schema.risk_dim()},
      {"sure", schema.human_dim() - schema.risk_dim()},
      {"words", text_dim},
      {"image", image_dim},
      {"all", text_dim + image_dim + schema.struct_dim() + schema.human_dim()},
  };
  for (const auto& c : cases) {
    CAPTURE(c.mask);
    const auto m = encode_dataset(d, schema, ModalityMask::parse(c.mask), inputs());
    CHECK(m.rows() == d.size());
    CHECK(m.dim() == c.dim);
    CHECK(m.names.size() == c.dim);
    CHECK(m.fingerprint == schema.fingerprint());
    std::size_t offset = 0;
    for (const auto& s : m.layout) {
      CHECK(s.offset == offset);
      offset += s.width;
    }
    CHECK(offset == m.dim());
    CHECK(m.ids[7] == d.id(7));
    CHECK(m.labels == d.labels());
  }
  const auto all = encode_dataset(d, schema, ModalityMask::all(), inputs());
  const auto& text = synth().text.at(d.id(4));
  for (const auto& s : all.layout) {
    if (s.modality != Modality::Text) continue;
    for (std::size_t k = 0; k < s.width; ++k) CHECK(all.x.at(4, s.offset + k) == text[k]);
    CHECK(all.names[s.offset] == "text:0");
  }
}

TEST_CASE("encoding errors") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  CHECK(code_of([&] { encode_dataset(d, schema, ModalityMask{}, inputs()); }) == ErrorCode::EmptyFusion);
  CHECK(code_of([&] { encode_dataset(d, schema, ModalityMask::parse("words"), {}); }) ==
        ErrorCode::MissingModality);
  CHECK(code_of([&] { encode_dataset(d, schema, ModalityMask::parse("image"), {}); }) ==
        ErrorCode::MissingModality);

  EmbeddingTable partial(synth().text.dim());
  for (std::size_t i = 2; i < d.size(); ++i) partial.insert(d.id(i), synth().text.at(d.id(i)));
  EmbeddingInputs in;
  in.text = &partial;
  try {
    encode_dataset(d, schema, ModalityMask::parse("words"), in);
    FAIL("expected MissingEmbedding");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingEmbedding);
    const std::string what = e.what();
    CHECK(what.find(d.id(0)) != std::string::npos);
    CHECK(what.find(d.id(1)) != std::string::npos);
  }

  SynthOptions o;
  o.n = 30;
  o.kind = SourceKind::Biomarker;
  const auto oct = generate_synthetic(o);
  const auto oct_schema = fit_schema(oct.data, ClassMode::Binary);
  CHECK(code_of([&] { encode_dataset(d, oct_schema, ModalityMask::parse("factor"), {}); }) ==
        ErrorCode::SchemaMismatch);
}

TEST_CASE("stand-in text encodes narratives without a table") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  EmbeddingInputs in;
  in.stand_in_text = true;
  in.text_dim = 16;
  const auto m = encode_dataset(d, schema, ModalityMask::parse("words"), in);
  CHECK(m.dim() == 16);
  const auto expected = stand_in_text_encoder(d.narrative(3), 16, in.text_seed);
  for (std::size_t k = 0; k < 16; ++k) CHECK(m.x.at(3, k) == expected[k]);
}

TEST_CASE("layout strings round-trip") {
  const std::vector<Segment> layout{{Modality::Text, 0, 64}, {Modality::Struct, 64, 12}, {Modality::Human, 76, 7}};
  const auto s = format_layout(layout);
  CHECK(s == "text:0:64,struct:64:12,human:76:7");
  CHECK(parse_layout(s) == layout);
  CHECK(parse_layout("").empty());
  CHECK(code_of([] { parse_layout("text:0"); }) == ErrorCode::InvalidArgument);
  CHECK(code_of([] { parse_layout("sound:0:3"); }) == ErrorCode::InvalidArgument);
  CHECK(embedding_slot_name(Modality::Image, 3) == "img:3");
}

TEST_CASE("GLAMAT round-trip and errors") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  auto m = encode_dataset(d, schema, ModalityMask::parse("factor+risk+sure"), inputs());
  m.labels[1] = -1;
  const auto text = serialize_matrix(m);
  const auto back = parse_matrix(text);
  CHECK(back.ids == m.ids);
  CHECK(back.labels == m.labels);
  CHECK(back.names == m.names);
  CHECK(back.layout == m.layout);
  CHECK(back.fingerprint == m.fingerprint);
  CHECK(back.mask == m.mask);
  REQUIRE(back.x.values.size() == m.x.values.size());
  for (std::size_t i = 0; i < m.x.values.size(); ++i) {
    const double a = m.x.values[i], b = back.x.values[i];
    CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
  }
  CHECK(serialize_matrix(back) == text);

  testing::TempDir dir("glamat");
  write_matrix(m, dir.file("m.glamat"));
  CHECK(serialize_matrix(read_matrix(dir.file("m.glamat"))) == text);

  CHECK(code_of([] { parse_matrix("GLAMAT 2 0 0\nfingerprint -\nmask factor\nlayout \nnames\n"); }) ==
        ErrorCode::VersionMismatch);
  CHECK(code_of([] { parse_matrix("hello\n"); }) == ErrorCode::BadHeader);
  CHECK(code_of([] { parse_matrix("GLAMAT 1 2 1\nfingerprint -\nmask factor\nlayout struct:0:1\nnames\ta\nr1\t0\t1\n"); }) ==
        ErrorCode::BadHeader);
  CHECK(code_of([] { parse_matrix("GLAMAT 1 1 2\nfingerprint -\nmask factor\nlayout struct:0:2\nnames\ta\n"); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([] { parse_matrix("GLAMAT 1 1 1\nfingerprint -\nmask factor\nlayout struct:0:1\nnames\ta\nr1\t0\t1 2\n"); }) ==
        ErrorCode::DimensionMismatch);
  CHECK(code_of([] { parse_matrix("GLAMAT 1 1 1\nfingerprint -\nmask factor\nlayout struct:0:1\nnames\ta\nr1\tx\t1\n"); }) ==
        ErrorCode::LabelOutOfRange);
}

TEST_CASE("labeled rows skip unlabeled records") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  auto m = encode_dataset(d, schema, ModalityMask::parse("factor"), inputs());
  m.labels[0] = -1;
  m.labels[10] = -1;
  const auto v = labeled_rows(m);
  CHECK(v.rows.size() == m.rows() - 2);
  CHECK(v.rows.front() == 1);
  CHECK(v.x.rows == v.rows.size());
  CHECK(v.x.cols == m.dim());
  for (std::size_t i = 0; i < v.rows.size(); i += 13) {
    CHECK(v.labels[i] == m.labels[v.rows[i]]);
    for (std::size_t c = 0; c < m.dim(); ++c) {
      const double a = v.x.at(i, c), b = m.x.at(v.rows[i], c);
      CHECK(((std::isnan(a) && std::isnan(b)) || a == b));
    }
  }
  const std::vector<std::size_t> pick{3, 4};
  const auto s = m.select(pick);
  CHECK(s.ids == std::vector<std::string>{m.ids[3], m.ids[4]});
  CHECK(s.layout == m.layout);
}

TEST_CASE("stamp_model records how inputs were built") {
  const auto& d = synth().data;
  const auto schema = fit_schema(d, ClassMode::Binary);
  EmbeddingInputs in;
  in.stand_in_text = true;
  in.text_dim = 8;
  const auto m = encode_dataset(d, schema, ModalityMask::parse("words+factor"), in);
  BoostedModel model;
  stamp_model(model, m, in);
  CHECK(model.feature_names == m.names);
  CHECK(model.schema_fingerprint == schema.fingerprint());
  CHECK(model.metadata.at("mask") == "words+factor");
  CHECK(model.metadata.at("layout") == format_layout(m.layout));
  CHECK(model.metadata.at("text_source") == "stand-in dim=8 seed=42");
}

TEST_CASE("load_dataset derives labels and reads both formats") {
  testing::TempDir dir("load");
  const auto& d = synth().data;
  {
    std::ofstream f(dir.file("c.txt"));
    f << serialize_clinical_file(d.clinical);
  }
  const auto back = load_dataset(dir.file("c.txt"), SourceKind::Clinical);
  CHECK(back.clinical == d.clinical);

  SynthOptions o;
  o.n = 25;
  o.kind = SourceKind::Biomarker;
  const auto oct = generate_synthetic(o);
  {
    std::ofstream f(dir.file("t.tsv"));
    f << serialize_biomarker_table(oct.data.oct);
  }
  const auto t = load_dataset(dir.file("t.tsv"), SourceKind::Biomarker);
  CHECK(t.size() == 25);
  CHECK(t.labels() == oct.data.labels());
  CHECK(code_of([&] { load_dataset(dir.file("absent.txt"), SourceKind::Clinical); }) == ErrorCode::Io);
}
