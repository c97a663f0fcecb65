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

#include <random>

#include "gbfuse/records.hpp"
#include "gbfuse/util.hpp"
#include "support/fixtures.hpp"

using namespace gbfuse;

namespace {

constexpr const char* kRecord = R"([record]
id = p0001
optic_disc_size = Large
cup_to_disc_ratio = 0.8
isnt_rule_followed = false
rim_pallor = true
rim_thinning = TRUE
rim_color = pale
neuroretinal_rim = thin inferior rim
additional_observations = null
glaucoma_risk_assessment = High Risk
confidence_level = 0.9
image_ref = fundus/p0001.png
)";

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::Io;
}

}  // namespace

TEST_CASE("clinical record fields parse and normalize") {
  const auto r = parse_clinical_record(kRecord);
  CHECK(r.id == "p0001");
  CHECK(r.fundus.optic_disc_size == "large");
  CHECK(r.fundus.cup_to_disc_ratio == 0.8);
  CHECK(r.fundus.isnt_rule_followed == false);
  CHECK(r.fundus.rim_pallor == true);
  CHECK(r.fundus.rim_thinning == true);
  CHECK_FALSE(r.fundus.notching.has_value());
  CHECK_FALSE(r.fundus.additional_observations.has_value());
  REQUIRE(r.judgment.has_value());
  CHECK(r.judgment->risk_assessment == "high risk");
  CHECK(r.judgment->confidence_level == 0.9);
  CHECK(r.image_ref == "fundus/p0001.png");
  CHECK_FALSE(r.label.has_value());
  CHECK(r.narrative().find("thin inferior rim") != std::string::npos);
}

TEST_CASE("record errors carry line and field") {
  std::string bad = kRecord;
  bad.replace(bad.find("0.8"), 3, "1.7");
  try {
    parse_clinical_record(bad, Location{"recs.txt", 10, ""});
    FAIL("expected OutOfRange");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::OutOfRange);
    CHECK(e.where().file == "recs.txt");
    CHECK(e.where().line == 13);
    CHECK(e.where().field == "cup_to_disc_ratio");
  }
  CHECK(code_of([] { parse_clinical_record("[record]\nid = a\ncolour = red\n"); }) == ErrorCode::UnknownField);
  CHECK(code_of([] { parse_clinical_record("[record]\nid = a\nnotching = maybe\n"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { parse_clinical_record("[record]\nid = a\nconfidence_level = -0.1\n"); }) ==
        ErrorCode::OutOfRange);
  CHECK(code_of([] { parse_clinical_record("[record]\noptic_disc_size = small\n"); }) == ErrorCode::MalformedRecord);
  CHECK(code_of([] { parse_clinical_record("[record]\nid = a\noptic_disc_size = huge\n"); }) ==
        ErrorCode::OutOfRange);
}

TEST_CASE("clinical files collect errors and keep good records") {
  const std::string text = std::string(kRecord) + "\n[record]\nid = p0002\nrim_pallor = perhaps\n\n[record]\nid = p0003\n";
  const auto r = parse_clinical_file(text, "f.txt", true);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[1].id == "p0003");
  REQUIRE(r.errors.size() == 1);
  CHECK(r.errors[0].where().field == "rim_pallor");
  CHECK(r.errors[0].where().line == 17);
  CHECK_THROWS_AS(parse_clinical_file(text, "f.txt", false), Error);
  CHECK(code_of([] { parse_clinical_file("[record]\nid = a\n\n[record]\nid = a\n", "f"); }) == ErrorCode::DuplicateId);
}

TEST_CASE("serialize/parse round-trips random records") {
  std::mt19937_64 rng(3);
  for (std::size_t i = 0; i < 500; ++i) {
    const auto r = testing::random_clinical_record(rng, i, false);
    CHECK(parse_clinical_record(serialize_clinical_record(r)) == r);
  }
}

TEST_CASE("status classification respects direction and edges") {
  const BiomarkerSpec higher{"AR", "RNFL", "um", Direction::HigherIsHealthier, 80, 70};
  CHECK(classify_status(higher, 80) == Status::WithinNormal);
  CHECK(classify_status(higher, 79.9) == Status::Borderline);
  CHECK(classify_status(higher, 70) == Status::Borderline);
  CHECK(classify_status(higher, 69.9) == Status::OutsideNormal);
  const BiomarkerSpec lower{"A-O", "ONH", "ratio", Direction::LowerIsHealthier, 0.6, 0.7};
  CHECK(classify_status(lower, 0.6) == Status::WithinNormal);
  CHECK(classify_status(lower, 0.65) == Status::Borderline);
  CHECK(classify_status(lower, 0.71) == Status::OutsideNormal);
  const BiomarkerSpec magnitude{"I-ER", "RNFL", "um", Direction::SmallerMagnitudeIsHealthier, 10, 20};
  CHECK(classify_status(magnitude, -10) == Status::WithinNormal);
  CHECK(classify_status(magnitude, -15) == Status::Borderline);
  CHECK(classify_status(magnitude, 25) == Status::OutsideNormal);
  CHECK(status_code(Status::WithinNormal) == 1.0);
  CHECK(status_code(Status::Borderline) == 0.5);
  CHECK(status_code(Status::OutsideNormal) == 0.0);
  CHECK(code_of([] { classify_status("XYZ", 1.0, default_catalog()); }) == ErrorCode::MissingBounds);
}

TEST_CASE("bundled catalog matches the data file and round-trips") {
  const auto file = util::read_file(std::string(GBFUSE_DATA_DIR) + "/biomarker_catalog.txt");
  CHECK(file == default_catalog_text());
  const auto& c = default_catalog();
  CHECK(c.specs().size() >= 10);
  const auto again = parse_catalog(serialize_catalog(c));
  REQUIRE(again.specs().size() == c.specs().size());
  for (std::size_t i = 0; i < c.specs().size(); ++i) {
    CHECK(again.specs()[i].name == c.specs()[i].name);
    CHECK(again.specs()[i].normal_edge == c.specs()[i].normal_edge);
    CHECK(again.specs()[i].borderline_edge == c.specs()[i].borderline_edge);
  }
}

TEST_CASE("biomarker tables: statuses, N/A, and errors") {
  const std::string table =
      "biomarker\tod\tos\tie\tstatus_od\tstatus_os\n"
      "subject s1 label=1\n"
      "AR\t65\t82\t-17\t-\t-\n"
      "I-ER\t-5\t-7\tN/A\t-\t-\n";
  const auto r = parse_biomarker_table(table, default_catalog());
  REQUIRE(r.records.size() == 1);
  const auto& m = r.records[0].measurements;
  REQUIRE(m.size() == 2);
  CHECK(m[0].status_od == Status::OutsideNormal);
  CHECK(m[0].status_os == Status::WithinNormal);
  CHECK(m[0].ie == -17.0);
  CHECK_FALSE(m[1].ie.has_value());
  CHECK(r.records[0].label == Label{1, LabelSource::Annotated});

  std::string bad_ie = table;
  bad_ie.replace(bad_ie.find("-17"), 3, "-12");
  CHECK(code_of([&] { parse_biomarker_table(bad_ie, default_catalog()); }) == ErrorCode::InconsistentIE);
  std::string unknown = table;
  unknown.replace(unknown.find("AR"), 2, "ZZ");
  CHECK(code_of([&] { parse_biomarker_table(unknown, default_catalog()); }) == ErrorCode::UnknownBiomarker);
  CHECK(code_of([] { parse_biomarker_table("AR\t1\t2\t-1\n", default_catalog()); }) == ErrorCode::MalformedTable);
}

TEST_CASE("biomarker tables round-trip") {
  std::mt19937_64 rng(5);
  std::vector<OctBiomarkerRecord> recs;
  for (std::size_t i = 0; i < 50; ++i) recs.push_back(testing::random_oct_record(rng, i, default_catalog()));
  const auto back = parse_biomarker_table(serialize_biomarker_table(recs), default_catalog());
  REQUIRE(back.records.size() == recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(back.records[i].id == recs[i].id);
    CHECK(back.records[i].label == recs[i].label);
    REQUIRE(back.records[i].measurements.size() == recs[i].measurements.size());
    for (std::size_t k = 0; k < recs[i].measurements.size(); ++k) {
      CHECK(back.records[i].measurements[k].od == recs[i].measurements[k].od);
      CHECK(back.records[i].measurements[k].status_os == recs[i].measurements[k].status_os);
    }
  }
}

TEST_CASE("labels derive from the risk scale; explicit labels win") {
  const auto policy = default_label_policy();
  CHECK(derive_label(HumanJudgment{"high risk", 0.5}, policy).class_index == 1);
  CHECK(derive_label(HumanJudgment{"very high risk", std::nullopt}, policy).class_index == 1);
  CHECK(derive_label(HumanJudgment{"moderate risk", 0.5}, policy).class_index == 0);
  CHECK(derive_label(HumanJudgment{"Low Risk", 0.5}, policy).source == LabelSource::DerivedFromRisk);
  CHECK(derive_label(HumanJudgment{"moderate risk", 0.5}, threshold_label_policy("moderate risk")).class_index == 1);
  CHECK(code_of([&] { derive_label(HumanJudgment{"unsure", 0.5}, policy); }) == ErrorCode::UnmappedCategory);
  CHECK(code_of([] { threshold_label_policy("sort of risky"); }) == ErrorCode::UnmappedCategory);

  std::vector<ClinicalRecord> recs(3);
  recs[0].id = "a";
  recs[0].judgment = HumanJudgment{"high risk", 0.9};
  recs[1].id = "b";
  recs[1].judgment = HumanJudgment{"high risk", 0.9};
  recs[1].label = Label{0, LabelSource::Annotated};
  recs[2].id = "c";
  CHECK(resolve_labels(recs, policy) == 1);
  CHECK(recs[0].label == Label{1, LabelSource::DerivedFromRisk});
  CHECK(recs[1].label == Label{0, LabelSource::Annotated});
  CHECK_FALSE(recs[2].label.has_value());
}
