/*
 * Copyright 2026 The mofcure Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "data.hpp"
#include "matching.hpp"
#include "mofcure/agents/heuristic.hpp"
#include "mofcure/inspect.hpp"
#include "mofcure/sources.hpp"

using namespace mofcure;

namespace {

const char* kPiclasDoi = "10.5555/mofcure.piclas";
const char* kTeqlimDoi = "10.5555/mofcure.teqlim";

RecordStore store() { return RecordStore::open(testdata::gen() / "store"); }
std::filesystem::path hand_papers() { return testdata::hand() / "papers"; }
std::filesystem::path gen_papers() { return testdata::gen() / "papers"; }

PaperInfo heuristic_info(const std::string& doi) {
  return agents::HeuristicBackend::extract(find_and_parse_paper(doi, gen_papers()).text);
}

std::vector<MofRecord> records_for(const RecordStore& st, const std::string& doi) {
  std::vector<MofRecord> out;
  for (const auto& r : st.lookup_doi(doi)) out.push_back(st.lookup_refcode(r));
  return out;
}

MofRecord make_record(const std::string& code, const std::string& formula, Lattice cell, const std::string& sg) {
  MofRecord r;
  r.refcode = code;
  r.formula = formula;
  r.cell = cell;
  r.space_group = sg;
  return r;
}

MofEntry make_entry(const std::string& id, const std::string& formula, Lattice cell, const std::string& sg) {
  MofEntry m;
  m.identifier_in_text = id;
  m.chemical_formula = formula;
  m.cell = cell;
  m.space_group = sg;
  return m;
}

}  // namespace

// ------------------------------------------------------------------ record store

TEST(Store, Lookups) {
  auto st = store();
  const auto& r = st.lookup_refcode("PICLAS");
  EXPECT_EQ(r.doi, kPiclasDoi);
  EXPECT_TRUE(r.has_disorder);
  ASSERT_TRUE(r.cell);
  EXPECT_DOUBLE_EQ(r.cell->a, 42.0);
  EXPECT_EQ(r.structural_formula, "[Dy2(btpdc)3·DMF·2(H2O)]");
  EXPECT_EQ(st.lookup_doi(kPiclasDoi), (std::vector<std::string>{"PICLAS", "PICLEW"}));
  EXPECT_TRUE(st.lookup_doi("10.5555/none").empty());
  EXPECT_TRUE(st.has_cif("csd", "PICLAS"));
  EXPECT_TRUE(st.has_cif("coremof", "BASE01"));
  EXPECT_FALSE(st.has_cif("coremof", "PICLAS"));
  EXPECT_FALSE(st.has_cif("nosuch", "PICLAS"));
  EXPECT_EQ(st.source_names(), (std::vector<std::string>{"coremof", "csd", "mosaec"}));
  EXPECT_EQ(st.refcodes(), (std::vector<std::string>{"PICLAS", "PICLEW", "TEQLIM"}));
  try {
    st.lookup_refcode("ZZZZZZ");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::NotFound);
  }
  EXPECT_EQ(read_cif_file(*st.cif_path("csd", "PICLAS")).name, "PICLAS");
}

TEST(Store, RecordRoundTrip) {
  auto r = store().lookup_refcode("PICLAS");
  std::istringstream in(write_record(r));
  auto back = parse_record(in);
  EXPECT_EQ(write_record(back), write_record(r));
  std::istringstream bad("doi = x\n");
  EXPECT_THROW(parse_record(bad), Error);
  std::istringstream cell("refcode = X\ncell = 1 2 3\n");
  EXPECT_THROW(parse_record(cell), Error);
}

TEST(Store, MissingRoot) { EXPECT_THROW(RecordStore::open("/nonexistent/store"), Error); }

// ------------------------------------------------------------------ papers

TEST(Papers, DoiFileNames) {
  EXPECT_EQ(doi_to_filename("10.5555/mofcure.piclas"), "10.5555_mofcure.piclas");
  EXPECT_EQ(doi_to_filename(" 10.1/a:b "), "10.1_a_b");
}

TEST(Papers, MarkupGoldens) {
  for (const char* stem : {"hand-xml", "hand-html"}) {
    auto doc = find_and_parse_paper(std::string("10.5555/") + stem, hand_papers());
    auto expected = testdata::strip_license(testdata::read_text(hand_papers() / ("10.5555_" + std::string(stem) + ".expected.txt")));
    EXPECT_EQ(doc.text, expected) << stem;
  }
}

TEST(Papers, PlainFormatsPassThrough) {
  auto md = find_and_parse_paper("10.5555/hand-md", hand_papers());
  EXPECT_EQ(md.format, "md");
  EXPECT_EQ(md.text, testdata::read_text(hand_papers() / "10.5555_hand-md.md"));
  EXPECT_EQ(find_and_parse_paper("10.5555/hand-empty", hand_papers()).format, "txt");
}

TEST(Papers, Errors) {
  auto code = [](const std::string& doi, const std::filesystem::path& dir) {
    try {
      find_and_parse_paper(doi, dir);
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::Config;
  };
  EXPECT_EQ(code("10.5555/hand-pdf", hand_papers()), Errc::PdfNeedsOcr);
  EXPECT_EQ(code("10.5555/hand-tex", hand_papers()), Errc::UnsupportedFormat);
  EXPECT_EQ(code("10.5555/absent", hand_papers()), Errc::PaperNotFound);
  EXPECT_EQ(code("10.5555/absent", "/nonexistent"), Errc::PaperNotFound);
}

TEST(Papers, EntitiesAndComments) {
  auto t = clean_html("<html><head><style>p{}</style><script>x<y</script></head><body><h2>A&amp;B</h2>"
                      "<p>&lt;&#x3B1;&gt;&nbsp;1<br>2</p><!-- gone --></body></html>");
  EXPECT_EQ(t.find("p{}"), std::string::npos);
  EXPECT_EQ(t.find("x<y"), std::string::npos);
  EXPECT_EQ(t.find("gone"), std::string::npos);
  EXPECT_NE(t.find("## A&B"), std::string::npos);
  EXPECT_NE(t.find("<\xCE\xB1>"), std::string::npos);
}

// ------------------------------------------------------------------ extraction

TEST(Extraction, HeuristicReadsCompounds) {
  auto info = heuristic_info(kPiclasDoi);
  ASSERT_EQ(info.mofs.size(), 2u);
  EXPECT_EQ(info.mofs[0].identifier_in_text, "1");
  EXPECT_EQ(info.mofs[0].structural_formula, "[Dy2(btpdc)3·DMF·2(H2O)]");
  EXPECT_EQ(info.mofs[0].space_group, "P1");
  ASSERT_TRUE(info.mofs[1].cell);
  EXPECT_DOUBLE_EQ(info.mofs[1].cell->a, 30.0);
  EXPECT_EQ(info.abbreviations.count("H2btpdc"), 1u);
  EXPECT_NO_THROW(validate_paper_info(info));
}

TEST(Extraction, SchemaRetry) {
  auto replay = agents::ReplayBackend::from_file((testdata::gen() / "transcripts" / "extraction_retry.jsonl").string());
  int retries = 0;
  auto text = find_and_parse_paper(kPiclasDoi, gen_papers()).text;
  auto info = extract_paper_info(text, *replay, {}, &retries);
  EXPECT_EQ(retries, 1);
  EXPECT_EQ(info.mofs.size(), 2u);
  EXPECT_EQ(replay->remaining(), 0u);
}

TEST(Extraction, RetriesExhausted) {
  agents::ScriptedBackend b(std::vector<std::string>(4, R"({"mofs":"none"})"));
  try {
    extract_paper_info("Compound 1: [Zn(bdc)]", b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ExtractionSchemaFailure);
  }
  EXPECT_EQ(b.requests().size(), 4u);
}

TEST(Extraction, EmptyPaper) {
  agents::HeuristicBackend h;
  try {
    extract_paper_info(" \n\t\n", h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ValidationError);
  }
  auto text = testdata::strip_license(find_and_parse_paper("10.5555/hand-empty", hand_papers()).text);
  EXPECT_TRUE(extract_paper_info(text, h).mofs.empty());
}

TEST(Extraction, Validation) {
  PaperInfo info;
  info.mofs.push_back(make_entry("1", "", Lattice::cubic(10), "P1"));
  info.mofs.push_back(make_entry("1", "", Lattice::cubic(10), "P1"));
  EXPECT_THROW(validate_paper_info(info), Error);
  info.mofs.pop_back();
  info.mofs[0].structural_formula = "[Zn(qqq)]";
  EXPECT_THROW(validate_paper_info(info), Error);
  info.abbreviations["H2qqq"] = "some acid";
  EXPECT_NO_THROW(validate_paper_info(info));
  EXPECT_EQ(paper_info_json(paper_info_from_json(paper_info_json(info))), paper_info_json(info));
}

// ------------------------------------------------------------------ matching

TEST(Matching, PiclasPaper) {
  auto st = store();
  auto m = match_refcodes(records_for(st, kPiclasDoi), heuristic_info(kPiclasDoi));
  ASSERT_EQ(m.size(), 2u);
  EXPECT_EQ(m[0].refcode, "PICLAS");
  EXPECT_EQ(m[0].mof_id, "1");
  EXPECT_EQ(m[1].refcode, "PICLEW");
  EXPECT_EQ(m[1].mof_id, "2");
  EXPECT_NEAR(m[0].score, 1.0, 1e-9);
}

TEST(Matching, IdenticalPairScoresOne) {
  auto cell = Lattice{10, 11, 12, 90, 95, 90};
  auto s = score_pair(make_record("A", "C8H4O4Zn", cell, "P2_1/c"), make_entry("1", "C8 H4 O4 Zn", cell, "P21/c"));
  EXPECT_NEAR(s.score, 1.0, 1e-12);
  auto off = score_pair(make_record("A", "C8H4O4Zn", cell, "P1"), make_entry("1", "C8H4O4Cu", Lattice::cubic(20), "P-1"));
  EXPECT_LT(off.score, 0.5);
  EXPECT_EQ(off.evidence.metal, 0.0);
}

TEST(Matching, EmptyInputs) {
  PaperInfo none;
  EXPECT_TRUE(match_refcodes({}, none).empty());
  EXPECT_TRUE(match_refcodes({make_record("A", "C8H4O4Zn", Lattice::cubic(10), "P1")}, none).empty());
}

// Six records, six paper entries, two of them near-duplicates of true pairs.
// The assignment equals the exhaustive optimum and the known ground truth,
// whatever the input order.
TEST(Matching, DecoysAgainstExhaustiveOracle) {
  auto mc = fixtures::decoy_matching_case();
  const auto& recs = mc.records;
  const auto& info = mc.info;
  const auto& truth = mc.truth;
  MatchWeights w;
  EXPECT_EQ(fixtures::brute_force_match(recs, info, w), truth);

  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  std::string first;
  for (int round = 0; round < 6; ++round) {
    std::rotate(order.begin(), order.begin() + 1, order.end());
    std::vector<MofRecord> r;
    for (auto k : order) r.push_back(recs[k]);
    PaperInfo shuffled = info;
    std::reverse(shuffled.mofs.begin(), shuffled.mofs.end());
    if (round % 2) std::rotate(shuffled.mofs.begin(), shuffled.mofs.begin() + round, shuffled.mofs.end());
    auto m = match_refcodes(r, shuffled, w);
    std::map<std::string, std::string> got;
    std::string text;
    for (const auto& s : m) {
      got[s.refcode] = s.mof_id;
      text += s.refcode + "=" + s.mof_id + ";";
    }
    EXPECT_EQ(got, truth);
    if (round == 0) first = text;
    EXPECT_EQ(text, first);
  }
}

TEST(Matching, ThresholdLeavesUnmatched) {
  std::vector<MofRecord> recs{make_record("AAAA01", "C8H4O4Zn", Lattice::cubic(10), "P1")};
  PaperInfo info;
  info.mofs = {make_entry("1", "C33H23Dy2NO15S3", Lattice::cubic(30), "Fm-3m")};
  EXPECT_TRUE(match_refcodes(recs, info).empty());
  MatchWeights lax;
  lax.threshold = 0.0;
  EXPECT_EQ(match_refcodes(recs, info, lax).size(), 1u);
}

// ------------------------------------------------------------------ missing MOFs

TEST(Missing, TeqlimDerivatives) {
  auto st = store();
  auto info = heuristic_info(kTeqlimDoi);
  auto matched = match_refcodes(records_for(st, kTeqlimDoi), info);
  ASSERT_EQ(matched.size(), 1u);
  EXPECT_EQ(matched[0].mof_id, "1");
  agents::HeuristicBackend h;
  auto missing = find_missing_mofs(info, matched, h);
  ASSERT_EQ(missing.size(), 2u);
  EXPECT_EQ(missing[0].identifier_in_text, "2");
  EXPECT_EQ(missing[0].parent_mof, "TEQLIM");
  EXPECT_EQ(missing[0].transformation, Transformation::metal_substitution);
  EXPECT_EQ(missing[1].transformation, Transformation::solvent_exchange);
  EXPECT_FALSE(write_missing_report(missing).empty());
}

TEST(Missing, NoCallWhenAllMatched) {
  auto st = store();
  auto info = heuristic_info(kPiclasDoi);
  auto matched = match_refcodes(records_for(st, kPiclasDoi), info);
  agents::ScriptedBackend b({});
  EXPECT_TRUE(find_missing_mofs(info, matched, b).empty());
  EXPECT_TRUE(b.requests().empty());
}

TEST(Missing, InvalidParentRejected) {
  auto st = store();
  auto info = heuristic_info(kTeqlimDoi);
  auto matched = match_refcodes(records_for(st, kTeqlimDoi), info);
  std::vector<MissingMofRecord> recs{{"2", "PICLAS", Transformation::metal_substitution, "Zn→Co", "not deposited"}};
  EXPECT_THROW(validate_missing_records(recs, info, matched), Error);
  recs[0].parent_mof = "TEQLIM";
  EXPECT_NO_THROW(validate_missing_records(recs, info, matched));
  recs[0].identifier_in_text = "1";
  EXPECT_THROW(validate_missing_records(recs, info, matched), Error);
  json bad = {{"records", {{{"identifier_in_text", "2"}, {"parent_mof", "TEQLIM"}, {"transformation", "alchemy"},
                            {"transformation_details", ""}, {"reason_no_cif", ""}}}}};
  agents::ScriptedBackend b(std::vector<std::string>(4, bad.dump()));
  try {
    find_missing_mofs(info, matched, b);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), Errc::ExtractionSchemaFailure);
  }
}

// ------------------------------------------------------------------ transformations

TEST(Transform, MetalSubstitutionKeepsGeometry) {
  auto parent = read_cif_file(*store().cif_path("csd", "TEQLIM"));
  MissingMofRecord rec{"2", "TEQLIM", Transformation::metal_substitution, "obtained from 1 by Zn→Co substitution", ""};
  auto child = apply_transformation(parent, rec);
  const Element Co = Element::require("Co"), Zn = Element::require("Zn");
  ASSERT_EQ(child.size(), parent.size());
  EXPECT_EQ(child.lattice.a, parent.lattice.a);
  EXPECT_EQ(child.explicit_bonds, parent.explicit_bonds);
  EXPECT_EQ(child.provenance, "generated-by-transformation");
  EXPECT_EQ(child.name, "2");
  for (std::size_t i = 0; i < child.size(); ++i) {
    EXPECT_EQ(child.sites[i].frac, parent.sites[i].frac);
    if (parent.sites[i].element == Zn) {
      EXPECT_EQ(child.sites[i].element, Co);
      EXPECT_EQ(child.sites[i].label.substr(0, 2), "Co");
    } else {
      EXPECT_EQ(child.sites[i], parent.sites[i]);
    }
  }
  EXPECT_EQ(build_graph(child).edges.size(), build_graph(parent).edges.size());
  for (const char* text : {"Eu->Tb", "replace Eu with Tb", "Eu to Tb"})
    EXPECT_EQ(parse_metal_substitution(text).second, Element::require("Tb"));
}

TEST(Transform, SolventExchangeRemovesSolvent) {
  auto parent = read_cif_file(*store().cif_path("csd", "TEQLIM"));
  MissingMofRecord rec{"3", "TEQLIM", Transformation::solvent_exchange, "exchanging DMF for water and activation", ""};
  auto child = apply_transformation(parent, rec);
  auto pc = parent.species_counts(), cc = child.species_counts();
  EXPECT_EQ(pc[elements::N] - cc[elements::N], pc[elements::N]);
  EXPECT_TRUE(diagnose(child, reference_from_formula("[Zn(bdc)]")).clean());
}

TEST(Transform, UnsupportedKinds) {
  auto parent = read_cif_file(*store().cif_path("csd", "TEQLIM"));
  for (auto t : {Transformation::linker_exchange, Transformation::linker_functionalization, Transformation::other}) {
    try {
      apply_transformation(parent, {"9", "TEQLIM", t, "anything", ""});
      FAIL();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::Unsupported);
    }
  }
  for (auto [t, details] : {std::pair{Transformation::metal_substitution, "made differently"},
                            std::pair{Transformation::metal_substitution, "Cu→Co"},
                            std::pair{Transformation::solvent_exchange, "soaked in liquid"}}) {
    try {
      apply_transformation(parent, {"9", "TEQLIM", t, details, ""});
      FAIL() << details;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), Errc::UnparseableTransformationDetails) << details;
    }
  }
}
