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

// Writes the generated test data tree: synthetic CIFs, record stores,
// paper corpus and recorded agent transcripts.
//   mofcure_gen_fixtures <out_dir>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "agents.hpp"
#include "fixtures.hpp"
#include "inject.hpp"
#include "mofcure/agents/backend.hpp"
#include "mofcure/agents/heuristic.hpp"
#include "mofcure/agents/supervisor.hpp"
#include "mofcure/cif.hpp"
#include "mofcure/sources.hpp"

namespace fs = std::filesystem;
using namespace mofcure;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + p.string());
  out << text;
}

std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

/// Hill formula with explicit counts and spaces, per formula unit.
std::string chemical_formula(const std::string& structural) {
  auto counts = reference_from_formula(structural).species_counts();
  std::string out;
  for (Element e : hill_order(counts)) out += (out.empty() ? "" : " ") + std::string(e.symbol()) + counts.at(e).str();
  return out;
}

std::string compact_formula(const std::string& structural) {
  auto counts = reference_from_formula(structural).species_counts();
  std::string out;
  for (Element e : hill_order(counts)) {
    out += e.symbol();
    if (counts.at(e) != Rational{1}) out += counts.at(e).str();
  }
  return out;
}

std::string cell_text(const Lattice& l) {
  return "a = " + fixed(l.a, 3) + " \xC3\x85, b = " + fixed(l.b, 3) + " \xC3\x85, c = " + fixed(l.c, 3) +
         " \xC3\x85, \xCE\xB1 = " + fixed(l.alpha, 2) + "\xC2\xB0, \xCE\xB2 = " + fixed(l.beta, 2) +
         "\xC2\xB0, \xCE\xB3 = " + fixed(l.gamma, 2) + "\xC2\xB0";
}

MofRecord record_for(const std::string& refcode, const std::string& doi, const std::string& name,
                     const fixtures::Fixture& f, const std::string& system, const std::string& sg) {
  MofRecord r;
  r.refcode = refcode;
  r.doi = doi;
  r.chemical_name = name;
  r.formula = chemical_formula(f.formula);
  r.crystal_system = system;
  r.space_group = sg;
  r.cell = f.structure.lattice;
  r.volume = std::round(f.structure.lattice.volume() * 10) / 10;
  r.has_disorder = f.structure.has_disorder_markers();
  if (r.has_disorder) r.disorder_details = "guest and linker atoms split over two positions";
  r.structural_formula = f.formula;
  return r;
}

std::string compound_line(const std::string& id, const fixtures::Fixture& f, const std::string& system,
                          const std::string& sg, const std::string& metal, const std::string& ox,
                          const std::string& linker, const std::string& solvent, const std::string& notes) {
  std::string s = "Compound " + id + ": " + f.formula + "; chemical formula " + compact_formula(f.formula) +
                  "; crystal system " + system + "; space group " + sg + "; " + cell_text(f.structure.lattice) +
                  "; V = " + fixed(f.structure.lattice.volume(), 1) + " \xC3\x85" "3; metal " + metal + "(" + ox +
                  "); linker " + linker + "; solvent " + solvent;
  if (!notes.empty()) s += "; notes: " + notes;
  return s;
}

void write_structure(const fs::path& p, const CrystalStructure& s, bool bonds) {
  fs::create_directories(p.parent_path());
  write_cif_file(p.string(), bonds ? with_bond_list(s) : s, bonds);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: mofcure_gen_fixtures <out_dir>\n";
    return 2;
  }
  const fs::path out = argv[1];
  try {
    // ---------------------------------------------------------------- CIFs
    std::vector<std::pair<std::string, fixtures::Fixture>> named{
        {"piclas", fixtures::piclas()},       {"piclew", fixtures::piclew()},
        {"solv01", fixtures::framework_with_solvent()}, {"facid1", fixtures::free_acid()},
        {"wtrio1", fixtures::water_trio()},   {"dtrio1", fixtures::dmf_trio()},
        {"tagt01", fixtures::tagged_touch()},
    };
    std::string formulas = "# file\tstructural formula\n";
    for (const auto& [name, f] : named) {
      write_structure(out / "cif" / (name + ".cif"), f.structure, false);
      formulas += name + ".cif\t" + f.formula + "\n";
    }
    for (const auto& spec : fixtures::base_specs()) {
      auto f = fixtures::chain_mof(spec);
      std::string name = spec.name;
      for (auto& c : name) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      write_structure(out / "cif" / (name + ".cif"), f.structure, true);
      formulas += name + ".cif\t" + f.formula + "\n";
    }
    write_text(out / "cif" / "formulas.tsv", formulas);

    // ------------------------------------------------- agent record store
    const std::string piclas_doi = "10.5555/mofcure.piclas";
    const std::string teqlim_doi = "10.5555/mofcure.teqlim";
    auto piclas = fixtures::piclas();
    auto piclew = fixtures::piclew();
    auto teqlim = fixtures::chain_mof({"TEQLIM", "Zn", "bdc", 1, {{"DMF", 1}}, 16, 16, 90, 90, 90, 41});
    teqlim.formula = "[Zn(bdc)·DMF]";
    const fs::path store = out / "store";
    struct Entry {
      std::string code, doi, name;
      const fixtures::Fixture* f;
    };
    for (const auto& e : {Entry{"PICLAS", piclas_doi, "dysprosium benzothiophenedicarboxylate DMF hydrate", &piclas},
                          Entry{"PICLEW", piclas_doi, "dysprosium benzothiophenedicarboxylate hydrate", &piclew},
                          Entry{"TEQLIM", teqlim_doi, "zinc terephthalate DMF solvate", &teqlim}}) {
      auto rec = record_for(e.code, e.doi, e.name, *e.f, "triclinic", "P1");
      write_text(store / "csd" / (e.code + ".rec"), write_record(rec));
      write_structure(store / "csd" / (e.code + ".cif"), e.f->structure, false);
    }
    write_structure(store / "coremof" / "BASE01.cif", fixtures::chain_mof(fixtures::base_specs()[0]).structure, true);
    write_structure(store / "mosaec" / "BASE02.cif", fixtures::chain_mof(fixtures::base_specs()[1]).structure, true);
    write_text(store / "doi_index.tsv", piclas_doi + "\tPICLAS\n" + piclas_doi + "\tPICLEW\n" + teqlim_doi + "\tTEQLIM\n");

    // --------------------------------------------------------- paper corpus
    std::string xml =
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
        "<article>\n<front><article-meta>\n"
        "<title-group><article-title>Dysprosium frameworks from benzothiophene dicarboxylate</article-title></title-group>\n"
        "<abstract><p>Two dysprosium frameworks built from H<sub>2</sub>btpdc were obtained from DMF/water.</p></abstract>\n"
        "</article-meta></front>\n<body>\n"
        "<sec><title>Synthesis</title>\n"
        "<p>Dy(NO<sub>3</sub>)<sub>3</sub> and H<sub>2</sub>btpdc were heated in DMF/H<sub>2</sub>O at 120 &#176;C "
        "to give compound 1; drying gave compound 2.</p>\n"
        "<p>Abbreviations: H2btpdc = benzo[b]thiophene-2,6-dicarboxylic acid; DMF = N,N-dimethylformamide</p>\n"
        "</sec>\n<sec><title>Crystal data</title>\n<p>" +
        compound_line("1", piclas, "triclinic", "P1", "Dy", "III", "btpdc", "DMF, H2O",
                      "linker and DMF disordered over two positions") +
        "</p>\n<p>" + compound_line("2", piclew, "triclinic", "P1", "Dy", "III", "btpdc", "H2O", "") +
        "</p>\n</sec>\n</body>\n</article>\n";
    write_text(out / "papers" / (doi_to_filename(piclas_doi) + ".xml"), xml);

    fixtures::Fixture tb = teqlim;
    tb.formula = "[Co(bdc)·DMF]";
    fixtures::Fixture dry = teqlim;
    dry.formula = "[Zn(bdc)]";
    std::string md = "# Zinc terephthalate chains and two derivatives\n\n## Results\n\n"
                     "Abbreviations: H2bdc = terephthalic acid; DMF = N,N-dimethylformamide\n\n" +
                     compound_line("1", teqlim, "triclinic", "P1", "Zn", "II", "bdc", "DMF", "") + "\n\n" +
                     compound_line("2", tb, "triclinic", "P1", "Co", "II", "bdc", "DMF",
                                   "obtained from 1 by Zn\xE2\x86\x92" "Co substitution; isostructural, CIF not deposited") +
                     "\n\n" +
                     compound_line("3", dry, "triclinic", "P1", "Zn", "II", "bdc", "none",
                                   "obtained from 1 by exchanging DMF for water and activation; CIF not deposited") +
                     "\n";
    write_text(out / "papers" / (doi_to_filename(teqlim_doi) + ".md"), md);

    // ------------------------------------------------------- curation store
    auto suite = fixtures::injected_suite();
    const int picks[] = {1, 4, 7, 0, 3, 6, 9, 2, 5, 8};  // 3 bond, 4 hydrogen, 3 disorder
    std::string ledger = "# refcode\tinjected error\tsource\n";
    int n = 0;
    for (int i : picks) {
      const auto& inj = suite[static_cast<std::size_t>(i)];
      std::ostringstream code;
      code << "CUR" << std::setw(3) << std::setfill('0') << ++n;
      auto s = inj.fixture.structure;
      s.name = code.str();
      fixtures::Fixture f{s, inj.fixture.formula};
      auto rec = record_for(code.str(), "10.5555/mofcure.curate", "synthetic chain framework", f, "triclinic", "P1");
      write_text(out / "store_curate" / "csd" / (code.str() + ".rec"), write_record(rec));
      write_structure(out / "store_curate" / "csd" / (code.str() + ".cif"), s, false);
      ledger += code.str() + "\t" + fixtures::injection_name(inj.kind) + "\t" + inj.fixture.structure.name + "\n";
    }
    write_text(out / "store_curate" / "ledger.tsv", ledger);

    // ---------------------------------------------------------- transcripts
    agents::HeuristicBackend heuristic;
    {
      agents::RecordingBackend rec(heuristic);
      auto run = agents::run_agent(*fixtures::echo_agent(), "hello periodic world", rec, 2);
      write_text(out / "transcripts" / "echo.jsonl", rec.transcript());
      write_text(out / "transcripts" / "echo.trace.jsonl", run.trace);
    }
    const fs::path scratch = fs::temp_directory_path() / "mofcure_gen_fixtures";
    for (auto [stem, query] : {std::pair{"piclas_supervisor", "give me the corrected structure of PICLAS"},
                               std::pair{"piclas_dft", "optimize the structure of PICLAS with DFT"}}) {
      fs::remove_all(scratch);
      agents::SupervisorConfig cfg;
      cfg.store_dir = store;
      cfg.papers_dir = out / "papers";
      cfg.output_dir = scratch;
      auto sup = agents::build_supervisor(cfg);
      agents::RecordingBackend rec(heuristic);
      auto run = agents::run_agent(*sup.spec, query, rec, 4);
      write_text(out / "transcripts" / (std::string(stem) + ".jsonl"), rec.transcript());
      write_text(out / "transcripts" / (std::string(stem) + ".trace.jsonl"), run.trace);
    }
    fs::remove_all(scratch);
    {
      // first reply breaks the schema (cell with five numbers), the retry is valid
      std::ifstream in(out / "papers" / (doi_to_filename(piclas_doi) + ".xml"));
      std::stringstream buf;
      buf << in.rdbuf();
      auto info = agents::HeuristicBackend::extract(clean_xml(buf.str()));
      auto bad = paper_info_json(info);
      bad["mofs"][0]["cell_parameters"] = json::array({42.0, 42.0, 42.0, 90.0, 90.0});
      std::string t = agents::transcript_header() + "\n";
      t += agents::transcript_line({1, "Paper Reader", "extract_paper", "", bad.dump()}) + "\n";
      t += agents::transcript_line({2, "Paper Reader", "extract_paper", "", paper_info_json(info).dump()}) + "\n";
      write_text(out / "transcripts" / "extraction_retry.jsonl", t);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
