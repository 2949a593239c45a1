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

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "mofcure/agents/runtime.hpp"
#include "mofcure/cif.hpp"
#include "mofcure/inspect.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/repair.hpp"
#include "mofcure/sources.hpp"

namespace mofcure::agents {

struct SupervisorConfig {
  std::filesystem::path store_dir;
  std::filesystem::path papers_dir;
  std::filesystem::path output_dir;
  BondPolicy policy;
  RepairOptions repair;
  MatchWeights weights;
  const NameTable* names = nullptr;
};

/// Session state shared by the nodes of one Supervisor tree.
struct Blackboard {
  std::string refcode;
  std::string doi;
  std::optional<MofRecord> record;
  std::vector<MofRecord> doi_records;
  std::optional<CrystalStructure> structure;
  std::string structure_source;
  std::optional<PaperDocument> paper;
  std::optional<PaperInfo> info;
  std::vector<MatchScore> matches;
  std::vector<MissingMofRecord> missing;
  std::string target_formula;
  std::vector<ComponentSpec> specs;
  std::vector<MolecularGraph> graphs;
  std::optional<ReferenceGraph> reference;
  std::optional<DiagnosisReport> diagnosis;
  BondPolicy policy;
  std::string output_file;  ///< file name inside the output directory
};

struct Supervisor {
  std::shared_ptr<AgentSpec> spec;
  std::shared_ptr<Blackboard> board;
  std::shared_ptr<const RecordStore> store;
};

namespace supervisor_detail {

inline std::string join(const std::vector<std::string>& v, const std::string& sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + v[i];
  return out;
}

inline std::string fixed(double v, int digits) {
  std::ostringstream o;
  o.setf(std::ios::fixed);
  o.precision(digits);
  o << v;
  return o.str();
}

/// First refcode-looking token (six capitals, optional two digits) known to the store.
inline std::optional<std::string> find_refcode(const std::string& text, const RecordStore& store) {
  static const std::regex token(R"(\b[A-Z]{6}(?:[0-9]{2})?\b)");
  for (auto it = std::sregex_iterator(text.begin(), text.end(), token); it != std::sregex_iterator(); ++it)
    if (store.has_record(it->str()) || store.has_cif("csd", it->str())) return it->str();
  return std::nullopt;
}

inline std::string diagnosis_summary(const DiagnosisReport& d) {
  std::string s = "k=" + d.scaling.factor.str();
  if (!d.scaling.mismatches.empty()) {
    s += "; species mismatch";
    for (const auto& m : d.scaling.mismatches) s += " " + std::string(m.element.symbol());
  }
  for (const auto& c : d.subgraph_counts)
    s += "; " + c.component + " " + std::to_string(c.found) + "/" + c.expected.str();
  if (d.clean()) return s + "; clean";
  std::map<std::string, int> kinds;
  for (const auto& e : d.errors) ++kinds[std::string(kind_name(e.kind))];
  std::vector<std::string> parts;
  for (const auto& [k, n] : kinds) parts.push_back(std::to_string(n) + " " + k);
  return s + "; errors: " + join(parts, ", ");
}

}  // namespace supervisor_detail

/// Supervisor with its five specialized sub-agents and a final output step.
/// The store is opened once here; each call returns a fresh session.
inline Supervisor build_supervisor(const SupervisorConfig& cfg) {
  using namespace supervisor_detail;
  auto store = std::make_shared<const RecordStore>(RecordStore::open(cfg.store_dir));
  auto board = std::make_shared<Blackboard>();
  board->policy = cfg.policy;
  auto resolve_ctx = [board, names = cfg.names]() {
    ResolveContext ctx;
    ctx.table = names;
    if (board->info) ctx.abbreviations = &board->info->abbreviations;
    return ctx;
  };
  const SupervisorConfig config = cfg;
  auto need_refcode = [board] {
    if (board->refcode.empty()) fail(Errc::NotFound, "no refcode retrieved yet");
  };

  // ---- Database Reader
  auto db = std::make_shared<AgentSpec>();
  db->name = "Database Reader";
  db->head_prompt = "Retrieve the database records and CIFs for the refcode in the query.";
  db->add_tool("csd_retrieval_node", "retrieve data from CSD database", [board, store](const std::string& in, NodeContext&) {
    auto code = find_refcode(in, *store);
    if (!code && !board->refcode.empty()) code = board->refcode;
    if (!code) fail(Errc::NotFound, "no known refcode in the request");
    const auto& rec = store->lookup_refcode(*code);
    board->refcode = rec.refcode;
    board->record = rec;
    board->doi = rec.doi;
    board->doi_records.clear();
    for (const auto& c : store->lookup_doi(rec.doi))
      if (store->has_record(c)) board->doi_records.push_back(store->lookup_refcode(c));
    std::string s = rec.refcode + ": " + rec.formula + ", " + rec.space_group + ", doi " + rec.doi;
    std::vector<std::string> codes;
    for (const auto& r : board->doi_records) codes.push_back(r.refcode);
    s += "; " + std::to_string(codes.size()) + " refcodes under this DOI (" + join(codes, ", ") + ")";
    if (!rec.cif_path.empty()) {
      board->structure = read_cif_file(rec.cif_path);
      board->structure->name = rec.refcode;
      board->structure_source = "csd";
      s += "; CSD CIF loaded (" + std::to_string(board->structure->size()) + " sites)";
    } else {
      s += "; no CSD CIF";
    }
    if (rec.has_disorder) s += "; flagged disordered";
    return s;
  });
  for (auto [node, src, label] : {std::tuple{"coremof_retrieval_node", "coremof", "CoRE MOF DB"},
                                  std::tuple{"mosaec_retrieval_node", "mosaec", "MOSAEC-DB"}}) {
    std::string source = src, db_label = label;
    db->add_tool(node, "retrieve data from " + db_label, [board, store, source, db_label, need_refcode](const std::string&, NodeContext&) {
      need_refcode();
      if (!store->has_cif(source, board->refcode)) return "no CIF for " + board->refcode + " in " + db_label;
      board->structure = read_cif_file(*store->cif_path(source, board->refcode));
      board->structure->name = board->refcode;
      board->structure_source = source;
      return db_label + " CIF loaded for " + board->refcode;
    });
  }

  // ---- Paper Reader
  auto paper = std::make_shared<AgentSpec>();
  paper->name = "Paper Reader";
  paper->head_prompt = "Read the paper behind the retrieved DOI and relate its MOFs to the database records.";
  paper->add_tool("find_paper_node", "find paper file and parse the textual information", [board, config](const std::string&, NodeContext&) {
    if (board->doi.empty()) fail(Errc::PaperNotFound, "no DOI retrieved yet");
    board->paper = find_and_parse_paper(board->doi, config.papers_dir);
    return "found " + std::filesystem::path(board->paper->path).filename().string() + " (" + board->paper->format + ", " +
           std::to_string(board->paper->text.size()) + " characters)";
  });
  paper->add_tool(
      "paper_read_node", "read a paper and extract all synthesized MOFs information",
      [board](const std::string&, NodeContext& ctx) {
        if (!board->paper) fail(Errc::PaperNotFound, "no paper loaded");
        ExtractOptions opt;
        opt.agent = ctx.agent;
        opt.signature = ctx.signature;
        board->info = extract_paper_info(board->paper->text, ctx.backend, opt);
        std::vector<std::string> mofs, abbr;
        for (const auto& m : board->info->mofs) mofs.push_back(m.identifier_in_text + " " + m.structural_formula);
        for (const auto& [k, v] : board->info->abbreviations) abbr.push_back(k);
        return std::to_string(mofs.size()) + " MOFs extracted: " + join(mofs, "; ") +
               (abbr.empty() ? "" : "; abbreviations: " + join(abbr, ", "));
      },
      NodeKind::llm);
  paper->add_tool("paper_match_node", "find a mapping between the extracted MOF information from a paper with relevant CSD reference code",
                  [board, config](const std::string&, NodeContext&) {
                    if (!board->info) fail(Errc::NotFound, "no extracted paper information");
                    board->matches = match_refcodes(board->doi_records, *board->info, config.weights);
                    std::vector<std::string> pairs;
                    for (const auto& m : board->matches) {
                      pairs.push_back(m.refcode + " = " + m.mof_id + " (score " + fixed(m.score, 2) + ")");
                      if (m.refcode == board->refcode)
                        if (auto e = board->info->find(m.mof_id)) board->target_formula = e->structural_formula;
                    }
                    if (pairs.empty()) return std::string("no refcode matched");
                    return "matched " + join(pairs, "; ");
                  });
  paper->add_tool(
      "paper_missing_mof_node", "identify MOFs reported in the paper without a deposited CIF",
      [board](const std::string&, NodeContext& ctx) {
        if (!board->info) fail(Errc::NotFound, "no extracted paper information");
        ExtractOptions opt;
        opt.agent = ctx.agent;
        opt.signature = ctx.signature;
        board->missing = find_missing_mofs(*board->info, board->matches, ctx.backend, opt);
        if (board->missing.empty()) return std::string("no missing MOFs");
        std::vector<std::string> v;
        for (const auto& r : board->missing)
          v.push_back(r.identifier_in_text + " from " + r.parent_mof + " by " + std::string(transformation_name(r.transformation)));
        return std::to_string(v.size()) + " missing MOFs: " + join(v, "; ");
      },
      NodeKind::llm);
  paper->add_tool("reasoning_node", "reasoning previous process result and find out mistakes", [board](const std::string&, NodeContext&) {
    std::vector<std::string> issues;
    if (!board->info) issues.push_back("paper was not read");
    if (!board->refcode.empty()) {
      bool matched = false;
      for (const auto& m : board->matches) matched |= m.refcode == board->refcode;
      if (!matched) issues.push_back(board->refcode + " has no matching MOF in the paper");
    }
    if (board->record && board->info && !board->target_formula.empty()) {
      for (const auto& m : board->matches)
        if (m.refcode == board->refcode && m.evidence.formula < 0.9)
          issues.push_back("formula of " + m.mof_id + " differs from the " + board->refcode + " record");
    }
    std::set<std::string> ids;
    for (const auto& m : board->matches)
      if (!ids.insert(m.mof_id).second) issues.push_back(m.mof_id + " matched twice");
    if (issues.empty()) return std::string("no inconsistencies found");
    return "issues: " + join(issues, "; ");
  });

  // ---- Reference Builder
  auto refb = std::make_shared<AgentSpec>();
  refb->name = "Reference Builder";
  refb->head_prompt = "Turn the structural formula of the target MOF into a reference graph.";
  refb->add_tool("name_to_structure_node", "resolve every component name of the structural formula to a molecular graph",
                 [board, resolve_ctx](const std::string&, NodeContext&) {
                   std::string formula = board->target_formula;
                   if (formula.empty() && board->record) formula = board->record->structural_formula;
                   if (formula.empty()) fail(Errc::NotFound, "no structural formula for " + board->refcode);
                   board->target_formula = formula;
                   board->specs = parse_structural_formula(formula);
                   board->graphs.clear();
                   auto ctx = resolve_ctx();
                   std::vector<std::string> parts;
                   for (const auto& s : board->specs) {
                     board->graphs.push_back(resolve_name(s.name, ctx));
                     parts.push_back(s.name + " x" + s.multiplicity.str() + " (" + std::string(role_name(s.role)) + ", " +
                                     board->graphs.back().formula_string() + ")");
                   }
                   return formula + ": " + join(parts, ", ");
                 });
  refb->add_tool("build_ref_graph_node", "assemble the reference graph of one formula unit", [board](const std::string&, NodeContext&) {
    if (board->specs.empty()) fail(Errc::NotFound, "no resolved components");
    board->reference = build_reference_graph(board->specs, board->graphs);
    RationalCounts c = board->reference->species_counts();
    return "reference formula unit " + format_counts(c) + ", " + std::to_string(board->reference->components.size()) + " components";
  });

  // ---- Inspector & Editor
  auto insp = std::make_shared<AgentSpec>();
  insp->name = "Inspector & Editor";
  insp->head_prompt = "Check the structure against the reference graph and correct what fails.";
  auto need_inputs = [board] {
    if (!board->structure) fail(Errc::NotFound, "no structure loaded");
    if (!board->reference) fail(Errc::NotFound, "no reference graph");
  };
  auto rediagnose = [board, config] {
    board->diagnosis = diagnose(*board->structure, *board->reference, board->policy, config.repair.diagnose);
    return *board->diagnosis;
  };
  insp->add_tool("diagnose_node", "check a MOF whether it violates the reference graph", [need_inputs, rediagnose](const std::string&, NodeContext&) {
    need_inputs();
    return diagnosis_summary(rediagnose());
  });
  insp->add_tool("correct_disorder_node", "resolve disorder by choosing the lowest-energy consistent configuration",
                 [board, config, need_inputs, rediagnose](const std::string&, NodeContext&) {
                   need_inputs();
                   if (!rediagnose().has(ErrorKind::disorder)) return std::string("no disorder error");
                   auto dc = enumerate_disorder_candidates(*board->structure, *board->reference, board->policy, config.repair);
                   auto ranked = rank_candidates(dc.structures, *config.repair.model, config.repair.jobs);
                   int attempts = std::min<int>(config.repair.max_disorder_attempts, static_cast<int>(ranked.size()));
                   for (int a = 0; a < attempts; ++a) {
                     auto trial = repair_all(ranked[a].structure, *board->reference, board->policy, config.repair);
                     if (!trial.success) continue;
                     board->structure = ranked[a].structure;
                     board->structure->name = board->refcode.empty() ? board->structure->name : board->refcode;
                     rediagnose();
                     return std::to_string(ranked.size()) + " candidates" + (dc.truncated ? " (cap reached)" : "") +
                            ", selected rank " + std::to_string(a + 1) + " energy " + fixed(ranked[a].energy, 4);
                   }
                   fail(Errc::NoConsistentSelection, "no disorder candidate leads to a clean structure");
                 });
  insp->add_tool("correct_bond_node", "search bond thresholds until the bond graph matches the reference",
                 [board, config, need_inputs, rediagnose](const std::string&, NodeContext&) {
                   need_inputs();
                   if (!rediagnose().has(ErrorKind::bond)) return std::string("no bond error");
                   auto r = correct_bonds(*board->structure, *board->reference, board->policy, config.repair);
                   board->structure = r.corrected;
                   board->policy = r.policy;
                   rediagnose();
                   return join(r.log, "; ");
                 });
  insp->add_tool("correct_hydrogen_node", "add or remove hydrogen atoms to match the reference",
                 [board, config, need_inputs, rediagnose](const std::string&, NodeContext&) {
                   need_inputs();
                   const ChemicalRules& rules = config.repair.rules ? *config.repair.rules : ChemicalRules::defaults();
                   std::vector<std::string> log;
                   auto ruled = apply_chemical_rules(*board->structure, *board->reference, rules, board->policy, &log);
                   if (!log.empty()) {
                     board->structure = ruled;
                     board->policy.trust_explicit = true;
                   }
                   if (!rediagnose().has(ErrorKind::hydrogen))
                     return log.empty() ? std::string("no hydrogen error") : join(log, "; ");
                   auto r = correct_hydrogens(*board->structure, *board->reference, board->policy, config.repair);
                   board->structure = r.corrected;
                   board->policy = r.policy;
                   rediagnose();
                   log.insert(log.end(), r.log.begin(), r.log.end());
                   return join(log, "; ");
                 });

  // ---- Simulation Runner
  auto sim = std::make_shared<AgentSpec>();
  sim->name = "Simulation Runner";
  sim->head_prompt = "Run the requested simulation on the corrected structure.";
  for (auto [node, desc] : {std::pair{"dft_optimization_node", "optimize the structure with DFT"},
                            std::pair{"dft_single_point_node", "compute a DFT single-point energy"},
                            std::pair{"pore_analysis_node", "analyse pore geometry"}}) {
    std::string n = node;
    sim->add_tool(n, desc, [n](const std::string&, NodeContext&) -> std::string {
      fail(Errc::NotSupported, n + " is not available in this build");
    });
  }

  // ---- Supervisor
  auto sup = std::make_shared<AgentSpec>();
  sup->name = "Supervisor";
  sup->head_prompt = "Interpret the user query and dispatch tasks to the specialized agents.";
  sup->add_agent("database_reader", "retrieve database records", db);
  sup->add_agent("paper_reader", "extract MOF data from paper", paper);
  sup->add_agent("reference_builder", "build reference graph", refb);
  sup->add_agent("inspector_editor", "inspect & correct", insp);
  sup->add_agent("simulation_runner", "run simulations on the structure", sim);
  sup->add_tool("return_cif_node", "return corrected CIF", [board, config, need_inputs, rediagnose](const std::string&, NodeContext&) {
    need_inputs();
    auto d = rediagnose();
    if (!d.clean()) fail(Errc::ValidationError, "structure still fails: " + diagnosis_summary(d));
    std::filesystem::create_directories(config.output_dir);
    board->output_file = (board->refcode.empty() ? board->structure->name : board->refcode) + "_corrected.cif";
    write_cif_file((config.output_dir / board->output_file).string(), with_bond_list(*board->structure, board->policy), true);
    return "corrected structure of " + board->refcode + " written to " + board->output_file + " (" + diagnosis_summary(d) + ")";
  });
  return {sup, board, store};
}

}  // namespace mofcure::agents
