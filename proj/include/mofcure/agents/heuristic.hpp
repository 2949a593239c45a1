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

#include <regex>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mofcure/agents/backend.hpp"
#include "mofcure/agents/runtime.hpp"
#include "mofcure/sources.hpp"

namespace mofcure::agents {

/// Offline stand-in for a language model. The head follows a fixed plan
/// per agent; extraction reads the compound lines of a paper:
///
///   Abbreviations: H2btpdc = benzo[b]thiophene-2,6-dicarboxylic acid; DMF = N,N-dimethylformamide
///   Compound 1: [Dy2(btpdc)3·DMF·2(H2O)]; chemical formula C33H23Dy2NO15S3; crystal system cubic;
///     space group P1; a = 42.0 Å, b = 42.0 Å, c = 42.0 Å, α = 90°, β = 90°, γ = 90°; V = 74088 Å3;
///     metal Dy(III); linker btpdc; solvent DMF, H2O; notes: obtained from 1 by Eu→Tb substitution
///
/// (one line per compound). Missing-MOF parents come from "from <id>" in the notes.
class HeuristicBackend : public ChatBackend {
 public:
  std::string complete(const ChatRequest& req) override {
    if (req.messages.size() < 2) fail(Errc::BackendSchemaFailure, "request without content");
    const std::string& content = req.messages[1].content;
    if (req.purpose == "head") return head(json::parse(content)).dump();
    if (req.purpose == "extract_paper") return paper_info_json(extract(content)).dump();
    if (req.purpose == "find_missing") return missing(json::parse(content)).dump();
    fail(Errc::BackendSchemaFailure, "no heuristic for purpose " + req.purpose);
  }

  static bool wants_simulation(const std::string& query) {
    static const std::regex kw(R"(\b(dft|optimi[sz]\w*|single[- ]point|pore|simulat\w*)\b)", std::regex::icase);
    return std::regex_search(query, kw);
  }

  // ---------------------------------------------------------------- head

  static json plan_for(const json& ctx) {
    const std::string agent = ctx["agent"].get<std::string>();
    const std::string query = ctx["query"].get<std::string>();
    std::map<std::string, std::string> desc;
    std::vector<std::string> order;
    for (const auto& n : ctx["nodes"]) {
      desc[n["name"].get<std::string>()] = n["description"].get<std::string>();
      order.push_back(n["name"].get<std::string>());
    }
    std::vector<std::string> steps;
    if (agent == "Supervisor") {
      steps = {"database_reader", "paper_reader", "reference_builder", "inspector_editor"};
      if (wants_simulation(query)) steps.push_back("simulation_runner");
      steps.push_back("return_cif_node");
    } else if (agent == "Inspector & Editor") {
      steps = {"diagnose_node", "correct_disorder_node", "correct_bond_node", "correct_hydrogen_node", "diagnose_node"};
    } else if (agent == "Simulation Runner") {
      static const std::regex sp(R"(single[- ]point)", std::regex::icase), pore(R"(\bpore)", std::regex::icase);
      if (std::regex_search(query, sp)) steps.push_back("dft_single_point_node");
      if (std::regex_search(query, pore)) steps.push_back("pore_analysis_node");
      if (steps.empty()) steps.push_back("dft_optimization_node");
    } else {
      steps = order;
    }
    json nodes = json::array();
    for (const auto& s : steps)
      if (desc.count(s)) nodes.push_back({{"name", s}, {"description", desc[s]}});
    return {{"action", "create_plan"}, {"goal", query}, {"nodes", nodes}};
  }

  static json head(const json& ctx) {
    if (ctx["plan"].is_null()) return plan_for(ctx);
    const json& nodes = ctx["plan"]["nodes"];
    for (const auto& n : nodes)
      if (n["status"] == "pending") return {{"action", "invoke_node"}, {"node", n["name"]}, {"input", ctx["query"]}};
    // finish: sub-agents report every result, the Supervisor only its last
    const bool top = ctx["agent"] == "Supervisor";
    std::string response, failures;
    for (const auto& n : nodes) {
      std::string summary = n.value("result_summary", "");
      if (n["status"] == "done") response = top || response.empty() ? summary : response + "\n" + summary;
      else if (n["status"] == "failed") failures += (failures.empty() ? "" : "\n") + n["name"].get<std::string>() + " failed: " + summary;
    }
    if (!failures.empty()) response += (response.empty() ? "" : "\n") + failures;
    return {{"action", "finish"}, {"response", response}};
  }

  // ---------------------------------------------------------- extraction

  static PaperInfo extract(const std::string& text) {
    PaperInfo info;
    std::istringstream in(text);
    std::string line;
    static const std::regex compound(R"(^\s*Compound\s+([^:\s]+)\s*:\s*(.*)$)");
    static const std::regex abbr_line(R"(^\s*Abbreviations\s*:\s*(.*)$)", std::regex::icase);
    while (std::getline(in, line)) {
      std::smatch m;
      if (std::regex_match(line, m, abbr_line)) {
        for (const auto& item : split_fields(m[1].str())) {
          auto eq = item.find('=');
          if (eq == std::string::npos) continue;
          auto k = formula_detail::trim(item.substr(0, eq)), v = formula_detail::trim(item.substr(eq + 1));
          if (!v.empty() && v.back() == '.') v.pop_back();
          if (!k.empty()) info.abbreviations[k] = v;
        }
      } else if (std::regex_match(line, m, compound)) {
        info.mofs.push_back(parse_compound(m[1].str(), m[2].str()));
      }
    }
    return info;
  }

  // ----------------------------------------------------- missing MOFs

  static json missing(const json& ctx) {
    std::map<std::string, std::string> id_to_ref;
    for (const auto& m : ctx["matched"]) id_to_ref[m["identifier_in_text"]] = m["refcode"];
    json recs = json::array();
    for (const auto& id : ctx["unmatched"]) {
      std::string notes;
      for (const auto& m : ctx["paper"]["mofs"])
        if (m["identifier_in_text"] == id) notes = m.value("important_notes", "");
      std::string parent = id_to_ref.empty() ? "" : id_to_ref.begin()->second;
      static const std::regex from(R"(\bfrom\s+(?:compound\s+)?([A-Za-z0-9_-]+))", std::regex::icase);
      std::smatch m;
      if (std::regex_search(notes, m, from) && id_to_ref.count(m[1].str())) parent = id_to_ref[m[1].str()];
      recs.push_back({{"identifier_in_text", id},
                      {"parent_mof", parent},
                      {"transformation", classify(notes)},
                      {"transformation_details", notes},
                      {"reason_no_cif", "no CIF deposited for this compound"}});
    }
    return {{"records", recs}};
  }

  static std::string classify(const std::string& notes) {
    auto has = [&](const char* pat) { return std::regex_search(notes, std::regex(pat, std::regex::icase)); };
    if (has(R"(functionali)")) return "linker_functionalization";
    if (has(R"(linker\s+exchange|exchang\w*\s+(the\s+)?linker)")) return "linker_exchange";
    if (has(R"(solvent|desolvat|activat)")) return "solvent_exchange";
    if (has(R"(substitut|[A-Z][a-z]?\s*(\xE2\x86\x92|->)\s*[A-Z][a-z]?)")) return "metal_substitution";
    return "other";
  }

 private:
  static std::vector<std::string> split_fields(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    int depth = 0;
    for (char c : s) {
      if (c == '(' || c == '[') ++depth;
      if (c == ')' || c == ']') --depth;
      if (c == ';' && depth <= 0) {
        out.push_back(formula_detail::trim(cur));
        cur.clear();
      } else {
        cur.push_back(c);
      }
    }
    if (!formula_detail::trim(cur).empty()) out.push_back(formula_detail::trim(cur));
    return out;
  }

  static MofEntry parse_compound(const std::string& id, const std::string& rest) {
    MofEntry e;
    e.identifier_in_text = id;
    std::string body = rest;
    if (auto p = body.find("notes:"); p != std::string::npos) {
      e.important_notes = formula_detail::trim(body.substr(p + 6));
      body = body.substr(0, p);
    }
    auto fields = split_fields(body);
    if (!fields.empty()) e.structural_formula = fields[0];
    static const std::regex cell_kv(R"((alpha|beta|gamma|\xCE\xB1|\xCE\xB2|\xCE\xB3|\ba\b|\bb\b|\bc\b)\s*=\s*([0-9.]+))");
    static const std::regex vol(R"(^V\s*=\s*([0-9.]+))");
    for (std::size_t i = 1; i < fields.size(); ++i) {
      const std::string& f = fields[i];
      auto after = [&](const char* key) -> std::optional<std::string> {
        std::string k = key;
        if (f.rfind(k, 0) == 0) return formula_detail::trim(f.substr(k.size()));
        return std::nullopt;
      };
      std::smatch m;
      if (auto v = after("chemical formula")) e.chemical_formula = *v;
      else if (auto v = after("crystal system")) e.crystal_system = *v;
      else if (auto v = after("space group")) e.space_group = *v;
      else if (auto v = after("metal")) {
        static const std::regex ox(R"(^([A-Z][a-z]?)\s*\(([IVX]+|[0-9+]+)\))");
        std::smatch mm;
        if (std::regex_search(*v, mm, ox)) {
          e.metal_node = mm[1].str();
          e.metal_oxidation_state = mm[2].str();
        } else {
          e.metal_node = *v;
        }
      } else if (auto v = after("linker")) e.organic_linker = *v;
      else if (auto v = after("solvent")) e.solvent = *v;
      else if (std::regex_search(f, m, vol)) e.volume = std::stod(m[1].str());
      else {
        std::map<std::string, double> cell;
        for (auto it = std::sregex_iterator(f.begin(), f.end(), cell_kv); it != std::sregex_iterator(); ++it) {
          std::string k = (*it)[1].str();
          if (k == "\xCE\xB1") k = "alpha";
          if (k == "\xCE\xB2") k = "beta";
          if (k == "\xCE\xB3") k = "gamma";
          cell[k] = std::stod((*it)[2].str());
        }
        if (cell.size() == 6)
          e.cell = Lattice{cell["a"], cell["b"], cell["c"], cell["alpha"], cell["beta"], cell["gamma"]};
      }
    }
    return e;
  }
};

}  // namespace mofcure::agents
