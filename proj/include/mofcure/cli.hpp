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

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mofcure/agents/backend.hpp"
#include "mofcure/agents/heuristic.hpp"
#include "mofcure/agents/runtime.hpp"
#include "mofcure/agents/supervisor.hpp"
#include "mofcure/cif.hpp"
#include "mofcure/crystal.hpp"
#include "mofcure/energy.hpp"
#include "mofcure/inspect.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/repair.hpp"
#include "mofcure/sources.hpp"

namespace mofcure::cli {

namespace fs = std::filesystem;

// ===================================================================
// Configuration
// ===================================================================
//
// "key = value" lines, '#' comments. Keys:
//   bond.scale, bond.margin, bond.min_ratio, bond.trust_explicit (true/false)
//   bond.override = <El>-<El> <max length>       (repeatable)
//   bond.forbid = <El>-<El>                      (repeatable)
//   match.formula, match.cell, match.space_group, match.metal, match.volume,
//   match.threshold, match.length_tol, match.angle_tol, match.volume_tol
//   energy.backend = lj | external
//   energy.command = <argv, whitespace separated>
//   repair.candidate_cap, repair.max_disorder_attempts, repair.jobs
//   data.names, data.solvents, data.rules        (file paths)
//   agent.endpoint, agent.model, agent.temperature, agent.depth_limit, agent.step_budget
// Command-line flags override the file. Environment variables only supply
// credentials (MOFCURE_API_KEY) and, when agent.endpoint is unset, MOFCURE_ENDPOINT.

struct Config {
  BondPolicy policy;
  MatchWeights weights;
  std::string energy_backend = "lj";
  std::vector<std::string> energy_command;
  std::size_t candidate_cap = 256;
  int max_disorder_attempts = 16;
  unsigned repair_jobs = 1;
  std::string names_file, solvents_file, rules_file;
  std::string endpoint, model = "default";
  double temperature = 0.0;
  int depth_limit = 4;
  int step_budget = 64;

  void set(const std::string& key, const std::string& value) {
    auto num = [&] {
      try {
        std::size_t used = 0;
        double v = std::stod(value, &used);
        if (formula_detail::trim(value.substr(used)).empty()) return v;
      } catch (const std::exception&) {
      }
      fail(Errc::Config, key + ": '" + value + "' is not a number");
    };
    auto pair = [&](const std::string& text) {
      auto dash = text.find('-');
      if (dash == std::string::npos) fail(Errc::Config, key + ": expected <El>-<El>");
      auto a = Element::from_symbol(formula_detail::trim(text.substr(0, dash)));
      auto b = Element::from_symbol(formula_detail::trim(text.substr(dash + 1)));
      if (!a || !b) fail(Errc::Config, key + ": unknown element in '" + text + "'");
      return std::pair{*a, *b};
    };
    if (key == "bond.scale") policy.scale = num();
    else if (key == "bond.margin") policy.margin = num();
    else if (key == "bond.min_ratio") policy.min_ratio = num();
    else if (key == "bond.trust_explicit") {
      if (value != "true" && value != "false") fail(Errc::Config, key + " must be true or false");
      policy.trust_explicit = value == "true";
    } else if (key == "bond.override") {
      std::istringstream in(value);
      std::string p;
      double len = 0;
      if (!(in >> p >> len)) fail(Errc::Config, key + ": expected '<El>-<El> <length>'");
      auto [a, b] = pair(p);
      policy.set_override(a, b, len);
    } else if (key == "bond.forbid") {
      auto [a, b] = pair(value);
      policy.forbid(a, b);
    } else if (key == "match.formula") weights.formula = num();
    else if (key == "match.cell") weights.cell = num();
    else if (key == "match.space_group") weights.space_group = num();
    else if (key == "match.metal") weights.metal = num();
    else if (key == "match.volume") weights.volume = num();
    else if (key == "match.threshold") weights.threshold = num();
    else if (key == "match.length_tol") weights.length_tol = num();
    else if (key == "match.angle_tol") weights.angle_tol = num();
    else if (key == "match.volume_tol") weights.volume_tol = num();
    else if (key == "energy.backend") {
      if (value != "lj" && value != "external") fail(Errc::Config, key + " must be lj or external");
      energy_backend = value;
    } else if (key == "energy.command") {
      energy_command.clear();
      std::istringstream in(value);
      for (std::string w; in >> w;) energy_command.push_back(w);
    } else if (key == "repair.candidate_cap") candidate_cap = static_cast<std::size_t>(num());
    else if (key == "repair.max_disorder_attempts") max_disorder_attempts = static_cast<int>(num());
    else if (key == "repair.jobs") repair_jobs = static_cast<unsigned>(num());
    else if (key == "data.names") names_file = value;
    else if (key == "data.solvents") solvents_file = value;
    else if (key == "data.rules") rules_file = value;
    else if (key == "agent.endpoint") endpoint = value;
    else if (key == "agent.model") model = value;
    else if (key == "agent.temperature") temperature = num();
    else if (key == "agent.depth_limit") depth_limit = static_cast<int>(num());
    else if (key == "agent.step_budget") step_budget = static_cast<int>(num());
    else fail(Errc::Config, "unknown configuration key " + key);
  }

  static Config load(std::istream& in, const std::string& where = "config") {
    Config c;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      auto t = formula_detail::trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string::npos) fail(Errc::Config, where + ":" + std::to_string(lineno) + ": expected key = value");
      c.set(formula_detail::trim(t.substr(0, eq)), formula_detail::trim(t.substr(eq + 1)));
    }
    c.validate();
    return c;
  }

  static Config load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open config " + path);
    return load(in, path);
  }

  void validate() const {
    policy.validate();
    if (energy_backend == "external" && energy_command.empty())
      fail(Errc::Config, "energy.backend = external needs energy.command");
    if (candidate_cap == 0) fail(Errc::Config, "repair.candidate_cap must be positive");
    if (depth_limit < 1) fail(Errc::Config, "agent.depth_limit must be at least 1");
  }

  std::shared_ptr<const EnergyModel> energy_model() const {
    if (energy_backend == "external") return std::make_shared<ExternalEnergyModel>(energy_command);
    return std::make_shared<LennardJonesModel>();
  }
};

/// Tables loaded from the configured files, defaults otherwise.
struct Tables {
  NameTable names = NameTable::defaults();
  SolventLibrary solvents = SolventLibrary::defaults();
  ChemicalRules rules = ChemicalRules::defaults();

  static Tables from(const Config& c) {
    Tables t;
    if (!c.names_file.empty()) t.names = NameTable::load_file(c.names_file);
    if (!c.solvents_file.empty()) t.solvents = SolventLibrary::load_file(c.solvents_file);
    if (!c.rules_file.empty()) t.rules = ChemicalRules::load_file(c.rules_file);
    return t;
  }
};

inline RepairOptions repair_options(const Config& c, const Tables& t) {
  RepairOptions o;
  o.model = c.energy_model();
  o.rules = &t.rules;
  o.candidate_cap = c.candidate_cap;
  o.max_disorder_attempts = c.max_disorder_attempts;
  o.jobs = c.repair_jobs;
  return o;
}

/// A reference-graph file when `spec` names an existing file, otherwise a structural formula.
inline ReferenceGraph load_reference(const std::string& spec, const Tables& t) {
  if (fs::is_regular_file(spec)) return read_reference_graph_file(spec);
  ResolveContext ctx;
  ctx.table = &t.names;
  return reference_from_formula(spec, ctx);
}

// ===================================================================
// validate
// ===================================================================

/// Exit 0 clean, 1 errors found, 2 failure (unreadable input, bad reference).
inline int cmd_validate(const std::string& cif_path, const std::string& ref_spec, const Config& cfg, std::ostream& out,
                        std::ostream& err) {
  try {
    Tables t = Tables::from(cfg);
    auto s = read_cif_file(cif_path);
    auto ref = load_reference(ref_spec, t);
    auto report = diagnose(s, ref, cfg.policy);
    out << report.to_text();
    return report.clean() ? 0 : 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

// ===================================================================
// repair
// ===================================================================

struct RepairFlags {
  fs::path out_dir = ".";
  bool all_candidates = false;
};

inline std::string candidate_filename(const std::string& stem, std::size_t rank) {
  std::ostringstream o;
  o << stem << "_candidate" << std::setw(2) << std::setfill('0') << rank << ".cif";
  return o.str();
}

/// Writes <name>_corrected.cif (or, with all_candidates, every clean
/// candidate as <name>_candidateNN.cif in energy order). Exit 0 when the
/// structure ends clean, 1 when it cannot be corrected (no file written), 2 on failure.
inline int cmd_repair(const std::string& cif_path, const std::string& ref_spec, const RepairFlags& flags, const Config& cfg,
                      std::ostream& out, std::ostream& err) {
  try {
    Tables t = Tables::from(cfg);
    auto s = read_cif_file(cif_path);
    auto ref = load_reference(ref_spec, t);
    auto opt = repair_options(cfg, t);
    auto r = repair_all(s, ref, cfg.policy, opt);
    for (const auto& l : r.log) out << l << '\n';
    if (!r.success) {
      out << "uncorrectable: " << s.name << '\n';
      try {
        out << diagnose(r.corrected, ref, r.policy).to_text();
      } catch (const Error& e) {
        out << "diagnose: " << e.what() << '\n';
      }
      return 1;
    }
    fs::create_directories(flags.out_dir);
    std::string stem = s.name.empty() ? fs::path(cif_path).stem().string() : s.name;
    if (!flags.all_candidates) {
      auto path = flags.out_dir / (stem + "_corrected.cif");
      write_cif_file(path.string(), with_bond_list(r.corrected, r.policy), true);
      out << "wrote " << path.string() << '\n';
      return 0;
    }
    std::size_t rank = 0;
    for (const auto& c : r.candidates) {
      if (c.failed) continue;
      if (!diagnose(c.structure, ref, r.policy).clean()) continue;
      auto path = flags.out_dir / candidate_filename(stem, ++rank);
      write_cif_file(path.string(), with_bond_list(c.structure, r.policy), true);
      out << "wrote " << path.string() << " energy " << cif_detail::fmt_double(c.energy) << '\n';
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

// ===================================================================
// curate
// ===================================================================

struct CurateFlags {
  unsigned jobs = 1;
  bool fail_fast = false;
};

struct StructureStatus {
  std::string refcode;
  std::string status;  ///< clean, corrected, uncorrected, failed
  std::optional<ErrorKind> detected;
  bool corrected = false;
  std::vector<std::string> removed;  ///< solvent names
  std::string note;
  std::string emitted;  ///< file name, empty when nothing was written
};

/// Totals per error kind plus one status line per structure.
struct CurationSummary {
  std::vector<StructureStatus> structures;
  std::map<ErrorKind, int> detected, corrected;
  std::vector<std::pair<std::string, std::string>> manifest;  ///< (file, fnv1a of its content)
  bool aborted = false;

  int failures() const {
    int n = 0;
    for (const auto& s : structures) n += s.status == "failed" || s.status == "uncorrected";
    return n;
  }

  std::string text() const {
    std::ostringstream o;
    auto kinds = [&](const std::map<ErrorKind, int>& m) {
      std::string s;
      for (auto k : {ErrorKind::hydrogen, ErrorKind::bond, ErrorKind::disorder})
        s += std::string(s.empty() ? "" : ", ") + std::string(kind_name(k)) + " " + std::to_string(m.count(k) ? m.at(k) : 0);
      return s;
    };
    int clean = 0, removed = 0;
    for (const auto& s : structures) {
      clean += s.status == "clean";
      removed += static_cast<int>(s.removed.size());
    }
    o << "structures: " << structures.size() << '\n'
      << "clean: " << clean << '\n'
      << "detected: " << kinds(detected) << '\n'
      << "corrected: " << kinds(corrected) << '\n'
      << "failed: " << failures() << '\n'
      << "solvent molecules removed: " << removed << '\n'
      << "emitted: " << manifest.size() << '\n';
    if (aborted) o << "aborted: fail-fast\n";
    o << '\n';
    for (const auto& s : structures) {
      o << s.refcode << ' ' << s.status;
      if (s.detected) o << " detected=" << kind_name(*s.detected);
      if (!s.removed.empty()) {
        std::map<std::string, int> n;
        for (const auto& r : s.removed) ++n[r];
        o << " removed=";
        bool first = true;
        for (const auto& [name, c] : n) {
          o << (first ? "" : ",") << c << 'x' << name;
          first = false;
        }
      }
      if (!s.note.empty()) o << " note=\"" << s.note << '"';
      o << '\n';
    }
    return o.str();
  }

  std::string manifest_text() const {
    std::ostringstream o;
    for (const auto& [f, h] : manifest) o << f << ' ' << h << '\n';
    return o.str();
  }
};

namespace curate_detail {

inline std::string hex64(std::uint64_t v) {
  std::ostringstream o;
  o << std::hex << std::setw(16) << std::setfill('0') << v;
  return o.str();
}

inline std::string one_line(std::string s) {
  for (auto& c : s)
    if (c == '\n' || c == '"') c = ' ';
  return s;
}

}  // namespace curate_detail

/// Curates one store entry; the written CIF is the only side effect.
inline StructureStatus curate_one(const RecordStore& store, const std::string& refcode, const fs::path& out_dir,
                                  const Config& cfg, const Tables& t, std::string* content) {
  StructureStatus st;
  st.refcode = refcode;
  try {
    auto path = store.cif_path("csd", refcode);
    if (!path) fail(Errc::NotFound, "no CIF");
    if (!store.has_record(refcode)) fail(Errc::NotFound, "no metadata record");
    const auto& rec = store.lookup_refcode(refcode);
    if (rec.structural_formula.empty()) fail(Errc::NotFound, "record has no structural_formula");
    ResolveContext ctx;
    ctx.table = &t.names;
    auto ref = reference_from_formula(rec.structural_formula, ctx);
    auto s = read_cif_file(*path);
    s.name = refcode;
    auto d = diagnose(s, ref, cfg.policy);
    CrystalStructure fixed = s;
    BondPolicy pol = cfg.policy;
    if (d.clean()) {
      st.status = "clean";
    } else {
      st.detected = d.severity;
      auto opt = repair_options(cfg, t);
      auto r = repair_all(s, ref, cfg.policy, opt);
      if (!r.success) {
        st.status = "uncorrected";
        st.note = r.log.empty() ? "" : curate_detail::one_line(r.log.back());
        return st;
      }
      st.status = "corrected";
      st.corrected = true;
      fixed = r.corrected;
      pol = r.policy;
    }
    auto removal = remove_free_solvent(fixed, pol, t.solvents.graphs());
    for (const auto& c : removal.removed) st.removed.push_back(c.name);
    auto ready = with_bond_list(removal.structure, pol);
    ready.name = refcode;
    st.emitted = refcode + ".cif";
    *content = write_cif(ready, true);
    std::ofstream f(out_dir / st.emitted, std::ios::binary);
    if (!f) fail(Errc::Io, "cannot write " + (out_dir / st.emitted).string());
    f << *content;
  } catch (const Error& e) {
    st.status = "failed";
    st.note = curate_detail::one_line(e.what());
    st.emitted.clear();
  }
  return st;
}

/// Diagnoses, repairs and strips free solvent from every store CIF, writing
/// <out>/<REFCODE>.cif plus summary.txt and manifest.txt. Results are
/// collected by refcode, so the output does not depend on `jobs`.
inline CurationSummary curate(const fs::path& store_dir, const fs::path& out_dir, const CurateFlags& flags, const Config& cfg) {
  auto store = RecordStore::open(store_dir);
  Tables t = Tables::from(cfg);
  fs::create_directories(out_dir);
  std::vector<std::string> codes;
  for (const auto& c : store.refcodes("csd"))
    if (store.has_cif("csd", c)) codes.push_back(c);
  std::vector<std::optional<StructureStatus>> results(codes.size());
  std::vector<std::string> contents(codes.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  auto worker = [&] {
    while (!stop) {
      std::size_t i = next++;
      if (i >= codes.size()) return;
      results[i] = curate_one(store, codes[i], out_dir, cfg, t, &contents[i]);
      if (flags.fail_fast && (results[i]->status == "failed" || results[i]->status == "uncorrected")) stop = true;
    }
  };
  unsigned jobs = std::max(1u, std::min<unsigned>(flags.jobs, static_cast<unsigned>(std::max<std::size_t>(codes.size(), 1))));
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < jobs; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  CurationSummary sum;
  for (std::size_t i = 0; i < codes.size(); ++i) {
    if (!results[i]) {
      sum.aborted = true;
      continue;
    }
    const auto& st = *results[i];
    if (st.detected) {
      ++sum.detected[*st.detected];
      if (st.corrected) ++sum.corrected[*st.detected];
    }
    if (!st.emitted.empty()) sum.manifest.emplace_back(st.emitted, curate_detail::hex64(fnv1a(contents[i])));
    sum.structures.push_back(st);
  }
  if (flags.fail_fast && stop) sum.aborted = true;
  std::ofstream(out_dir / "summary.txt", std::ios::binary) << sum.text();
  std::ofstream(out_dir / "manifest.txt", std::ios::binary) << sum.manifest_text();
  return sum;
}

/// Exit 0 when every structure ends clean, 1 when some could not be
/// corrected or failed, 2 when the run itself could not proceed.
inline int cmd_curate(const fs::path& store_dir, const fs::path& out_dir, const CurateFlags& flags, const Config& cfg,
                      std::ostream& out, std::ostream& err) {
  try {
    auto sum = curate(store_dir, out_dir, flags, cfg);
    out << sum.text();
    if (sum.aborted) return 2;
    return sum.failures() ? 1 : 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

// ===================================================================
// ask
// ===================================================================

struct AskFlags {
  std::string replay;     ///< transcript to replay
  std::string endpoint;   ///< live chat endpoint
  bool heuristic = false; ///< offline rule-based backend
  std::string record;     ///< write the transcript here
  std::string trace;      ///< write the trace here
  fs::path store_dir, papers_dir, out_dir = ".";
};

inline constexpr const char* kAskUsage =
    "no language-model backend configured: pass --replay <transcript>, --endpoint <url> "
    "(or set agent.endpoint / MOFCURE_ENDPOINT), or --heuristic";

/// Exit 0 when the Supervisor finishes with every step done, 1 when it
/// finishes with failed steps, 2 when no backend is configured or the run breaks.
inline int cmd_ask(const std::string& query, const AskFlags& flags, const Config& cfg, std::ostream& out, std::ostream& err) {
  try {
    std::unique_ptr<agents::ChatBackend> backend;
    std::string endpoint = flags.endpoint.empty() ? cfg.endpoint : flags.endpoint;
    if (!flags.replay.empty()) {
      backend = agents::ReplayBackend::from_file(flags.replay);
    } else if (flags.heuristic) {
      backend = std::make_unique<agents::HeuristicBackend>();
    } else {
      auto http = agents::HttpConfig::from_env(endpoint);
      if (http.endpoint.empty()) {
        err << kAskUsage << '\n';
        return 2;
      }
      http.model = cfg.model;
      http.temperature = cfg.temperature;
      backend = std::make_unique<agents::HttpBackend>(http);
    }
    std::optional<agents::RecordingBackend> recorder;
    agents::ChatBackend* active = backend.get();
    if (!flags.record.empty()) {
      recorder.emplace(*backend);
      active = &*recorder;
    }
    Tables t = Tables::from(cfg);
    agents::SupervisorConfig sc;
    sc.store_dir = flags.store_dir;
    sc.papers_dir = flags.papers_dir;
    sc.output_dir = flags.out_dir;
    sc.policy = cfg.policy;
    sc.repair = repair_options(cfg, t);
    sc.weights = cfg.weights;
    sc.names = &t.names;
    auto sup = agents::build_supervisor(sc);
    agents::RunOptions ro;
    ro.step_budget = cfg.step_budget;
    agents::Trace trace;
    agents::AgentResult res;
    try {
      res = agents::run_agent(*sup.spec, query, *active, cfg.depth_limit, trace, ro);
    } catch (...) {
      if (!flags.trace.empty()) std::ofstream(flags.trace, std::ios::binary) << trace.text();
      if (recorder) recorder->write(flags.record);
      throw;
    }
    if (!flags.trace.empty()) std::ofstream(flags.trace, std::ios::binary) << trace.text();
    if (recorder) recorder->write(flags.record);
    out << res.response << '\n';
    return res.ok ? 0 : 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace mofcure::cli
