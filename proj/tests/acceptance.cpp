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

// Acceptance gate. Prints one line per criterion:
//   criterion N: PASS|FAIL (<seconds>s) <detail>
// and exits nonzero when any criterion fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>

#include "agents.hpp"
#include "data.hpp"
#include "inject.hpp"
#include "matching.hpp"
#include "mofcure/agents/supervisor.hpp"
#include "mofcure/cli.hpp"
#include "mofcure/repair.hpp"

using namespace mofcure;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void check(bool ok, const std::string& what) {
    if (ok) return;
    if (!pass) detail << "; ";
    pass = false;
    detail << what;
  }
};

template <class T>
std::string str(const T& v) {
  std::ostringstream o;
  o << v;
  return o.str();
}

double min_distance(const CrystalStructure& s) {
  double best = 1e300;
  for (const auto& c : find_contacts(s, 1.0)) best = std::min(best, c.distance);
  return best;
}

// 1. worked example
void piclas(Outcome& o) {
  auto s = testdata::load(testdata::gen_cif("piclas.cif"));
  auto ref = testdata::reference_for("piclas.cif");
  const Element Dy = Element::require("Dy");
  auto d = diagnose(s, ref);
  o.check(d.scaling.factor == Rational(4), "k=" + d.scaling.factor.str());
  RationalCounts want{{elements::C, 132}, {elements::H, 92}, {elements::O, 60},
                      {elements::S, 12},  {Dy, 8},           {elements::N, 4}};
  o.check(d.scaling.scaled_reference == want, "scaled counts differ");
  std::set<Element> mism;
  for (const auto& m : d.scaling.mismatches) mism.insert(m.element);
  o.check(mism == std::set<Element>{elements::C, elements::O, elements::S, elements::N}, "mismatch set differs");
  auto linker = d.count_for("btpdc"), dmf = d.count_for("DMF");
  o.check(linker && linker->found == 16 && linker->expected == Rational(12), "linker count not 16/12");
  o.check(dmf && dmf->found == 8 && dmf->expected == Rational(4), "DMF count not 8/4");
  auto r = repair_all(s, ref, {});
  auto after = diagnose(r.corrected, ref, r.policy);
  o.check(r.success && after.clean(), "not clean after repair");
  linker = after.count_for("btpdc");
  dmf = after.count_for("DMF");
  o.check(linker && linker->found == 12 && dmf && dmf->found == 4, "counts after repair not 12/4");
  o.detail << (o.pass ? "k=4, 16/12 and 8/4 before, clean 12/4 after" : "");
}

// 2. round trip
void round_trip(Outcome& o) {
  int n = 0;
  for (const auto& path : testdata::all_cifs()) {
    auto a = read_cif_file(path.string());
    auto b = parse_cif(write_cif(a, true));
    bool same = a.size() == b.size() && a.bond_multiset() == b.bond_multiset();
    for (std::size_t i = 0; same && i < a.size(); ++i) {
      same = a.sites[i].label == b.sites[i].label && a.sites[i].element == b.sites[i].element;
      for (int k = 0; k < 3; ++k) same = same && std::abs(a.sites[i].frac[k] - b.sites[i].frac[k]) <= 1e-6;
    }
    o.check(same, path.filename().string() + " changed");
    ++n;
  }
  o.check(n >= 20, "only " + str(n) + " fixtures");
  o.detail << (o.pass ? str(n) + " files" : "");
}

// 3. injected errors
void injected(Outcome& o) {
  std::map<fixtures::Injection, std::pair<int, int>> tally;  // restored, total
  std::vector<std::string> misses;
  for (const auto& inj : fixtures::injected_suite(50)) {
    const auto& s = inj.fixture.structure;
    auto ref = reference_from_formula(inj.fixture.formula);
    auto& t = tally[inj.kind];
    ++t.second;
    auto before = diagnose(s, ref);
    bool ok = false;
    if (!before.clean()) {
      auto r = repair_all(s, ref, {});
      ok = r.success && diagnose(r.corrected, ref, r.policy).clean();
    }
    if (ok) ++t.first;
    else misses.push_back(s.name);
  }
  auto rate = [&](fixtures::Injection k) { return double(tally[k].first) / std::max(1, tally[k].second); };
  using fixtures::Injection;
  o.check(rate(Injection::hydrogen) >= 0.95, "hydrogen below 95%");
  o.check(rate(Injection::bond) >= 0.90, "bond below 90%");
  o.check(rate(Injection::disorder) == 1.0, "disorder below 100%");
  if (!o.pass) o.detail << "; ";
  for (auto k : {Injection::hydrogen, Injection::bond, Injection::disorder})
    o.detail << fixtures::injection_name(k) << ' ' << tally[k].first << '/' << tally[k].second
             << (k == Injection::disorder ? "" : ", ");
  for (const auto& m : misses) o.detail << " miss=" << m;
}

// 4. energy ranking
void ranking(Outcome& o) {
  std::vector<std::pair<std::string, fixtures::Fixture>> cases;
  for (const char* n : {"wtrio1.cif", "dtrio1.cif", "tagt01.cif", "piclas.cif"})
    cases.push_back({n, {testdata::load(testdata::gen_cif(n)), testdata::formulas().at(n)}});
  for (const auto& inj : fixtures::injected_suite(50))
    if (inj.kind == fixtures::Injection::disorder) cases.push_back({inj.fixture.structure.name, inj.fixture});
  int with_overlap = 0;
  LennardJonesModel lj;
  for (const auto& [name, f] : cases) {
    auto ref = reference_from_formula(f.formula);
    auto ranked = rank_candidates(enumerate_disorder_candidates(f.structure, ref, {}).structures, lj);
    int first_overlap = -1, last_clear = -1;
    for (int k = 0; k < static_cast<int>(ranked.size()); ++k) {
      if (min_distance(ranked[k].structure) < 0.5) {
        if (first_overlap < 0) first_overlap = k;
      } else {
        last_clear = k;
      }
    }
    if (first_overlap < 0) continue;
    ++with_overlap;
    o.check(last_clear >= 0 && last_clear < first_overlap, name + ": overlapping candidate ranks above a clear one");
  }
  o.check(with_overlap > 0, "no fixture produced an overlapping candidate");
  o.detail << (o.pass ? str(cases.size()) + " fixtures, " + str(with_overlap) + " with overlapping candidates" : "");
}

// 5. free acid
void free_acid(Outcome& o) {
  auto s = testdata::load(testdata::gen_cif("facid1.cif"));
  auto ref = testdata::reference_for("facid1.cif");
  std::vector<std::uint64_t> first;
  for (int run = 0; run < 10; ++run) {
    auto r = repair_all(s, ref, {});
    std::vector<std::uint64_t> hashes;
    for (const auto& c : r.candidates) {
      hashes.push_back(c.hash);
      o.check(diagnose(c.structure, ref, r.policy).clean(), "candidate not clean");
    }
    if (run == 0) {
      first = hashes;
      o.check(hashes.size() == 2, str(hashes.size()) + " candidates");
    }
    o.check(hashes == first, "order changed in run " + str(run + 1));
    if (!o.pass) return;
  }
  o.detail << "2 clean candidates, same order over 10 runs";
}

// 6. agent replay
void agent_replay(Outcome& o) {
  auto out = testdata::scratch("acceptance_agent");
  agents::SupervisorConfig cfg;
  cfg.store_dir = testdata::gen() / "store";
  cfg.papers_dir = testdata::gen() / "papers";
  cfg.output_dir = out;
  auto sup = agents::build_supervisor(cfg);
  auto replay = agents::ReplayBackend::from_file((testdata::gen() / "transcripts" / "piclas_supervisor.jsonl").string());
  agents::RunOptions opt;
  auto run = agents::run_agent(*sup.spec, "give me the corrected structure of PICLAS", *replay, 4, opt);
  o.check(run.trace == testdata::read_text(testdata::gen() / "transcripts" / "piclas_supervisor.trace.jsonl"),
          "trace differs");
  std::vector<std::string> steps;
  for (const auto& n : run.result.plan.nodes) steps.push_back(n.name);
  o.check(steps == std::vector<std::string>{"database_reader", "paper_reader", "reference_builder", "inspector_editor",
                                            "return_cif_node"},
          "plan steps differ");
  o.check(run.result.ok, "run not ok");
  std::istringstream in(run.trace);
  std::map<std::pair<std::string, int>, agents::Plan> last;
  int decisions = 0;
  for (std::string line; std::getline(in, line);) {
    auto e = json::parse(line);
    if (e["event"] == "finish")
      o.check(e["decisions"].get<int>() <= opt.step_budget, "step budget exceeded");
    if (e["event"] != "decision" || e["plan"].is_null()) continue;
    ++decisions;
    auto p = agents::plan_from_json(e["plan"]);
    auto key = std::pair{e["agent"].get<std::string>(), e["depth"].get<int>()};
    try {
      agents::check_plan(p);
      if (auto it = last.find(key); it != last.end() && e["decision"]["action"] != "create_plan")
        agents::check_plan_transition(it->second, p);
    } catch (const Error& err) {
      o.check(false, std::string("plan invariant: ") + err.what());
    }
    last[key] = p;
  }
  o.detail << (o.pass ? "byte-identical trace, " + str(decisions) + " decisions checked" : "");
}

// 7. matching
void matching(Outcome& o) {
  auto mc = fixtures::decoy_matching_case();
  MatchWeights w;
  auto oracle = fixtures::brute_force_match(mc.records, mc.info, w);
  std::map<std::string, std::string> got;
  for (const auto& s : match_refcodes(mc.records, mc.info, w)) got[s.refcode] = s.mof_id;
  o.check(oracle == mc.truth, "exhaustive optimum is not the ground truth");
  o.check(got == oracle, "assignment differs from exhaustive optimum");
  o.detail << (o.pass ? "6/6 pairs, equal to exhaustive optimum" : "");
}

// 8. solvent removal
void solvent(Outcome& o) {
  auto s = testdata::load(testdata::gen_cif("solv01.cif"));
  auto r = remove_free_solvent(s);
  auto before = s.species_counts(), after = r.structure.species_counts();
  SpeciesCounts lost;
  for (const auto& [e, n] : before)
    if (n - after[e]) lost[e] = n - after[e];
  SpeciesCounts want{{elements::C, 3}, {elements::H, 11}, {elements::N, 1}, {elements::O, 3}};
  o.check(lost == want, "lost atoms differ from C3H7NO + 2 H2O");
  std::multiset<std::string> names;
  for (const auto& c : r.removed) names.insert(c.name);
  o.check(names == std::multiset<std::string>{"DMF", "water", "water"}, "removed components differ");
  auto g = build_graph(s);
  std::set<std::string> kept;
  for (const auto& site : r.structure.sites) kept.insert(site.label);
  for (const auto& c : connected_components(g))
    if (c.periodic)
      for (int a : c.atoms) o.check(kept.count(s.sites[a].label) == 1, "framework atom " + s.sites[a].label + " removed");
  for (const auto& site : r.structure.sites) {
    auto it = std::find_if(s.sites.begin(), s.sites.end(), [&](const Site& x) { return x.label == site.label; });
    o.check(it != s.sites.end() && *it == site, "site " + site.label + " altered");
  }
  auto again = remove_free_solvent(r.structure);
  o.check(again.removed.empty() && again.structure.sites == r.structure.sites, "second removal changed the structure");
  o.detail << (o.pass ? "removed DMF + 2 water, framework intact, idempotent" : "");
}

// 9. batch determinism
void batch(Outcome& o) {
  auto store = testdata::gen() / "store_curate";
  std::string text[2], summary[2], manifest[2];
  int rc[2];
  unsigned jobs[2] = {1, 4};
  for (int k = 0; k < 2; ++k) {
    auto out = testdata::scratch("acceptance_curate_j" + str(jobs[k]));
    std::ostringstream so, se;
    cli::CurateFlags f;
    f.jobs = jobs[k];
    rc[k] = cli::cmd_curate(store, out, f, {}, so, se);
    text[k] = so.str();
    summary[k] = testdata::read_text(out / "summary.txt");
    manifest[k] = testdata::read_text(out / "manifest.txt");
  }
  o.check(rc[0] == rc[1], "exit codes differ");
  o.check(summary[0] == summary[1] && text[0] == text[1], "summaries differ");
  o.check(manifest[0] == manifest[1], "manifests differ");
  o.check(std::count(manifest[0].begin(), manifest[0].end(), '\n') == 10, "manifest does not list 10 files");
  o.detail << (o.pass ? "summary and manifest identical, exit " + str(rc[0]) : "");
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    std::function<void(Outcome&)> run;
    double limit_s;  ///< 0 when unbounded
  };
  const std::vector<Criterion> criteria{{1, piclas, 30},    {2, round_trip, 5}, {3, injected, 300},
                                        {4, ranking, 0},    {5, free_acid, 0},  {6, agent_replay, 0},
                                        {7, matching, 0},   {8, solvent, 0},    {9, batch, 0}};
  int failed = 0;
  for (const auto& c : criteria) {
    Outcome o;
    auto t0 = std::chrono::steady_clock::now();
    try {
      c.run(o);
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (c.limit_s > 0 && secs >= c.limit_s) o.check(false, "runtime " + str(secs) + " s over " + str(c.limit_s) + " s");
    failed += !o.pass;
    char t[32];
    std::snprintf(t, sizeof t, "%.2f", secs);
    std::cout << "criterion " << c.id << ": " << (o.pass ? "PASS" : "FAIL") << " (" << t << "s) " << o.detail.str() << '\n'
              << std::flush;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << '\n';
  return failed ? 1 : 0;
}
