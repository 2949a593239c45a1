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

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mofcure/crystal.hpp"
#include "mofcure/energy.hpp"
#include "mofcure/error.hpp"
#include "mofcure/inspect.hpp"
#include "mofcure/match.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

struct RepairOutcome {
  CrystalStructure corrected;
  std::optional<ErrorKind> kind;           ///< error kind this repair addressed
  std::vector<RankedCandidate> candidates;  ///< energy-ordered alternatives, first == corrected
  std::vector<std::string> log;
  bool success = true;          ///< corrected re-diagnoses clean for `kind`
  bool candidates_truncated = false;
  BondPolicy policy;            ///< policy that reproduces the corrected bond graph
};

struct ChemicalRule {
  std::string name;
  Element metal;
  int cluster_size = 0;
  Element bridge;
  int mu = 0;             ///< metals bonded to each bridging atom
  int bridge_count = 0;   ///< bridging atoms per cluster
  int protonate = 0;      ///< bridging atoms that carry one H
  std::string pattern;    ///< "alternate"
};

/// Rule table. One rule per line:
///   rule <name> <metal> <cluster_size> <bridge> <mu> <bridge_count> <protonate> <pattern>
/// '#' starts a comment. The only pattern is "alternate": the bridging atoms
/// are two-coloured by shared-metal adjacency and the colour class holding
/// the lowest-index atom is protonated.
class ChemicalRules {
 public:
  std::vector<ChemicalRule> rules;

  static ChemicalRules load(std::istream& in) {
    ChemicalRules t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string kw;
      if (!(ls >> kw)) continue;
      ChemicalRule r;
      std::string metal, bridge;
      if (kw != "rule" || !(ls >> r.name >> metal >> r.cluster_size >> bridge >> r.mu >> r.bridge_count >> r.protonate >> r.pattern))
        fail(Errc::Config, "chemical rules line " + std::to_string(lineno) + ": malformed rule");
      auto m = Element::from_symbol(metal), b = Element::from_symbol(bridge);
      if (!m || !b) fail(Errc::Config, "chemical rules line " + std::to_string(lineno) + ": unknown element");
      if (r.pattern != "alternate") fail(Errc::Config, "chemical rules line " + std::to_string(lineno) + ": unknown pattern " + r.pattern);
      r.metal = *m;
      r.bridge = *b;
      t.rules.push_back(r);
    }
    return t;
  }

  static ChemicalRules load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open " + path);
    return load(in);
  }

  static const ChemicalRules& defaults() {
    static const ChemicalRules table = [] {
      std::istringstream in(
          "rule zr6-mu3-oh Zr 6 O 3 8 4 alternate\n"
          "rule hf6-mu3-oh Hf 6 O 3 8 4 alternate\n"
          "rule ce6-mu3-oh Ce 6 O 3 8 4 alternate\n");
      return load(in);
    }();
    return table;
  }
};

struct RepairOptions {
  DiagnoseOptions diagnose;
  std::shared_ptr<const EnergyModel> model = std::make_shared<LennardJonesModel>();
  const ChemicalRules* rules = nullptr;  ///< defaults when null
  std::size_t candidate_cap = 256;
  unsigned jobs = 1;
  int max_disorder_attempts = 16;  ///< ranked disorder candidates tried by repair_all
};

namespace repair_detail {

inline Vec3 shift_vec(Shift s) { return {double(s.a), double(s.b), double(s.c)}; }

/// Cartesian vectors from site v to each bonded neighbour.
inline std::vector<Vec3> bond_vectors(const CrystalStructure& s, const std::vector<std::vector<std::pair<int, Shift>>>& adj,
                                      int v) {
  std::vector<Vec3> out;
  for (const auto& [w, sh] : adj[v]) {
    Vec3 d = s.sites[w].frac + shift_vec(sh) - s.sites[v].frac;
    Vec3 r = s.lattice.to_cartesian(d);
    if (norm(r) > 1e-6) out.push_back(normalized(r));
  }
  return out;
}

inline Vec3 any_perpendicular(Vec3 a) {
  Vec3 t = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  return normalized(cross(a, t));
}

/// Unit directions for `h` new hydrogens given unit vectors to existing neighbours.
inline std::vector<Vec3> hydrogen_directions(const std::vector<Vec3>& bonds, int h) {
  std::vector<Vec3> out;
  if (h <= 0) return out;
  int m = static_cast<int>(bonds.size());
  int n = m + h;
  Vec3 sum{};
  for (const auto& b : bonds) sum = sum + b;
  if (h == 1) {
    if (norm(sum) > 1e-3)
      out.push_back(normalized(sum) * -1.0);
    else
      out.push_back(m == 0 ? Vec3{0, 0, 1} : any_perpendicular(bonds[0]));
    return out;
  }
  if (m == 0) {
    const double t = 1.0 / std::sqrt(3.0);
    const Vec3 tet[4] = {{t, t, t}, {t, -t, -t}, {-t, t, -t}, {-t, -t, t}};
    for (int k = 0; k < h && k < 4; ++k) out.push_back(tet[k]);
    return out;
  }
  if (m == 1) {
    Vec3 u = bonds[0];
    Vec3 p = any_perpendicular(u);
    Vec3 q = cross(u, p);
    double theta = n >= 4 ? std::acos(-1.0 / 3.0) : n == 3 ? 2.0 * kPi / 3.0 : kPi;
    for (int k = 0; k < h; ++k) {
      double phi = 2.0 * kPi * k / h;
      out.push_back(normalized(u * std::cos(theta) + (p * std::cos(phi) + q * std::sin(phi)) * std::sin(theta)));
    }
    return out;
  }
  Vec3 b = norm(sum) > 1e-3 ? normalized(sum) * -1.0 : any_perpendicular(bonds[0]);
  Vec3 nrm = cross(bonds[0], bonds[1]);
  nrm = norm(nrm) > 1e-3 ? normalized(nrm) : any_perpendicular(b);
  double half = std::acos(-1.0 / 3.0) / 2.0;
  out.push_back(normalized(b * std::cos(half) + nrm * std::sin(half)));
  out.push_back(normalized(b * std::cos(half) - nrm * std::sin(half)));
  for (int k = 2; k < h; ++k) out.push_back(b);
  return out;
}

/// Appends an H bonded to site `host`, `length` Å along `dir`. Coordinates
/// are wrapped into [0,1) and the bond carries the matching image shift.
inline void add_hydrogen(CrystalStructure& s, std::size_t host, Vec3 dir, double length) {
  Vec3 cart = s.cartesian(host) + dir * length;
  Vec3 f = s.lattice.to_fractional(cart);
  Shift sh{static_cast<int>(std::floor(f.x)), static_cast<int>(std::floor(f.y)), static_cast<int>(std::floor(f.z))};
  Site h;
  h.element = elements::H;
  h.frac = f - shift_vec(sh);
  int n = 1;
  std::set<std::string> labels;
  for (const auto& site : s.sites) labels.insert(site.label);
  do {
    h.label = "H" + std::string(s.sites[host].element.symbol()) + "_" + std::to_string(n++);
  } while (labels.count(h.label));
  s.sites.push_back(h);
  s.explicit_bonds.push_back({host, s.sites.size() - 1, sh});
}

inline CrystalStructure without_sites(const CrystalStructure& s, const std::set<int>& drop) {
  std::vector<bool> keep(s.size(), true);
  for (int d : drop) keep[d] = false;
  return s.subset(keep);
}

inline void clear_disorder(CrystalStructure& s) {
  for (auto& site : s.sites) {
    site.occupancy = 1.0;
    site.disorder_group.reset();
  }
}

inline std::string fmt(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::size_t count_changed_edges(const PeriodicGraph& a, const PeriodicGraph& b) {
  auto x = a.to_explicit_bonds(), y = b.to_explicit_bonds();
  std::vector<ExplicitBond> diff;
  std::set_symmetric_difference(x.begin(), x.end(), y.begin(), y.end(), std::back_inserter(diff));
  return diff.size();
}

}  // namespace repair_detail

inline RepairOutcome identity_outcome(const CrystalStructure& s, const BondPolicy& p) {
  RepairOutcome out;
  out.corrected = s;
  out.policy = p;
  return out;
}

// ===================================================================
// Bonds
// ===================================================================

/// Searches bond thresholds until the graph shows no bond error. Tries the
/// given policy without explicit bonds first, then the grid scale 1.00..1.30
/// (step 0.05) x margin 0..0.3 (step 0.1) ordered by distance from the given
/// policy; then the same list with one pair override for each element pair
/// implicated in the coordination mismatches.
inline RepairOutcome correct_bonds(const CrystalStructure& s, const ReferenceGraph& ref, const BondPolicy& policy,
                                   const RepairOptions& opt = {}) {
  using namespace repair_detail;
  auto before_graph = build_graph(s, policy);
  auto d = diagnose_graph(s, before_graph, ref, opt.diagnose);
  if (!d.has(ErrorKind::bond)) return identity_outcome(s, policy);

  BondPolicy base = policy;
  base.trust_explicit = false;
  // grid points nearest the input thresholds first (1.5 Å stands in for a typical radius sum)
  std::vector<std::pair<double, double>> grid;
  for (int si = 0; si <= 6; ++si)
    for (int mi = 0; mi <= 3; ++mi) grid.push_back({1.00 + 0.05 * si, 0.1 * mi});
  auto gap = [&](const std::pair<double, double>& g) {
    return std::abs(g.first - policy.scale) * 1.5 + std::abs(g.second - policy.margin);
  };
  std::stable_sort(grid.begin(), grid.end(), [&](const auto& x, const auto& y) { return gap(x) < gap(y) - 1e-9; });
  grid.insert(grid.begin(), {policy.scale, policy.margin});

  std::set<Element> present;
  for (const auto& site : s.sites) present.insert(site.element);
  BondPolicy widest = base;
  widest.scale = std::max(1.30, policy.scale);
  widest.margin = std::max(0.3, policy.margin);
  double cutoff = max_threshold(s, widest);

  // candidate override lengths: midpoints between consecutive distinct pair distances
  std::set<ElementPair> implicated;
  auto heavy_diffs = coordination_env_test(before_graph, ref, d.scaling.factor, label_options(ref, true));
  auto all_diffs = d.coordination_diffs;
  all_diffs.insert(all_diffs.end(), heavy_diffs.begin(), heavy_diffs.end());
  for (const auto& diff : all_diffs)
    for (Element n : diff.label.neighbors) implicated.insert(element_pair(diff.label.element, n));
  for (const auto& [pair, len] : policy.pair_overrides) cutoff = std::max(cutoff, len);
  auto contacts = find_contacts(s, cutoff);

  auto attempt = [&](const BondPolicy& p) -> std::optional<PeriodicGraph> {
    auto g = graph_from_contacts(s, p, contacts);
    auto r = diagnose_graph(s, g, ref, opt.diagnose);
    if (r.has(ErrorKind::bond)) return std::nullopt;
    return g;
  };
  auto finish = [&](const BondPolicy& p, const PeriodicGraph& g, const std::string& what) {
    RepairOutcome out;
    out.kind = ErrorKind::bond;
    out.corrected = s;
    out.corrected.explicit_bonds = g.to_explicit_bonds();
    out.policy = p;
    out.policy.trust_explicit = true;
    out.log.push_back("bond: " + what + "; " + std::to_string(count_changed_edges(before_graph, g)) + " bonds changed");
    return out;
  };

  for (auto [sc, m] : grid) {
    BondPolicy p = base;
    p.scale = sc;
    p.margin = m;
    if (auto g = attempt(p)) return finish(p, *g, "threshold scale=" + fmt(sc) + " margin=" + fmt(m, 1));
  }
  for (const auto& pair : implicated) {
    std::vector<double> dist;
    for (const auto& c : contacts)
      if (element_pair(s.sites[c.i].element, s.sites[c.j].element) == pair) dist.push_back(c.distance);
    std::sort(dist.begin(), dist.end());
    dist.erase(std::unique(dist.begin(), dist.end(), [](double a, double b) { return std::abs(a - b) < 1e-4; }),
               dist.end());
    if (dist.empty()) continue;
    std::vector<double> values{std::max(0.1, dist.front() - 0.05)};
    for (std::size_t q = 0; q + 1 < dist.size(); ++q) values.push_back((dist[q] + dist[q + 1]) / 2.0);
    for (double v : values)
      for (auto [sc, m] : grid) {
        BondPolicy p = base;
        p.scale = sc;
        p.margin = m;
        p.pair_overrides[pair] = v;
        if (auto g = attempt(p))
          return finish(p, *g,
                        "threshold scale=" + fmt(sc) + " margin=" + fmt(m, 1) + " override " +
                            std::string(pair.first.symbol()) + "-" + std::string(pair.second.symbol()) + "<=" + fmt(v, 3));
      }
  }
  fail(Errc::BondSearchExhausted, s.name + ": no bond threshold in the search grid satisfies the reference");
}

// ===================================================================
// Hydrogens
// ===================================================================

namespace repair_detail {

inline std::map<CoordinationLabel, std::set<int>> reference_h_counts(const ReferenceGraph& ref, const LabelOptions& lo) {
  std::map<CoordinationLabel, std::set<int>> out;
  auto scan = [&](const MolecularGraph& m) {
    auto adj = m.adjacency();
    for (int v = 0; v < m.size(); ++v) {
      if (m.atoms[v].is_hydrogen()) continue;
      std::vector<Element> els;
      for (int w : adj[v]) els.push_back(m.atoms[w]);
      if (auto l = make_label(m.atoms[v], els, lo)) out[*l].insert(m.hydrogen_count(v));
    }
  };
  if (ref.kind == ReferenceKind::combined_diagram)
    scan(ref.diagram);
  else
    for (const auto& c : ref.components) scan(c.graph);
  return out;
}

/// Sets H counts per heavy atom; returns the edited structure with explicit bonds.
inline CrystalStructure apply_h_targets(const CrystalStructure& s, const PeriodicGraph& g,
                                        const std::map<int, int>& target, const CovalentRadii& radii) {
  CrystalStructure out = s;
  out.explicit_bonds = g.to_explicit_bonds();
  auto adj = g.adjacency();
  std::set<int> drop;
  for (const auto& [v, want] : target) {
    std::vector<std::pair<double, int>> hs;
    for (const auto& [w, sh] : adj[v])
      if (g.elements[w].is_hydrogen() && adj[w].size() == 1) {
        Vec3 d = s.sites[w].frac + shift_vec(sh) - s.sites[v].frac;
        hs.push_back({norm(s.lattice.to_cartesian(d)), w});
      }
    int have = static_cast<int>(hs.size());
    if (want < have) {
      std::sort(hs.rbegin(), hs.rend());
      for (int k = 0; k < have - want; ++k) drop.insert(hs[k].second);
    } else if (want > have) {
      auto dirs = hydrogen_directions(bond_vectors(s, adj, v), want - have);
      double len = radii(elements::H) + radii(g.elements[v]);
      for (const auto& dir : dirs) add_hydrogen(out, static_cast<std::size_t>(v), dir, len);
    }
  }
  return drop.empty() ? out : without_sites(out, drop);
}

}  // namespace repair_detail

/// Restores hydrogen counts. Stage 1 keys heavy atoms by their heavy-neighbour
/// environment and copies the reference H count when it is unambiguous.
/// Stage 2 matches component skeletons and takes H counts from the matched
/// reference atoms; symmetry-equivalent assignments become ranked candidates.
inline RepairOutcome correct_hydrogens(const CrystalStructure& s, const ReferenceGraph& ref, const BondPolicy& policy,
                                       const RepairOptions& opt = {}) {
  using namespace repair_detail;
  auto g = build_graph(s, policy);
  auto d = diagnose_graph(s, g, ref, opt.diagnose);
  if (!d.has(ErrorKind::hydrogen)) return identity_outcome(s, policy);

  LabelOptions lo = label_options(ref, true);
  auto ref_h = reference_h_counts(ref, lo);
  auto nb = g.neighbors();
  std::map<int, int> target;
  std::set<int> ambiguous;
  int stage1 = 0;
  for (int v = 0; v < g.size(); ++v) {
    if (g.elements[v].is_hydrogen()) continue;
    std::vector<Element> els;
    for (int w : nb[v]) els.push_back(g.elements[w]);
    auto l = make_label(g.elements[v], els, lo);
    auto it = ref_h.find(*l);
    if (it == ref_h.end()) continue;
    if (it->second.size() == 1) {
      target[v] = *it->second.begin();
      int have = 0;
      for (int w : nb[v]) have += g.elements[w].is_hydrogen();
      if (have != target[v]) ++stage1;
    } else {
      ambiguous.insert(v);
    }
  }

  std::vector<std::map<int, int>> assignments{{}};
  bool truncated = false;
  int stage2_sites = 0;
  if (!ambiguous.empty()) {
    auto heavy_view = g.match_target([&](int v) { return !g.elements[v].is_hydrogen(); });
    MatchOptions mo = opt.diagnose.match;
    mo.all_mappings = true;
    for (const auto& c : ref.components) {
      std::vector<int> index;
      auto pattern = c.graph.heavy_skeleton(&index);
      if (pattern.size() == 0) continue;
      std::map<std::vector<int>, std::set<std::map<int, int>>> options;
      for (const auto& emb : find_embeddings(pattern, heavy_view, mo)) {
        std::map<int, int> assign;
        for (int u = 0; u < pattern.size(); ++u)
          if (ambiguous.count(emb.map[u])) assign[emb.map[u]] = c.graph.hydrogen_count(index[u]);
        if (!assign.empty()) options[emb.atoms].insert(assign);
      }
      for (const auto& [atoms, opts] : options) {
        ++stage2_sites;
        std::vector<std::map<int, int>> next;
        for (const auto& base : assignments)
          for (const auto& o : opts) {
            if (next.size() >= opt.candidate_cap) {
              truncated = true;
              break;
            }
            auto merged = base;
            merged.insert(o.begin(), o.end());
            next.push_back(std::move(merged));
          }
        assignments = std::move(next);
      }
    }
  }

  std::vector<CrystalStructure> cands;
  std::set<std::uint64_t> seen;
  for (const auto& a : assignments) {
    auto t = target;
    for (const auto& [v, n] : a) t[v] = n;
    auto cand = apply_h_targets(s, g, t, policy.radii);
    if (seen.insert(structure_hash(cand)).second) cands.push_back(std::move(cand));
  }

  BondPolicy out_policy = policy;
  out_policy.trust_explicit = true;
  std::vector<CrystalStructure> good;
  for (const auto& c : cands) {
    auto r = diagnose(c, ref, out_policy, opt.diagnose);
    if (!r.has(ErrorKind::hydrogen) && !r.has(ErrorKind::bond)) good.push_back(c);
  }
  RepairOutcome out;
  out.kind = ErrorKind::hydrogen;
  out.policy = out_policy;
  out.candidates_truncated = truncated;
  out.success = !good.empty();
  out.candidates = rank_candidates(good.empty() ? cands : good, *opt.model, opt.jobs);
  out.corrected = out.candidates.front().structure;
  int added = static_cast<int>(out.corrected.species_counts()[elements::H]) - d.cif_counts[elements::H];
  std::string msg = "hydrogen: identity mapping fixed " + std::to_string(stage1) + " atoms";
  if (stage2_sites) msg += ", graph matching resolved " + std::to_string(stage2_sites) + " fragments";
  msg += "; net H change " + std::string(added >= 0 ? "+" : "") + std::to_string(added);
  if (out.candidates.size() > 1) msg += "; " + std::to_string(out.candidates.size()) + " candidates ranked by energy";
  out.log.push_back(msg);
  if (!out.success) out.log.push_back("hydrogen: no candidate re-diagnoses clean");
  return out;
}

// ===================================================================
// Chemical rules
// ===================================================================

/// Applies rule-forced protonation to matched motifs. Rules fire only when
/// the reference expects at least as many extra H as the rule adds.
inline CrystalStructure apply_chemical_rules(const CrystalStructure& s, const ReferenceGraph& ref,
                                             const ChemicalRules& rules, const BondPolicy& policy = {},
                                             std::vector<std::string>* log = nullptr) {
  using namespace repair_detail;
  if (rules.rules.empty() || s.size() == 0) return s;
  auto g = build_graph(s, policy);
  auto adj = g.adjacency();
  int h_deficit = 0;
  try {
    auto refc = ref.species_counts();
    auto sc = species_scaling_test(g.species_counts(), refc);
    Rational want = sc.scaled_reference.count(elements::H) ? sc.scaled_reference.at(elements::H) : Rational{0};
    int have = g.species_counts()[elements::H];
    if (want.is_integer()) h_deficit = static_cast<int>(want.num()) - have;
  } catch (const Error&) {
    return s;
  }

  CrystalStructure out = s;
  bool changed = false;
  for (const auto& rule : rules.rules) {
    // bridging atoms: exactly `mu` metal neighbours of the rule element and no heavy non-metal neighbours
    std::vector<int> bridges;
    std::map<int, std::vector<int>> bridge_metals;
    std::map<int, int> bridge_h;
    for (int v = 0; v < g.size(); ++v) {
      if (g.elements[v] != rule.bridge) continue;
      std::vector<int> metals;
      int hs = 0;
      bool other = false;
      for (const auto& [w, sh] : adj[v]) {
        if (g.elements[w] == rule.metal)
          metals.push_back(w);
        else if (g.elements[w].is_hydrogen())
          ++hs;
        else
          other = true;
      }
      std::sort(metals.begin(), metals.end());
      metals.erase(std::unique(metals.begin(), metals.end()), metals.end());
      if (other || static_cast<int>(metals.size()) != rule.mu) continue;
      bridges.push_back(v);
      bridge_metals[v] = metals;
      bridge_h[v] = hs;
    }
    // clusters: metals joined through shared bridges
    std::map<int, int> parent;
    std::function<int(int)> find = [&](int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); };
    for (int b : bridges)
      for (int m : bridge_metals[b])
        if (!parent.count(m)) parent[m] = m;
    for (int b : bridges)
      for (int m : bridge_metals[b]) parent[find(m)] = find(bridge_metals[b].front());
    std::map<int, std::vector<int>> cluster_bridges, cluster_metals;
    for (const auto& [m, p] : parent) cluster_metals[find(m)].push_back(m);
    for (int b : bridges) cluster_bridges[find(bridge_metals[b].front())].push_back(b);

    for (const auto& [root, metals] : cluster_metals) {
      const auto& bs = cluster_bridges[root];
      if (static_cast<int>(metals.size()) != rule.cluster_size || static_cast<int>(bs.size()) != rule.bridge_count)
        continue;
      int existing = 0;
      for (int b : bs) existing += bridge_h[b];
      if (existing != 0 || h_deficit < rule.protonate) continue;
      // two-colour bridges that share two metals
      std::map<int, int> colour;
      bool bipartite = true;
      std::vector<int> queue{bs.front()};
      colour[bs.front()] = 0;
      for (std::size_t q = 0; q < queue.size(); ++q) {
        int x = queue[q];
        for (int y : bs) {
          if (y == x) continue;
          std::vector<int> shared;
          std::set_intersection(bridge_metals[x].begin(), bridge_metals[x].end(), bridge_metals[y].begin(),
                                bridge_metals[y].end(), std::back_inserter(shared));
          if (shared.size() < 2) continue;
          if (!colour.count(y)) {
            colour[y] = 1 - colour[x];
            queue.push_back(y);
          } else if (colour[y] == colour[x]) {
            bipartite = false;
          }
        }
      }
      std::vector<int> chosen;
      for (int b : bs)
        if (colour.count(b) && colour[b] == 0) chosen.push_back(b);
      if (!bipartite || static_cast<int>(colour.size()) != rule.bridge_count ||
          static_cast<int>(chosen.size()) != rule.protonate) {
        if (log) log->push_back("rules: " + rule.name + " motif found but bridges do not split evenly; skipped");
        continue;
      }
      if (!changed) out.explicit_bonds = g.to_explicit_bonds();
      for (int b : chosen) {
        auto dirs = hydrogen_directions(bond_vectors(s, adj, b), 1);
        add_hydrogen(out, static_cast<std::size_t>(b), dirs[0], policy.radii(elements::H) + policy.radii(rule.bridge));
      }
      h_deficit -= rule.protonate;
      changed = true;
      if (log)
        log->push_back("rules: " + rule.name + " protonated " + std::to_string(chosen.size()) + " of " +
                       std::to_string(bs.size()) + " bridging " + std::string(rule.bridge.symbol()));
    }
  }
  return out;
}

inline CrystalStructure apply_chemical_rules(const CrystalStructure& s, const ReferenceGraph& ref) {
  return apply_chemical_rules(s, ref, ChemicalRules::defaults());
}

// ===================================================================
// Disorder
// ===================================================================

struct DisorderCandidates {
  std::vector<CrystalStructure> structures;
  bool truncated = false;
  int assemblies = 0;
};

namespace repair_detail {

inline double steric_cutoff(const CovalentRadii& radii, Element a, Element b) { return 0.7 * (radii(a) + radii(b)); }

inline bool clash(const CrystalStructure& s, const std::vector<int>& a, const std::vector<int>& b,
                  const CovalentRadii& radii) {
  for (int x : a)
    for (int y : b) {
      if (x == y) continue;
      if (min_image_distance(s, x, y).distance < steric_cutoff(radii, s.sites[x].element, s.sites[y].element))
        return true;
    }
  return false;
}

/// Ordered H atoms left without any neighbour once `drop` is removed.
inline void drop_orphan_hydrogens(const PeriodicGraph& g, std::set<int>& drop) {
  auto nb = g.neighbors();
  for (int v = 0; v < g.size(); ++v) {
    if (!g.elements[v].is_hydrogen() || drop.count(v) || nb[v].empty()) continue;
    bool alive = false;
    for (int w : nb[v])
      if (!drop.count(w)) alive = true;
    if (!alive) drop.insert(v);
  }
}

/// Generator (a): one disorder group per assembly of mutually exclusive parts.
inline std::vector<CrystalStructure> group_selections(const CrystalStructure& s, const BondPolicy& p, std::size_t cap,
                                                      bool& truncated, int& n_assemblies) {
  auto g = build_graph(s, p);
  auto nb = g.neighbors();
  // parts: connected pieces of same-group atoms
  std::vector<int> part_of(g.size(), -1);
  std::vector<std::vector<int>> parts;
  std::vector<int> part_group;
  for (int v = 0; v < g.size(); ++v) {
    if (!g.disorder_group[v] || part_of[v] >= 0) continue;
    int gid = *g.disorder_group[v];
    std::vector<int> members{v};
    part_of[v] = static_cast<int>(parts.size());
    for (std::size_t q = 0; q < members.size(); ++q)
      for (int w : nb[members[q]])
        if (part_of[w] < 0 && g.disorder_group[w] == gid) {
          part_of[w] = part_of[v];
          members.push_back(w);
        }
    std::sort(members.begin(), members.end());
    parts.push_back(members);
    part_group.push_back(gid);
  }
  int np = static_cast<int>(parts.size());
  // attachment atoms: ordered neighbours of each part
  std::vector<std::set<int>> attach(np);
  for (int k = 0; k < np; ++k)
    for (int v : parts[k])
      for (int w : nb[v])
        if (!g.disorder_group[w]) attach[k].insert(w);
  std::vector<int> assembly(np, -1);
  std::vector<std::vector<int>> assemblies;
  auto linked = [&](int a, int b) {
    if (part_group[a] == part_group[b]) return false;
    for (int x : attach[a])
      if (attach[b].count(x)) return true;
    return clash(s, parts[a], parts[b], p.radii);
  };
  for (int k = 0; k < np; ++k) {
    if (assembly[k] >= 0) continue;
    std::vector<int> members{k};
    assembly[k] = static_cast<int>(assemblies.size());
    for (std::size_t q = 0; q < members.size(); ++q)
      for (int o = 0; o < np; ++o)
        if (assembly[o] < 0 && linked(members[q], o)) {
          assembly[o] = assembly[k];
          members.push_back(o);
        }
    assemblies.push_back(members);
  }
  n_assemblies = static_cast<int>(assemblies.size());
  std::vector<std::vector<int>> choices;
  for (const auto& a : assemblies) {
    std::set<int> gs;
    for (int k : a) gs.insert(part_group[k]);
    choices.push_back({gs.begin(), gs.end()});
  }
  std::vector<CrystalStructure> out;
  std::vector<std::size_t> pick(assemblies.size(), 0);
  for (;;) {
    if (out.size() >= cap) {
      truncated = true;
      break;
    }
    std::set<int> drop;
    for (std::size_t a = 0; a < assemblies.size(); ++a)
      for (int k : assemblies[a])
        if (part_group[k] != choices[a][pick[a]]) drop.insert(parts[k].begin(), parts[k].end());
    drop_orphan_hydrogens(g, drop);
    auto cand = without_sites(s, drop);
    clear_disorder(cand);
    out.push_back(std::move(cand));
    // odometer, last assembly fastest
    int a = static_cast<int>(assemblies.size()) - 1;
    while (a >= 0 && ++pick[a] == choices[a].size()) pick[a--] = 0;
    if (a < 0) break;
  }
  return out;
}

/// Generator (b): for components found more often than expected, keep every
/// steric-clash-free selection of the expected size.
inline std::vector<CrystalStructure> multiplicity_selections(const CrystalStructure& s, const ReferenceGraph& ref,
                                                             const BondPolicy& p, const RepairOptions& opt,
                                                             std::size_t cap, bool& truncated) {
  auto g = build_graph(s, p);
  Rational k;
  try {
    k = diagnose_graph(s, g, ref, opt.diagnose).scaling.factor;
  } catch (const Error&) {
    return {s};
  }
  std::vector<std::set<int>> drops{{}};
  for (const auto& cls : skeleton_classes(ref)) {
    Rational expected = cls.multiplicity * k;
    auto count = subgraph_match_test(g, cls.graph, expected, opt.diagnose.match);
    if (!expected.is_integer() || Rational{count.found} <= expected) continue;
    int want = static_cast<int>(expected.num());
    const auto& embs = count.all_matches;
    int n = static_cast<int>(embs.size());
    std::vector<std::vector<char>> ok(n, std::vector<char>(n, 1));
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j)
        ok[i][j] = ok[j][i] = !share_atom(embs[i], embs[j]) && !clash(s, embs[i], embs[j], p.radii);
    std::vector<std::vector<int>> selections;
    std::vector<int> cur;
    std::function<void(int)> choose = [&](int from) {
      if (selections.size() >= cap) {
        truncated = true;
        return;
      }
      if (static_cast<int>(cur.size()) == want) {
        selections.push_back(cur);
        return;
      }
      for (int i = from; i < n; ++i) {
        if (n - i < want - static_cast<int>(cur.size())) break;
        bool fits = true;
        for (int c : cur) fits = fits && ok[c][i];
        if (!fits) continue;
        cur.push_back(i);
        choose(i + 1);
        cur.pop_back();
      }
    };
    choose(0);
    std::vector<std::set<int>> next;
    for (const auto& base : drops)
      for (const auto& sel : selections) {
        if (next.size() >= cap) {
          truncated = true;
          break;
        }
        std::set<int> keep_atoms;
        for (int i : sel) keep_atoms.insert(embs[i].begin(), embs[i].end());
        auto d = base;
        for (int i = 0; i < n; ++i)
          for (int a : embs[i])
            if (!keep_atoms.count(a)) d.insert(a);
        next.push_back(std::move(d));
      }
    drops = std::move(next);
  }
  std::vector<CrystalStructure> out;
  for (auto d : drops) {
    drop_orphan_hydrogens(g, d);
    auto cand = without_sites(s, d);
    clear_disorder(cand);
    out.push_back(std::move(cand));
  }
  return out;
}

}  // namespace repair_detail

/// Candidate structures consistent with the reference: disorder-group
/// selections first, then over-multiplicity selections. Candidates whose
/// species test passes are kept (heavy-atom agreement is the fallback when
/// none match hydrogen too). Every candidate has full occupancy and no groups.
inline DisorderCandidates enumerate_disorder_candidates(const CrystalStructure& s, const ReferenceGraph& ref,
                                                        const BondPolicy& policy, const RepairOptions& opt = {}) {
  using namespace repair_detail;
  DisorderCandidates out;
  bool has_groups = std::any_of(s.sites.begin(), s.sites.end(), [](const Site& x) { return x.disorder_group.has_value(); });
  std::vector<CrystalStructure> stage_a;
  if (has_groups) {
    stage_a = group_selections(s, policy, opt.candidate_cap, out.truncated, out.assemblies);
  } else {
    auto c = s;
    clear_disorder(c);
    stage_a.push_back(std::move(c));
  }
  BondPolicy dist_policy = policy;
  dist_policy.trust_explicit = policy.trust_explicit;
  std::vector<CrystalStructure> all;
  for (const auto& a : stage_a) {
    if (all.size() >= opt.candidate_cap) {
      out.truncated = true;
      break;
    }
    for (auto& b : multiplicity_selections(a, ref, dist_policy, opt, opt.candidate_cap - all.size(), out.truncated))
      all.push_back(std::move(b));
  }
  auto refc = ref.species_counts();
  std::vector<CrystalStructure> full, heavy;
  std::set<std::uint64_t> seen;
  for (auto& c : all) {
    if (!seen.insert(structure_hash(c)).second) continue;
    ScalingResult r;
    try {
      r = species_scaling_test(c.species_counts(), refc);
    } catch (const Error&) {
      continue;
    }
    bool heavy_ok = std::none_of(r.mismatches.begin(), r.mismatches.end(),
                                 [](const CountMismatch& m) { return !m.element.is_hydrogen(); });
    if (r.passed())
      full.push_back(std::move(c));
    else if (heavy_ok)
      heavy.push_back(std::move(c));
  }
  out.structures = full.empty() ? std::move(heavy) : std::move(full);
  if (out.structures.empty())
    fail(Errc::NoConsistentSelection, s.name + ": no disorder selection matches the reference composition");
  return out;
}

// ===================================================================
// Full pipeline
// ===================================================================

/// diagnose -> disorder -> bonds -> chemical rules -> hydrogens -> re-diagnose.
/// Disorder candidates are tried in energy order until one completes clean.
inline RepairOutcome repair_all(const CrystalStructure& s, const ReferenceGraph& ref, const BondPolicy& policy,
                                const RepairOptions& opt = {}) {
  const ChemicalRules& rules = opt.rules ? *opt.rules : ChemicalRules::defaults();
  RepairOutcome out = identity_outcome(s, policy);
  DiagnosisReport d0;
  try {
    d0 = diagnose(s, ref, policy, opt.diagnose);
  } catch (const Error& e) {
    out.success = false;
    out.log.push_back(std::string("diagnose: ") + e.what());
    return out;
  }
  if (d0.clean()) return out;
  out.kind = d0.severity;

  // remaining stages on one structure; returns the log and the final report
  auto finish_pipeline = [&](CrystalStructure cur, BondPolicy pol, std::vector<std::string> log,
                             RepairOutcome& result) -> bool {
    try {
      auto d = diagnose(cur, ref, pol, opt.diagnose);
      if (d.has(ErrorKind::bond)) {
        auto r = correct_bonds(cur, ref, pol, opt);
        cur = r.corrected;
        pol = r.policy;
        log.insert(log.end(), r.log.begin(), r.log.end());
      }
      std::vector<std::string> rule_log;
      cur = apply_chemical_rules(cur, ref, rules, pol, &rule_log);
      if (!rule_log.empty()) pol.trust_explicit = true;
      log.insert(log.end(), rule_log.begin(), rule_log.end());
      d = diagnose(cur, ref, pol, opt.diagnose);
      if (d.has(ErrorKind::hydrogen)) {
        auto r = correct_hydrogens(cur, ref, pol, opt);
        cur = r.corrected;
        pol = r.policy;
        log.insert(log.end(), r.log.begin(), r.log.end());
        if (r.candidates.size() > 1) result.candidates = r.candidates;
      }
      auto final_report = diagnose(cur, ref, pol, opt.diagnose);
      result.corrected = cur;
      result.policy = pol;
      result.log = log;
      result.success = final_report.clean();
      if (!result.success) {
        std::string kinds;
        for (const auto& e : final_report.errors) kinds += " " + std::string(kind_name(e.kind)) + ":" + e.detail + ";";
        result.log.push_back("final: structure still fails:" + kinds);
      }
      return result.success;
    } catch (const Error& e) {
      result.corrected = cur;
      result.policy = pol;
      result.log = log;
      result.log.push_back(std::string("error: ") + e.what());
      result.success = false;
      return false;
    }
  };

  if (d0.has(ErrorKind::disorder)) {
    DisorderCandidates dc;
    try {
      dc = enumerate_disorder_candidates(s, ref, policy, opt);
    } catch (const Error& e) {
      out.success = false;
      out.log.push_back(std::string("disorder: ") + e.what());
      return out;
    }
    auto ranked = rank_candidates(dc.structures, *opt.model, opt.jobs);
    out.candidates_truncated = dc.truncated;
    int scored = static_cast<int>(std::count_if(ranked.begin(), ranked.end(), [](const auto& r) { return !r.failed; }));
    if (scored == 0) {
      out.success = false;
      out.candidates = ranked;
      out.log.push_back("disorder: energy model failed for all " + std::to_string(ranked.size()) + " candidates: " +
                        ranked.front().error);
      return out;
    }
    int attempts = std::min<int>(opt.max_disorder_attempts, scored);
    RepairOutcome best;
    bool have_best = false;
    for (int a = 0; a < attempts; ++a) {
      RepairOutcome trial = out;
      std::string msg = "disorder: " + std::to_string(ranked.size()) + " candidates" +
                        (dc.truncated ? " (cap reached)" : "") + ", selected rank " + std::to_string(a + 1) +
                        " energy " + repair_detail::fmt(ranked[a].energy, 4);
      bool ok = finish_pipeline(ranked[a].structure, policy, {msg}, trial);
      if (!have_best || ok) {
        best = trial;
        best.candidates.clear();
        best.candidates.push_back({best.corrected, ranked[a].energy, ranked[a].failed, ranked[a].error,
                                   structure_hash(best.corrected)});
        for (int r = 0; r < static_cast<int>(ranked.size()); ++r)
          if (r != a) best.candidates.push_back(ranked[r]);
        have_best = true;
      }
      if (ok) break;
    }
    return best;
  }
  finish_pipeline(s, policy, {}, out);
  return out;
}

}  // namespace mofcure
