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
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/match.hpp"
#include "mofcure/molgraph.hpp"
#include "mofcure/smiles.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

using ElementPair = std::pair<Element, Element>;

inline ElementPair element_pair(Element a, Element b) { return a < b ? ElementPair{a, b} : ElementPair{b, a}; }

/// Distance criterion for bond perception.
struct BondPolicy {
  double scale = 1.15;
  double margin = 0.0;
  std::map<ElementPair, double> pair_overrides;  ///< max bond length in Å, keyed by element_pair()
  std::set<ElementPair> forbidden_pairs;
  bool trust_explicit = true;  ///< use the file's bond loop when one is present
  /// Pairs closer than min_ratio * (r_cov sum) are overlapping sites, not bonds.
  double min_ratio = 0.7;
  CovalentRadii radii;

  static constexpr double kMinScale = 0.7, kMaxScale = 1.5;
  static constexpr double kMinMargin = 0.0, kMaxMargin = 1.0;

  void validate() const {
    if (scale < kMinScale || scale > kMaxScale)
      fail(Errc::Config, "bond scale " + std::to_string(scale) + " outside [0.7, 1.5]");
    if (margin < kMinMargin || margin > kMaxMargin)
      fail(Errc::Config, "bond margin " + std::to_string(margin) + " outside [0, 1.0]");
    for (const auto& [pair, len] : pair_overrides)
      if (!(len > 0)) fail(Errc::Config, "pair override must be positive");
  }

  void set_override(Element a, Element b, double max_length) { pair_overrides[element_pair(a, b)] = max_length; }
  void forbid(Element a, Element b) { forbidden_pairs.insert(element_pair(a, b)); }

  /// Maximum bond length for the pair, or nothing when the pair never bonds.
  std::optional<double> threshold(Element a, Element b) const {
    auto key = element_pair(a, b);
    if (forbidden_pairs.count(key)) return std::nullopt;
    if (a.is_hydrogen() && b.is_hydrogen()) return std::nullopt;
    if (a.is_noble_gas() || b.is_noble_gas()) return std::nullopt;
    if (auto it = pair_overrides.find(key); it != pair_overrides.end()) return it->second;
    if (a.is_metal() && b.is_metal()) return std::nullopt;
    return scale * (radii(a) + radii(b)) + margin;
  }
};

struct ImageDistance {
  double distance = 0;
  Shift shift;  ///< translation applied to site j
};

namespace crystal_detail {

inline Shift nearest_shift(Vec3 d) {
  return {-static_cast<int>(std::lround(d.x)), -static_cast<int>(std::lround(d.y)),
          -static_cast<int>(std::lround(d.z))};
}

inline Vec3 shifted_delta(Vec3 d, Shift s) { return {d.x + s.a, d.y + s.b, d.z + s.c}; }

}  // namespace crystal_detail

/// Shortest distance between site i and any periodic image of site j.
inline ImageDistance min_image_distance(const CrystalStructure& s, std::size_t i, std::size_t j) {
  Vec3 d = s.sites[j].frac - s.sites[i].frac;
  Shift base = crystal_detail::nearest_shift(d);
  ImageDistance best{1e300, {}};
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        Shift sh = base + Shift{a, b, c};
        double dist = norm(s.lattice.to_cartesian(crystal_detail::shifted_delta(d, sh)));
        if (dist < best.distance - 1e-12) best = {dist, sh};
      }
  return best;
}

/// One interatomic contact: site j displaced by `shift` lies `distance` from site i.
struct Contact {
  int i = 0, j = 0;
  Shift shift;
  double distance = 0;
};

/// All contacts up to `cutoff` Å, each unordered pair/image listed once
/// (i < j, or i == j with a positive shift). Sorted by (i, j, shift).
inline std::vector<Contact> find_contacts(const CrystalStructure& s, double cutoff) {
  std::vector<Contact> out;
  auto w = s.lattice.perpendicular_widths();
  int ra = static_cast<int>(std::ceil(cutoff / w[0])), rb = static_cast<int>(std::ceil(cutoff / w[1])),
      rc = static_cast<int>(std::ceil(cutoff / w[2]));
  int n = static_cast<int>(s.size());
  std::vector<Vec3> cart(n);
  for (int k = 0; k < n; ++k) cart[k] = s.cartesian(k);
  auto vec = s.lattice.vectors();
  for (int i = 0; i < n; ++i)
    for (int j = i; j < n; ++j) {
      Vec3 d = s.sites[j].frac - s.sites[i].frac;
      Shift base = crystal_detail::nearest_shift(d);
      for (int a = -ra; a <= ra; ++a)
        for (int b = -rb; b <= rb; ++b)
          for (int c = -rc; c <= rc; ++c) {
            Shift sh = base + Shift{a, b, c};
            if (i == j && !(Shift{} < sh)) continue;
            Vec3 r = cart[j] - cart[i] + vec[0] * sh.a + vec[1] * sh.b + vec[2] * sh.c;
            double dist = norm(r);
            if (dist <= cutoff) out.push_back({i, j, sh, dist});
          }
    }
  std::sort(out.begin(), out.end(), [](const Contact& x, const Contact& y) {
    return std::tie(x.i, x.j, x.shift) < std::tie(y.i, y.j, y.shift);
  });
  return out;
}

struct GraphEdge {
  int u = 0, v = 0;
  Shift shift;  ///< image of v relative to u
  double length = 0;

  friend bool operator==(const GraphEdge& a, const GraphEdge& b) {
    return a.u == b.u && a.v == b.v && a.shift == b.shift;
  }
};

/// Bond graph of a crystal structure; vertex k is site k.
struct PeriodicGraph {
  std::vector<Element> elements;
  std::vector<int> site_index;
  std::vector<std::optional<int>> disorder_group;
  std::vector<GraphEdge> edges;

  int size() const { return static_cast<int>(elements.size()); }

  SpeciesCounts species_counts() const {
    SpeciesCounts out;
    for (Element e : elements) ++out[e];
    return out;
  }

  std::vector<std::vector<std::pair<int, Shift>>> adjacency() const {
    std::vector<std::vector<std::pair<int, Shift>>> adj(elements.size());
    for (const auto& e : edges) {
      adj[e.u].push_back({e.v, e.shift});
      if (e.u != e.v || !e.shift.is_zero()) adj[e.v].push_back({e.u, -e.shift});
    }
    return adj;
  }

  /// Neighbour vertex lists (one entry per bond, images not distinguished).
  std::vector<std::vector<int>> neighbors() const {
    std::vector<std::vector<int>> out(elements.size());
    for (const auto& e : edges) {
      out[e.u].push_back(e.v);
      out[e.v].push_back(e.u);
    }
    return out;
  }

  /// Matcher view restricted to vertices accepted by `keep`; indices are preserved
  /// and rejected vertices become isolated, unmatched placeholders.
  template <class Pred>
  MatchTarget match_target(Pred keep) const {
    MatchTarget t;
    t.elements = elements;
    t.adj.resize(elements.size());
    for (int v = 0; v < size(); ++v)
      if (!keep(v)) t.elements[v] = Element{};
    for (const auto& e : edges)
      if (keep(e.u) && keep(e.v)) t.add_edge(e.u, e.v, e.shift);
    return t;
  }

  MatchTarget match_target() const {
    return match_target([](int) { return true; });
  }

  std::vector<ExplicitBond> to_explicit_bonds() const {
    std::vector<ExplicitBond> out;
    for (const auto& e : edges)
      out.push_back(ExplicitBond{static_cast<std::size_t>(e.u), static_cast<std::size_t>(e.v), e.shift}.canonical());
    std::sort(out.begin(), out.end());
    return out;
  }
};

inline bool compatible_groups(const std::optional<int>& a, const std::optional<int>& b) {
  return !a || !b || *a == *b;
}

inline double max_threshold(const CrystalStructure& s, const BondPolicy& p) {
  std::set<Element> present;
  for (const auto& site : s.sites) present.insert(site.element);
  double cutoff = 0;
  for (Element a : present)
    for (Element b : present)
      if (auto t = p.threshold(a, b)) cutoff = std::max(cutoff, *t);
  return cutoff;
}

inline PeriodicGraph empty_graph(const CrystalStructure& s) {
  PeriodicGraph g;
  for (std::size_t k = 0; k < s.size(); ++k) {
    g.elements.push_back(s.sites[k].element);
    g.site_index.push_back(static_cast<int>(k));
    g.disorder_group.push_back(s.sites[k].disorder_group);
  }
  return g;
}

/// Applies a bond policy to a precomputed contact list (see find_contacts).
inline PeriodicGraph graph_from_contacts(const CrystalStructure& s, const BondPolicy& p,
                                         const std::vector<Contact>& contacts) {
  PeriodicGraph g = empty_graph(s);
  for (const auto& c : contacts) {
    const auto& si = s.sites[c.i];
    const auto& sj = s.sites[c.j];
    if (!compatible_groups(si.disorder_group, sj.disorder_group)) continue;
    auto t = p.threshold(si.element, sj.element);
    if (!t || c.distance > *t) continue;
    if (c.distance < p.min_ratio * (p.radii(si.element) + p.radii(sj.element))) continue;
    g.edges.push_back({c.i, c.j, c.shift, c.distance});
  }
  return g;
}

/// Bond graph from distances, or from the file's bond list when the policy
/// trusts explicit bonds and the structure carries them.
inline PeriodicGraph build_graph(const CrystalStructure& s, const BondPolicy& p = {}) {
  if (p.trust_explicit && !s.explicit_bonds.empty()) {
    PeriodicGraph g = empty_graph(s);
    std::set<ExplicitBond> seen;
    for (const auto& b : s.explicit_bonds) {
      auto cb = b.canonical();
      if (!seen.insert(cb).second) continue;
      Vec3 d = crystal_detail::shifted_delta(s.sites[cb.j].frac - s.sites[cb.i].frac, cb.shift);
      g.edges.push_back({static_cast<int>(cb.i), static_cast<int>(cb.j), cb.shift, norm(s.lattice.to_cartesian(d))});
    }
    return g;
  }
  return graph_from_contacts(s, p, find_contacts(s, max_threshold(s, p)));
}

/// Copy whose explicit bond list is the graph built under `p`.
inline CrystalStructure with_bond_list(const CrystalStructure& s, const BondPolicy& p = {}) {
  CrystalStructure out = s;
  out.explicit_bonds = build_graph(s, p).to_explicit_bonds();
  return out;
}

struct Component {
  std::vector<int> atoms;  ///< sorted vertex indices
  bool periodic = false;
};

/// Connected components in order of their lowest vertex. A component is
/// periodic when a cycle carries a nonzero net image shift.
inline std::vector<Component> connected_components(const PeriodicGraph& g) {
  std::vector<Component> out;
  auto adj = g.adjacency();
  std::vector<int> comp(g.size(), -1);
  std::vector<Shift> off(g.size());
  for (int s = 0; s < g.size(); ++s) {
    if (comp[s] >= 0) continue;
    Component c;
    comp[s] = static_cast<int>(out.size());
    c.atoms.push_back(s);
    for (std::size_t q = 0; q < c.atoms.size(); ++q) {
      int u = c.atoms[q];
      for (const auto& [v, sh] : adj[u]) {
        Shift want = off[u] + sh;
        if (comp[v] < 0) {
          comp[v] = comp[s];
          off[v] = want;
          c.atoms.push_back(v);
        } else if (off[v] != want) {
          c.periodic = true;
        }
      }
    }
    std::sort(c.atoms.begin(), c.atoms.end());
    out.push_back(std::move(c));
  }
  return out;
}

/// Finite molecule spanned by `atoms` (bond images dropped).
inline MolecularGraph component_molecule(const PeriodicGraph& g, const std::vector<int>& atoms) {
  MolecularGraph m;
  std::map<int, int> local;
  for (int a : atoms) {
    local[a] = m.size();
    m.atoms.push_back(g.elements[a]);
  }
  std::set<std::pair<int, int>> seen;
  for (const auto& e : g.edges) {
    auto iu = local.find(e.u), iv = local.find(e.v);
    if (iu == local.end() || iv == local.end() || e.u == e.v) continue;
    auto key = std::minmax(iu->second, iv->second);
    if (seen.insert(key).second) m.bonds.push_back({key.first, key.second, 1});
  }
  return m;
}

/// Named molecular graphs recognised as free solvent.
class SolventLibrary {
 public:
  struct Entry {
    std::string name;
    std::string smiles;
    MolecularGraph graph;
  };

  void add(const std::string& name, const std::string& smiles) {
    auto g = parse_smiles(smiles);
    g.name = name;
    entries_.push_back({name, smiles, std::move(g)});
  }

  const std::vector<Entry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

  std::vector<MolecularGraph> graphs() const {
    std::vector<MolecularGraph> out;
    for (const auto& e : entries_) out.push_back(e.graph);
    return out;
  }

  /// "name SMILES" per line; '#' starts a comment.
  static SolventLibrary load(std::istream& in) {
    SolventLibrary lib;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string name, smiles;
      if (!(ls >> name)) continue;
      if (!(ls >> smiles)) fail(Errc::Config, "solvent library line " + std::to_string(lineno) + ": missing SMILES");
      lib.add(name, smiles);
    }
    return lib;
  }

  static SolventLibrary load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open " + path);
    return load(in);
  }

  static const SolventLibrary& defaults() {
    static const SolventLibrary lib = [] {
      SolventLibrary l;
      for (auto [name, smi] : std::initializer_list<std::pair<const char*, const char*>>{
               {"water", "O"},
               {"DMF", "CN(C)C=O"},
               {"DMA", "CC(=O)N(C)C"},
               {"DEF", "CCN(CC)C=O"},
               {"methanol", "CO"},
               {"ethanol", "CCO"},
               {"acetonitrile", "CC#N"},
               {"DMSO", "CS(C)=O"},
               {"THF", "C1CCOC1"},
               {"dioxane", "C1COCCO1"},
               {"chloroform", "ClC(Cl)Cl"},
               {"DCM", "ClCCl"},
           })
        l.add(name, smi);
      return l;
    }();
    return lib;
  }

 private:
  std::vector<Entry> entries_;
};

struct ComponentReport {
  std::string name;  ///< solvent name, or "unmatched"
  std::string formula;
  std::vector<std::string> labels;
};

struct SolventRemoval {
  CrystalStructure structure;
  std::vector<ComponentReport> removed;
  std::vector<ComponentReport> unmatched;
};

/// Deletes every finite component isomorphic to a listed solvent. Periodic
/// components and unrecognised finite fragments are kept; the latter are reported.
inline SolventRemoval remove_free_solvent(const CrystalStructure& s, const BondPolicy& p,
                                          const std::vector<MolecularGraph>& solvents) {
  SolventRemoval out;
  auto g = build_graph(s, p);
  std::vector<bool> keep(s.size(), true);
  for (const auto& comp : connected_components(g)) {
    if (comp.periodic) continue;
    auto mol = component_molecule(g, comp.atoms);
    ComponentReport rep;
    rep.formula = mol.formula_string();
    for (int a : comp.atoms) rep.labels.push_back(s.sites[a].label);
    const MolecularGraph* hit = nullptr;
    for (const auto& solvent : solvents)
      if (isomorphic(solvent, mol)) {
        hit = &solvent;
        break;
      }
    if (hit) {
      rep.name = hit->name;
      for (int a : comp.atoms) keep[a] = false;
      out.removed.push_back(std::move(rep));
    } else {
      rep.name = "unmatched";
      out.unmatched.push_back(std::move(rep));
    }
  }
  out.structure = s.subset(keep);
  return out;
}

inline SolventRemoval remove_free_solvent(const CrystalStructure& s, const BondPolicy& p = {}) {
  return remove_free_solvent(s, p, SolventLibrary::defaults().graphs());
}

}  // namespace mofcure
