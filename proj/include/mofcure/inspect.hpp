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
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mofcure/crystal.hpp"
#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/match.hpp"
#include "mofcure/rational.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

// ===================================================================
// Species scaling
// ===================================================================

struct CountMismatch {
  Element element;
  Rational expected;
  int found = 0;
};

struct ScalingResult {
  Element anchor;
  Rational factor{0};
  RationalCounts scaled_reference;
  std::vector<CountMismatch> mismatches;  ///< ordered by atomic number

  bool passed() const { return mismatches.empty(); }
};

/// Rarest metal in the reference (ties go to the heavier element); the
/// rarest element overall when the reference has no metal.
inline Element choose_anchor(const RationalCounts& ref) {
  std::optional<Element> best;
  bool best_metal = false;
  for (const auto& [e, n] : ref) {
    if (n.is_zero()) continue;
    bool metal = e.is_metal();
    if (!best || (metal && !best_metal) ||
        (metal == best_metal && (n < ref.at(*best) || (n == ref.at(*best) && e.z() > best->z())))) {
      best = e;
      best_metal = metal;
    }
  }
  if (!best) fail(Errc::MissingAnchor, "reference has no atoms");
  return *best;
}

inline ScalingResult species_scaling_test(const SpeciesCounts& cif, const RationalCounts& ref, Element anchor) {
  auto rit = ref.find(anchor);
  auto cit = cif.find(anchor);
  if (rit == ref.end() || rit->second.is_zero())
    fail(Errc::MissingAnchor, "anchor " + std::string(anchor.symbol()) + " absent from reference");
  if (cit == cif.end() || cit->second == 0)
    fail(Errc::MissingAnchor, "anchor " + std::string(anchor.symbol()) + " absent from structure");
  ScalingResult r;
  r.anchor = anchor;
  r.factor = Rational{cit->second} / rit->second;
  std::set<Element> all;
  for (const auto& [e, n] : ref) all.insert(e);
  for (const auto& [e, n] : cif) all.insert(e);
  for (Element e : all) {
    Rational want = ref.count(e) ? r.factor * ref.at(e) : Rational{0};
    int have = cif.count(e) ? cif.at(e) : 0;
    if (ref.count(e)) r.scaled_reference[e] = want;
    if (want != Rational{have}) r.mismatches.push_back({e, want, have});
  }
  return r;
}

inline ScalingResult species_scaling_test(const SpeciesCounts& cif, const RationalCounts& ref) {
  return species_scaling_test(cif, ref, choose_anchor(ref));
}

inline RationalCounts to_rational(const SpeciesCounts& c) {
  RationalCounts out;
  for (const auto& [e, n] : c) out[e] = Rational{n};
  return out;
}

// ===================================================================
// Coordination environments
// ===================================================================

struct CoordinationLabel {
  Element element;
  std::vector<Element> neighbors;  ///< sorted

  std::string str() const {
    std::string s(element.symbol());
    s += '(';
    for (std::size_t k = 0; k < neighbors.size(); ++k) {
      if (k) s += ',';
      s += neighbors[k].symbol();
    }
    return s + ')';
  }
  friend bool operator==(const CoordinationLabel&, const CoordinationLabel&) = default;
  friend auto operator<=>(const CoordinationLabel&, const CoordinationLabel&) = default;
};

struct LabelOptions {
  bool strip_metal_neighbors = false;  ///< metal neighbours are wildcards
  bool blank_metals = false;           ///< metal atoms carry no prescribed neighbours
  bool heavy_only = false;             ///< drop H atoms and H neighbours
};

inline std::optional<CoordinationLabel> make_label(Element e, std::vector<Element> nbrs, const LabelOptions& o) {
  if (o.heavy_only && e.is_hydrogen()) return std::nullopt;
  CoordinationLabel l{e, {}};
  if (!(o.blank_metals && e.is_metal()))
    for (Element n : nbrs) {
      if (o.strip_metal_neighbors && n.is_metal()) continue;
      if (o.heavy_only && n.is_hydrogen()) continue;
      l.neighbors.push_back(n);
    }
  std::sort(l.neighbors.begin(), l.neighbors.end());
  return l;
}

/// Label of every vertex (vertices dropped by the options are skipped).
inline std::map<CoordinationLabel, int> label_counts(const PeriodicGraph& g, const LabelOptions& o) {
  std::map<CoordinationLabel, int> out;
  auto nb = g.neighbors();
  for (int v = 0; v < g.size(); ++v) {
    std::vector<Element> els;
    for (int w : nb[v]) els.push_back(g.elements[w]);
    if (auto l = make_label(g.elements[v], els, o)) ++out[*l];
  }
  return out;
}

inline std::map<CoordinationLabel, Rational> label_counts(const MolecularGraph& g, const LabelOptions& o) {
  std::map<CoordinationLabel, Rational> out;
  auto adj = g.adjacency();
  for (int v = 0; v < g.size(); ++v) {
    std::vector<Element> els;
    for (int w : adj[v]) els.push_back(g.atoms[w]);
    if (auto l = make_label(g.atoms[v], els, o)) out[*l] += Rational{1};
  }
  return out;
}

/// Label options matching the reference kind: component sets treat metals loosely.
inline LabelOptions label_options(const ReferenceGraph& ref, bool heavy_only = false) {
  LabelOptions o;
  o.heavy_only = heavy_only;
  if (ref.kind == ReferenceKind::component_set) o.strip_metal_neighbors = o.blank_metals = true;
  return o;
}

/// Reference label multiset scaled by k.
inline std::map<CoordinationLabel, Rational> reference_labels(const ReferenceGraph& ref, Rational k,
                                                              const LabelOptions& o) {
  std::map<CoordinationLabel, Rational> out;
  if (ref.kind == ReferenceKind::combined_diagram) {
    for (const auto& [l, n] : label_counts(ref.diagram, o)) out[l] += n * k;
  } else {
    for (const auto& c : ref.components)
      for (const auto& [l, n] : label_counts(c.graph, o)) out[l] += n * c.spec.multiplicity * k;
  }
  return out;
}

struct LabelDiff {
  CoordinationLabel label;
  Rational expected;
  int found = 0;
};

/// Labels whose counts differ between the structure and the k-scaled reference.
inline std::vector<LabelDiff> coordination_env_test(const PeriodicGraph& cif, const ReferenceGraph& ref, Rational k,
                                                    const LabelOptions& o) {
  auto want = reference_labels(ref, k, o);
  auto have = label_counts(cif, o);
  std::set<CoordinationLabel> all;
  for (const auto& [l, n] : want) all.insert(l);
  for (const auto& [l, n] : have) all.insert(l);
  std::vector<LabelDiff> out;
  for (const auto& l : all) {
    Rational w = want.count(l) ? want.at(l) : Rational{0};
    int h = have.count(l) ? have.at(l) : 0;
    if (w != Rational{h}) out.push_back({l, w, h});
  }
  return out;
}

inline std::vector<LabelDiff> coordination_env_test(const PeriodicGraph& cif, const ReferenceGraph& ref, Rational k) {
  return coordination_env_test(cif, ref, k, label_options(ref));
}

// ===================================================================
// Subgraph matching
// ===================================================================

struct SubgraphCount {
  std::string component;  ///< component name; "a+b" when skeletons coincide
  Rational expected;
  int found = 0;
  std::vector<std::vector<int>> matches;  ///< counted embeddings (sorted vertex lists)
  std::vector<std::vector<int>> all_matches;  ///< every distinct embedding found
  bool timed_out = false;
};

/// Distinct nonzero disorder groups present in the graph.
inline std::vector<int> disorder_groups(const PeriodicGraph& g) {
  std::set<int> gs;
  for (const auto& d : g.disorder_group)
    if (d) gs.insert(*d);
  return {gs.begin(), gs.end()};
}

/// Disorder groups touched by a set of vertices.
inline std::set<int> groups_of(const PeriodicGraph& g, const std::vector<int>& atoms) {
  std::set<int> out;
  for (int a : atoms)
    if (g.disorder_group[a]) out.insert(*g.disorder_group[a]);
  return out;
}

/// Two embeddings are alternatives when each lies in disorder groups the other does not use.
inline bool disorder_alternatives(const std::set<int>& a, const std::set<int>& b) {
  if (a.empty() || b.empty()) return false;
  for (int x : a)
    if (b.count(x)) return false;
  return true;
}

inline bool share_atom(const std::vector<int>& a, const std::vector<int>& b) {
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] == b[j]) return true;
    a[i] < b[j] ? ++i : ++j;
  }
  return false;
}

/// Finds heavy-skeleton embeddings of `component` in every disorder context
/// (ordered atoms plus one group at a time) and counts the largest set whose
/// members are pairwise disjoint or mutual disorder alternatives.
inline SubgraphCount subgraph_match_test(const PeriodicGraph& cif, const MolecularGraph& component, Rational expected,
                                         const MatchOptions& opt = {}) {
  SubgraphCount r;
  r.component = component.name;
  r.expected = expected;
  MolecularGraph pattern = component.heavy_skeleton();
  if (pattern.size() == 0) pattern = component;
  auto heavy_keep = [&](int v) { return !cif.elements[v].is_hydrogen() || pattern.atoms.front().is_hydrogen(); };

  std::vector<std::optional<int>> contexts;
  auto groups = disorder_groups(cif);
  if (groups.empty()) contexts.push_back(std::nullopt);
  for (int gid : groups) contexts.push_back(gid);

  std::set<std::vector<int>> seen;
  try {
    for (const auto& ctx : contexts) {
      auto target = cif.match_target([&](int v) {
        const auto& d = cif.disorder_group[v];
        return heavy_keep(v) && (!d || (ctx && *d == *ctx));
      });
      for (auto& emb : find_embeddings(pattern, target, opt))
        if (seen.insert(emb.atoms).second) r.all_matches.push_back(emb.atoms);
    }
  } catch (const Error& e) {
    if (e.code() != Errc::MatchTimeout) throw;
    r.timed_out = true;
  }
  std::vector<std::set<int>> gsets;
  for (const auto& m : r.all_matches) gsets.push_back(groups_of(cif, m));
  auto chosen = maximum_compatible_set(static_cast<int>(r.all_matches.size()), [&](int i, int j) {
    return share_atom(r.all_matches[i], r.all_matches[j]) && !disorder_alternatives(gsets[i], gsets[j]);
  });
  for (int c : chosen) r.matches.push_back(r.all_matches[c]);
  r.found = static_cast<int>(r.matches.size());
  return r;
}

/// Reference components grouped by isomorphic heavy skeleton, with the
/// multiplicity summed per group.
struct SkeletonClass {
  std::string name;
  MolecularGraph graph;  ///< first member's graph
  Rational multiplicity{0};
  std::vector<int> members;
};

inline std::vector<SkeletonClass> skeleton_classes(const ReferenceGraph& ref) {
  std::vector<SkeletonClass> out;
  std::vector<MolecularGraph> skeletons;
  for (int k = 0; k < static_cast<int>(ref.components.size()); ++k) {
    const auto& c = ref.components[k];
    auto sk = c.graph.heavy_skeleton();
    if (sk.size() == 0) sk = c.graph;
    bool merged = false;
    for (std::size_t q = 0; q < out.size(); ++q)
      if (isomorphic(skeletons[q], sk)) {
        out[q].name += "+" + c.spec.name;
        out[q].multiplicity += c.spec.multiplicity;
        out[q].members.push_back(k);
        merged = true;
        break;
      }
    if (!merged) {
      out.push_back({c.spec.name, c.graph, c.spec.multiplicity, {k}});
      skeletons.push_back(sk);
    }
  }
  return out;
}

// ===================================================================
// Diagnosis
// ===================================================================

enum class ErrorKind { hydrogen = 0, bond = 1, disorder = 2 };

inline std::string_view kind_name(ErrorKind k) {
  switch (k) {
    case ErrorKind::hydrogen: return "hydrogen";
    case ErrorKind::bond: return "bond";
    case ErrorKind::disorder: return "disorder";
  }
  return "?";
}

struct DiagnosisError {
  ErrorKind kind;
  std::string detail;
};

struct DiagnoseOptions {
  MatchOptions match;
  std::optional<Element> anchor;
};

struct DiagnosisReport {
  std::string structure;
  SpeciesCounts cif_counts;
  RationalCounts reference_counts;
  ScalingResult scaling;
  bool coordination_checked = false;
  std::vector<LabelDiff> coordination_diffs;
  std::vector<SubgraphCount> subgraph_counts;
  std::vector<DiagnosisError> errors;
  std::optional<ErrorKind> severity;

  bool clean() const { return errors.empty(); }
  bool has(ErrorKind k) const {
    return std::any_of(errors.begin(), errors.end(), [&](const auto& e) { return e.kind == k; });
  }

  const SubgraphCount* count_for(const std::string& name) const {
    for (const auto& c : subgraph_counts)
      if (c.component == name) return &c;
    return nullptr;
  }

  /// Plain-text report; see README for the layout.
  std::string to_text() const {
    std::ostringstream os;
    os << "structure: " << structure << '\n';
    os << "species: anchor=" << scaling.anchor.symbol() << " k=" << scaling.factor.str() << '\n';
    os << "  cif:       " << format_counts(cif_counts) << '\n';
    os << "  reference: " << format_counts(reference_counts) << '\n';
    os << "  scaled:    " << format_counts(scaling.scaled_reference) << '\n';
    os << "  mismatches:";
    if (scaling.mismatches.empty()) os << " none";
    for (const auto& m : scaling.mismatches)
      os << ' ' << m.element.symbol() << '(' << m.expected.str() << "->" << m.found << ')';
    os << '\n';
    if (!coordination_checked) {
      os << "coordination: skipped\n";
    } else {
      os << "coordination: " << (coordination_diffs.empty() ? "pass" : std::to_string(coordination_diffs.size()) + " differences") << '\n';
      for (const auto& d : coordination_diffs)
        os << "  " << d.label.str() << " expected " << d.expected.str() << " found " << d.found << '\n';
    }
    os << "subgraph:\n";
    for (const auto& c : subgraph_counts)
      os << "  " << c.component << " expected " << c.expected.str() << " found " << c.found
         << (c.timed_out ? " (timeout)" : "") << '\n';
    os << "errors:";
    if (errors.empty()) os << " none";
    os << '\n';
    for (const auto& e : errors) os << "  " << kind_name(e.kind) << ": " << e.detail << '\n';
    os << "severity: " << (severity ? std::string(kind_name(*severity)) : std::string("none")) << '\n';
    return os.str();
  }
};

/// Runs the species, coordination and subgraph tests on an already built graph.
inline DiagnosisReport diagnose_graph(const CrystalStructure& s, const PeriodicGraph& g, const ReferenceGraph& ref,
                                      const DiagnoseOptions& opt = {}) {
  DiagnosisReport r;
  r.structure = s.name;
  r.cif_counts = g.species_counts();
  r.reference_counts = ref.species_counts();
  Element anchor = opt.anchor ? *opt.anchor : choose_anchor(r.reference_counts);
  r.scaling = species_scaling_test(r.cif_counts, r.reference_counts, anchor);
  Rational k = r.scaling.factor;

  auto add = [&](ErrorKind kind, std::string detail) { r.errors.push_back({kind, std::move(detail)}); };

  bool heavy_ok = true, h_ok = true;
  for (const auto& m : r.scaling.mismatches) {
    (m.element.is_hydrogen() ? h_ok : heavy_ok) = false;
    if (!m.element.is_hydrogen())
      add(ErrorKind::disorder, std::string(m.element.symbol()) + " count " + std::to_string(m.found) + " vs expected " +
                                   m.expected.str());
  }
  if (s.has_disorder_markers()) add(ErrorKind::disorder, "partial occupancies or disorder groups present");

  if (heavy_ok) {
    r.coordination_checked = true;
    r.coordination_diffs = coordination_env_test(g, ref, k);
    auto heavy_diffs = coordination_env_test(g, ref, k, label_options(ref, true));
    bool bond_error = false;
    for (const auto& d : heavy_diffs) {
      add(ErrorKind::bond, "heavy-atom environment " + d.label.str() + " expected " + d.expected.str() + " found " +
                               std::to_string(d.found));
      bond_error = true;
    }
    auto nb = g.neighbors();
    int bad_h = 0;
    for (int v = 0; v < g.size(); ++v)
      if (g.elements[v].is_hydrogen() && nb[v].size() != 1) ++bad_h;
    if (bad_h) {
      add(ErrorKind::bond, std::to_string(bad_h) + " hydrogen atoms without exactly one bond");
      bond_error = true;
    }
    if (!h_ok) {
      for (const auto& m : r.scaling.mismatches)
        if (m.element.is_hydrogen())
          add(ErrorKind::hydrogen, "H count " + std::to_string(m.found) + " vs expected " + m.expected.str());
    } else if (!bond_error && !r.coordination_diffs.empty()) {
      add(ErrorKind::hydrogen, std::to_string(r.coordination_diffs.size()) + " environments differ only in hydrogen placement");
    }
  }

  for (const auto& cls : skeleton_classes(ref)) {
    auto count = subgraph_match_test(g, cls.graph, cls.multiplicity * k, opt.match);
    count.component = cls.name;
    bool split_by_bond = heavy_ok && !s.has_disorder_markers() && r.has(ErrorKind::bond);
    if (Rational{count.found} > count.expected)
      add(split_by_bond ? ErrorKind::bond : ErrorKind::disorder,
          cls.name + " found " + std::to_string(count.found) + " vs expected " + count.expected.str());
    else if (Rational{count.found} < count.expected && heavy_ok && !r.has(ErrorKind::bond))
      add(ErrorKind::bond, cls.name + " found " + std::to_string(count.found) + " vs expected " + count.expected.str());
    r.subgraph_counts.push_back(std::move(count));
  }

  for (const auto& e : r.errors)
    if (!r.severity || e.kind > *r.severity) r.severity = e.kind;
  return r;
}

inline DiagnosisReport diagnose(const CrystalStructure& s, const ReferenceGraph& ref, const BondPolicy& policy = {},
                                const DiagnoseOptions& opt = {}) {
  return diagnose_graph(s, build_graph(s, policy), ref, opt);
}

}  // namespace mofcure
