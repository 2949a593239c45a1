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
#include <queue>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"

namespace mofcure {

struct MolBond {
  int i = 0, j = 0;
  int order = 1;  ///< 1, 2 or 3; aromatic rings are stored kekulized

  friend bool operator==(const MolBond&, const MolBond&) = default;
};

/// Finite molecular graph with explicit hydrogens.
struct MolecularGraph {
  std::string name;
  std::vector<Element> atoms;
  std::vector<MolBond> bonds;
  bool implicit_h_filled = true;

  int size() const { return static_cast<int>(atoms.size()); }

  std::vector<std::vector<int>> adjacency() const {
    std::vector<std::vector<int>> adj(atoms.size());
    for (const auto& b : bonds) {
      adj[b.i].push_back(b.j);
      adj[b.j].push_back(b.i);
    }
    for (auto& a : adj) std::sort(a.begin(), a.end());
    return adj;
  }

  SpeciesCounts formula() const {
    SpeciesCounts out;
    for (Element e : atoms) ++out[e];
    return out;
  }

  std::string formula_string() const {
    std::string s;
    auto counts = formula();
    for (Element e : hill_order(counts)) {
      s += e.symbol();
      if (counts[e] != 1) s += std::to_string(counts[e]);
    }
    return s;
  }

  bool connected() const {
    if (atoms.empty()) return false;
    auto adj = adjacency();
    std::vector<bool> seen(atoms.size());
    std::queue<int> q;
    q.push(0);
    seen[0] = true;
    std::size_t count = 1;
    while (!q.empty()) {
      int u = q.front();
      q.pop();
      for (int v : adj[u])
        if (!seen[v]) {
          seen[v] = true;
          ++count;
          q.push(v);
        }
    }
    return count == atoms.size();
  }

  void validate() const {
    std::set<std::pair<int, int>> seen;
    for (const auto& b : bonds) {
      if (b.i < 0 || b.j < 0 || b.i >= size() || b.j >= size() || b.i == b.j)
        fail(Errc::InvalidStructure, name + ": bond index out of range");
      if (!seen.insert(std::minmax(b.i, b.j)).second) fail(Errc::InvalidStructure, name + ": duplicate bond");
    }
    if (!connected()) fail(Errc::InvalidStructure, name + ": molecular graph is not connected");
  }

  int hydrogen_count(int atom) const {
    int n = 0;
    for (const auto& b : bonds) {
      if (b.i == atom && atoms[b.j].is_hydrogen()) ++n;
      if (b.j == atom && atoms[b.i].is_hydrogen()) ++n;
    }
    return n;
  }

  /// Heavy-atom subgraph; `index` receives the original index of each kept atom.
  MolecularGraph heavy_skeleton(std::vector<int>* index = nullptr) const {
    MolecularGraph out;
    out.name = name;
    std::vector<int> remap(atoms.size(), -1);
    for (int i = 0; i < size(); ++i)
      if (!atoms[i].is_hydrogen()) {
        remap[i] = out.size();
        out.atoms.push_back(atoms[i]);
        if (index) index->push_back(i);
      }
    for (const auto& b : bonds)
      if (remap[b.i] >= 0 && remap[b.j] >= 0) out.bonds.push_back({remap[b.i], remap[b.j], b.order});
    return out;
  }

  /// Removes atoms (and their bonds), keeping relative order.
  MolecularGraph without_atoms(const std::set<int>& drop) const {
    MolecularGraph out;
    out.name = name;
    out.implicit_h_filled = implicit_h_filled;
    std::vector<int> remap(atoms.size(), -1);
    for (int i = 0; i < size(); ++i)
      if (!drop.count(i)) {
        remap[i] = out.size();
        out.atoms.push_back(atoms[i]);
      }
    for (const auto& b : bonds)
      if (remap[b.i] >= 0 && remap[b.j] >= 0) out.bonds.push_back({remap[b.i], remap[b.j], b.order});
    return out;
  }
};

/// Disjoint union of two molecular graphs; returns the index offset of `b`.
inline int append_graph(MolecularGraph& a, const MolecularGraph& b) {
  int offset = a.size();
  a.atoms.insert(a.atoms.end(), b.atoms.begin(), b.atoms.end());
  for (const auto& bond : b.bonds) a.bonds.push_back({bond.i + offset, bond.j + offset, bond.order});
  return offset;
}

inline MolecularGraph single_atom_graph(Element e, std::string name = {}) {
  MolecularGraph g;
  g.name = name.empty() ? std::string(e.symbol()) : std::move(name);
  g.atoms.push_back(e);
  return g;
}

}  // namespace mofcure
