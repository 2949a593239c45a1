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
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <utility>
#include <vector>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/molgraph.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

/// Labeled graph searched by the matcher. Edges carry the image shift of the
/// neighbour so embeddings stay consistent across periodic boundaries; finite
/// graphs use zero shifts throughout.
struct MatchTarget {
  std::vector<Element> elements;
  std::vector<std::vector<std::pair<int, Shift>>> adj;

  int size() const { return static_cast<int>(elements.size()); }

  void add_edge(int u, int v, Shift s) {
    adj[u].push_back({v, s});
    if (u != v || !s.is_zero()) adj[v].push_back({u, -s});
  }

  static MatchTarget from_molecule(const MolecularGraph& g) {
    MatchTarget t;
    t.elements = g.atoms;
    t.adj.resize(g.atoms.size());
    for (const auto& b : g.bonds) t.add_edge(b.i, b.j, {});
    return t;
  }
};

struct MatchOptions {
  /// Non-metal pattern atoms must have exactly the pattern degree in the target.
  bool exact_degree = true;
  /// Metal neighbours are not counted for degree comparisons.
  bool ignore_metal_neighbors = true;
  /// Keep every mapping instead of one per distinct atom set.
  bool all_mappings = false;
  std::uint64_t node_budget = 10'000'000;
};

struct Embedding {
  std::vector<int> map;    ///< pattern vertex -> target vertex
  std::vector<int> atoms;  ///< sorted target vertices
};

namespace match_detail {

inline int degree(const std::vector<std::pair<int, Shift>>& nbrs, const std::vector<Element>& el,
                  bool ignore_metals) {
  int d = 0;
  for (const auto& [v, s] : nbrs)
    if (!ignore_metals || !el[v].is_metal()) ++d;
  return d;
}

}  // namespace match_detail

/// Enumerates embeddings of `pattern` into `target`: element-preserving,
/// adjacency-preserving (with consistent image shifts), injective. Throws
/// MatchTimeout when the node budget is exhausted.
inline std::vector<Embedding> find_embeddings(const MolecularGraph& pattern, const MatchTarget& target,
                                              const MatchOptions& opt = {}) {
  using match_detail::degree;
  std::vector<Embedding> out;
  int n = pattern.size();
  if (n == 0 || target.size() == 0) return out;
  MatchTarget pat = MatchTarget::from_molecule(pattern);

  std::map<Element, int> target_count;
  for (Element e : target.elements) ++target_count[e];
  for (Element e : pattern.atoms)
    if (!target_count.count(e)) return out;

  std::vector<int> pdeg(n), tdeg(target.size());
  for (int u = 0; u < n; ++u) pdeg[u] = degree(pat.adj[u], pat.elements, opt.ignore_metal_neighbors);
  for (int v = 0; v < target.size(); ++v) tdeg[v] = degree(target.adj[v], target.elements, opt.ignore_metal_neighbors);

  // search order: rarest element first, then grow along bonds preferring
  // vertices with the most already-ordered neighbours, then rarest element
  std::vector<int> order, parent(n, -1);
  std::vector<bool> placed(n, false);
  auto rarity = [&](int u) { return target_count[pattern.atoms[u]]; };
  while (static_cast<int>(order.size()) < n) {
    int best = -1, best_links = -1;
    for (int u = 0; u < n; ++u) {
      if (placed[u]) continue;
      int links = 0;
      for (const auto& [w, s] : pat.adj[u])
        if (placed[w]) ++links;
      if (!order.empty() && links == 0 && best_links >= 0) continue;
      if (best < 0 || links > best_links ||
          (links == best_links && (rarity(u) < rarity(best) || (rarity(u) == rarity(best) && pdeg[u] > pdeg[best])))) {
        best = u;
        best_links = links;
      }
    }
    for (const auto& [w, s] : pat.adj[best])
      if (placed[w]) {
        parent[best] = w;
        break;
      }
    placed[best] = true;
    order.push_back(best);
  }

  std::vector<int> map(n, -1);
  std::vector<Shift> off(n);
  std::vector<char> used(target.size(), 0);
  std::set<std::vector<int>> seen_sets;
  std::uint64_t nodes = 0;

  auto compatible = [&](int u, int v) {
    if (target.elements[v] != pattern.atoms[u] || used[v]) return false;
    bool check = opt.exact_degree && !pattern.atoms[u].is_metal();
    return check ? tdeg[v] == pdeg[u] : tdeg[v] >= pdeg[u] || pattern.atoms[u].is_metal();
  };
  auto edges_ok = [&](int u, int v, Shift sv) {
    for (const auto& [w, ps] : pat.adj[u]) {
      if (map[w] < 0) continue;
      Shift need = off[w] - sv;
      bool found = false;
      for (const auto& [x, ts] : target.adj[v])
        if (x == map[w] && ts == need) {
          found = true;
          break;
        }
      if (!found) return false;
    }
    return true;
  };

  std::function<void(int)> extend = [&](int k) {
    if (k == n) {
      std::vector<int> atoms(map.begin(), map.end());
      std::sort(atoms.begin(), atoms.end());
      if (opt.all_mappings || seen_sets.insert(atoms).second) out.push_back({map, std::move(atoms)});
      return;
    }
    int u = order[k];
    auto try_candidate = [&](int v, Shift s) {
      if (++nodes > opt.node_budget)
        fail(Errc::MatchTimeout, "subgraph search for " + pattern.name + " exceeded node budget");
      if (!compatible(u, v) || !edges_ok(u, v, s)) return;
      map[u] = v;
      off[u] = s;
      used[v] = 1;
      extend(k + 1);
      used[v] = 0;
      map[u] = -1;
    };
    if (parent[u] < 0) {
      for (int v = 0; v < target.size(); ++v) try_candidate(v, {});
    } else {
      int pv = map[parent[u]];
      for (const auto& [v, s] : target.adj[pv]) try_candidate(v, off[parent[u]] + s);
    }
  };
  extend(0);
  return out;
}

/// Maximum set of mutually compatible items, given a symmetric conflict
/// predicate. Solved exactly per connected piece of the conflict graph; the
/// result lists indices in ascending order and prefers lower indices on ties.
inline std::vector<int> maximum_compatible_set(int n, const std::function<bool(int, int)>& conflict,
                                               std::uint64_t budget = 5'000'000) {
  std::vector<std::vector<int>> nb(n);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (conflict(i, j)) {
        nb[i].push_back(j);
        nb[j].push_back(i);
      }
  std::vector<int> piece(n, -1);
  std::vector<int> result;
  for (int s = 0; s < n; ++s) {
    if (piece[s] >= 0) continue;
    std::vector<int> members{s};
    piece[s] = s;
    for (std::size_t q = 0; q < members.size(); ++q)
      for (int v : nb[members[q]])
        if (piece[v] < 0) {
          piece[v] = s;
          members.push_back(v);
        }
    std::sort(members.begin(), members.end());
    std::vector<int> best, cur;
    std::vector<int> blocked(n, 0);
    std::uint64_t nodes = 0;
    bool exhausted = false;
    std::function<void(std::size_t)> search = [&](std::size_t k) {
      if (exhausted) return;
      if (++nodes > budget) {
        exhausted = true;
        return;
      }
      std::size_t free_left = 0;
      for (std::size_t r = k; r < members.size(); ++r)
        if (!blocked[members[r]]) ++free_left;
      if (cur.size() + free_left <= best.size()) return;
      if (k == members.size()) {
        best = cur;
        return;
      }
      int v = members[k];
      if (!blocked[v]) {
        cur.push_back(v);
        for (int w : nb[v]) ++blocked[w];
        search(k + 1);
        for (int w : nb[v]) --blocked[w];
        cur.pop_back();
      }
      search(k + 1);
    };
    search(0);
    result.insert(result.end(), best.begin(), best.end());
  }
  std::sort(result.begin(), result.end());
  return result;
}

/// True when two finite molecular graphs are isomorphic (element-labeled).
/// Equal atom and bond counts make any injective embedding a bijection.
inline bool isomorphic(const MolecularGraph& a, const MolecularGraph& b) {
  if (a.size() != b.size() || a.bonds.size() != b.bonds.size() || a.formula() != b.formula()) return false;
  MatchOptions opt;
  opt.ignore_metal_neighbors = false;
  opt.node_budget = 1'000'000;
  auto target = MatchTarget::from_molecule(b);
  try {
    return !find_embeddings(a, target, opt).empty();
  } catch (const Error&) {
    return false;
  }
}

}  // namespace mofcure
