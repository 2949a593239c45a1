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

// SMILES subset: organic-subset and bracket atoms, single/double/triple and
// aromatic bonds, branches, ring closures (digits and %nn), explicit H counts
// and charges inside brackets. Stereo markers, isotopes, atom classes,
// wildcards and '.'-separated fragments are rejected.

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/molgraph.hpp"

namespace mofcure {

namespace smiles_detail {

struct Atom {
  Element element;
  bool aromatic = false;
  bool bracket = false;
  int explicit_h = 0;
  int charge = 0;
};

struct Bond {
  int i, j;
  int order;  // 1..3, 4 = aromatic
};

inline std::vector<int> standard_valences(Element e) {
  switch (e.z()) {
    case 5: return {3};
    case 6: return {4};
    case 7: return {3, 5};
    case 8: return {2};
    case 15: return {3, 5};
    case 16: return {2, 4, 6};
    case 9: case 17: case 35: case 53: return {1};
    default: return {};
  }
}

inline int charge_adjust(Element e, int charge) {
  // N+, O+, P+, S+ gain a bond; C-/C+ lose one.
  if (charge == 0) return 0;
  if (e.z() == 6) return -std::abs(charge);
  if (e.z() == 7 || e.z() == 8 || e.z() == 15 || e.z() == 16) return charge;
  return 0;
}

[[noreturn]] inline void unsupported(std::string_view text, const std::string& why) {
  fail(Errc::UnsupportedSmiles, "'" + std::string(text) + "': " + why);
}

}  // namespace smiles_detail

/// Parses a SMILES string and fills implicit hydrogens as explicit H atoms
/// appended after the heavy atoms. Aromatic bonds are kekulized with a
/// lowest-index-first assignment.
inline MolecularGraph parse_smiles(std::string_view text) {
  using namespace smiles_detail;
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::vector<int> branch_stack;
  std::map<int, std::pair<int, int>> open_rings;  // ring id -> (atom, bond order or 0)
  int prev = -1;
  int pending_order = 0;
  std::size_t i = 0;

  auto add_bond = [&](int a, int b, int order) {
    if (a == b) unsupported(text, "atom bonded to itself");
    for (const auto& bd : bonds)
      if ((bd.i == a && bd.j == b) || (bd.i == b && bd.j == a)) unsupported(text, "duplicate bond");
    if (order == 0) order = atoms[a].aromatic && atoms[b].aromatic ? 4 : 1;
    bonds.push_back({a, b, order});
  };
  auto add_atom = [&](Atom atom) {
    atoms.push_back(atom);
    int idx = static_cast<int>(atoms.size()) - 1;
    if (prev >= 0) add_bond(prev, idx, pending_order);
    pending_order = 0;
    prev = idx;
  };

  while (i < text.size()) {
    char c = text[i];
    if (std::isspace(static_cast<unsigned char>(c))) break;  // SMILES may be followed by a title
    switch (c) {
      case '(':
        if (prev < 0) unsupported(text, "branch before first atom");
        branch_stack.push_back(prev);
        ++i;
        continue;
      case ')':
        if (branch_stack.empty()) unsupported(text, "unbalanced ')'");
        prev = branch_stack.back();
        branch_stack.pop_back();
        ++i;
        continue;
      case '-': pending_order = 1; ++i; continue;
      case '=': pending_order = 2; ++i; continue;
      case '#': pending_order = 3; ++i; continue;
      case ':': pending_order = 4; ++i; continue;
      case '/': case '\\': unsupported(text, "stereo bonds are not supported");
      case '$': unsupported(text, "quadruple bonds are not supported");
      case '.': unsupported(text, "disconnected fragments are not supported");
      case '*': unsupported(text, "wildcard atoms are not supported");
      default: break;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '%') {
      if (prev < 0) unsupported(text, "ring closure before first atom");
      int id = 0;
      if (c == '%') {
        if (i + 2 >= text.size() || !std::isdigit(static_cast<unsigned char>(text[i + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text[i + 2])))
          unsupported(text, "bad %nn ring closure");
        id = (text[i + 1] - '0') * 10 + (text[i + 2] - '0');
        i += 3;
      } else {
        id = c - '0';
        ++i;
      }
      if (auto it = open_rings.find(id); it != open_rings.end()) {
        int order = pending_order ? pending_order : it->second.second;
        add_bond(it->second.first, prev, order);
        open_rings.erase(it);
      } else {
        open_rings[id] = {prev, pending_order};
      }
      pending_order = 0;
      continue;
    }
    if (c == '[') {
      auto close = text.find(']', i);
      if (close == std::string_view::npos) unsupported(text, "unclosed bracket atom");
      std::string_view body = text.substr(i + 1, close - i - 1);
      i = close + 1;
      std::size_t k = 0;
      if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]))) unsupported(text, "isotopes are not supported");
      Atom atom;
      atom.bracket = true;
      std::string sym;
      if (k < body.size() && std::islower(static_cast<unsigned char>(body[k]))) {
        // aromatic bracket symbols: c n o p s b se as
        if (body.substr(k, 2) == "se" || body.substr(k, 2) == "as") {
          sym = std::string(1, static_cast<char>(std::toupper(body[k]))) + body[k + 1];
          k += 2;
        } else {
          sym = std::string(1, static_cast<char>(std::toupper(body[k])));
          ++k;
        }
        atom.aromatic = true;
      } else if (k < body.size() && std::isupper(static_cast<unsigned char>(body[k]))) {
        sym.push_back(body[k++]);
        if (k < body.size() && std::islower(static_cast<unsigned char>(body[k])) &&
            Element::from_symbol(sym + body[k]))
          sym.push_back(body[k++]);
      }
      auto e = Element::from_symbol(sym);
      if (!e) unsupported(text, "unknown element in bracket atom");
      atom.element = *e;
      if (k < body.size() && body[k] == '@') unsupported(text, "chirality is not supported");
      if (k < body.size() && body[k] == 'H') {
        ++k;
        atom.explicit_h = 1;
        if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k]))) atom.explicit_h = body[k++] - '0';
      }
      while (k < body.size() && (body[k] == '+' || body[k] == '-')) {
        int sign = body[k] == '+' ? 1 : -1;
        ++k;
        if (k < body.size() && std::isdigit(static_cast<unsigned char>(body[k])))
          atom.charge += sign * (body[k++] - '0');
        else
          atom.charge += sign;
      }
      if (k < body.size() && body[k] == ':') unsupported(text, "atom classes are not supported");
      if (k != body.size()) unsupported(text, "unexpected characters in bracket atom");
      add_atom(atom);
      continue;
    }
    // organic subset
    Atom atom;
    std::string_view rest = text.substr(i);
    if (rest.rfind("Cl", 0) == 0 || rest.rfind("Br", 0) == 0) {
      atom.element = Element::require(std::string(rest.substr(0, 2)));
      i += 2;
    } else if (std::string_view("BCNOPSFI").find(c) != std::string_view::npos) {
      atom.element = Element::require(std::string(1, c));
      ++i;
    } else if (std::string_view("bcnops").find(c) != std::string_view::npos) {
      atom.element = Element::require(std::string(1, static_cast<char>(std::toupper(c))));
      atom.aromatic = true;
      ++i;
    } else {
      unsupported(text, std::string("unexpected character '") + c + "'");
    }
    add_atom(atom);
  }
  if (atoms.empty()) unsupported(text, "empty SMILES");
  if (!branch_stack.empty()) unsupported(text, "unbalanced '('");
  if (!open_rings.empty()) unsupported(text, "unclosed ring");
  if (pending_order) unsupported(text, "dangling bond");

  // hydrogen counts
  int n = static_cast<int>(atoms.size());
  std::vector<int> order_sum(n, 0);
  for (const auto& b : bonds) {
    int o = b.order == 4 ? 1 : b.order;
    order_sum[b.i] += o;
    order_sum[b.j] += o;
  }
  std::vector<int> hcount(n, 0);
  for (int a = 0; a < n; ++a) {
    if (atoms[a].bracket) {
      hcount[a] = atoms[a].explicit_h;
      continue;
    }
    auto vals = standard_valences(atoms[a].element);
    if (vals.empty()) continue;
    if (atoms[a].aromatic) {
      hcount[a] = std::max(0, vals.front() - order_sum[a] - 1);
    } else {
      for (int v : vals)
        if (v >= order_sum[a]) {
          hcount[a] = v - order_sum[a];
          break;
        }
    }
  }

  // kekulize: atoms that still need one double bond get it from an aromatic neighbour
  std::vector<bool> needy(n, false);
  for (int a = 0; a < n; ++a) {
    if (!atoms[a].aromatic) continue;
    auto vals = standard_valences(atoms[a].element);
    if (vals.empty()) continue;
    int target = vals.front() + charge_adjust(atoms[a].element, atoms[a].charge);
    needy[a] = order_sum[a] + hcount[a] + 1 == target;
  }
  std::vector<std::vector<std::pair<int, int>>> arom_adj(n);  // (neighbour, bond index)
  for (int bi = 0; bi < static_cast<int>(bonds.size()); ++bi)
    if (bonds[bi].order == 4) {
      arom_adj[bonds[bi].i].push_back({bonds[bi].j, bi});
      arom_adj[bonds[bi].j].push_back({bonds[bi].i, bi});
    }
  for (auto& v : arom_adj) std::sort(v.begin(), v.end());
  std::vector<int> mate(n, -1);
  std::vector<int> double_bond;
  std::function<bool()> assign = [&]() -> bool {
    int a = -1;
    for (int k = 0; k < n; ++k)
      if (needy[k] && mate[k] < 0) {
        a = k;
        break;
      }
    if (a < 0) return true;
    for (auto [b, bi] : arom_adj[a]) {
      if (!needy[b] || mate[b] >= 0) continue;
      mate[a] = b;
      mate[b] = a;
      double_bond.push_back(bi);
      if (assign()) return true;
      double_bond.pop_back();
      mate[a] = mate[b] = -1;
    }
    return false;
  };
  if (!assign()) unsupported(text, "aromatic system cannot be kekulized");
  for (auto& b : bonds)
    if (b.order == 4) b.order = 1;
  for (int bi : double_bond) bonds[bi].order = 2;

  MolecularGraph g;
  g.name = std::string(text.substr(0, text.find_first_of(" \t")));
  for (const auto& a : atoms) g.atoms.push_back(a.element);
  for (const auto& b : bonds) g.bonds.push_back({b.i, b.j, b.order});
  for (int a = 0; a < n; ++a)
    for (int h = 0; h < hcount[a]; ++h) {
      g.atoms.push_back(elements::H);
      g.bonds.push_back({a, g.size() - 1, 1});
    }
  g.implicit_h_filled = true;
  return g;
}

/// Writes a molecular graph as SMILES with bracket atoms carrying H counts.
/// Hydrogens attached to exactly one heavy atom are folded into brackets.
inline std::string write_smiles(const MolecularGraph& g) {
  auto adj = g.adjacency();
  int n = g.size();
  std::vector<bool> folded(n, false);
  std::vector<int> hfold(n, 0);
  for (int a = 0; a < n; ++a) {
    if (!g.atoms[a].is_hydrogen() || adj[a].size() != 1) continue;
    int host = adj[a][0];
    if (g.atoms[host].is_hydrogen()) continue;
    folded[a] = true;
    ++hfold[host];
  }
  std::map<std::pair<int, int>, int> order;
  for (const auto& b : g.bonds) order[std::minmax(b.i, b.j)] = b.order;
  auto bond_symbol = [&](int a, int b) {
    int o = order[std::minmax(a, b)];
    return o == 2 ? std::string("=") : o == 3 ? std::string("#") : std::string();
  };
  auto atom_text = [&](int a) {
    std::string s = "[" + std::string(g.atoms[a].symbol());
    if (hfold[a] == 1) s += "H";
    if (hfold[a] > 1) s += "H" + std::to_string(hfold[a]);
    return s + "]";
  };

  // DFS tree first so ring closures can be numbered before emission
  std::vector<int> parent(n, -2), visit_order;
  std::vector<std::pair<int, int>> back_edges;
  std::function<void(int, int)> dfs = [&](int u, int p) {
    parent[u] = p;
    visit_order.push_back(u);
    for (int v : adj[u]) {
      if (folded[v] || v == p) continue;
      if (parent[v] == -2)
        dfs(v, u);
      else if (std::find(back_edges.begin(), back_edges.end(), std::make_pair(v, u)) == back_edges.end() &&
               std::find(back_edges.begin(), back_edges.end(), std::make_pair(u, v)) == back_edges.end())
        back_edges.push_back({v, u});  // v visited earlier: v opens, u closes
    }
  };
  int root = -1;
  for (int a = 0; a < n; ++a)
    if (!folded[a]) {
      root = a;
      break;
    }
  if (root < 0) return {};
  dfs(root, -1);

  std::map<int, std::vector<std::pair<int, int>>> opens, closes;  // atom -> (partner, ring id)
  std::vector<bool> ring_used(100, false);
  std::vector<int> pos(n, -1);
  for (std::size_t k = 0; k < visit_order.size(); ++k) pos[visit_order[k]] = static_cast<int>(k);
  std::sort(back_edges.begin(), back_edges.end(), [&](auto x, auto y) { return pos[x.first] < pos[y.first]; });
  // assign ids in emission order, recycling freed ids
  std::vector<std::tuple<int, int, int>> events;  // (position, kind 0=close 1=open, edge)
  for (std::size_t e = 0; e < back_edges.size(); ++e) {
    events.push_back({pos[back_edges[e].first], 1, static_cast<int>(e)});
    events.push_back({pos[back_edges[e].second], 0, static_cast<int>(e)});
  }
  std::sort(events.begin(), events.end());
  std::vector<int> edge_id(back_edges.size(), 0);
  for (auto [p, kind, e] : events) {
    if (kind == 1) {
      int id = 1;
      while (ring_used[id]) ++id;
      ring_used[id] = true;
      edge_id[e] = id;
      opens[back_edges[e].first].push_back({back_edges[e].second, id});
    } else {
      ring_used[edge_id[e]] = false;
      closes[back_edges[e].second].push_back({back_edges[e].first, edge_id[e]});
    }
  }
  auto ring_text = [](int id) { return id < 10 ? std::to_string(id) : "%" + std::to_string(id); };

  std::string out;
  std::function<void(int)> emit = [&](int u) {
    out += atom_text(u);
    for (auto [partner, id] : closes[u]) out += bond_symbol(u, partner) + ring_text(id);
    for (auto [partner, id] : opens[u]) out += bond_symbol(u, partner) + ring_text(id);
    std::vector<int> kids;
    for (int v : adj[u])
      if (!folded[v] && parent[v] == u) kids.push_back(v);
    std::sort(kids.begin(), kids.end(), [&](int x, int y) { return pos[x] < pos[y]; });
    for (std::size_t k = 0; k < kids.size(); ++k) {
      bool last = k + 1 == kids.size();
      if (!last) out += "(";
      out += bond_symbol(u, kids[k]);
      emit(kids[k]);
      if (!last) out += ")";
    }
  };
  emit(root);
  return out;
}

}  // namespace mofcure
