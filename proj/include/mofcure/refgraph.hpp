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
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/match.hpp"
#include "mofcure/molgraph.hpp"
#include "mofcure/rational.hpp"
#include "mofcure/smiles.hpp"

namespace mofcure {

enum class ComponentRole { metal_node, linker, solvent, guest, counterion };

inline std::string_view role_name(ComponentRole r) {
  switch (r) {
    case ComponentRole::metal_node: return "metal_node";
    case ComponentRole::linker: return "linker";
    case ComponentRole::solvent: return "solvent";
    case ComponentRole::guest: return "guest";
    case ComponentRole::counterion: return "counterion";
  }
  return "guest";
}

inline ComponentRole parse_role(std::string_view s) {
  for (auto r : {ComponentRole::metal_node, ComponentRole::linker, ComponentRole::solvent, ComponentRole::guest,
                 ComponentRole::counterion})
    if (role_name(r) == s) return r;
  fail(Errc::Config, "unknown component role '" + std::string(s) + "'");
}

struct ComponentSpec {
  std::string name;
  Rational multiplicity{1};
  ComponentRole role = ComponentRole::guest;

  friend bool operator==(const ComponentSpec&, const ComponentSpec&) = default;
};

namespace formula_detail {

inline const std::set<std::string>& solvent_names() {
  static const std::set<std::string> names = {
      "H2O",  "water", "DMF",   "DMA",   "DEF",   "MeOH",   "methanol", "EtOH", "ethanol", "MeCN",
      "acetonitrile", "DMSO", "THF", "dioxane", "CHCl3", "chloroform", "DCM", "CH2Cl2", "CH3OH", "C2H5OH"};
  return names;
}

inline const std::set<std::string>& counterion_names() {
  static const std::set<std::string> names = {"NO3", "ClO4", "BF4", "PF6", "SO4", "CF3SO3", "OTf",
                                              "Cl",  "Br",   "I",   "F",   "NO2", "SiF6",   "CN"};
  return names;
}

/// Splits on top-level component separators: middle dot, bullet, dot
/// operator, '*', and '.' when it is not a decimal point.
inline std::vector<std::string> split_parts(std::string_view text) {
  std::vector<std::string> parts;
  std::string cur;
  int depth = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    std::size_t sep_len = 0;
    if (c == '*') sep_len = 1;
    if (c == '.' && !(i > 0 && i + 1 < text.size() && std::isdigit(static_cast<unsigned char>(text[i - 1])) &&
                      std::isdigit(static_cast<unsigned char>(text[i + 1]))))
      sep_len = 1;
    if (text.substr(i, 2) == "\xC2\xB7") sep_len = 2;                                         // ·
    if (text.substr(i, 3) == "\xE2\x80\xA2" || text.substr(i, 3) == "\xE2\x8B\x85") sep_len = 3;  // • ⋅
    if (c == '(' || c == '[' || c == '{') ++depth;
    if (c == ')' || c == ']' || c == '}') --depth;
    if (depth < 0) fail(Errc::UnparseableFormula, "unbalanced brackets in '" + std::string(text) + "'");
    if (sep_len && depth <= 1) {
      parts.push_back(cur);
      cur.clear();
      i += sep_len - 1;
      continue;
    }
    cur.push_back(static_cast<char>(c));
  }
  if (depth != 0) fail(Errc::UnparseableFormula, "unbalanced brackets in '" + std::string(text) + "'");
  parts.push_back(cur);
  return parts;
}

inline bool is_open(char c) { return c == '(' || c == '[' || c == '{'; }
inline bool is_close(char c) { return c == ')' || c == ']' || c == '}'; }

inline std::size_t matching_close(std::string_view s, std::size_t open) {
  int depth = 0;
  for (std::size_t i = open; i < s.size(); ++i) {
    if (is_open(s[i])) ++depth;
    if (is_close(s[i]) && --depth == 0) return i;
  }
  fail(Errc::UnparseableFormula, "unbalanced brackets in '" + std::string(s) + "'");
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

/// Reads a count ("2", "0.5", "1/2") at `pos`; empty when none.
inline std::optional<Rational> read_count(std::string_view s, std::size_t& pos) {
  std::size_t start = pos;
  while (pos < s.size() && (std::isdigit(static_cast<unsigned char>(s[pos])) || s[pos] == '.' || s[pos] == '/')) {
    if ((s[pos] == '.' || s[pos] == '/') &&
        !(pos + 1 < s.size() && std::isdigit(static_cast<unsigned char>(s[pos + 1]))))
      break;
    ++pos;
  }
  if (pos == start) return std::nullopt;
  try {
    return Rational::parse(s.substr(start, pos - start));
  } catch (const std::invalid_argument&) {
    fail(Errc::UnparseableFormula, "bad count '" + std::string(s.substr(start, pos - start)) + "'");
  }
}

/// Skips charge marks such as "+", "2-", or U+2212 after a unit.
inline void skip_charge(std::string_view s, std::size_t& pos) {
  std::size_t p = pos;
  while (p < s.size() && std::isdigit(static_cast<unsigned char>(s[p]))) ++p;
  if (p < s.size() && (s[p] == '+' || s[p] == '-')) {
    pos = p + 1;
  } else if (s.substr(p, 3) == "\xE2\x88\x92") {
    pos = p + 3;
  }
}

/// Splits a letter run into element symbols; empty when it does not decompose.
inline std::vector<Element> element_run(std::string_view run) {
  std::vector<Element> out;
  std::size_t i = 0;
  while (i < run.size()) {
    if (!std::isupper(static_cast<unsigned char>(run[i]))) return {};
    if (i + 1 < run.size() && std::islower(static_cast<unsigned char>(run[i + 1]))) {
      if (auto e = Element::from_symbol(run.substr(i, 2))) {
        out.push_back(*e);
        i += 2;
        continue;
      }
      return {};
    }
    auto e = Element::from_symbol(run.substr(i, 1));
    if (!e) return {};
    out.push_back(*e);
    ++i;
  }
  return out;
}

/// True when `s` is written only with element symbols, counts and brackets.
inline bool pure_element_formula(std::string_view s, bool* has_metal = nullptr) {
  if (s.empty()) return false;
  bool metal = false;
  std::size_t i = 0;
  while (i < s.size()) {
    char c = s[i];
    if (is_open(c) || is_close(c) || std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
    if (j == i) return false;
    auto els = element_run(s.substr(i, j - i));
    if (els.empty()) return false;
    for (Element e : els) metal |= e.is_metal();
    i = j;
  }
  if (has_metal) *has_metal = metal;
  return true;
}

inline ComponentRole role_for(const std::string& name, bool is_element) {
  if (is_element) return ComponentRole::metal_node;
  if (solvent_names().count(name)) return ComponentRole::solvent;
  if (counterion_names().count(name)) return ComponentRole::counterion;
  if (pure_element_formula(name)) return ComponentRole::guest;
  return ComponentRole::linker;
}

inline void add_spec(std::vector<ComponentSpec>& out, const std::string& name, Rational mult, bool is_element) {
  for (auto& s : out)
    if (s.name == name) {
      s.multiplicity += mult;
      return;
    }
  out.push_back({name, mult, role_for(name, is_element)});
}

inline void parse_units(std::string_view body, Rational mult, std::vector<ComponentSpec>& out);

/// Handles a bracketed group's content: a whole molecule or a nested unit list.
inline void parse_group(std::string_view inner, Rational mult, std::vector<ComponentSpec>& out) {
  std::string text = trim(inner);
  if (text.empty()) fail(Errc::UnparseableFormula, "empty bracket group");
  bool metal = false;
  if (pure_element_formula(text, &metal) && !metal) {
    add_spec(out, text, mult, false);
    return;
  }
  bool has_bracket = text.find_first_of("()[]{}") != std::string::npos;
  if (!has_bracket && !pure_element_formula(text)) {
    add_spec(out, text, mult, false);  // abbreviation such as "btpdc" or "H2btpdc"
    return;
  }
  parse_units(text, mult, out);
}

inline void parse_units(std::string_view body, Rational mult, std::vector<ComponentSpec>& out) {
  std::size_t i = 0;
  while (i < body.size()) {
    char c = body[i];
    if (std::isspace(static_cast<unsigned char>(c))) {
      ++i;
      continue;
    }
    if (is_open(c)) {
      std::size_t close = matching_close(body, i);
      std::string_view inner = body.substr(i + 1, close - i - 1);
      i = close + 1;
      Rational n{1};
      if (i < body.size() && body[i] == 'n' && (i + 1 == body.size() || !std::isalpha(static_cast<unsigned char>(body[i + 1]))))
        ++i;  // polymer repeat marker
      else if (auto cnt = read_count(body, i))
        n = *cnt;
      skip_charge(body, i);
      parse_group(inner, mult * n, out);
      continue;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::size_t j = i;
      while (j < body.size() && std::isalpha(static_cast<unsigned char>(body[j]))) ++j;
      std::string_view run = body.substr(i, j - i);
      auto els = element_run(run);
      if (!els.empty()) {
        std::string sym(els.front().symbol());
        i += sym.size();
        Rational n{1};
        if (i == j) {
          if (auto cnt = read_count(body, i)) n = *cnt;
        }
        skip_charge(body, i);
        add_spec(out, sym, mult * n, true);
      } else {
        i = j;
        Rational n{1};
        if (auto cnt = read_count(body, i)) n = *cnt;
        skip_charge(body, i);
        add_spec(out, std::string(run), mult * n, false);
      }
      continue;
    }
    if (std::isdigit(static_cast<unsigned char>(c)))
      fail(Errc::UnparseableFormula, "dangling coefficient in '" + std::string(body) + "'");
    if (c == '+' || c == '-') {
      ++i;
      continue;
    }
    fail(Errc::UnparseableFormula, std::string("unexpected character '") + c + "' in '" + std::string(body) + "'");
  }
}

}  // namespace formula_detail

/// Splits a structural formula such as "[Dy2(btpdc)3·DMF·2(H2O)]" into
/// components with multiplicities. Metal atoms become metal_node
/// components; bracketed groups and abbreviations become molecular components.
inline std::vector<ComponentSpec> parse_structural_formula(std::string_view text) {
  using namespace formula_detail;
  std::string t = trim(text);
  if (t.empty()) fail(Errc::UnparseableFormula, "empty formula");
  // drop one enclosing bracket pair, including a polymer "{...}n" wrapper
  if (is_open(t.front())) {
    std::size_t close = matching_close(t, 0);
    std::string rest = trim(std::string_view(t).substr(close + 1));
    if (rest.empty() || rest == "n") t = t.substr(1, close - 1);
  }
  std::vector<ComponentSpec> out;
  for (const auto& raw : split_parts(t)) {
    std::string part = trim(raw);
    if (part.empty()) fail(Errc::UnparseableFormula, "empty component in '" + std::string(text) + "'");
    std::size_t pos = 0;
    Rational coeff{1};
    if (auto cnt = read_count(part, pos)) coeff = *cnt;
    std::string body = trim(std::string_view(part).substr(pos));
    if (body.empty()) fail(Errc::UnparseableFormula, "dangling coefficient in '" + std::string(text) + "'");
    if (coeff.is_zero()) fail(Errc::UnparseableFormula, "zero coefficient in '" + std::string(text) + "'");
    if (is_open(body.front()) && matching_close(body, 0) == body.size() - 1) {
      parse_group(std::string_view(body).substr(1, body.size() - 2), coeff, out);
      continue;
    }
    bool metal = false;
    if (pure_element_formula(body, &metal) && !metal && body.find_first_of("()[]{}") == std::string::npos) {
      add_spec(out, body, coeff, false);
      continue;
    }
    parse_units(body, coeff, out);
  }
  return out;
}

// ===================================================================
// Name resolution
// ===================================================================

/// Name -> SMILES table. File format: one entry per line, name and SMILES
/// separated by a tab; '#' at line start marks a comment.
class NameTable {
 public:
  void add(const std::string& name, const std::string& smiles) {
    exact_[name] = smiles;
    folded_.emplace(fold(name), smiles);
  }

  std::optional<std::string> find(const std::string& name) const {
    if (auto it = exact_.find(name); it != exact_.end()) return it->second;
    if (auto it = folded_.find(fold(name)); it != folded_.end()) return it->second;
    return std::nullopt;
  }

  std::size_t size() const { return exact_.size(); }

  static NameTable load(std::istream& in) {
    NameTable t;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.empty() || line[0] == '#') continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) fail(Errc::Config, "name table line " + std::to_string(lineno) + ": expected a tab");
      t.add(formula_detail::trim(line.substr(0, tab)), formula_detail::trim(line.substr(tab + 1)));
    }
    return t;
  }

  static NameTable load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open " + path);
    return load(in);
  }

  static const NameTable& defaults();

 private:
  static std::string fold(std::string_view s) {
    std::string out;
    for (char c : s)
      if (!std::isspace(static_cast<unsigned char>(c))) out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    return out;
  }

  std::map<std::string, std::string> exact_;
  std::map<std::string, std::string> folded_;
};

inline const NameTable& NameTable::defaults() {
  static const NameTable table = [] {
    NameTable t;
    static const std::pair<const char*, const char*> rows[] = {
        {"H2O", "O"},
        {"water", "O"},
        {"OH", "[OH-]"},
        {"O", "[O-2]"},
        {"DMF", "CN(C)C=O"},
        {"N,N-dimethylformamide", "CN(C)C=O"},
        {"DMA", "CC(=O)N(C)C"},
        {"DEF", "CCN(CC)C=O"},
        {"MeOH", "CO"},
        {"methanol", "CO"},
        {"EtOH", "CCO"},
        {"ethanol", "CCO"},
        {"MeCN", "CC#N"},
        {"acetonitrile", "CC#N"},
        {"DMSO", "CS(C)=O"},
        {"THF", "C1CCOC1"},
        {"dioxane", "C1COCCO1"},
        {"CHCl3", "ClC(Cl)Cl"},
        {"chloroform", "ClC(Cl)Cl"},
        {"DCM", "ClCCl"},
        {"CH2Cl2", "ClCCl"},
        {"NO3", "[O-][N+](=O)[O-]"},
        {"ClO4", "[O-][Cl](=O)(=O)=O"},
        {"BF4", "F[B-](F)(F)F"},
        {"PF6", "F[P-](F)(F)(F)(F)F"},
        {"SO4", "[O-]S(=O)(=O)[O-]"},
        {"H2bdc", "OC(=O)c1ccc(cc1)C(=O)O"},
        {"terephthalic acid", "OC(=O)c1ccc(cc1)C(=O)O"},
        {"benzene-1,4-dicarboxylic acid", "OC(=O)c1ccc(cc1)C(=O)O"},
        {"H3btc", "OC(=O)c1cc(cc(c1)C(=O)O)C(=O)O"},
        {"benzene-1,3,5-tricarboxylic acid", "OC(=O)c1cc(cc(c1)C(=O)O)C(=O)O"},
        {"H2btpdc", "OC(=O)c1ccc2cc(sc2c1)C(=O)O"},
        {"benzo[b]thiophene-2,6-dicarboxylic acid", "OC(=O)c1ccc2cc(sc2c1)C(=O)O"},
        {"H2ndc", "OC(=O)c1ccc2cc(ccc2c1)C(=O)O"},
        {"naphthalene-2,6-dicarboxylic acid", "OC(=O)c1ccc2cc(ccc2c1)C(=O)O"},
        {"H2bpdc", "OC(=O)c1ccc(cc1)-c1ccc(cc1)C(=O)O"},
        {"biphenyl-4,4'-dicarboxylic acid", "OC(=O)c1ccc(cc1)-c1ccc(cc1)C(=O)O"},
        {"H2fum", "OC(=O)C=CC(=O)O"},
        {"fumaric acid", "OC(=O)C=CC(=O)O"},
        {"H2ox", "OC(=O)C(=O)O"},
        {"oxalic acid", "OC(=O)C(=O)O"},
        {"Hfa", "OC=O"},
        {"formic acid", "OC=O"},
        {"Hac", "CC(=O)O"},
        {"acetic acid", "CC(=O)O"},
        {"bipy", "c1cc(ccn1)-c1ccncc1"},
        {"4,4'-bipyridine", "c1cc(ccn1)-c1ccncc1"},
        {"pyz", "c1cnccn1"},
        {"pyrazine", "c1cnccn1"},
        {"Him", "c1c[nH]cn1"},
        {"imidazole", "c1c[nH]cn1"},
        {"Hmim", "Cc1ncc[nH]1"},
        {"2-methylimidazole", "Cc1ncc[nH]1"},
        {"dabco", "C1CN2CCN1CC2"},
        {"benzene", "c1ccccc1"},
        {"Hbz", "OC(=O)c1ccccc1"},
        {"benzoic acid", "OC(=O)c1ccccc1"},
    };
    for (auto [n, s] : rows) t.add(n, s);
    return t;
  }();
  return table;
}

/// Remote structure lookup seam: returns SMILES text for a name.
class NameResolver {
 public:
  virtual ~NameResolver() = default;
  virtual std::optional<std::string> lookup(const std::string& name) = 0;
};

/// On-disk cache in front of an optional remote resolver. Layout: one file
/// per name, `<dir>/<escaped-name>.smi`, holding the SMILES on its first
/// line. Without a remote resolver the cache is read-only lookups.
class CachedResolver : public NameResolver {
 public:
  explicit CachedResolver(std::filesystem::path dir, std::shared_ptr<NameResolver> remote = nullptr)
      : dir_(std::move(dir)), remote_(std::move(remote)) {}

  static std::string escape(const std::string& name) {
    std::string out;
    for (unsigned char c : name) {
      if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == ',') {
        out.push_back(static_cast<char>(c));
      } else {
        char buf[4];
        std::snprintf(buf, sizeof buf, "%%%02X", c);
        out += buf;
      }
    }
    return out;
  }

  std::optional<std::string> lookup(const std::string& name) override {
    auto path = dir_ / (escape(name) + ".smi");
    {
      std::shared_lock lock(mutex_);
      std::ifstream in(path);
      std::string line;
      if (in && std::getline(in, line) && !line.empty()) return formula_detail::trim(line);
    }
    if (!remote_) return std::nullopt;
    auto found = remote_->lookup(name);
    if (found) {
      std::unique_lock lock(mutex_);
      std::filesystem::create_directories(dir_);
      std::ofstream out(path);
      out << *found << '\n';
    }
    return found;
  }

 private:
  std::filesystem::path dir_;
  std::shared_ptr<NameResolver> remote_;
  std::shared_mutex mutex_;
};

/// Resolver backed by a fixed map, for tests and offline tables.
class MapResolver : public NameResolver {
 public:
  explicit MapResolver(std::map<std::string, std::string> entries) : entries_(std::move(entries)) {}
  std::optional<std::string> lookup(const std::string& name) override {
    if (auto it = entries_.find(name); it != entries_.end()) return it->second;
    return std::nullopt;
  }

 private:
  std::map<std::string, std::string> entries_;
};

using Abbreviations = std::map<std::string, std::string>;

/// Removes `n` acidic hydrogens: carboxylic O-H first, then other O-H, each
/// group in atom order.
inline MolecularGraph deprotonate(const MolecularGraph& g, int n) {
  if (n <= 0) return g;
  auto adj = g.adjacency();
  std::vector<int> carboxylic, hydroxyl;
  for (int h = 0; h < g.size(); ++h) {
    if (!g.atoms[h].is_hydrogen() || adj[h].size() != 1) continue;
    int o = adj[h][0];
    if (g.atoms[o] != elements::O) continue;
    bool acid = false;
    for (int c : adj[o]) {
      if (g.atoms[c] != elements::C) continue;
      for (const auto& b : g.bonds)
        if (b.order == 2 && (b.i == c || b.j == c)) {
          int other = b.i == c ? b.j : b.i;
          if (g.atoms[other] == elements::O) acid = true;
        }
    }
    (acid ? carboxylic : hydroxyl).push_back(h);
  }
  std::vector<int> pool = carboxylic;
  pool.insert(pool.end(), hydroxyl.begin(), hydroxyl.end());
  if (static_cast<int>(pool.size()) < n)
    fail(Errc::UnresolvedName, g.name + ": cannot remove " + std::to_string(n) + " acidic hydrogens");
  std::set<int> drop(pool.begin(), pool.begin() + n);
  return g.without_atoms(drop);
}

struct ResolveContext {
  const Abbreviations* abbreviations = nullptr;
  const NameTable* table = nullptr;  ///< defaults when null
  NameResolver* resolver = nullptr;
};

namespace resolve_detail {

inline std::optional<MolecularGraph> lookup_once(const std::string& name, const ResolveContext& ctx) {
  const NameTable& table = ctx.table ? *ctx.table : NameTable::defaults();
  std::vector<std::string> keys{name};
  if (ctx.abbreviations)
    if (auto it = ctx.abbreviations->find(name); it != ctx.abbreviations->end()) keys.insert(keys.begin(), it->second);
  // (1) abbreviation expansion, (2) built-in table
  for (const auto& key : keys)
    if (auto smi = table.find(key)) return parse_smiles(*smi);
  // (3) pluggable resolver
  if (ctx.resolver)
    for (const auto& key : keys)
      if (auto smi = ctx.resolver->lookup(key)) return parse_smiles(*smi);
  return std::nullopt;
}

}  // namespace resolve_detail

/// Resolves a component name to a molecular graph. Element symbols resolve
/// to single atoms. A name missing from every source is retried as its acid
/// form "H<n>name"; a hit there is deprotonated by n.
inline MolecularGraph resolve_name(const std::string& name, const ResolveContext& ctx = {}) {
  if (name.empty()) fail(Errc::UnresolvedName, "empty component name");
  if (auto e = Element::from_symbol(name); e && !(ctx.abbreviations && ctx.abbreviations->count(name)))
    if (e->is_metal()) return single_atom_graph(*e, name);
  if (auto g = resolve_detail::lookup_once(name, ctx)) {
    g->name = name;
    return *g;
  }
  for (int n = 1; n <= 6; ++n) {
    std::string acid = "H" + (n > 1 ? std::to_string(n) : std::string()) + name;
    if (auto g = resolve_detail::lookup_once(acid, ctx)) {
      auto out = deprotonate(*g, n);
      out.name = name;
      return out;
    }
  }
  if (auto e = Element::from_symbol(name)) return single_atom_graph(*e, name);
  fail(Errc::UnresolvedName, "no structure found for '" + name + "'");
}

// ===================================================================
// Reference graph
// ===================================================================

enum class ReferenceKind { component_set, combined_diagram };

struct ReferenceComponent {
  ComponentSpec spec;
  MolecularGraph graph;
};

using RationalCounts = std::map<Element, Rational>;

/// Expected minimal repeating unit.
struct ReferenceGraph {
  ReferenceKind kind = ReferenceKind::component_set;
  std::vector<ReferenceComponent> components;
  MolecularGraph diagram;  ///< combined_diagram only: one formula unit with metal attachment bonds

  RationalCounts species_counts() const {
    RationalCounts out;
    for (const auto& c : components)
      for (Element e : c.graph.atoms) out[e] += c.spec.multiplicity;
    return out;
  }

  /// Attachment bonds of the diagram (bonds with a metal endpoint).
  std::vector<MolBond> attachments() const {
    std::vector<MolBond> out;
    for (const auto& b : diagram.bonds)
      if (diagram.atoms[b.i].is_metal() || diagram.atoms[b.j].is_metal()) out.push_back(b);
    return out;
  }
};

/// Combines resolved components into a reference graph. `graphs[k]` belongs
/// to `specs[k]`. A diagram must match the component sum atom for atom and be connected.
inline ReferenceGraph build_reference_graph(const std::vector<ComponentSpec>& specs,
                                            const std::vector<MolecularGraph>& graphs,
                                            const std::optional<MolecularGraph>& diagram = std::nullopt) {
  if (specs.size() != graphs.size()) fail(Errc::InvalidStructure, "component/graph count mismatch");
  ReferenceGraph ref;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    if (specs[k].multiplicity <= Rational{0})
      fail(Errc::InvalidStructure, specs[k].name + ": multiplicity must be positive");
    graphs[k].validate();
    ref.components.push_back({specs[k], graphs[k]});
  }
  if (diagram) {
    RationalCounts want = ref.species_counts();
    RationalCounts have;
    for (Element e : diagram->atoms) have[e] += Rational{1};
    if (want != have)
      fail(Errc::InconsistentDiagram, "diagram " + format_counts(have) + " disagrees with components " + format_counts(want));
    if (!diagram->connected()) fail(Errc::InconsistentDiagram, "diagram is not connected");
    ref.kind = ReferenceKind::combined_diagram;
    ref.diagram = *diagram;
  }
  return ref;
}

/// Parses a structural formula and resolves every component.
inline ReferenceGraph reference_from_formula(std::string_view formula, const ResolveContext& ctx = {}) {
  auto specs = parse_structural_formula(formula);
  std::vector<MolecularGraph> graphs;
  for (const auto& s : specs) graphs.push_back(resolve_name(s.name, ctx));
  return build_reference_graph(specs, graphs);
}

// Reference-graph file (JSON):
// {
//   "kind": "component_set" | "combined_diagram",
//   "components": [ {"name": "btpdc", "role": "linker", "multiplicity": "3",
//                    "atoms": ["C", ...], "bonds": [[0, 1, 2], ...]} ],
//   "diagram": {"atoms": [...], "bonds": [...]}        (combined_diagram only)
// }
// Multiplicities are strings holding an integer or a fraction "p/q".
// Bond triples are (atom, atom, order).

namespace refgraph_detail {

inline nlohmann::json graph_json(const MolecularGraph& g) {
  nlohmann::json atoms = nlohmann::json::array(), bonds = nlohmann::json::array();
  for (Element e : g.atoms) atoms.push_back(std::string(e.symbol()));
  for (const auto& b : g.bonds) bonds.push_back({b.i, b.j, b.order});
  return {{"atoms", atoms}, {"bonds", bonds}};
}

inline MolecularGraph graph_from_json(const nlohmann::json& j, std::string name) {
  MolecularGraph g;
  g.name = std::move(name);
  for (const auto& a : j.at("atoms")) {
    auto e = Element::from_symbol(a.get<std::string>());
    if (!e) fail(Errc::Config, "reference graph: unknown element " + a.get<std::string>());
    g.atoms.push_back(*e);
  }
  for (const auto& b : j.at("bonds")) g.bonds.push_back({b.at(0).get<int>(), b.at(1).get<int>(), b.size() > 2 ? b.at(2).get<int>() : 1});
  return g;
}

}  // namespace refgraph_detail

inline std::string write_reference_graph(const ReferenceGraph& ref) {
  using refgraph_detail::graph_json;
  nlohmann::json j;
  j["kind"] = ref.kind == ReferenceKind::component_set ? "component_set" : "combined_diagram";
  j["components"] = nlohmann::json::array();
  for (const auto& c : ref.components) {
    auto cj = graph_json(c.graph);
    cj["name"] = c.spec.name;
    cj["role"] = std::string(role_name(c.spec.role));
    cj["multiplicity"] = c.spec.multiplicity.str();
    j["components"].push_back(cj);
  }
  if (ref.kind == ReferenceKind::combined_diagram) j["diagram"] = graph_json(ref.diagram);
  return j.dump(2) + "\n";
}

inline ReferenceGraph read_reference_graph(std::string_view text) {
  try {
    auto j = nlohmann::json::parse(text);
    std::vector<ComponentSpec> specs;
    std::vector<MolecularGraph> graphs;
    for (const auto& cj : j.at("components")) {
      ComponentSpec s;
      s.name = cj.at("name").get<std::string>();
      s.role = parse_role(cj.value("role", "guest"));
      s.multiplicity = Rational::parse(cj.value("multiplicity", "1"));
      specs.push_back(s);
      graphs.push_back(refgraph_detail::graph_from_json(cj, s.name));
    }
    std::optional<MolecularGraph> diagram;
    if (j.value("kind", "component_set") == "combined_diagram")
      diagram = refgraph_detail::graph_from_json(j.at("diagram"), "diagram");
    return build_reference_graph(specs, graphs, diagram);
  } catch (const nlohmann::json::exception& e) {
    fail(Errc::Config, std::string("reference graph file: ") + e.what());
  } catch (const std::invalid_argument& e) {
    fail(Errc::Config, std::string("reference graph file: ") + e.what());
  }
}

inline ReferenceGraph read_reference_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return read_reference_graph(ss.str());
}

}  // namespace mofcure
