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

// CIF 1.1 subset reader and writer.
//
// Bonds are stored in a _geom_bond loop with columns
//   _geom_bond_atom_site_label_1, _geom_bond_atom_site_label_2,
//   _geom_bond_site_symmetry_2
// The symmetry code is the standard "1_555" form where the three digits are
// 5 + the lattice translation of atom 2 along a, b, c. Translations outside
// [-4, 4] are written as "1_<a>_<b>_<c>" with signed integers, e.g. "1_-6_0_0".
// "." or a missing column means no translation.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mofcure/error.hpp"
#include "mofcure/rational.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

namespace cif_detail {

struct Token {
  std::string text;
  bool quoted = false;
  int line = 0;
};

inline std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

inline std::vector<Token> tokenize(std::string_view text) {
  std::vector<Token> out;
  std::size_t i = 0, n = text.size();
  int line = 1;
  bool at_line_start = true;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (i < n) {
    char c = text[i];
    if (c == '\n') {
      ++line;
      at_line_start = true;
      ++i;
      continue;
    }
    if (is_space(c)) {
      at_line_start = false;
      ++i;
      continue;
    }
    if (c == '#') {
      while (i < n && text[i] != '\n') ++i;
      continue;
    }
    if (c == ';' && at_line_start) {
      int start_line = line;
      std::size_t end = i + 1;
      std::string body;
      // text field runs until a line starting with ';'
      for (;;) {
        auto nl = text.find('\n', end);
        if (nl == std::string_view::npos)
          fail(Errc::MalformedCif, "unterminated text field starting on line " + std::to_string(start_line));
        ++line;
        body.append(text.substr(end, nl - end));
        body.push_back('\n');
        end = nl + 1;
        if (end < n && text[end] == ';') break;
      }
      if (!body.empty() && body.front() == '\n') body.erase(0, 1);
      while (!body.empty() && (body.back() == '\n' || body.back() == '\r')) body.pop_back();
      out.push_back({body, true, start_line});
      i = end + 1;
      at_line_start = false;
      continue;
    }
    at_line_start = false;
    if (c == '\'' || c == '"') {
      std::size_t j = i + 1;
      for (;;) {
        if (j >= n || text[j] == '\n')
          fail(Errc::MalformedCif, "unterminated quoted string on line " + std::to_string(line));
        if (text[j] == c && (j + 1 >= n || is_space(text[j + 1]))) break;
        ++j;
      }
      out.push_back({std::string(text.substr(i + 1, j - i - 1)), true, line});
      i = j + 1;
      continue;
    }
    std::size_t j = i;
    while (j < n && !is_space(text[j])) ++j;
    out.push_back({std::string(text.substr(i, j - i)), false, line});
    i = j;
  }
  return out;
}

struct Loop {
  std::vector<std::string> tags;  // lower-cased
  std::vector<std::vector<Token>> rows;

  int column(std::string_view tag) const {
    for (std::size_t k = 0; k < tags.size(); ++k)
      if (tags[k] == tag) return static_cast<int>(k);
    return -1;
  }
};

struct Block {
  std::string name;
  std::map<std::string, Token> items;
  std::vector<Loop> loops;

  const Loop* find_loop(std::string_view tag) const {
    for (const auto& l : loops)
      if (l.column(tag) >= 0) return &l;
    return nullptr;
  }
};

inline bool is_keyword(const Token& t, std::string_view kw) {
  return !t.quoted && lower(t.text).rfind(kw, 0) == 0;
}

inline Block read_first_block(std::string_view text) {
  auto tokens = tokenize(text);
  Block block;
  std::size_t i = 0;
  bool in_block = false;
  while (i < tokens.size()) {
    const Token& t = tokens[i];
    if (is_keyword(t, "data_")) {
      if (in_block) break;
      in_block = true;
      block.name = t.text.substr(5);
      ++i;
      continue;
    }
    if (!in_block) {
      ++i;
      continue;
    }
    if (!t.quoted && lower(t.text) == "loop_") {
      Loop loop;
      ++i;
      while (i < tokens.size() && !tokens[i].quoted && !tokens[i].text.empty() && tokens[i].text[0] == '_')
        loop.tags.push_back(lower(tokens[i++].text));
      if (loop.tags.empty()) fail(Errc::MalformedCif, "loop_ without data names on line " + std::to_string(t.line));
      std::vector<Token> values;
      while (i < tokens.size()) {
        const Token& v = tokens[i];
        if (!v.quoted && (v.text[0] == '_' || lower(v.text) == "loop_" || is_keyword(v, "data_") ||
                          is_keyword(v, "save_") || lower(v.text) == "global_"))
          break;
        values.push_back(v);
        ++i;
      }
      if (values.size() % loop.tags.size() != 0)
        fail(Errc::MalformedCif, "unclosed loop starting on line " + std::to_string(t.line) + ": " +
                                     std::to_string(values.size()) + " values for " +
                                     std::to_string(loop.tags.size()) + " columns");
      for (std::size_t r = 0; r < values.size(); r += loop.tags.size())
        loop.rows.emplace_back(values.begin() + static_cast<std::ptrdiff_t>(r),
                               values.begin() + static_cast<std::ptrdiff_t>(r + loop.tags.size()));
      block.loops.push_back(std::move(loop));
      continue;
    }
    if (!t.quoted && t.text[0] == '_') {
      if (i + 1 >= tokens.size()) fail(Errc::MalformedCif, "data name " + t.text + " without value");
      const Token& v = tokens[i + 1];
      if (!v.quoted && (v.text[0] == '_' || lower(v.text) == "loop_"))
        fail(Errc::MalformedCif, "data name " + t.text + " without value on line " + std::to_string(t.line));
      block.items[lower(t.text)] = v;
      i += 2;
      continue;
    }
    ++i;  // stray value or save frame marker: ignored
  }
  if (!in_block) fail(Errc::MalformedCif, "no data_ block");
  return block;
}

inline bool is_missing(const Token& t) { return !t.quoted && (t.text == "?" || t.text == "."); }

/// "1.234(5)" -> 1.234
inline std::optional<double> parse_number(const Token& t) {
  if (is_missing(t)) return std::nullopt;
  std::string s = t.text;
  if (auto p = s.find('('); p != std::string::npos) s.resize(p);
  double v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline double require_number(const Block& b, const std::string& tag) {
  auto it = b.items.find(tag);
  if (it == b.items.end()) fail(Errc::MalformedCif, "missing " + tag);
  auto v = parse_number(it->second);
  if (!v) fail(Errc::MalformedCif, "non-numeric " + tag + " '" + it->second.text + "'");
  return *v;
}

/// One symmetry operator: rotation rows and translation.
struct SymOp {
  std::array<std::array<int, 3>, 3> rot{};
  std::array<Rational, 3> trans{};

  bool is_identity() const {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c)
        if (rot[r][c] != (r == c ? 1 : 0)) return false;
      if (!trans[r].is_zero() && !trans[r].is_integer()) return false;
    }
    return true;
  }

  Vec3 apply(Vec3 f) const {
    Vec3 out;
    for (int r = 0; r < 3; ++r)
      out[r] = rot[r][0] * f.x + rot[r][1] * f.y + rot[r][2] * f.z + trans[r].to_double();
    return out;
  }
};

inline SymOp parse_symop(std::string_view text) {
  SymOp op;
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c))) s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  parts.push_back(cur);
  if (parts.size() != 3) fail(Errc::MalformedCif, "bad symmetry operator '" + std::string(text) + "'");
  for (int r = 0; r < 3; ++r) {
    const std::string& p = parts[r];
    std::size_t i = 0;
    if (p.empty()) fail(Errc::MalformedCif, "bad symmetry operator '" + std::string(text) + "'");
    while (i < p.size()) {
      int sign = 1;
      if (p[i] == '+' || p[i] == '-') {
        sign = p[i] == '-' ? -1 : 1;
        ++i;
      }
      std::size_t j = i;
      while (j < p.size() && (std::isdigit(static_cast<unsigned char>(p[j])) || p[j] == '.' || p[j] == '/')) ++j;
      std::string num = p.substr(i, j - i);
      i = j;
      if (i < p.size() && (p[i] == 'x' || p[i] == 'y' || p[i] == 'z')) {
        int col = p[i] - 'x';
        int coeff = num.empty() ? 1 : static_cast<int>(std::lround(Rational::parse(num).to_double()));
        op.rot[r][col] += sign * coeff;
        ++i;
      } else if (!num.empty()) {
        if (i < p.size() && p[i] == '*') fail(Errc::MalformedCif, "unsupported symmetry term in '" + std::string(text) + "'");
        Rational v;
        try {
          v = Rational::parse(num);
        } catch (const std::invalid_argument&) {
          fail(Errc::MalformedCif, "bad symmetry operator '" + std::string(text) + "'");
        }
        op.trans[r] += sign > 0 ? v : -v;
      } else {
        fail(Errc::MalformedCif, "bad symmetry operator '" + std::string(text) + "'");
      }
    }
  }
  return op;
}

inline double wrap01(double v) {
  double w = v - std::floor(v);
  return w >= 1.0 ? 0.0 : w;
}

inline std::optional<int> parse_disorder_group(const Token& t) {
  if (is_missing(t)) return std::nullopt;
  const std::string& s = t.text;
  int v = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec == std::errc{} && res.ptr == s.data() + s.size()) {
    if (v == 0) return std::nullopt;
    return v;
  }
  if (s.size() == 1 && std::isalpha(static_cast<unsigned char>(s[0])))
    return std::toupper(static_cast<unsigned char>(s[0])) - 'A' + 1;
  fail(Errc::MalformedCif, "unrecognised disorder group '" + s + "'");
}

inline Shift parse_symmetry_code(const Token& t) {
  if (is_missing(t)) return {};
  const std::string& s = t.text;
  auto us = s.find('_');
  if (us == std::string::npos) return {};  // bare operator index: translation-free
  if (s.substr(0, us) != "1")
    fail(Errc::MalformedCif, "bond symmetry code '" + s + "' uses a non-identity operator");
  std::string rest = s.substr(us + 1);
  if (rest.size() == 3 && std::all_of(rest.begin(), rest.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
    return {rest[0] - '5', rest[1] - '5', rest[2] - '5'};
  std::array<int, 3> v{};
  std::size_t pos = 0;
  for (int k = 0; k < 3; ++k) {
    auto next = rest.find('_', pos);
    std::string part = rest.substr(pos, next == std::string::npos ? std::string::npos : next - pos);
    auto res = std::from_chars(part.data(), part.data() + part.size(), v[k]);
    if (part.empty() || res.ec != std::errc{} || res.ptr != part.data() + part.size())
      fail(Errc::MalformedCif, "bad bond symmetry code '" + s + "'");
    if (k < 2 && next == std::string::npos) fail(Errc::MalformedCif, "bad bond symmetry code '" + s + "'");
    pos = next + 1;
  }
  return {v[0], v[1], v[2]};
}

inline std::string symmetry_code(Shift s) {
  auto in_digit_range = [](int v) { return v >= -4 && v <= 4; };
  if (in_digit_range(s.a) && in_digit_range(s.b) && in_digit_range(s.c))
    return "1_" + std::to_string(5 + s.a) + std::to_string(5 + s.b) + std::to_string(5 + s.c);
  return "1_" + std::to_string(s.a) + "_" + std::to_string(s.b) + "_" + std::to_string(s.c);
}

inline std::string fmt_double(double v) {
  if (v == 0) v = 0;  // drop negative zero
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::string quote(const std::string& s) {
  bool plain = !s.empty();
  for (char c : s)
    if (std::isspace(static_cast<unsigned char>(c)) || c == '\'' || c == '"' || c == '#' || c == ';' || c == '_' || c == '$' || c == '[' || c == ']')
      plain = false;
  if (plain && s != "." && s != "?" && s.rfind("data_", 0) != 0 && s != "loop_") return s;
  if (s.find('\n') == std::string::npos && s.find("' ") == std::string::npos && (s.empty() || s.back() != '\''))
    return "'" + s + "'";
  return "\n;" + s + "\n;";
}

}  // namespace cif_detail

/// Parses the first data block of a CIF. Symmetry operators other than the
/// identity are expanded to P1; copies of a site within 1e-3 fractional
/// units of each other are merged.
inline CrystalStructure parse_cif(std::string_view text) {
  using namespace cif_detail;
  Block b = read_first_block(text);

  CrystalStructure s;
  s.name = b.name.empty() ? "structure" : b.name;
  s.lattice.a = require_number(b, "_cell_length_a");
  s.lattice.b = require_number(b, "_cell_length_b");
  s.lattice.c = require_number(b, "_cell_length_c");
  s.lattice.alpha = require_number(b, "_cell_angle_alpha");
  s.lattice.beta = require_number(b, "_cell_angle_beta");
  s.lattice.gamma = require_number(b, "_cell_angle_gamma");
  if (!s.lattice.valid()) fail(Errc::MalformedCif, "cell parameters do not describe a valid cell");
  if (auto it = b.items.find("_mofcure_provenance"); it != b.items.end() && !is_missing(it->second))
    s.provenance = it->second.text;

  const Loop* atoms = b.find_loop("_atom_site_fract_x");
  if (atoms) {
    int c_label = atoms->column("_atom_site_label");
    int c_type = atoms->column("_atom_site_type_symbol");
    int c_x = atoms->column("_atom_site_fract_x");
    int c_y = atoms->column("_atom_site_fract_y");
    int c_z = atoms->column("_atom_site_fract_z");
    int c_occ = atoms->column("_atom_site_occupancy");
    int c_grp = atoms->column("_atom_site_disorder_group");
    if (c_y < 0 || c_z < 0) fail(Errc::MalformedCif, "atom_site loop lacks fractional coordinates");
    if (c_label < 0 && c_type < 0) fail(Errc::MalformedCif, "atom_site loop lacks labels and type symbols");
    for (const auto& row : atoms->rows) {
      Site site;
      site.label = c_label >= 0 ? row[c_label].text : std::string();
      bool from_type = c_type >= 0 && !is_missing(row[c_type]);
      std::string type = from_type ? row[c_type].text : site.label;
      auto e = Element::parse_lenient(type, !from_type);
      if (!e) fail(Errc::MalformedCif, "unknown element symbol '" + type + "' (line " + std::to_string(row[0].line) + ")");
      site.element = *e;
      auto x = parse_number(row[c_x]), y = parse_number(row[c_y]), z = parse_number(row[c_z]);
      if (!x || !y || !z) fail(Errc::MalformedCif, "bad coordinates for site " + site.label);
      site.frac = {*x, *y, *z};
      if (c_occ >= 0) {
        auto occ = parse_number(row[c_occ]);
        site.occupancy = occ ? *occ : 1.0;
        if (!(site.occupancy > 0 && site.occupancy <= 1.0 + 1e-6))
          fail(Errc::MalformedCif, "occupancy outside (0,1] for site " + site.label);
        site.occupancy = std::min(site.occupancy, 1.0);
      }
      if (c_grp >= 0) site.disorder_group = parse_disorder_group(row[c_grp]);
      if (site.label.empty()) site.label = std::string(site.element.symbol()) + std::to_string(s.sites.size() + 1);
      s.sites.push_back(std::move(site));
    }
  }

  std::vector<SymOp> ops;
  for (const char* tag : {"_symmetry_equiv_pos_as_xyz", "_space_group_symop_operation_xyz"}) {
    if (const Loop* l = b.find_loop(tag)) {
      int col = l->column(tag);
      for (const auto& row : l->rows) ops.push_back(parse_symop(row[col].text));
      break;
    }
    if (auto it = b.items.find(tag); it != b.items.end()) ops.push_back(parse_symop(it->second.text));
  }
  bool expand = std::any_of(ops.begin(), ops.end(), [](const SymOp& op) { return !op.is_identity(); });

  std::map<std::string, std::size_t> by_label;
  if (!expand) {
    for (std::size_t i = 0; i < s.sites.size(); ++i)
      if (!by_label.emplace(s.sites[i].label, i).second)
        fail(Errc::MalformedCif, "duplicate site label " + s.sites[i].label);
  } else {
    std::vector<Site> expanded;
    std::set<std::string> used;
    for (const auto& site : s.sites) used.insert(site.label);
    for (const auto& site : s.sites) {
      std::vector<Vec3> copies;
      for (const auto& op : ops) {
        Vec3 p = op.apply(site.frac);
        p = {wrap01(p.x), wrap01(p.y), wrap01(p.z)};
        bool dup = false;
        for (const auto& q : copies) {
          Vec3 d = p - q;
          for (int k = 0; k < 3; ++k) d[k] -= std::round(d[k]);
          if (norm(d) < 1e-3) {
            dup = true;
            break;
          }
        }
        if (dup) continue;
        copies.push_back(p);
        Site out = site;
        out.frac = p;
        if (copies.size() > 1) {
          int k = static_cast<int>(copies.size());
          std::string label;
          do {
            label = site.label + "_" + std::to_string(k++);
          } while (used.count(label));
          used.insert(label);
          out.label = label;
        }
        expanded.push_back(std::move(out));
      }
    }
    s.sites = std::move(expanded);
    s.provenance += s.provenance.empty() ? "expanded-to-P1" : "; expanded-to-P1";
  }

  if (const Loop* bonds = b.find_loop("_geom_bond_atom_site_label_1"); bonds && !expand) {
    int c1 = bonds->column("_geom_bond_atom_site_label_1");
    int c2 = bonds->column("_geom_bond_atom_site_label_2");
    int csym1 = bonds->column("_geom_bond_site_symmetry_1");
    int csym2 = bonds->column("_geom_bond_site_symmetry_2");
    if (c2 < 0) fail(Errc::MalformedCif, "bond loop lacks _geom_bond_atom_site_label_2");
    for (const auto& row : bonds->rows) {
      auto i = by_label.find(row[c1].text), j = by_label.find(row[c2].text);
      if (i == by_label.end() || j == by_label.end())
        fail(Errc::MalformedCif, "bond references unknown site on line " + std::to_string(row[0].line));
      Shift sh = csym2 >= 0 ? parse_symmetry_code(row[csym2]) : Shift{};
      if (csym1 >= 0) sh = sh - parse_symmetry_code(row[csym1]);
      if (i->second == j->second && sh.is_zero())
        fail(Errc::MalformedCif, "self bond without translation for " + row[c1].text);
      s.explicit_bonds.push_back({i->second, j->second, sh});
    }
  }
  return s;
}

/// Writes a P1 CIF. With include_bonds the explicit bond list is emitted as a
/// _geom_bond loop (see the header comment for the translation encoding).
inline std::string write_cif(const CrystalStructure& s, bool include_bonds = true) {
  using namespace cif_detail;
  std::ostringstream os;
  std::string name;
  for (char c : s.name) name.push_back(std::isspace(static_cast<unsigned char>(c)) ? '_' : c);
  if (name.empty()) name = "structure";
  os << "data_" << name << "\n";
  os << "_audit_creation_method 'mofcure'\n";
  if (!s.provenance.empty()) os << "_mofcure_provenance " << quote(s.provenance) << "\n";
  os << "_symmetry_space_group_name_H-M 'P 1'\n";
  os << "_symmetry_Int_Tables_number 1\n";
  os << "_cell_length_a " << fmt_double(s.lattice.a) << "\n";
  os << "_cell_length_b " << fmt_double(s.lattice.b) << "\n";
  os << "_cell_length_c " << fmt_double(s.lattice.c) << "\n";
  os << "_cell_angle_alpha " << fmt_double(s.lattice.alpha) << "\n";
  os << "_cell_angle_beta " << fmt_double(s.lattice.beta) << "\n";
  os << "_cell_angle_gamma " << fmt_double(s.lattice.gamma) << "\n";
  os << "\nloop_\n_symmetry_equiv_pos_as_xyz\n'x, y, z'\n";
  os << "\nloop_\n_atom_site_label\n_atom_site_type_symbol\n_atom_site_fract_x\n_atom_site_fract_y\n"
        "_atom_site_fract_z\n_atom_site_occupancy\n_atom_site_disorder_group\n";
  for (const auto& site : s.sites) {
    os << quote(site.label) << ' ' << site.element.symbol() << ' ' << fmt_double(site.frac.x) << ' '
       << fmt_double(site.frac.y) << ' ' << fmt_double(site.frac.z) << ' ' << fmt_double(site.occupancy) << ' '
       << (site.disorder_group ? std::to_string(*site.disorder_group) : std::string(".")) << "\n";
  }
  if (include_bonds && !s.explicit_bonds.empty()) {
    os << "\nloop_\n_geom_bond_atom_site_label_1\n_geom_bond_atom_site_label_2\n_geom_bond_site_symmetry_2\n"
          "_geom_bond_distance\n";
    for (const auto& b : s.explicit_bonds) {
      Vec3 fj = s.sites[b.j].frac + Vec3{double(b.shift.a), double(b.shift.b), double(b.shift.c)};
      double d = norm(s.lattice.to_cartesian(fj - s.sites[b.i].frac));
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.4f", d);
      os << quote(s.sites[b.i].label) << ' ' << quote(s.sites[b.j].label) << ' ' << symmetry_code(b.shift) << ' '
         << buf << "\n";
    }
  }
  return os.str();
}

inline CrystalStructure read_cif_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_cif(ss.str());
}

inline void write_cif_file(const std::string& path, const CrystalStructure& s, bool include_bonds = true) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(Errc::Io, "cannot write " + path);
  out << write_cif(s, include_bonds);
}

}  // namespace mofcure
