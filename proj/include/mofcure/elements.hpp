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
#include <array>
#include <cctype>
#include <compare>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "mofcure/error.hpp"

namespace mofcure {

namespace detail {

inline constexpr std::array<std::string_view, 119> kSymbols = {
    "",   "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si",
    "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu",
    "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
    "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs", "Ba", "La", "Ce", "Pr",
    "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",
    "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac",
    "Th", "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf",
    "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

// Single-bond covalent radii in Angstrom (Cordero et al. 2008 table; sp3 C,
// low-spin Mn/Fe/Co). Elements beyond Cm have no tabulated value and use 1.50.
inline constexpr std::array<double, 119> kCovalentRadii = {
    0.00, 0.31, 0.28, 1.28, 0.96, 0.84, 0.76, 0.71, 0.66, 0.57, 0.58, 1.66, 1.41, 1.21, 1.11,
    1.07, 1.05, 1.02, 1.06, 2.03, 1.76, 1.70, 1.60, 1.53, 1.39, 1.39, 1.32, 1.26, 1.24, 1.32,
    1.22, 1.22, 1.20, 1.19, 1.20, 1.20, 1.16, 2.20, 1.95, 1.90, 1.75, 1.64, 1.54, 1.47, 1.46,
    1.42, 1.39, 1.45, 1.44, 1.42, 1.39, 1.39, 1.38, 1.39, 1.40, 2.44, 2.15, 2.07, 2.04, 2.03,
    2.01, 1.99, 1.98, 1.98, 1.96, 1.94, 1.92, 1.92, 1.89, 1.90, 1.87, 1.87, 1.75, 1.70, 1.62,
    1.51, 1.44, 1.41, 1.36, 1.36, 1.32, 1.45, 1.46, 1.48, 1.40, 1.50, 1.50, 2.60, 2.21, 2.15,
    2.06, 2.00, 1.96, 1.90, 1.87, 1.80, 1.69, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50,
    1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50, 1.50};

inline constexpr std::array<std::uint8_t, 25> kNonMetals = {1,  2,  5,  6,  7,  8,  9,  10, 14,
                                                            15, 16, 17, 18, 32, 33, 34, 35, 36,
                                                            51, 52, 53, 54, 85, 86, 117};

inline constexpr std::array<std::uint8_t, 7> kNobleGases = {2, 10, 18, 36, 54, 86, 118};

}  // namespace detail

/// A chemical element, identified by atomic number (1..118).
class Element {
 public:
  constexpr Element() = default;
  constexpr explicit Element(int z) : z_(static_cast<std::uint8_t>(z)) {}

  static constexpr int kMaxZ = 118;

  /// Exact, case-sensitive symbol lookup ("Dy", not "DY").
  static std::optional<Element> from_symbol(std::string_view sym) {
    for (int z = 1; z <= kMaxZ; ++z)
      if (detail::kSymbols[z] == sym) return Element(z);
    return std::nullopt;
  }

  /// Lenient lookup used for file formats: trims charges and digits
  /// ("O2-", "Dy3+") and fixes capitalisation ("DY" -> "Dy").
  /// With allow_prefix, a two-letter run that is not a symbol falls back to its
  /// first letter (used for site labels such as "CA12").
  static std::optional<Element> parse_lenient(std::string_view raw, bool allow_prefix = false) {
    std::string sym;
    for (char c : raw) {
      if (std::isalpha(static_cast<unsigned char>(c)))
        sym.push_back(c);
      else
        break;
    }
    if (sym.empty() || sym.size() > 2) {
      if (sym.size() > 2) sym.resize(2);
      if (sym.empty()) return std::nullopt;
    }
    sym[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(sym[0])));
    for (std::size_t i = 1; i < sym.size(); ++i)
      sym[i] = static_cast<char>(std::tolower(static_cast<unsigned char>(sym[i])));
    if (auto e = from_symbol(sym)) return e;
    if (allow_prefix && sym.size() == 2) return from_symbol(sym.substr(0, 1));
    return std::nullopt;
  }

  static Element require(std::string_view sym) {
    auto e = from_symbol(sym);
    if (!e) fail(Errc::InvalidStructure, "unknown element symbol '" + std::string(sym) + "'");
    return *e;
  }

  constexpr int z() const { return z_; }
  constexpr bool valid() const { return z_ >= 1 && z_ <= kMaxZ; }
  std::string_view symbol() const { return detail::kSymbols[z_]; }

  bool is_hydrogen() const { return z_ == 1; }
  bool is_metal() const {
    return valid() && std::find(detail::kNonMetals.begin(), detail::kNonMetals.end(), z_) ==
                          detail::kNonMetals.end();
  }
  bool is_noble_gas() const {
    return std::find(detail::kNobleGases.begin(), detail::kNobleGases.end(), z_) !=
           detail::kNobleGases.end();
  }

  friend constexpr bool operator==(Element, Element) = default;
  friend constexpr auto operator<=>(Element, Element) = default;

 private:
  std::uint8_t z_ = 0;
};

namespace elements {
inline const Element H{1};
inline const Element C{6};
inline const Element N{7};
inline const Element O{8};
inline const Element S{16};
}  // namespace elements

/// Element -> count map ordered by atomic number.
using SpeciesCounts = std::map<Element, int>;

/// Hill-ordered element list: C, H, then the rest alphabetically by symbol.
template <class Map>
std::vector<Element> hill_order(const Map& counts) {
  std::vector<Element> out;
  for (const auto& [e, n] : counts) out.push_back(e);
  std::sort(out.begin(), out.end(), [](Element a, Element b) {
    auto rank = [](Element e) { return e.z() == 6 ? 0 : e.z() == 1 ? 1 : 2; };
    if (rank(a) != rank(b)) return rank(a) < rank(b);
    return a.symbol() < b.symbol();
  });
  return out;
}

/// "{C: 176, H: 92, ...}" rendering used in reports.
template <class Map>
std::string format_counts(const Map& counts) {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (Element e : hill_order(counts)) {
    if (!first) os << ", ";
    first = false;
    const auto& v = counts.at(e);
    if constexpr (std::is_arithmetic_v<std::decay_t<decltype(v)>>)
      os << e.symbol() << ": " << v;
    else
      os << e.symbol() << ": " << v.str();
  }
  os << '}';
  return os.str();
}

/// Covalent radius table. The built-in defaults mirror data/covalent_radii.dat.
class CovalentRadii {
 public:
  CovalentRadii() {
    for (int z = 0; z <= Element::kMaxZ; ++z) radii_[z] = detail::kCovalentRadii[z];
  }

  double operator()(Element e) const { return radii_[e.z()]; }
  void set(Element e, double r) { radii_[e.z()] = r; }

  /// Reads the "Symbol radius" key-value format; '#' starts a comment.
  /// Elements not listed keep their built-in value.
  static CovalentRadii load(std::istream& in) {
    CovalentRadii table;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
      std::istringstream ls(line);
      std::string sym;
      double r = 0;
      if (!(ls >> sym)) continue;
      if (!(ls >> r) || r <= 0)
        fail(Errc::Config, "covalent radii line " + std::to_string(lineno) + ": bad radius");
      auto e = Element::from_symbol(sym);
      if (!e) fail(Errc::Config, "covalent radii line " + std::to_string(lineno) + ": unknown element " + sym);
      table.set(*e, r);
    }
    return table;
  }

  static CovalentRadii load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(Errc::Io, "cannot open " + path);
    return load(in);
  }

  static const CovalentRadii& defaults() {
    static const CovalentRadii table;
    return table;
  }

 private:
  std::array<double, Element::kMaxZ + 1> radii_{};
};

}  // namespace mofcure
