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

// Programmatic test structures. Everything is seeded, so regenerating a
// fixture reproduces the shipped file byte for byte.
#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "geometry.hpp"
#include "mofcure/cif.hpp"
#include "mofcure/crystal.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/structure.hpp"

namespace fixtures {

using namespace mofcure;

struct Molecule {
  MolecularGraph graph;
  std::vector<Vec3> xyz;  ///< local Cartesian coordinates, centred

  Vec3 centroid() const {
    Vec3 c{};
    for (const auto& p : xyz) c = c + p;
    return c * (1.0 / static_cast<double>(xyz.size()));
  }
};

/// Resolved and embedded component, cached by name.
inline const Molecule& molecule(const std::string& name) {
  static std::mutex mu;
  static std::map<std::string, Molecule> cache;
  std::lock_guard lock(mu);
  auto it = cache.find(name);
  if (it != cache.end()) return it->second;
  Molecule m;
  m.graph = resolve_name(name);
  m.xyz = embed(m.graph);
  return cache.emplace(name, std::move(m)).first->second;
}

struct Fixture {
  CrystalStructure structure;
  std::string formula;
};

inline Vec3 wrap(Vec3 f) { return {f.x - std::floor(f.x), f.y - std::floor(f.y), f.z - std::floor(f.z)}; }

/// Shortest periodic distance between a Cartesian point and site k.
inline double point_distance(const CrystalStructure& s, Vec3 cart, std::size_t k) {
  Vec3 d = s.sites[k].frac - s.lattice.to_fractional(cart);
  d = {d.x - std::round(d.x), d.y - std::round(d.y), d.z - std::round(d.z)};
  double best = 1e300;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) best = std::min(best, norm(s.lattice.to_cartesian(d + Vec3{double(a), double(b), double(c)})));
  return best;
}

class Builder {
 public:
  Builder(std::string name, Lattice lattice) {
    s_.name = std::move(name);
    s_.lattice = lattice;
  }

  CrystalStructure& structure() { return s_; }

  std::size_t add_atom(Element e, Vec3 cart, std::optional<int> group = {}, double occ = 1.0) {
    Site site;
    site.element = e;
    site.frac = wrap(s_.lattice.to_fractional(cart));
    site.occupancy = occ;
    site.disorder_group = group;
    site.label = "X" + std::to_string(s_.sites.size());
    s_.sites.push_back(site);
    return s_.sites.size() - 1;
  }

  std::vector<Vec3> placed(const Molecule& m, Vec3 centre, const Rotation& rot) const {
    std::vector<Vec3> out;
    for (const auto& p : m.xyz) out.push_back(centre + rot(p));
    return out;
  }

  std::vector<std::size_t> add(const Molecule& m, Vec3 centre, const Rotation& rot, std::optional<int> group = {},
                               double occ = 1.0) {
    std::vector<std::size_t> idx;
    auto pts = placed(m, centre, rot);
    for (std::size_t k = 0; k < pts.size(); ++k) idx.push_back(add_atom(m.graph.atoms[k], pts[k], group, occ));
    return idx;
  }

  /// Smallest distance from any point to any existing site.
  double clearance(const std::vector<Vec3>& pts) const {
    double best = 1e300;
    for (const auto& p : pts)
      for (std::size_t k = 0; k < s_.size(); ++k) best = std::min(best, point_distance(s_, p, k));
    return best;
  }

  /// Drops `m` at a random free spot; returns the new site indices.
  std::vector<std::size_t> add_guest(const Molecule& m, Rng& rng, double min_gap = 3.0, std::optional<int> group = {},
                                     double occ = 1.0) {
    for (int attempt = 0; attempt < 4000; ++attempt) {
      Vec3 f{rng.uniform(), rng.uniform(), rng.uniform()};
      auto rot = random_rotation(rng);
      Vec3 centre = s_.lattice.to_cartesian(f);
      if (clearance(placed(m, centre, rot)) >= min_gap) return add(m, centre, rot, group, occ);
    }
    throw std::runtime_error(s_.name + ": no room for " + m.graph.name);
  }

  CrystalStructure finish() const {
    CrystalStructure out = s_;
    relabel_sites(out);
    out.validate();
    return out;
  }

  static Rotation random_rotation(Rng& rng) {
    Vec3 axis{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    if (norm(axis) < 1e-3) axis = {0, 0, 1};
    return Rotation::axis_angle(axis, rng.uniform(0, 2 * kPi));
  }

 private:
  CrystalStructure s_;
};

// -------------------------------------------------------------------
// 1-D coordination chains: M bridges two carboxylate O atoms of adjacent
// linkers along a; the chain spans the cell and is the framework.
// -------------------------------------------------------------------

struct ChainSpec {
  std::string name = "chain";
  std::string metal = "Zn";
  std::string linker = "bdc";
  int chains = 1;                                          ///< formula units per cell
  std::vector<std::pair<std::string, int>> guests;         ///< per formula unit
  double b = 14, c = 14, alpha = 90, beta = 90, gamma = 90;
  std::uint64_t seed = 1;
};

inline std::string formula_for(const ChainSpec& spec) {
  std::string f = "[" + spec.metal + "(" + spec.linker + ")";
  for (const auto& [g, n] : spec.guests) f += "·" + (n > 1 ? std::to_string(n) + "(" + g + ")" : g);
  return f + "]";
}

struct ChainGeometry {
  std::vector<Vec3> linker;  ///< linker atoms, chain axis along +x
  Vec3 metal;                ///< metal position in the same frame
  double period = 0;         ///< a
};

inline ChainGeometry chain_geometry(const Molecule& lk, Element metal, double twist) {
  auto adj = lk.graph.adjacency();
  std::vector<int> carboxyl;
  for (int v = 0; v < lk.graph.size(); ++v) {
    if (lk.graph.atoms[v] != elements::C) continue;
    int o = 0;
    for (int w : adj[v]) o += lk.graph.atoms[w] == elements::O && adj[w].size() == 1;
    if (o == 2) carboxyl.push_back(v);
  }
  if (carboxyl.size() != 2) throw std::runtime_error("linker " + lk.graph.name + " is not a dicarboxylate");
  Rotation align = Rotation::align(lk.xyz[carboxyl[1]] - lk.xyz[carboxyl[0]], {1, 0, 0});
  Rotation rot = align.then(Rotation::axis_angle({1, 0, 0}, twist));
  ChainGeometry g;
  for (const auto& p : lk.xyz) g.linker.push_back(rot(p));
  auto pick = [&](int c, bool max_x) {
    int best = -1;
    for (int w : adj[c])
      if (lk.graph.atoms[w] == elements::O && (best < 0 || (max_x ? g.linker[w].x > g.linker[best].x : g.linker[w].x < g.linker[best].x)))
        best = w;
    return best;
  };
  int o_left = pick(carboxyl[0], false), o_right = pick(carboxyl[1], true);
  Vec3 l = g.linker[o_left], r = g.linker[o_right];
  double dy = l.y - r.y, dz = l.z - r.z;
  const double bridge = 4.0;  // O...O across the metal; M-O = 2.0 Å
  if (dy * dy + dz * dz >= bridge * bridge) throw std::runtime_error("chain geometry: carboxylates too offset");
  g.period = r.x - l.x + std::sqrt(bridge * bridge - dy * dy - dz * dz);
  g.metal = (r + l + Vec3{g.period, 0, 0}) * 0.5;
  (void)metal;
  return g;
}

inline Fixture chain_mof(const ChainSpec& spec) {
  Rng rng(spec.seed);
  const Molecule& lk = molecule(spec.linker);
  Element metal = Element::require(spec.metal);
  const auto& radii = CovalentRadii::defaults();
  for (int attempt = 0; attempt < 64; ++attempt) {
    ChainGeometry geo = chain_geometry(lk, metal, rng.uniform(0, 2 * kPi));
    double c = spec.c * spec.chains;
    Builder bld(spec.name, Lattice{geo.period, spec.b, c, spec.alpha, spec.beta, spec.gamma});
    std::vector<std::size_t> metal_sites;
    for (int k = 0; k < spec.chains; ++k) {
      Vec3 origin = bld.structure().lattice.to_cartesian({0.0, 0.25 + 0.5 * (k % 2), (k + 0.5) / spec.chains});
      for (std::size_t a = 0; a < geo.linker.size(); ++a) bld.add_atom(lk.graph.atoms[a], origin + geo.linker[a]);
      metal_sites.push_back(bld.add_atom(metal, origin + geo.metal));
    }
    // metal must bond exactly its two bridging O atoms
    const auto& s = bld.structure();
    bool ok = true;
    for (std::size_t m : metal_sites)
      for (std::size_t k = 0; k < s.size() && ok; ++k) {
        if (k == m) continue;
        double d = min_image_distance(s, m, k).distance;
        bool bridging = s.sites[k].element == elements::O && std::abs(d - 2.0) < 1e-6;
        if (!bridging && d < 1.15 * (radii(metal) + radii(s.sites[k].element)) + 0.25) ok = false;
      }
    if (!ok) continue;
    for (int k = 0; k < spec.chains; ++k)
      for (const auto& [g, n] : spec.guests)
        for (int i = 0; i < n; ++i) bld.add_guest(molecule(g), rng);
    return {bld.finish(), formula_for(spec)};
  }
  throw std::runtime_error(spec.name + ": chain geometry failed");
}

// -------------------------------------------------------------------
// Placement helpers for disorder fixtures
// -------------------------------------------------------------------

/// Positions `m` so that one of its H atoms sits `gap` Å from site `target_h`
/// (an H atom already in the structure), with every other contact clear of
/// the bond-search thresholds. Returns centre and rotation.
inline std::pair<Vec3, Rotation> touching_pose(Builder& bld, const Molecule& m, std::size_t target_h, double gap,
                                               Rng& rng, const std::vector<std::size_t>& ignore = {}) {
  const auto& s = bld.structure();
  auto adj = m.graph.adjacency();
  // outward direction of the target H
  Vec3 th = s.cartesian(target_h);
  Vec3 out{};
  for (std::size_t k = 0; k < s.size(); ++k) {
    if (k == target_h || s.sites[k].element.is_hydrogen()) continue;
    auto d = min_image_distance(s, target_h, k);
    if (d.distance < 1.3) {
      Vec3 nb = s.lattice.to_cartesian(s.sites[k].frac + Vec3{double(d.shift.a), double(d.shift.b), double(d.shift.c)} - s.sites[target_h].frac);
      out = normalized(nb) * -1.0;
    }
  }
  if (norm(out) < 0.5) throw std::runtime_error("touching_pose: target H has no heavy neighbour");
  const auto& radii = CovalentRadii::defaults();
  for (int attempt = 0; attempt < 2000; ++attempt) {
    int h = -1;
    std::vector<int> hs;
    for (int v = 0; v < m.graph.size(); ++v)
      if (m.graph.atoms[v].is_hydrogen()) hs.push_back(v);
    h = hs[rng.below(static_cast<int>(hs.size()))];
    int host = adj[h][0];
    // molecule H points back along -out; its host lies beyond it
    Vec3 bond = m.xyz[h] - m.xyz[host];
    Rotation rot = Rotation::align(bond, out * -1.0).then(Rotation::axis_angle(out, rng.uniform(0, 2 * kPi)));
    Vec3 h_pos = th + out * gap;
    Vec3 centre = h_pos - rot(m.xyz[h]);
    auto pts = bld.placed(m, centre, rot);
    bool ok = true;
    for (int v = 0; v < m.graph.size() && ok; ++v)
      for (std::size_t k = 0; k < s.size() && ok; ++k) {
        if (std::find(ignore.begin(), ignore.end(), k) != ignore.end()) continue;
        if (v == h && k == target_h) continue;
        double d = point_distance(s, pts[v], k);
        Element a = m.graph.atoms[v], b = s.sites[k].element;
        double lim = a.is_hydrogen() && b.is_hydrogen() ? 1.6 : 1.15 * (radii(a) + radii(b)) + 0.4;
        if (v == h || k == target_h) lim = std::min(lim, 1.15 * (radii(a) + radii(b)) + 0.1);
        if (d < lim) ok = false;
      }
    if (ok) return {centre, rot};
  }
  throw std::runtime_error(s.name + ": no touching pose for " + m.graph.name);
}

// -------------------------------------------------------------------
// Named fixtures
// -------------------------------------------------------------------

/// Lanthanide btpdc network with four two-way disordered linkers and four
/// two-way disordered DMF molecules: 16 linker and 8 DMF skeletons in a cell
/// that should hold 12 and 4. Disordered copies share their carboxylate C
/// (linkers) and all H atoms.
inline Fixture piclas() {
  Rng rng(2024);
  const double edge = 42.0;
  Builder bld("PICLAS", Lattice::cubic(edge));
  const Molecule& lk = molecule("btpdc");
  const Molecule& dmf = molecule("DMF");
  const Molecule& water = molecule("H2O");
  std::vector<Vec3> big, small;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        big.push_back(Vec3{i + 0.5, j + 0.5, k + 0.5} * 14.0);
        small.push_back(Vec3{double(i), double(j), double(k)} * 14.0 + Vec3{3.5, 3.5, 3.5});
      }
  auto plane_normal = [](const Molecule& m) {
    // normal of the first three heavy atoms of the first ring
    std::vector<int> heavy;
    for (int v = 0; v < m.graph.size(); ++v)
      if (!m.graph.atoms[v].is_hydrogen()) heavy.push_back(v);
    Vec3 n{};
    for (std::size_t a = 0; a + 2 < heavy.size(); ++a) {
      Vec3 c = cross(m.xyz[heavy[a + 1]] - m.xyz[heavy[a]], m.xyz[heavy[a + 2]] - m.xyz[heavy[a]]);
      if (norm(c) > 0.5) {
        n = normalized(c);
        break;
      }
    }
    return n;
  };
  auto lk_adj = lk.graph.adjacency();
  std::set<int> lk_shared;  // carboxylate C and all H
  for (int v = 0; v < lk.graph.size(); ++v) {
    if (lk.graph.atoms[v].is_hydrogen()) lk_shared.insert(v);
    int o = 0;
    for (int w : lk_adj[v]) o += lk.graph.atoms[w] == elements::O;
    if (lk.graph.atoms[v] == elements::C && o == 2) lk_shared.insert(v);
  }
  auto add_split = [&](const Molecule& m, const std::set<int>& shared, Vec3 centre, const Rotation& rot) {
    Vec3 n = rot(plane_normal(m)) * 0.1;
    for (int v = 0; v < m.graph.size(); ++v) {
      Vec3 p = centre + rot(m.xyz[v]);
      if (shared.count(v)) {
        bld.add_atom(m.graph.atoms[v], p);
      } else {
        bld.add_atom(m.graph.atoms[v], p + n, 1, 0.5);
        bld.add_atom(m.graph.atoms[v], p - n, 2, 0.5);
      }
    }
  };
  std::set<int> dmf_shared;
  for (int v = 0; v < dmf.graph.size(); ++v)
    if (dmf.graph.atoms[v].is_hydrogen()) dmf_shared.insert(v);
  int slot = 0;
  for (int i = 0; i < 8; ++i) bld.add(lk, big[slot++], Builder::random_rotation(rng));
  for (int i = 0; i < 4; ++i) add_split(lk, lk_shared, big[slot++], Builder::random_rotation(rng));
  for (int i = 0; i < 4; ++i) add_split(dmf, dmf_shared, big[slot++], Builder::random_rotation(rng));
  slot = 0;
  for (int i = 0; i < 8; ++i) bld.add(water, small[slot++], Builder::random_rotation(rng));
  for (int i = 0; i < 8; ++i) bld.add_atom(Element::require("Dy"), small[slot++]);
  auto s = bld.finish();
  s.provenance = "synthetic PICLAS-style disorder fixture";
  return {s, "[Dy2(btpdc)3·DMF·2(H2O)]"};
}

/// Ordered companion entry from the same paper.
inline Fixture piclew() {
  Rng rng(2025);
  Builder bld("PICLEW", Lattice{30.0, 30.0, 30.0, 90, 90, 90});
  const Molecule& lk = molecule("btpdc");
  const Molecule& water = molecule("H2O");
  int n = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int k = 0; k < 2; ++k) {
        Vec3 c = Vec3{i + 0.5, j + 0.5, k + 0.5} * 15.0;
        if (n < 6) bld.add(lk, c, Builder::random_rotation(rng));
        ++n;
      }
  for (int i = 0; i < 4; ++i) bld.add_atom(Element::require("Dy"), Vec3{3.5 + 15.0 * (i % 2), 3.5 + 15.0 * (i / 2), 3.5});
  for (int i = 0; i < 8; ++i) bld.add_guest(water, rng, 3.0);
  auto s = bld.finish();
  return {s, "[Dy2(btpdc)3·4(H2O)]"};
}

inline Fixture framework_with_solvent() {
  return chain_mof({"SOLV01", "Zn", "bdc", 1, {{"DMF", 1}, {"H2O", 2}}, 14, 14, 90, 96, 90, 11});
}

/// Zn terephthalate chain plus a benzoate guest whose acid H is missing.
inline Fixture free_acid() {
  auto f = chain_mof({"FACID1", "Zn", "bdc", 1, {{"bz", 1}}, 15, 15, 90, 90, 90, 5});
  f.formula = "[Zn(bdc)(Hbz)]";
  return f;
}

/// Three waters where two ("A" and "B", half occupancy, no group tags) touch
/// through an H...H contact of 0.45 Å; the reference holds two.
inline Fixture water_trio() {
  auto base = chain_mof({"WTRIO1", "Zn", "bdc", 1, {}, 14, 14, 90, 90, 90, 21});
  Rng rng(77);
  Builder bld("WTRIO1", base.structure.lattice);
  bld.structure() = base.structure;
  const Molecule& w = molecule("H2O");
  auto a = bld.add_guest(w, rng, 4.0, std::nullopt, 0.5);
  std::size_t ha = a[1];
  auto [centre, rot] = touching_pose(bld, w, ha, 0.45, rng, a);
  bld.add(w, centre, rot, std::nullopt, 0.5);
  bld.add_guest(w, rng, 3.0);
  return {bld.finish(), "[Zn(bdc)·2(H2O)]"};
}

/// Same idea with DMF: two half-occupancy copies meet at a methyl H...H
/// contact of 0.45 Å; a third DMF is ordered.
inline Fixture dmf_trio() {
  auto base = chain_mof({"DTRIO1", "Zn", "bdc", 1, {}, 16, 16, 90, 90, 90, 23});
  Rng rng(78);
  Builder bld("DTRIO1", base.structure.lattice);
  bld.structure() = base.structure;
  const Molecule& d = molecule("DMF");
  auto a = bld.add_guest(d, rng, 4.5, std::nullopt, 0.5);
  std::size_t ha = 0;
  for (auto k : a)
    if (bld.structure().sites[k].element.is_hydrogen()) ha = k;
  auto [centre, rot] = touching_pose(bld, d, ha, 0.45, rng, a);
  bld.add(d, centre, rot, std::nullopt, 0.5);
  bld.add_guest(d, rng, 3.0);
  return {bld.finish(), "[Zn(bdc)·2(DMF)]"};
}

/// Group-tagged two-way DMF disorder; copy B touches an ordered water H.
inline Fixture tagged_touch() {
  auto base = chain_mof({"TAGT01", "Zn", "bdc", 1, {{"H2O", 1}}, 18, 18, 90, 90, 90, 31});
  std::vector<std::size_t> water_h;
  for (std::size_t k = 0; k < base.structure.size(); ++k)
    if (base.structure.sites[k].element.is_hydrogen()) {
      bool linker_h = false;
      for (std::size_t j = 0; j < base.structure.size(); ++j)
        if (base.structure.sites[j].element == elements::C && min_image_distance(base.structure, k, j).distance < 1.3)
          linker_h = true;
      if (!linker_h) water_h.push_back(k);
    }
  const Molecule& d = molecule("DMF");
  for (std::uint64_t seed = 79; seed < 99; ++seed) {
    Rng rng(seed);
    Builder bld("TAGT01", base.structure.lattice);
    bld.structure() = base.structure;
    auto a = bld.add_guest(d, rng, 3.5, 1, 0.5);
    for (std::size_t h : water_h) {
      try {
        auto [centre, rot] = touching_pose(bld, d, h, 0.45, rng, a);
        bld.add(d, centre, rot, 2, 0.5);
        return {bld.finish(), "[Zn(bdc)·DMF·H2O]"};
      } catch (const std::runtime_error&) {
      }
    }
  }
  throw std::runtime_error("TAGT01: no touching pose");
}

}  // namespace fixtures
