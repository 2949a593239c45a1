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

// Error injection over clean chain structures: deleted H, a stretched
// terminal bond, or a guest split over two tagged half-occupancy copies.
#pragma once

#include <string>
#include <vector>

#include "fixtures.hpp"

namespace fixtures {

enum class Injection { hydrogen, bond, disorder };

inline const char* injection_name(Injection k) {
  switch (k) {
    case Injection::hydrogen: return "hydrogen";
    case Injection::bond: return "bond";
    case Injection::disorder: return "disorder";
  }
  return "?";
}

struct Injected {
  Fixture fixture;
  Injection kind;
  std::string note;
};

inline std::vector<ChainSpec> base_specs() {
  return {
      {"BASE01", "Zn", "bdc", 1, {{"DMF", 1}, {"H2O", 1}}, 14, 14, 90, 90, 90, 101},
      {"BASE02", "Cu", "ndc", 1, {{"MeOH", 2}}, 14, 15, 90, 97, 90, 102},
      {"BASE03", "Co", "bpdc", 1, {{"H2O", 2}}, 13, 13, 90, 90, 90, 103},
      {"BASE04", "Cd", "bpdc", 1, {{"DMA", 1}}, 15, 15, 88, 95, 91, 104},
      {"BASE05", "Zn", "btpdc", 1, {{"EtOH", 1}, {"H2O", 1}}, 14, 14, 90, 90, 90, 105},
      {"BASE06", "Ni", "bdc", 2, {{"H2O", 1}}, 13, 11, 90, 90, 90, 106},
      {"BASE07", "Mn", "ndc", 1, {{"DMSO", 1}}, 15, 14, 90, 90, 100, 107},
      {"BASE08", "Cu", "bdc", 1, {{"MeCN", 1}, {"H2O", 1}}, 14, 14, 90, 90, 90, 108},
      {"BASE09", "Zn", "ndc", 2, {{"MeOH", 1}}, 13, 11, 90, 93, 90, 109},
      {"BASE10", "Co", "btpdc", 1, {{"DMF", 1}}, 15, 15, 90, 90, 90, 110},
  };
}

namespace inject_detail {

inline std::vector<std::size_t> indices(std::size_t n) {
  std::vector<std::size_t> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = k;
  return out;
}

}  // namespace inject_detail

inline Injected inject_hydrogen(const Fixture& f, Rng& rng) {
  const auto& s = f.structure;
  std::vector<std::size_t> hs;
  for (std::size_t k = 0; k < s.size(); ++k)
    if (s.sites[k].element.is_hydrogen()) hs.push_back(k);
  std::size_t drop = hs[rng.below(static_cast<int>(hs.size()))];
  std::vector<bool> keep(s.size(), true);
  keep[drop] = false;
  Injected out{{s.subset(keep), f.formula}, Injection::hydrogen, "deleted " + s.sites[drop].label};
  return out;
}

/// Moves a terminal heavy atom (with its H atoms) outward so its bond sits
/// at 1.19-1.26x the radius sum: beyond the default threshold, inside the grid.
inline Injected inject_bond(const Fixture& f, Rng& rng) {
  const auto& s = f.structure;
  const auto& radii = CovalentRadii::defaults();
  auto g = build_graph(s);
  auto adj = g.adjacency();
  std::vector<int> terminal;
  for (int v = 0; v < g.size(); ++v) {
    if (g.elements[v].is_hydrogen() || g.elements[v].is_metal()) continue;
    int heavy = 0, y = -1;
    bool metal = false;
    for (const auto& [w, sh] : adj[v]) {
      if (g.elements[w].is_metal()) metal = true;
      else if (!g.elements[w].is_hydrogen()) {
        ++heavy;
        y = w;
      }
    }
    if (heavy == 1 && !metal && !g.elements[y].is_metal()) terminal.push_back(v);
  }
  for (int attempt = 0; attempt < 200 && !terminal.empty(); ++attempt) {
    int x = terminal[rng.below(static_cast<int>(terminal.size()))];
    int y = -1;
    Shift ysh;
    std::vector<int> moved{x};
    for (const auto& [w, sh] : adj[x]) {
      if (g.elements[w].is_hydrogen()) moved.push_back(w);
      else {
        y = w;
        ysh = sh;
      }
    }
    double sum = radii(g.elements[x]) + radii(g.elements[y]);
    double target = rng.uniform(1.19, 1.26) * sum;
    Vec3 yx = s.lattice.to_cartesian(s.sites[x].frac - (s.sites[y].frac + Vec3{double(ysh.a), double(ysh.b), double(ysh.c)}));
    double now = norm(yx);
    Vec3 delta = normalized(yx) * (target - now);
    CrystalStructure t = s;
    for (int m : moved) t.sites[m].frac = wrap(s.lattice.to_fractional(s.cartesian(m) + delta));
    bool ok = true;
    for (int m : moved)
      for (std::size_t k = 0; k < t.size() && ok; ++k) {
        if (std::find(moved.begin(), moved.end(), static_cast<int>(k)) != moved.end()) continue;
        if (static_cast<int>(k) == y) continue;
        double d = min_image_distance(t, m, k).distance;
        Element a = t.sites[m].element, b = t.sites[k].element;
        if (a.is_hydrogen() && b.is_hydrogen()) continue;
        if (d < 1.30 * (radii(a) + radii(b)) + 0.35) ok = false;
      }
    if (!ok) continue;
    return {{t, f.formula}, Injection::bond,
            "stretched " + s.sites[y].label + "-" + s.sites[x].label + " to " + std::to_string(target)};
  }
  throw std::runtime_error(s.name + ": no bond to stretch");
}

/// Splits one guest into two tagged half-occupancy copies. With `touch` the
/// second copy meets an ordered H at 0.45 Å, so its selection is the
/// high-energy one.
inline Injected inject_disorder(const Fixture& f, Rng& rng, bool touch) {
  const auto& s = f.structure;
  const auto& radii = CovalentRadii::defaults();
  auto g = build_graph(s);
  auto comps = connected_components(g);
  std::vector<const Component*> guests;
  for (const auto& c : comps)
    if (!c.periodic && c.atoms.size() > 1 && !g.elements[c.atoms[0]].is_metal()) guests.push_back(&c);
  if (guests.empty()) throw std::runtime_error(s.name + ": no guest to disorder");
  for (int attempt = 0; attempt < 300; ++attempt) {
    const Component& c = *guests[rng.below(static_cast<int>(guests.size()))];
    // unwrap the guest into a local molecule
    Molecule m;
    m.graph = component_molecule(g, c.atoms);
    std::map<int, Vec3> pos;
    pos[c.atoms[0]] = s.cartesian(c.atoms[0]);
    std::vector<int> queue{c.atoms[0]};
    auto adj = g.adjacency();
    for (std::size_t q = 0; q < queue.size(); ++q)
      for (const auto& [w, sh] : adj[queue[q]])
        if (!pos.count(w)) {
          pos[w] = pos[queue[q]] + s.lattice.to_cartesian(s.sites[w].frac + Vec3{double(sh.a), double(sh.b), double(sh.c)} - s.sites[queue[q]].frac);
          queue.push_back(w);
        }
    for (int a : c.atoms) m.xyz.push_back(pos[a]);
    Vec3 cen = m.centroid();
    for (auto& p : m.xyz) p = p - cen;

    Builder bld(s.name, s.lattice);
    bld.structure() = s;
    for (int a : c.atoms) {
      bld.structure().sites[a].disorder_group = 1;
      bld.structure().sites[a].occupancy = 0.5;
    }
    std::vector<std::size_t> ignore(c.atoms.begin(), c.atoms.end());
    if (touch) {
      std::vector<std::size_t> targets;
      for (std::size_t k = 0; k < s.size(); ++k)
        if (s.sites[k].element.is_hydrogen() && !std::binary_search(c.atoms.begin(), c.atoms.end(), static_cast<int>(k)))
          targets.push_back(k);
      if (targets.empty() || m.graph.hydrogen_count(0) + 1 == 0) continue;
      try {
        auto [centre, rot] = touching_pose(bld, m, targets[rng.below(static_cast<int>(targets.size()))], 0.45, rng, ignore);
        bld.add(m, centre, rot, 2, 0.5);
      } catch (const std::runtime_error&) {
        continue;
      }
      return {{bld.finish(), f.formula}, Injection::disorder, "touching two-way copy of " + m.graph.formula_string()};
    }
    Rotation rot = Rotation::axis_angle({rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)},
                                        rng.uniform(kPi / 3, kPi));
    auto pts = bld.placed(m, cen, rot);
    bool ok = true;
    for (std::size_t v = 0; v < pts.size() && ok; ++v)
      for (std::size_t k = 0; k < s.size() && ok; ++k) {
        if (std::binary_search(c.atoms.begin(), c.atoms.end(), static_cast<int>(k))) continue;
        Element a = m.graph.atoms[v], b = s.sites[k].element;
        double lim = a.is_hydrogen() && b.is_hydrogen() ? 1.6 : 1.30 * (radii(a) + radii(b)) + 0.35;
        if (point_distance(s, pts[v], k) < lim) ok = false;
      }
    if (!ok) continue;
    bld.add(m, cen, rot, 2, 0.5);
    return {{bld.finish(), f.formula}, Injection::disorder, "two-way copy of " + m.graph.formula_string()};
  }
  throw std::runtime_error(s.name + ": no room for a disordered copy");
}

/// 50 structures: 17 hydrogen, 17 bond, 16 disorder (half of them touching).
inline std::vector<Injected> injected_suite(int n = 50) {
  auto bases = base_specs();
  std::vector<Fixture> clean;
  for (const auto& b : bases) clean.push_back(chain_mof(b));
  std::vector<Injected> out;
  for (int i = 0; i < n; ++i) {
    Rng rng(1000 + static_cast<std::uint64_t>(i));
    const Fixture& base = clean[static_cast<std::size_t>(i) % clean.size()];
    Injected inj = i % 3 == 0 ? inject_hydrogen(base, rng)
                   : i % 3 == 1 ? inject_bond(base, rng)
                                : inject_disorder(base, rng, (i / 3) % 2 == 1);
    inj.fixture.structure.name = base.structure.name + "_" + injection_name(inj.kind) + "_" + std::to_string(i);
    out.push_back(std::move(inj));
  }
  return out;
}

}  // namespace fixtures
