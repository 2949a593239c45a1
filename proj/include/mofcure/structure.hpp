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

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"

namespace mofcure {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int i) { return i == 0 ? x : i == 1 ? y : z; }
  double operator[](int i) const { return i == 0 ? x : i == 1 ? y : z; }

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return s * a; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  Vec3& operator+=(Vec3 o) { return *this = *this + o; }
  friend bool operator==(Vec3, Vec3) = default;
};

inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(Vec3 a) { return std::sqrt(dot(a, a)); }
inline Vec3 normalized(Vec3 a) {
  double n = norm(a);
  return n > 0 ? (1.0 / n) * a : Vec3{};
}

/// Integer lattice translation attached to a periodic bond.
struct Shift {
  int a = 0, b = 0, c = 0;

  int operator[](int i) const { return i == 0 ? a : i == 1 ? b : c; }
  bool is_zero() const { return a == 0 && b == 0 && c == 0; }
  friend Shift operator+(Shift x, Shift y) { return {x.a + y.a, x.b + y.b, x.c + y.c}; }
  friend Shift operator-(Shift x, Shift y) { return {x.a - y.a, x.b - y.b, x.c - y.c}; }
  Shift operator-() const { return {-a, -b, -c}; }
  friend bool operator==(Shift, Shift) = default;
  friend auto operator<=>(Shift, Shift) = default;
};

inline constexpr double kPi = 3.14159265358979323846;

/// Unit cell. Lengths in Angstrom, angles in degrees.
struct Lattice {
  double a = 0, b = 0, c = 0;
  double alpha = 90, beta = 90, gamma = 90;

  static Lattice cubic(double edge) { return {edge, edge, edge, 90, 90, 90}; }

  double volume() const {
    double ca = std::cos(alpha * kPi / 180), cb = std::cos(beta * kPi / 180),
           cg = std::cos(gamma * kPi / 180);
    double v = 1 - ca * ca - cb * cb - cg * cg + 2 * ca * cb * cg;
    return v > 0 ? a * b * c * std::sqrt(v) : 0.0;
  }

  bool valid() const {
    auto angle_ok = [](double x) { return x > 0 && x < 180; };
    return a > 0 && b > 0 && c > 0 && angle_ok(alpha) && angle_ok(beta) && angle_ok(gamma) &&
           volume() > 0;
  }

  /// Cell vectors as rows: a along x, b in the xy plane.
  std::array<Vec3, 3> vectors() const {
    double ca = std::cos(alpha * kPi / 180), cb = std::cos(beta * kPi / 180),
           cg = std::cos(gamma * kPi / 180), sg = std::sin(gamma * kPi / 180);
    Vec3 va{a, 0, 0};
    Vec3 vb{b * cg, b * sg, 0};
    double cx = c * cb;
    double cy = c * (ca - cb * cg) / sg;
    double cz = std::sqrt(std::max(0.0, c * c - cx * cx - cy * cy));
    return {va, vb, Vec3{cx, cy, cz}};
  }

  Vec3 to_cartesian(Vec3 f) const {
    auto v = vectors();
    return f.x * v[0] + f.y * v[1] + f.z * v[2];
  }

  Vec3 to_fractional(Vec3 r) const {
    auto v = vectors();
    // Upper-triangular inverse (v[0] = (ax,0,0), v[1] = (bx,by,0)).
    double fz = r.z / v[2].z;
    double fy = (r.y - fz * v[2].y) / v[1].y;
    double fx = (r.x - fy * v[1].x - fz * v[2].x) / v[0].x;
    return {fx, fy, fz};
  }

  /// Distances between opposite cell faces.
  std::array<double, 3> perpendicular_widths() const {
    auto v = vectors();
    double vol = volume();
    return {vol / norm(cross(v[1], v[2])), vol / norm(cross(v[2], v[0])),
            vol / norm(cross(v[0], v[1]))};
  }

  friend bool operator==(const Lattice&, const Lattice&) = default;
};

struct Site {
  std::string label;
  Element element;
  Vec3 frac;
  double occupancy = 1.0;
  std::optional<int> disorder_group;

  friend bool operator==(const Site&, const Site&) = default;
};

struct ExplicitBond {
  std::size_t i = 0, j = 0;
  Shift shift;  ///< image of j relative to i

  /// Canonical orientation: i < j, or for i == j the lexicographically positive shift.
  ExplicitBond canonical() const {
    if (i < j || (i == j && Shift{} < shift)) return *this;
    return {j, i, -shift};
  }
  friend bool operator==(const ExplicitBond&, const ExplicitBond&) = default;
  friend auto operator<=>(const ExplicitBond&, const ExplicitBond&) = default;
};

struct CrystalStructure {
  std::string name = "structure";
  Lattice lattice;
  std::vector<Site> sites;
  std::vector<ExplicitBond> explicit_bonds;
  std::string provenance;

  std::size_t size() const { return sites.size(); }
  Vec3 cartesian(std::size_t i) const { return lattice.to_cartesian(sites[i].frac); }

  bool has_disorder_markers() const {
    for (const auto& s : sites)
      if (s.occupancy < 1.0 - 1e-9 || s.disorder_group) return true;
    return false;
  }

  SpeciesCounts species_counts() const {
    SpeciesCounts out;
    for (const auto& s : sites) ++out[s.element];
    return out;
  }

  /// Canonical multiset of explicit bonds.
  std::multiset<ExplicitBond> bond_multiset() const {
    std::multiset<ExplicitBond> out;
    for (const auto& b : explicit_bonds) out.insert(b.canonical());
    return out;
  }

  /// Throws InvalidStructure when an invariant is broken.
  void validate() const {
    if (!lattice.valid()) fail(Errc::InvalidStructure, "lattice parameters out of range");
    std::set<std::string> labels;
    for (const auto& s : sites) {
      if (!s.element.valid()) fail(Errc::InvalidStructure, "site " + s.label + ": no element");
      if (!(s.occupancy > 0 && s.occupancy <= 1.0 + 1e-9))
        fail(Errc::InvalidStructure, "site " + s.label + ": occupancy outside (0,1]");
      if (!labels.insert(s.label).second)
        fail(Errc::InvalidStructure, "duplicate site label " + s.label);
    }
    for (const auto& b : explicit_bonds) {
      if (b.i >= sites.size() || b.j >= sites.size())
        fail(Errc::InvalidStructure, "bond index out of range");
      if (b.i == b.j && b.shift.is_zero()) fail(Errc::InvalidStructure, "self bond without image shift");
    }
  }

  /// Copy keeping only the flagged sites; bonds are remapped and dropped when
  /// an endpoint is removed.
  CrystalStructure subset(const std::vector<bool>& keep) const {
    CrystalStructure out;
    out.name = name;
    out.lattice = lattice;
    out.provenance = provenance;
    std::vector<std::size_t> remap(sites.size(), SIZE_MAX);
    for (std::size_t i = 0; i < sites.size(); ++i)
      if (keep[i]) {
        remap[i] = out.sites.size();
        out.sites.push_back(sites[i]);
      }
    for (const auto& b : explicit_bonds)
      if (keep[b.i] && keep[b.j]) out.explicit_bonds.push_back({remap[b.i], remap[b.j], b.shift});
    return out;
  }
};

/// Makes labels unique and CIF-safe: "<Symbol><n>" with a running index per element.
inline void relabel_sites(CrystalStructure& s) {
  std::map<Element, int> next;
  for (auto& site : s.sites) site.label = std::string(site.element.symbol()) + std::to_string(++next[site.element]);
}

}  // namespace mofcure
