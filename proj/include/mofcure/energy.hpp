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

// Energy models used to rank repair candidates.
//
// External calculator protocol: the command is started with the given
// arguments, receives the structure as a P1 CIF (write_cif with bonds) on
// standard input, and must print one floating-point number (optionally
// surrounded by whitespace) on standard output and exit with status 0. Any
// other outcome is a ModelFailure.

#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <csignal>
#include <cstdint>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include "mofcure/cif.hpp"
#include "mofcure/crystal.hpp"
#include "mofcure/elements.hpp"
#include "mofcure/error.hpp"
#include "mofcure/structure.hpp"

namespace mofcure {

class EnergyModel {
 public:
  virtual ~EnergyModel() = default;
  virtual double energy(const CrystalStructure& s) const = 0;
  virtual std::string name() const = 0;
  virtual bool deterministic() const { return true; }
};

/// Pairwise Lennard-Jones with sigma_i = 2 r_cov(i) 2^(-1/6), so the pair
/// minimum sits at the covalent radius sum. Arithmetic-mean mixing, uniform
/// epsilon, pairs weighted by the product of occupancies.
class LennardJonesModel : public EnergyModel {
 public:
  double epsilon = 0.01;
  double cutoff = 8.0;
  double min_distance = 0.05;  ///< distances are clamped here to keep energies finite
  CovalentRadii radii;

  double pair_energy(Element a, Element b, double r) const {
    static const double k = std::pow(2.0, -1.0 / 6.0);
    double sigma = (2.0 * radii(a) * k + 2.0 * radii(b) * k) / 2.0;
    double x = sigma / std::max(r, min_distance);
    double x6 = x * x * x * x * x * x;
    return 4.0 * epsilon * (x6 * x6 - x6);
  }

  double energy(const CrystalStructure& s) const override {
    double total = 0;
    auto w = s.lattice.perpendicular_widths();
    bool minimum_image = std::min({w[0], w[1], w[2]}) >= 2.0 * cutoff;
    if (minimum_image) {
      std::size_t n = s.size();
      std::vector<Vec3> cart(n);
      for (std::size_t i = 0; i < n; ++i) cart[i] = s.cartesian(i);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
          Vec3 d = s.sites[j].frac - s.sites[i].frac;
          Vec3 dw{d.x - std::round(d.x), d.y - std::round(d.y), d.z - std::round(d.z)};
          double r = norm(s.lattice.to_cartesian(dw));
          if (r > cutoff) continue;
          total += s.sites[i].occupancy * s.sites[j].occupancy * pair_energy(s.sites[i].element, s.sites[j].element, r);
        }
    } else {
      for (const auto& c : find_contacts(s, cutoff))
        total += s.sites[c.i].occupancy * s.sites[c.j].occupancy *
                 pair_energy(s.sites[c.i].element, s.sites[c.j].element, c.distance);
    }
    return total;
  }

  std::string name() const override { return "lennard-jones"; }
};

/// Runs an external energy calculator (see the protocol at the top of this file).
class ExternalEnergyModel : public EnergyModel {
 public:
  explicit ExternalEnergyModel(std::vector<std::string> argv, bool deterministic = true)
      : argv_(std::move(argv)), deterministic_(deterministic) {
    if (argv_.empty()) fail(Errc::Config, "external energy model needs a command");
  }

  double energy(const CrystalStructure& s) const override {
    std::string input = write_cif(s, true);
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0) fail(Errc::ModelFailure, "pipe failed");
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      fail(Errc::ModelFailure, "pipe failed");
    }
    std::vector<char*> args;
    for (const auto& a : argv_) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    pid_t pid = fork();
    if (pid < 0) fail(Errc::ModelFailure, "fork failed");
    if (pid == 0) {
      dup2(in_pipe[0], STDIN_FILENO);
      dup2(out_pipe[1], STDOUT_FILENO);
      close(in_pipe[0]);
      close(in_pipe[1]);
      close(out_pipe[0]);
      close(out_pipe[1]);
      execvp(args[0], args.data());
      _exit(127);
    }
    close(in_pipe[0]);
    close(out_pipe[1]);
    std::thread writer([fd = in_pipe[1], &input] {
      std::signal(SIGPIPE, SIG_IGN);
      std::size_t off = 0;
      while (off < input.size()) {
        ssize_t n = write(fd, input.data() + off, input.size() - off);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) break;
        off += static_cast<std::size_t>(n);
      }
      close(fd);
    });
    std::string output;
    char buf[4096];
    for (;;) {
      ssize_t n = read(out_pipe[0], buf, sizeof buf);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      output.append(buf, static_cast<std::size_t>(n));
    }
    close(out_pipe[0]);
    writer.join();
    int status = 0;
    while (waitpid(pid, &status, 0) < 0 && errno == EINTR) {
    }
    if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
      fail(Errc::ModelFailure, argv_[0] + " exited with status " + std::to_string(WEXITSTATUS(status)));
    auto b = output.find_first_not_of(" \t\r\n");
    auto e = output.find_last_not_of(" \t\r\n");
    if (b == std::string::npos) fail(Errc::ModelFailure, argv_[0] + " printed no energy");
    std::string text = output.substr(b, e - b + 1);
    double value = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(value))
      fail(Errc::ModelFailure, argv_[0] + " printed '" + text + "', expected one number");
    return value;
  }

  std::string name() const override { return "external:" + argv_[0]; }
  bool deterministic() const override { return deterministic_; }

 private:
  std::vector<std::string> argv_;
  bool deterministic_;
};

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Stable structure fingerprint: FNV-1a of the written CIF.
inline std::uint64_t structure_hash(const CrystalStructure& s) { return fnv1a(write_cif(s, true)); }

struct RankedCandidate {
  CrystalStructure structure;
  double energy = 0;
  bool failed = false;  ///< the model could not evaluate this candidate
  std::string error;
  std::uint64_t hash = 0;
};

/// Orders candidates by ascending energy; ties fall back to the structure
/// hash. Failed evaluations go last. `jobs` > 1 evaluates in parallel; the
/// result does not depend on evaluation order.
inline std::vector<RankedCandidate> rank_candidates(const std::vector<CrystalStructure>& cands, const EnergyModel& model,
                                                    unsigned jobs = 1) {
  if (cands.empty()) fail(Errc::NoConsistentSelection, "no candidates to rank");
  std::vector<RankedCandidate> out(cands.size());
  auto eval = [&](std::size_t k) {
    out[k].structure = cands[k];
    out[k].hash = structure_hash(cands[k]);
    try {
      out[k].energy = model.energy(cands[k]);
    } catch (const Error& e) {
      out[k].failed = true;
      out[k].error = e.what();
      out[k].energy = 0;
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(cands.size())));
  if (jobs == 1) {
    for (std::size_t k = 0; k < cands.size(); ++k) eval(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < jobs; ++t)
      pool.emplace_back([&] {
        for (std::size_t k; (k = next++) < cands.size();) eval(k);
      });
    for (auto& th : pool) th.join();
  }
  std::stable_sort(out.begin(), out.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    if (a.failed != b.failed) return !a.failed;
    if (!a.failed && a.energy != b.energy) return a.energy < b.energy;
    return a.hash < b.hash;
  });
  return out;
}

}  // namespace mofcure
