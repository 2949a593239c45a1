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

// mofcure: validate, repair and curate MOF crystal structures; query the agent tree.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mofcure/cli.hpp"

namespace {

mofcure::cli::Config load_config(const std::string& path) {
  if (path.empty()) return {};
  return mofcure::cli::Config::load_file(path);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace mofcure::cli;
  CLI::App app{"Curate metal-organic framework crystal structures"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);

  std::string cif, ref;
  auto* validate = app.add_subcommand("validate", "diagnose a CIF against a reference (exit 0 clean, 1 errors, 2 failure)");
  validate->add_option("cif", cif, "CIF file")->required();
  validate->add_option("reference", ref, "structural formula or reference-graph JSON file")->required();

  RepairFlags rflags;
  std::string energy_backend;
  auto* repair = app.add_subcommand("repair", "correct a CIF and write the result");
  repair->add_option("cif", cif, "CIF file")->required();
  repair->add_option("reference", ref, "structural formula or reference-graph JSON file")->required();
  repair->add_option("-o,--out", rflags.out_dir, "output directory");
  repair->add_flag("--all-candidates", rflags.all_candidates, "write every clean candidate in energy order");
  repair->add_option("--energy-backend", energy_backend, "lj, or external:<command ...>");

  std::string store, out_dir;
  CurateFlags cflags;
  auto* curate = app.add_subcommand("curate", "curate every CIF in a record store");
  curate->add_option("store", store, "store directory")->required();
  curate->add_option("out", out_dir, "output directory")->required();
  curate->add_option("-j,--jobs", cflags.jobs, "parallel structures")->check(CLI::PositiveNumber);
  curate->add_flag("--fail-fast", cflags.fail_fast, "stop at the first structure that cannot be curated");

  std::string query;
  AskFlags aflags;
  auto* ask = app.add_subcommand("ask", "answer a query with the agent tree");
  ask->add_option("query", query, "natural-language request")->required();
  ask->add_option("--replay", aflags.replay, "replay a recorded transcript")->check(CLI::ExistingFile);
  ask->add_option("--endpoint", aflags.endpoint, "chat-completion endpoint URL");
  ask->add_flag("--heuristic", aflags.heuristic, "offline rule-based backend");
  ask->add_option("--record", aflags.record, "write the backend transcript");
  ask->add_option("--trace", aflags.trace, "write the execution trace");
  ask->add_option("--store", aflags.store_dir, "record store directory")->required();
  ask->add_option("--papers", aflags.papers_dir, "paper corpus directory")->required();
  ask->add_option("-o,--out", aflags.out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Config cfg;
  try {
    cfg = load_config(config_path);
    if (!energy_backend.empty()) {
      if (energy_backend == "lj") {
        cfg.set("energy.backend", "lj");
      } else if (energy_backend.rfind("external:", 0) == 0) {
        cfg.set("energy.backend", "external");
        cfg.set("energy.command", energy_backend.substr(9));
      } else {
        std::cerr << "error: --energy-backend must be lj or external:<command>\n";
        return 2;
      }
      cfg.validate();
    }
  } catch (const mofcure::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  if (*validate) return cmd_validate(cif, ref, cfg, std::cout, std::cerr);
  if (*repair) return cmd_repair(cif, ref, rflags, cfg, std::cout, std::cerr);
  if (*curate) return cmd_curate(store, out_dir, cflags, cfg, std::cout, std::cerr);
  if (*ask) return cmd_ask(query, aflags, cfg, std::cout, std::cerr);
  return 2;
}
