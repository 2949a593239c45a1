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

// Diagnose a CIF against its structural formula, repair it and print the
// before/after reports.
//
//   repair_structure tests/data/gen/cif/facid1.cif "[Zn(bdc)(Hbz)]"

#include <iostream>

#include "mofcure/cif.hpp"
#include "mofcure/inspect.hpp"
#include "mofcure/refgraph.hpp"
#include "mofcure/repair.hpp"

int main(int argc, char** argv) {
  if (argc != 3) {
    std::cerr << "usage: repair_structure <file.cif> <structural formula>\n";
    return 2;
  }
  try {
    auto s = mofcure::read_cif_file(argv[1]);
    auto ref = mofcure::reference_from_formula(argv[2]);
    mofcure::BondPolicy policy;
    std::cout << "== before\n" << mofcure::diagnose(s, ref, policy).to_text();
    auto r = mofcure::repair_all(s, ref, policy);
    for (const auto& line : r.log) std::cout << "  " << line << '\n';
    std::cout << "== after\n" << mofcure::diagnose(r.corrected, ref, r.policy).to_text();
    return r.success ? 0 : 1;
  } catch (const mofcure::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
