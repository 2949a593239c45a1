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

// Extract the MOFs of a paper with the offline heuristic backend and match
// them to the records sharing its DOI.
//
//   match_paper tests/data/gen/store tests/data/gen/papers 10.5555/mofcure.piclas

#include <iostream>

#include "mofcure/agents/heuristic.hpp"
#include "mofcure/sources.hpp"

int main(int argc, char** argv) {
  if (argc != 4) {
    std::cerr << "usage: match_paper <store> <papers> <doi>\n";
    return 2;
  }
  try {
    auto store = mofcure::RecordStore::open(argv[1]);
    auto paper = mofcure::find_and_parse_paper(argv[3], argv[2]);
    mofcure::agents::HeuristicBackend backend;
    auto info = mofcure::extract_paper_info(paper.text, backend);
    std::vector<mofcure::MofRecord> records;
    for (const auto& code : store.lookup_doi(argv[3])) records.push_back(store.lookup_refcode(code));
    for (const auto& m : mofcure::match_refcodes(records, info))
      std::cout << m.refcode << " = " << m.mof_id << "  score " << m.score << '\n';
    return 0;
  } catch (const mofcure::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
