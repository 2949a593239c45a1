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

#include <stdexcept>
#include <string>
#include <string_view>

namespace mofcure {

/// Failure categories surfaced by the library. Each public operation
/// documents which of these it can raise.
enum class Errc {
  MalformedCif,
  InvalidStructure,
  UnparseableFormula,
  UnresolvedName,
  UnsupportedSmiles,
  InconsistentDiagram,
  MissingAnchor,
  MatchTimeout,
  BondSearchExhausted,
  AmbiguousPlacement,
  NoConsistentSelection,
  CandidateExplosion,
  ModelFailure,
  DepthExceeded,
  StepBudgetExceeded,
  BackendSchemaFailure,
  TranscriptMismatch,
  NotFound,
  PaperNotFound,
  PdfNeedsOcr,
  UnsupportedFormat,
  ExtractionSchemaFailure,
  ValidationError,
  Unsupported,
  UnparseableTransformationDetails,
  NotSupported,
  Io,
  Config,
};

inline std::string_view errc_name(Errc c) {
  switch (c) {
    case Errc::MalformedCif: return "MalformedCif";
    case Errc::InvalidStructure: return "InvalidStructure";
    case Errc::UnparseableFormula: return "UnparseableFormula";
    case Errc::UnresolvedName: return "UnresolvedName";
    case Errc::UnsupportedSmiles: return "UnsupportedSmiles";
    case Errc::InconsistentDiagram: return "InconsistentDiagram";
    case Errc::MissingAnchor: return "MissingAnchor";
    case Errc::MatchTimeout: return "MatchTimeout";
    case Errc::BondSearchExhausted: return "BondSearchExhausted";
    case Errc::AmbiguousPlacement: return "AmbiguousPlacement";
    case Errc::NoConsistentSelection: return "NoConsistentSelection";
    case Errc::CandidateExplosion: return "CandidateExplosion";
    case Errc::ModelFailure: return "ModelFailure";
    case Errc::DepthExceeded: return "DepthExceeded";
    case Errc::StepBudgetExceeded: return "StepBudgetExceeded";
    case Errc::BackendSchemaFailure: return "BackendSchemaFailure";
    case Errc::TranscriptMismatch: return "TranscriptMismatch";
    case Errc::NotFound: return "NotFound";
    case Errc::PaperNotFound: return "PaperNotFound";
    case Errc::PdfNeedsOcr: return "PdfNeedsOcr";
    case Errc::UnsupportedFormat: return "UnsupportedFormat";
    case Errc::ExtractionSchemaFailure: return "ExtractionSchemaFailure";
    case Errc::ValidationError: return "ValidationError";
    case Errc::Unsupported: return "Unsupported";
    case Errc::UnparseableTransformationDetails: return "UnparseableTransformationDetails";
    case Errc::NotSupported: return "NotSupported";
    case Errc::Io: return "Io";
    case Errc::Config: return "Config";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace mofcure
