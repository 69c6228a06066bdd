// emovar/error.hpp

// Copyright 2026 The emovar Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef EMOVAR_ERROR_HPP_
#define EMOVAR_ERROR_HPP_

#include <stdexcept>
#include <string>
#include <string_view>

namespace emovar {

enum class Errc {
  kEmptyBatch,
  kNoEstimableClass,
  kDimensionMismatch,
  kBetaOutOfRange,
  kNotPositiveDefinite,
  kCorruptState,
  kZeroVector,
  kInvalidDistribution,
  kNotEnoughCandidates,
  kEmptySequence,
  kStaleIntermediates,
  kFrozenLayer,
  kShapeMismatch,
  kEmptyDataset,
  kMalformedManifest,
  kPayloadSizeMismatch,
  kDuplicateId,
  kInvalidSpec,
  kTooFewSpeakers,
  kNotEnoughTargetData,
  kLengthMismatch,
  kEmptyMatrix,
  kLanguageNotInTrainingPair,
  kLanguageOverlap,
  kInvalidConfig,
  kIo,
};

inline const char *ErrcName(Errc code) {
  switch (code) {
    case Errc::kEmptyBatch: return "EmptyBatch";
    case Errc::kNoEstimableClass: return "NoEstimableClass";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kBetaOutOfRange: return "BetaOutOfRange";
    case Errc::kNotPositiveDefinite: return "NotPositiveDefinite";
    case Errc::kCorruptState: return "CorruptState";
    case Errc::kZeroVector: return "ZeroVector";
    case Errc::kInvalidDistribution: return "InvalidDistribution";
    case Errc::kNotEnoughCandidates: return "NotEnoughCandidates";
    case Errc::kEmptySequence: return "EmptySequence";
    case Errc::kStaleIntermediates: return "StaleIntermediates";
    case Errc::kFrozenLayer: return "FrozenLayer";
    case Errc::kShapeMismatch: return "ShapeMismatch";
    case Errc::kEmptyDataset: return "EmptyDataset";
    case Errc::kMalformedManifest: return "MalformedManifest";
    case Errc::kPayloadSizeMismatch: return "PayloadSizeMismatch";
    case Errc::kDuplicateId: return "DuplicateId";
    case Errc::kInvalidSpec: return "InvalidSpec";
    case Errc::kTooFewSpeakers: return "TooFewSpeakers";
    case Errc::kNotEnoughTargetData: return "NotEnoughTargetData";
    case Errc::kLengthMismatch: return "LengthMismatch";
    case Errc::kEmptyMatrix: return "EmptyMatrix";
    case Errc::kLanguageNotInTrainingPair: return "LanguageNotInTrainingPair";
    case Errc::kLanguageOverlap: return "LanguageOverlap";
    case Errc::kInvalidConfig: return "InvalidConfig";
    case Errc::kIo: return "Io";
  }
  return "Unknown";
}

/// All failures in the library are reported with this exception; code()
/// identifies the failure class, what() carries a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string &message)
      : std::runtime_error(std::string(ErrcName(code)) + ": " + message),
        code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

inline void Require(bool condition, Errc code, std::string_view message) {
  if (!condition) throw Error(code, std::string(message));
}

}  // namespace emovar

#endif  // EMOVAR_ERROR_HPP_
