// Copyright 2026 The medvqa Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef MEDVQA_CORE_ERROR_HPP_
#define MEDVQA_CORE_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace medvqa {

enum class ErrorKind {
  MissingFile,
  MalformedRow,
  EmptyCorpus,
  VocabularyMissing,
  UnknownDialect,
  SchemaViolation,
  EmptySplit,
  MissingLabels,
  DecodeFailure,
  ResolutionMismatch,
  WeightsMissing,
  TokenOutOfRange,
  ShapeMismatch,
  NonSquare,
  CheckpointWriteFailure,
  CorruptCheckpoint,
  EmbeddingAssetMissing,
  NonFinite,
  EmptyVocabulary,
  ConfigInvalid,
  VocabularyMismatch,
  AlignmentError,
  WriteFailure,
  UsageError,
  ConfigError,
};

inline const char* error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MissingFile: return "MissingFile";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::EmptyCorpus: return "EmptyCorpus";
    case ErrorKind::VocabularyMissing: return "VocabularyMissing";
    case ErrorKind::UnknownDialect: return "UnknownDialect";
    case ErrorKind::SchemaViolation: return "SchemaViolation";
    case ErrorKind::EmptySplit: return "EmptySplit";
    case ErrorKind::MissingLabels: return "MissingLabels";
    case ErrorKind::DecodeFailure: return "DecodeFailure";
    case ErrorKind::ResolutionMismatch: return "ResolutionMismatch";
    case ErrorKind::WeightsMissing: return "WeightsMissing";
    case ErrorKind::TokenOutOfRange: return "TokenOutOfRange";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonSquare: return "NonSquare";
    case ErrorKind::CheckpointWriteFailure: return "CheckpointWriteFailure";
    case ErrorKind::CorruptCheckpoint: return "CorruptCheckpoint";
    case ErrorKind::EmbeddingAssetMissing: return "EmbeddingAssetMissing";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::EmptyVocabulary: return "EmptyVocabulary";
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::VocabularyMismatch: return "VocabularyMismatch";
    case ErrorKind::AlignmentError: return "AlignmentError";
    case ErrorKind::WriteFailure: return "WriteFailure";
    case ErrorKind::UsageError: return "UsageError";
    case ErrorKind::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

/// Library-wide exception carrying a machine-checkable kind tag.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(error_kind_name(kind)) + ": " + message),
        kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace medvqa

#endif  // MEDVQA_CORE_ERROR_HPP_
