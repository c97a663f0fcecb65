// Copyright 2026 The gbfuse Authors. All Rights Reserved.
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>

namespace gbfuse {

enum class ErrorCode {
  // record_model
  MalformedRecord,
  OutOfRange,
  UnknownField,
  MalformedTable,
  UnknownBiomarker,
  InconsistentIE,
  MissingBounds,
  UnmappedCategory,
  // feature_pipeline
  EmptyDataset,
  SchemaMismatch,
  DuplicateModality,
  EmptyFusion,
  MissingModality,
  // embedding_io
  BadHeader,
  DimensionMismatch,
  DuplicateId,
  NonFiniteValue,
  EmptySequence,
  RaggedInput,
  EmptyImage,
  MissingEmbedding,
  // boosting_engine
  LabelOutOfRange,
  VersionMismatch,
  CorruptModel,
  FingerprintMismatch,
  // evaluation
  TooFewRecords,
  LengthMismatch,
  EmptyInput,
  DuplicateMask,
  // general
  InvalidArgument,
  Io,
};

std::string_view to_string(ErrorCode code);

/// Where a diagnostic points: any of the three parts may be empty / zero.
struct Location {
  std::string file;
  std::size_t line = 0;
  std::string field;

  std::string str() const;
};

/// The single exception type thrown by the library. `code()` identifies the
/// error class; `where()` carries file/line/field for parse errors.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message, Location where = {});

  ErrorCode code() const noexcept { return code_; }
  const Location& where() const noexcept { return where_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCode code_;
  Location where_;
  std::string detail_;
};

}  // namespace gbfuse
