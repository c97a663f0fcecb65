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

#include "gbfuse/error.hpp"

#include <fmt/format.h>

namespace gbfuse {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::UnknownField: return "UnknownField";
    case ErrorCode::MalformedTable: return "MalformedTable";
    case ErrorCode::UnknownBiomarker: return "UnknownBiomarker";
    case ErrorCode::InconsistentIE: return "InconsistentIE";
    case ErrorCode::MissingBounds: return "MissingBounds";
    case ErrorCode::UnmappedCategory: return "UnmappedCategory";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SchemaMismatch: return "SchemaMismatch";
    case ErrorCode::DuplicateModality: return "DuplicateModality";
    case ErrorCode::EmptyFusion: return "EmptyFusion";
    case ErrorCode::MissingModality: return "MissingModality";
    case ErrorCode::BadHeader: return "BadHeader";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::NonFiniteValue: return "NonFiniteValue";
    case ErrorCode::EmptySequence: return "EmptySequence";
    case ErrorCode::RaggedInput: return "RaggedInput";
    case ErrorCode::EmptyImage: return "EmptyImage";
    case ErrorCode::MissingEmbedding: return "MissingEmbedding";
    case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorCode::VersionMismatch: return "VersionMismatch";
    case ErrorCode::CorruptModel: return "CorruptModel";
    case ErrorCode::FingerprintMismatch: return "FingerprintMismatch";
    case ErrorCode::TooFewRecords: return "TooFewRecords";
    case ErrorCode::LengthMismatch: return "LengthMismatch";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateMask: return "DuplicateMask";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

std::string Location::str() const {
  std::string out = file.empty() ? std::string("<input>") : file;
  if (line > 0) out += fmt::format(":{}", line);
  if (!field.empty()) out += fmt::format(" [{}]", field);
  return out;
}

namespace {

std::string compose(ErrorCode code, const std::string& message, const Location& where) {
  const bool has_location = !where.file.empty() || where.line > 0 || !where.field.empty();
  if (!has_location) return fmt::format("{}: {}", to_string(code), message);
  return fmt::format("{}: {}: {}", where.str(), to_string(code), message);
}

}  // namespace

Error::Error(ErrorCode code, const std::string& message, Location where)
    : std::runtime_error(compose(code, message, where)),
      code_(code),
      where_(std::move(where)),
      detail_(message) {}

}  // namespace gbfuse
