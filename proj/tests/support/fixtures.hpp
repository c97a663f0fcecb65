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

// Random records, temporary directories and brute-force metric recounts for
// the test suites.

#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "gbfuse/records.hpp"

namespace gbfuse::testing {

/// Record with every field independently missing, valued or (when
/// `unknown_categories`) set to a category no schema has seen.
ClinicalRecord random_clinical_record(std::mt19937_64& rng, std::size_t index, bool unknown_categories);

/// Subject with a random subset of the catalog's biomarkers.
OctBiomarkerRecord random_oct_record(std::mt19937_64& rng, std::size_t index, const NormativeCatalog& catalog);

/// Removed with its contents on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

/// Metrics recomputed from scratch by counting outcomes one by one.
struct BruteMetrics {
  double acc = 0.0, pre = 0.0, rec = 0.0, f1 = 0.0;
};
BruteMetrics brute_binary(std::span<const double> p, std::span<const int> y, double threshold);
BruteMetrics brute_macro(std::span<const int> predicted, std::span<const int> y, int n_classes);

}  // namespace gbfuse::testing
