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

// Small string, number and hashing helpers shared by the text formats.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace gbfuse::util {

std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

/// Lowercase, trim, and collapse internal whitespace runs to a single space.
std::string normalize_category(std::string_view s);

/// Splits on any run of spaces/tabs.
std::vector<std::string> split_ws(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

/// Strict full-string parse; nullopt on trailing garbage or empty input.
std::optional<double> parse_double(std::string_view s);
std::optional<std::int64_t> parse_int(std::string_view s);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view data, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

/// SplitMix64 step; used for seeded, platform-independent pseudo-random streams.
std::uint64_t splitmix64(std::uint64_t& state);

/// Uniform double in [0, 1) from the top 53 bits.
inline double unit_double(std::uint64_t bits) {
  return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Unbiased integer in [0, bound) drawn from a mt19937_64 by rejection. The
/// standard distributions are implementation-defined, this is not.
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t bound);

/// Uniform double in [0,1) from a mt19937_64.
inline double uniform01(std::mt19937_64& rng) { return unit_double(rng()); }

/// Standard normal via Box-Muller over uniform01 (portable across stdlibs).
double standard_normal(std::mt19937_64& rng);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view content);

}  // namespace gbfuse::util
