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

// The gbfuse command line: ingest, fit-schema, train, evaluate, ablate,
// importance, predict, synth. Data goes to `out`, diagnostics to `err`.

#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "gbfuse/error.hpp"

namespace gbfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRowFailed = 3;
/// Library errors exit with kExitErrorBase + the ErrorCode's ordinal.
inline constexpr int kExitErrorBase = 10;

int exit_code(ErrorCode code);

/// args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// --help text of one subcommand ("" for the top level).
std::string help_text(std::string_view subcommand);

}  // namespace gbfuse::cli
