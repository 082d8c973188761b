// Copyright 2026 The PVAE Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace pvae::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitFailure = 2;

inline constexpr const char* kVersion = "1.0.0";

/// Runs one command. `args` includes the program name. Returns kExitOk on
/// success, kExitUsage on a malformed command line (the usage text is
/// written to `err`), and kExitFailure when the command itself fails.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pvae::cli
