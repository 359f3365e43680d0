/**
 * Copyright 2026 The ldcsf Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef LDCSF_TOOLS_CLI_HPP
#define LDCSF_TOOLS_CLI_HPP

#include <ostream>
#include <string>
#include <vector>

namespace ldcsf::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kUsage = 1;  // bad flags or configuration
inline constexpr int kData = 2;   // unreadable or malformed inputs
inline constexpr int kNumeric = 3;  // NaN/Inf or a failed numeric check

// Runs one `ldcsf <subcommand> ...` invocation. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ldcsf::cli

#endif  // LDCSF_TOOLS_CLI_HPP
