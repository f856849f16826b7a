// Copyright 2026 The softpref Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: `run`, `verify-all` and `summarize`.
//
// Exit status: 0 success, 2 invalid configuration or arguments, 3 an
// experiment assertion failed (see failures.json), 4 runtime fault.

#ifndef SOFTPREF_CLI_HPP_
#define SOFTPREF_CLI_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "softpref/experiments.hpp"

namespace softpref::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidConfig = 2;
inline constexpr int kExitAssertion = 3;
inline constexpr int kExitFault = 4;

// Output directory used when --out is absent.
inline constexpr const char* kOutDirEnv = "SOFTPREF_OUT_DIR";
std::filesystem::path DefaultOutDir();

struct RunRequest {
  std::string experiment;
  std::optional<std::filesystem::path> config_file;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out_dir;
  std::vector<std::pair<std::string, std::string>> overrides;
  std::size_t jobs = 1;
};

// <out_dir>/<experiment>/<seed>
std::filesystem::path RunDirectory(const std::filesystem::path& out_dir,
                                   const std::string& experiment,
                                   std::uint64_t seed);

// Resolves the config, runs the experiment and writes trace.csv,
// summary.json, meta.json (and failures.json on assertion failure).
// Returns an exit status; messages go to stderr.
int RunOne(const RunRequest& request);

// Every registered experiment with default parameters, then EmitSummary.
int VerifyAll(const std::filesystem::path& out_dir, std::size_t jobs,
              std::optional<std::uint64_t> seed = std::nullopt);

struct SummaryTable {
  std::string csv;
  Json json;
};

// Collects <dir>/<experiment>/<seed>/summary.json into one table and writes
// summary.csv and summary.json into `dir`. Throws EmptyDirectory when no
// results are present and ParseError naming a corrupted file.
SummaryTable EmitSummary(const std::filesystem::path& dir);

// Splits trailing "--a.b=value" / "--a.b value" arguments into overrides.
std::vector<std::pair<std::string, std::string>> ParseOverrides(
    const std::vector<std::string>& args);

int Main(int argc, char** argv);

}  // namespace softpref::cli

#endif  // SOFTPREF_CLI_HPP_
