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

// Registered experiments. Each experiment takes a resolved JSON config and
// produces deterministic result files (trace CSV and summary JSON) plus a
// list of failed assertions.

#ifndef SOFTPREF_EXPERIMENTS_HPP_
#define SOFTPREF_EXPERIMENTS_HPP_

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace softpref {

using Json = nlohmann::ordered_json;

struct Failure {
  std::string assertion;
  std::string expected;
  double observed = 0.0;
};

struct ExperimentOutcome {
  Json summary;
  std::string trace_csv;
  // Additional files, relative to the run directory.
  std::vector<std::pair<std::string, std::string>> extra_files;
  std::vector<Failure> failures;

  bool passed() const { return failures.empty(); }
};

const std::vector<std::string>& ExperimentNames();
bool IsExperiment(const std::string& name);

// Default configuration of a registered experiment; InvalidConfig otherwise.
Json DefaultConfig(const std::string& name);

// Defaults, then `file_doc` merged over them, then dotted-path overrides
// ("flow.step_size", "0.005"), then the seed. Every key must already exist
// in the defaults and keep its type. Throws InvalidConfig.
Json ResolveConfig(const std::string& name, const std::optional<Json>& file_doc,
                   const std::vector<std::pair<std::string, std::string>>& overrides,
                   std::optional<std::uint64_t> seed);

// Runs an experiment from a resolved config. Setup errors (bad reward file,
// parameters rejected by a module) surface as InvalidConfig.
ExperimentOutcome RunExperiment(const Json& config, std::size_t jobs = 1);

}  // namespace softpref

#endif  // SOFTPREF_EXPERIMENTS_HPP_
