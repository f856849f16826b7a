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

// Reading and writing reward tables, preference distributions, token models
// and sample batches. Formats are described in docs/formats.md. Numbers are
// written in shortest round-trip form, so write-then-read is lossless.

#ifndef SOFTPREF_SERIALIZE_HPP_
#define SOFTPREF_SERIALIZE_HPP_

#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "softpref/prefdata.hpp"
#include "softpref/seqkl.hpp"

namespace softpref {

// Shortest decimal string that parses back to exactly `value`.
std::string FormatShortest(double value);
// 17 significant digits, as used in CSV output.
std::string FormatCsv(double value);
// Throws ParseError unless the whole of `text` is a finite double.
double ParseDouble(std::string_view text);

std::string RewardsToText(const RewardTable& rewards);
RewardTable RewardsFromText(std::string_view text);
nlohmann::json RewardsToJson(const RewardTable& rewards);
RewardTable RewardsFromJson(const nlohmann::json& doc);

std::string PreferencesToText(const AnyPreferenceDistribution& dist);
AnyPreferenceDistribution PreferencesFromText(std::string_view text);
nlohmann::json PreferencesToJson(const AnyPreferenceDistribution& dist);
AnyPreferenceDistribution PreferencesFromJson(const nlohmann::json& doc);

nlohmann::json TokenModelToJson(const TokenModel& model);
TokenModel TokenModelFromJson(const nlohmann::json& doc);

// CSV with header step,query,sequence,logprob. The sequence column holds
// space-separated token ids; logprob is under `model`.
std::string BatchCsv(const SampleBatch& batch, const TokenModel& model);

// Whole-file helpers; both throw IoError.
std::string ReadFile(const std::filesystem::path& path);
void WriteFile(const std::filesystem::path& path, std::string_view contents);

// Reads a reward table stored as JSON (first non-space character '{') or
// in the text format.
RewardTable LoadRewards(const std::filesystem::path& path);

}  // namespace softpref

#endif  // SOFTPREF_SERIALIZE_HPP_
