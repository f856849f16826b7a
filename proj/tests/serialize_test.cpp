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

#include "softpref/serialize.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <variant>
#include <vector>

#include "doctest.h"
#include "json.hpp"

#include "softpref/error.hpp"
#include "softpref/prefdata.hpp"
#include "softpref/rng.hpp"
#include "softpref/seqkl.hpp"
#include "test_util.hpp"

namespace softpref {
namespace {

namespace fs = std::filesystem;
using testing::ErrorCodeOf;

fs::path TempDir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("softpref_serialize_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

TEST_CASE("number formatting round trips") {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double x = std::ldexp(rng.Uniform(-1.0, 1.0), static_cast<int>(rng.NextU64() % 80) - 40);
    CHECK(ParseDouble(FormatShortest(x)) == x);
    CHECK(ParseDouble(FormatCsv(x)) == x);
  }
  CHECK(FormatShortest(0.1) == "0.1");
  CHECK(FormatCsv(0.1) == "0.10000000000000001");
  for (const char* bad : {"", "abc", "1.0x", "nan", "inf", "1e999"}) {
    CHECK(ErrorCodeOf([&] { ParseDouble(bad); }) == ErrorCode::kParseError);
  }
}

TEST_CASE("reward tables round trip") {
  const RewardTable r({{std::log(2.0), 0.1, -1.0 / 3}, {1e-300, 5.0}}, {"first", "second"});
  CHECK(RewardsFromText(RewardsToText(r)) == r);
  CHECK(RewardsFromJson(RewardsToJson(r)) == r);
  CHECK(RewardsFromJson(nlohmann::json::parse(RewardsToJson(r).dump())) == r);

  const RewardTable parsed =
      RewardsFromText("softpref-rewards 1\n# comment\n\nq 1 2 3\n");
  CHECK(parsed.num_responses(0) == 3);
  CHECK(parsed.name(0) == "q");
}

TEST_CASE("malformed reward input") {
  for (const char* bad : {"", "softpref-rewards 2\nq 1 2\n", "softpref-rewards 1\nq 1 x\n",
                          "softpref-rewards 1\n"}) {
    CHECK(ErrorCodeOf([&] { RewardsFromText(bad); }) == ErrorCode::kParseError);
  }
  CHECK(ErrorCodeOf([] {
          RewardsFromJson(nlohmann::json{{"format", "softpref.rewards"}, {"version", 1}});
        }) == ErrorCode::kParseError);
  CHECK(ErrorCodeOf([] { RewardsFromJson(nlohmann::json::array()); }) ==
        ErrorCode::kParseError);
}

TEST_CASE("preference distributions round trip") {
  const RewardTable r = RewardTable::UniformRandom(2, 4, -2.0, 2.0, 3);
  const std::vector<AnyPreferenceDistribution> dists{
      MakeBtConsistentPairwise(r, UniformSetMarginal(r, 2)),
      MakeNaryBtConsistent(r, UniformSetMarginal(r, 3), 3),
      MakePlConsistentRanked(r, UniformSetMarginal(r, 3), 3),
  };
  for (const auto& d : dists) {
    CHECK(PreferencesFromText(PreferencesToText(d)) == d);
    CHECK(PreferencesFromJson(PreferencesToJson(d)) == d);
    CHECK(PreferencesFromJson(nlohmann::json::parse(PreferencesToJson(d).dump())) == d);
  }
}

TEST_CASE("malformed preference input") {
  CHECK(ErrorCodeOf([] {
          PreferencesFromText("softpref-preferences 1 pairwise 2 0\n0 1 1 1.0\n");
        }) == ErrorCode::kSameResponse);
  CHECK(ErrorCodeOf([] {
          PreferencesFromText("softpref-preferences 1 triples 2 0\n0 0 1 1.0\n");
        }) == ErrorCode::kParseError);
  CHECK(ErrorCodeOf([] {
          PreferencesFromText("softpref-preferences 1 pairwise 2 0\n0 0 1\n");
        }) == ErrorCode::kParseError);
  CHECK(ErrorCodeOf([] {
          PreferencesFromText("softpref-preferences 1 pairwise 2 0\n0 0 1 0.5\n");
        }) == ErrorCode::kInvalidDistribution);
}

TEST_CASE("token models round trip") {
  const TokenModel m = TokenModel::Random(2, 3, 3, 4);
  CHECK(TokenModelFromJson(TokenModelToJson(m)) == m);
  CHECK(TokenModelFromJson(nlohmann::json::parse(TokenModelToJson(m).dump())) == m);
  nlohmann::json doc = TokenModelToJson(m);
  doc["alphabet_size"] = 4;
  CHECK(ErrorCodeOf([&] { TokenModelFromJson(doc); }) == ErrorCode::kParseError);
}

TEST_CASE("batch csv") {
  const TokenModel m = TokenModel::Random(1, 3, 2, 5);
  const SampleBatch batch = SampleSequences(m, 0, 3, 6, 9);
  const std::string csv = BatchCsv(batch, m);
  CHECK(csv.rfind("step,query,sequence,logprob\n9,0,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

TEST_CASE("file helpers") {
  const fs::path dir = TempDir("files");
  const RewardTable r({{0.5, -0.5}});
  WriteFile(dir / "r.txt", RewardsToText(r));
  WriteFile(dir / "r.json", RewardsToJson(r).dump(2));
  CHECK(LoadRewards(dir / "r.txt") == r);
  CHECK(LoadRewards(dir / "r.json") == r);
  CHECK(ReadFile(dir / "r.txt") == RewardsToText(r));
  CHECK(ErrorCodeOf([&] { ReadFile(dir / "missing"); }) == ErrorCode::kIoError);
  // The parent is a regular file.
  CHECK(ErrorCodeOf([&] { WriteFile(dir / "r.txt" / "f", "x"); }) ==
        ErrorCode::kIoError);
  fs::remove_all(dir);
}

}  // namespace
}  // namespace softpref
