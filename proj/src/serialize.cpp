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

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <system_error>
#include <type_traits>
#include <utility>
#include <vector>

#include "softpref/error.hpp"

namespace softpref {
namespace {

using nlohmann::json;

constexpr std::string_view kRewardsHeader = "softpref-rewards";
constexpr std::string_view kPreferencesHeader = "softpref-preferences";
constexpr int kFormatVersion = 1;

// Non-empty, non-comment lines split on whitespace, with 1-based line
// numbers for error messages.
struct Line {
  std::size_t number = 0;
  std::vector<std::string> fields;
};

std::vector<Line> Tokenize(std::string_view text) {
  std::vector<Line> out;
  std::size_t number = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view raw = text.substr(pos, end - pos);
    ++number;
    pos = end + 1;
    if (const std::size_t hash = raw.find('#'); hash != std::string_view::npos) {
      raw = raw.substr(0, hash);
    }
    std::istringstream in{std::string(raw)};
    Line line{number, {}};
    for (std::string field; in >> field;) line.fields.push_back(field);
    if (!line.fields.empty()) out.push_back(std::move(line));
    if (end == text.size()) break;
  }
  return out;
}

[[noreturn]] void ParseFail(std::size_t line, const std::string& message) {
  Fail(ErrorCode::kParseError, "line " + std::to_string(line) + ": " + message);
}

std::size_t ParseIndex(const Line& line, std::size_t i) {
  if (i >= line.fields.size()) ParseFail(line.number, "missing field");
  const std::string& f = line.fields[i];
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), value);
  if (ec != std::errc() || ptr != f.data() + f.size()) {
    ParseFail(line.number, "expected an index, got '" + f + "'");
  }
  return value;
}

double ParseReal(const Line& line, std::size_t i) {
  if (i >= line.fields.size()) ParseFail(line.number, "missing field");
  try {
    return ParseDouble(line.fields[i]);
  } catch (const Error& e) {
    ParseFail(line.number, e.detail());
  }
}

void ExpectHeader(const std::vector<Line>& lines, std::string_view header) {
  if (lines.empty() || lines[0].fields.empty() ||
      lines[0].fields[0] != header) {
    Fail(ErrorCode::kParseError, "missing '" + std::string(header) + "' header");
  }
  const Line& h = lines[0];
  if (ParseIndex(h, 1) != kFormatVersion) {
    ParseFail(h.number, "unsupported format version");
  }
}

void ExpectFormat(const json& doc, std::string_view format) {
  if (!doc.is_object() || !doc.contains("format") ||
      doc["format"] != std::string(format)) {
    Fail(ErrorCode::kParseError, "document is not a " + std::string(format));
  }
  if (doc.value("version", 0) != kFormatVersion) {
    Fail(ErrorCode::kParseError, "unsupported format version");
  }
}

// Runs `body` and maps nlohmann errors to ParseError.
template <typename F>
auto WithJsonErrors(F&& body) -> decltype(body()) {
  try {
    return body();
  } catch (const json::exception& e) {
    Fail(ErrorCode::kParseError, e.what());
  }
}

std::string JoinIndices(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t x : v) {
    out += ' ';
    out += std::to_string(x);
  }
  return out;
}

}  // namespace

std::string FormatShortest(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) Fail(ErrorCode::kIoError, "cannot format number");
  return std::string(buf, ptr);
}

std::string FormatCsv(double value) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", value);
  return buf;
}

double ParseDouble(std::string_view text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    Fail(ErrorCode::kParseError, "expected a finite number, got '" +
                                     std::string(text) + "'");
  }
  return value;
}

// ---------------------------------------------------------------------------
// Rewards

std::string RewardsToText(const RewardTable& rewards) {
  std::string out = std::string(kRewardsHeader) + " " +
                    std::to_string(kFormatVersion) + "\n";
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    out += rewards.name(q);
    for (double r : rewards.rewards(q)) {
      out += ' ';
      out += FormatShortest(r);
    }
    out += '\n';
  }
  return out;
}

RewardTable RewardsFromText(std::string_view text) {
  const std::vector<Line> lines = Tokenize(text);
  ExpectHeader(lines, kRewardsHeader);
  std::vector<std::vector<double>> values;
  std::vector<std::string> names;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const Line& line = lines[i];
    names.push_back(line.fields[0]);
    values.emplace_back();
    for (std::size_t f = 1; f < line.fields.size(); ++f) {
      values.back().push_back(ParseReal(line, f));
    }
  }
  if (values.empty()) Fail(ErrorCode::kParseError, "no queries in reward table");
  return RewardTable(std::move(values), std::move(names));
}

nlohmann::json RewardsToJson(const RewardTable& rewards) {
  json queries = json::array();
  for (std::size_t q = 0; q < rewards.num_queries(); ++q) {
    const auto r = rewards.rewards(q);
    queries.push_back({{"name", rewards.name(q)},
                       {"rewards", std::vector<double>(r.begin(), r.end())}});
  }
  return {{"format", "softpref.rewards"},
          {"version", kFormatVersion},
          {"queries", std::move(queries)}};
}

RewardTable RewardsFromJson(const nlohmann::json& doc) {
  return WithJsonErrors([&] {
    ExpectFormat(doc, "softpref.rewards");
    std::vector<std::vector<double>> values;
    std::vector<std::string> names;
    for (const auto& q : doc.at("queries")) {
      names.push_back(q.at("name").get<std::string>());
      values.push_back(q.at("rewards").get<std::vector<double>>());
    }
    return RewardTable(std::move(values), std::move(names));
  });
}

// ---------------------------------------------------------------------------
// Preference distributions

std::string PreferencesToText(const AnyPreferenceDistribution& any) {
  return std::visit(
      [](const auto& dist) {
        using Dist = std::decay_t<decltype(dist)>;
        std::string out = std::string(kPreferencesHeader) + " " +
                          std::to_string(kFormatVersion) + " " +
                          PreferenceKindName(Dist::kind()) + " " +
                          std::to_string(dist.arity()) + " " +
                          (dist.full_support() ? "1" : "0") + "\n";
        for (const auto& atom : dist.atoms()) {
          const auto& t = atom.tuple;
          out += std::to_string(t.query);
          if constexpr (Dist::kind() == PreferenceKind::kPairwise) {
            out += ' ' + std::to_string(t.winner) + ' ' + std::to_string(t.loser);
          } else if constexpr (Dist::kind() == PreferenceKind::kBestOfN) {
            out += ' ' + std::to_string(t.best) + JoinIndices(t.responses);
          } else {
            out += JoinIndices(t.responses) + JoinIndices(t.ranking);
          }
          out += ' ' + FormatShortest(atom.weight) + '\n';
        }
        return out;
      },
      any);
}

AnyPreferenceDistribution PreferencesFromText(std::string_view text) {
  const std::vector<Line> lines = Tokenize(text);
  ExpectHeader(lines, kPreferencesHeader);
  const Line& h = lines[0];
  if (h.fields.size() != 5) ParseFail(h.number, "header needs 5 fields");
  const std::string& kind = h.fields[2];
  const std::size_t arity = ParseIndex(h, 3);
  const std::string& support = h.fields[4];
  if (support != "0" && support != "1") {
    ParseFail(h.number, "full_support must be 0 or 1");
  }
  const bool full = support == "1";
  if (arity < 2) ParseFail(h.number, "arity must be >= 2");

  auto check_width = [](const Line& line, std::size_t width) {
    if (line.fields.size() != width) {
      ParseFail(line.number, "expected " + std::to_string(width) + " fields");
    }
  };
  if (kind == "pairwise") {
    std::vector<Atom<PairwiseTuple>> atoms;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const Line& l = lines[i];
      check_width(l, 4);
      atoms.push_back({{ParseIndex(l, 0), ParseIndex(l, 1), ParseIndex(l, 2)},
                       ParseReal(l, 3)});
    }
    return PairwiseDistribution(std::move(atoms), arity, full);
  }
  if (kind == "best_of_n") {
    std::vector<Atom<BestOfNTuple>> atoms;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const Line& l = lines[i];
      check_width(l, arity + 3);
      BestOfNTuple t{ParseIndex(l, 0), {}, ParseIndex(l, 1)};
      for (std::size_t k = 0; k < arity; ++k) t.responses.push_back(ParseIndex(l, 2 + k));
      atoms.push_back({std::move(t), ParseReal(l, arity + 2)});
    }
    return BestOfNDistribution(std::move(atoms), arity, full);
  }
  if (kind == "ranked") {
    std::vector<Atom<RankedTuple>> atoms;
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const Line& l = lines[i];
      check_width(l, 2 * arity + 2);
      RankedTuple t{ParseIndex(l, 0), {}, {}};
      for (std::size_t k = 0; k < arity; ++k) t.responses.push_back(ParseIndex(l, 1 + k));
      for (std::size_t k = 0; k < arity; ++k) {
        t.ranking.push_back(ParseIndex(l, 1 + arity + k));
      }
      atoms.push_back({std::move(t), ParseReal(l, 2 * arity + 1)});
    }
    return RankedDistribution(std::move(atoms), arity, full);
  }
  ParseFail(h.number, "unknown preference kind '" + kind + "'");
}

nlohmann::json PreferencesToJson(const AnyPreferenceDistribution& any) {
  return std::visit(
      [](const auto& dist) {
        using Dist = std::decay_t<decltype(dist)>;
        json atoms = json::array();
        for (const auto& atom : dist.atoms()) {
          const auto& t = atom.tuple;
          json a = {{"query", t.query}};
          if constexpr (Dist::kind() == PreferenceKind::kPairwise) {
            a["winner"] = t.winner;
            a["loser"] = t.loser;
          } else if constexpr (Dist::kind() == PreferenceKind::kBestOfN) {
            a["responses"] = t.responses;
            a["best"] = t.best;
          } else {
            a["responses"] = t.responses;
            a["ranking"] = t.ranking;
          }
          a["weight"] = atom.weight;
          atoms.push_back(std::move(a));
        }
        return json{{"format", "softpref.preferences"},
                    {"version", kFormatVersion},
                    {"kind", PreferenceKindName(Dist::kind())},
                    {"arity", dist.arity()},
                    {"full_support", dist.full_support()},
                    {"atoms", std::move(atoms)}};
      },
      any);
}

AnyPreferenceDistribution PreferencesFromJson(const nlohmann::json& doc) {
  return WithJsonErrors([&]() -> AnyPreferenceDistribution {
    ExpectFormat(doc, "softpref.preferences");
    const std::string kind = doc.at("kind").get<std::string>();
    const auto arity = doc.at("arity").get<std::size_t>();
    const bool full = doc.at("full_support").get<bool>();
    const json& atoms = doc.at("atoms");
    if (kind == "pairwise") {
      std::vector<Atom<PairwiseTuple>> out;
      for (const auto& a : atoms) {
        out.push_back({{a.at("query").get<std::size_t>(),
                        a.at("winner").get<std::size_t>(),
                        a.at("loser").get<std::size_t>()},
                       a.at("weight").get<double>()});
      }
      return PairwiseDistribution(std::move(out), arity, full);
    }
    if (kind == "best_of_n") {
      std::vector<Atom<BestOfNTuple>> out;
      for (const auto& a : atoms) {
        out.push_back({{a.at("query").get<std::size_t>(),
                        a.at("responses").get<std::vector<std::size_t>>(),
                        a.at("best").get<std::size_t>()},
                       a.at("weight").get<double>()});
      }
      return BestOfNDistribution(std::move(out), arity, full);
    }
    if (kind == "ranked") {
      std::vector<Atom<RankedTuple>> out;
      for (const auto& a : atoms) {
        out.push_back({{a.at("query").get<std::size_t>(),
                        a.at("responses").get<std::vector<std::size_t>>(),
                        a.at("ranking").get<std::vector<std::size_t>>()},
                       a.at("weight").get<double>()});
      }
      return RankedDistribution(std::move(out), arity, full);
    }
    Fail(ErrorCode::kParseError, "unknown preference kind '" + kind + "'");
  });
}

// ---------------------------------------------------------------------------
// Token models and batches

nlohmann::json TokenModelToJson(const TokenModel& model) {
  json queries = json::array();
  for (std::size_t q = 0; q < model.num_queries(); ++q) {
    json rows = json::array();
    for (std::size_t k = 0; k < model.num_prefixes(); ++k) {
      rows.push_back({{"prefix", model.PrefixAt(k)},
                      {"probs", model.Row(q, k).vector()}});
    }
    queries.push_back(std::move(rows));
  }
  return {{"format", "softpref.token_model"},
          {"version", kFormatVersion},
          {"alphabet_size", model.alphabet_size()},
          {"max_length", model.max_length()},
          {"terminal", model.terminal()},
          {"queries", std::move(queries)}};
}

TokenModel TokenModelFromJson(const nlohmann::json& doc) {
  return WithJsonErrors([&] {
    ExpectFormat(doc, "softpref.token_model");
    const auto s = doc.at("alphabet_size").get<std::size_t>();
    const auto len = doc.at("max_length").get<std::size_t>();
    if (s < 2 || doc.at("terminal").get<std::size_t>() != s - 1) {
      Fail(ErrorCode::kParseError, "terminal token must be alphabet_size - 1");
    }
    std::vector<std::vector<Distribution>> rows;
    std::size_t expected = 0;
    for (const auto& q : doc.at("queries")) {
      rows.emplace_back();
      for (const auto& row : q) {
        rows.back().emplace_back(row.at("probs").get<std::vector<double>>());
      }
      expected = q.size();
    }
    TokenModel model(s, len, std::move(rows));
    // Rows must be listed in prefix-index order.
    for (const auto& q : doc.at("queries")) {
      for (std::size_t k = 0; k < expected; ++k) {
        if (q[k].at("prefix").get<TokenSequence>() != model.PrefixAt(k)) {
          Fail(ErrorCode::kParseError,
               "prefix rows out of order at index " + std::to_string(k));
        }
      }
    }
    return model;
  });
}

std::string BatchCsv(const SampleBatch& batch, const TokenModel& model) {
  std::string out = "step,query,sequence,logprob\n";
  for (const auto& e : batch.entries) {
    out += std::to_string(batch.generation_step);
    out += ',';
    out += std::to_string(e.query);
    out += ',';
    for (std::size_t i = 0; i < e.tokens.size(); ++i) {
      if (i > 0) out += ' ';
      out += std::to_string(e.tokens[i]);
    }
    out += ',';
    out += FormatCsv(SequenceLogProb(model, e.query, e.tokens));
    out += '\n';
  }
  return out;
}

std::string ReadFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) Fail(ErrorCode::kIoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) Fail(ErrorCode::kIoError, "cannot read " + path.string());
  return buf.str();
}

void WriteFile(const std::filesystem::path& path, std::string_view contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) Fail(ErrorCode::kIoError, "cannot write " + path.string());
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) Fail(ErrorCode::kIoError, "cannot write " + path.string());
}

RewardTable LoadRewards(const std::filesystem::path& path) {
  const std::string text = ReadFile(path);
  const std::size_t first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    json doc;
    try {
      doc = json::parse(text);
    } catch (const json::exception& e) {
      Fail(ErrorCode::kParseError, path.string() + ": " + e.what());
    }
    return RewardsFromJson(doc);
  }
  return RewardsFromText(text);
}

}  // namespace softpref
