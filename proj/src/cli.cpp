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

#include "softpref/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "softpref/error.hpp"
#include "softpref/serialize.hpp"

namespace softpref::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kVersion = "0.1.0";

std::string IsoTime(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json ReadJsonFile(const fs::path& path) {
  const std::string text = ReadFile(path);
  try {
    return Json::parse(text);
  } catch (const Json::exception& e) {
    Fail(ErrorCode::kParseError, path.string() + ": " + e.what());
  }
}

void WriteRunFiles(const fs::path& dir, const Json& config,
                   const ExperimentOutcome& outcome, const std::string& started,
                   double elapsed) {
  WriteFile(dir / "trace.csv", outcome.trace_csv);
  WriteFile(dir / "summary.json", outcome.summary.dump(2) + "\n");
  for (const auto& [name, contents] : outcome.extra_files) WriteFile(dir / name, contents);
  std::error_code ec;
  fs::remove(dir / "failures.json", ec);
  if (!outcome.passed()) {
    Json failures = Json::array();
    for (const auto& f : outcome.failures) {
      failures.push_back({{"assertion", f.assertion},
                          {"expected", f.expected},
                          {"observed", f.observed}});
    }
    WriteFile(dir / "failures.json", failures.dump(2) + "\n");
  }
  const Json meta = {{"tool", "softpref"},
                     {"version", kVersion},
                     {"started_at", started},
                     {"finished_at", IsoTime(std::chrono::system_clock::now())},
                     {"elapsed_seconds", elapsed},
                     {"config", config}};
  WriteFile(dir / "meta.json", meta.dump(2) + "\n");
}

// Numeric directory names sort numerically, others lexicographically.
bool SeedLess(const fs::path& a, const fs::path& b) {
  const std::string sa = a.filename().string();
  const std::string sb = b.filename().string();
  const bool na = !sa.empty() && std::all_of(sa.begin(), sa.end(), ::isdigit);
  const bool nb = !sb.empty() && std::all_of(sb.begin(), sb.end(), ::isdigit);
  if (na && nb && sa.size() != sb.size()) return sa.size() < sb.size();
  return sa < sb;
}

std::vector<fs::path> SortedSubdirs(const fs::path& dir) {
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_directory()) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::string CsvCell(const Json& v) {
  if (v.is_null()) return "";
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_number_integer()) return std::to_string(v.get<std::int64_t>());
  if (v.is_number()) return FormatCsv(v.get<double>());
  return v.get<std::string>();
}

}  // namespace

fs::path DefaultOutDir() {
  if (const char* env = std::getenv(kOutDirEnv); env != nullptr && *env != '\0') {
    return env;
  }
  return "results";
}

fs::path RunDirectory(const fs::path& out_dir, const std::string& experiment,
                      std::uint64_t seed) {
  return out_dir / experiment / std::to_string(seed);
}

std::vector<std::pair<std::string, std::string>> ParseOverrides(
    const std::vector<std::string>& args) {
  std::vector<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < args.size(); ++i) {
    const std::string& arg = args[i];
    if (arg.rfind("--", 0) != 0 || arg.size() <= 2) {
      Fail(ErrorCode::kInvalidConfig, "unexpected argument '" + arg + "'");
    }
    const std::string body = arg.substr(2);
    if (const std::size_t eq = body.find('='); eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
    } else if (i + 1 < args.size()) {
      out.emplace_back(body, args[++i]);
    } else {
      Fail(ErrorCode::kInvalidConfig, "override '" + arg + "' has no value");
    }
  }
  return out;
}

int RunOne(const RunRequest& request) {
  const auto started = std::chrono::system_clock::now();
  Json config;
  try {
    if (!IsExperiment(request.experiment)) {
      Fail(ErrorCode::kInvalidConfig, "unknown experiment '" + request.experiment + "'");
    }
    std::optional<Json> file_doc;
    if (request.config_file) {
      try {
        file_doc = ReadJsonFile(*request.config_file);
      } catch (const Error& e) {
        Fail(ErrorCode::kInvalidConfig, e.what());
      }
    }
    config = ResolveConfig(request.experiment, file_doc, request.overrides, request.seed);
  } catch (const Error& e) {
    std::cerr << "softpref: invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  }

  const auto seed = config["seed"].get<std::uint64_t>();
  const fs::path dir = RunDirectory(request.out_dir, request.experiment, seed);
  ExperimentOutcome outcome;
  try {
    outcome = RunExperiment(config, request.jobs);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kInvalidConfig) {
      std::cerr << "softpref: invalid config: " << e.what() << "\n";
      return kExitInvalidConfig;
    }
    std::cerr << "softpref: " << request.experiment << ": runtime fault: " << e.what() << "\n";
    return kExitFault;
  } catch (const std::exception& e) {
    std::cerr << "softpref: " << request.experiment << ": runtime fault: " << e.what() << "\n";
    return kExitFault;
  }
  const double elapsed =
      std::chrono::duration<double>(std::chrono::system_clock::now() - started).count();
  try {
    WriteRunFiles(dir, config, outcome, IsoTime(started), elapsed);
  } catch (const std::exception& e) {
    std::cerr << "softpref: " << e.what() << "\n";
    return kExitFault;
  }
  std::cout << (outcome.passed() ? "PASS " : "FAIL ") << request.experiment
            << " seed=" << seed << " -> " << dir.string() << "\n";
  for (const auto& f : outcome.failures) {
    std::cout << "  " << f.assertion << ": expected " << f.expected << ", observed "
              << FormatShortest(f.observed) << "\n";
  }
  return outcome.passed() ? kExitOk : kExitAssertion;
}

int VerifyAll(const fs::path& out_dir, std::size_t jobs,
              std::optional<std::uint64_t> seed) {
  const auto& names = ExperimentNames();
  std::vector<int> codes(names.size(), kExitOk);
  std::atomic<std::size_t> next{0};
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, names.size());
  auto worker = [&] {
    for (std::size_t i = next++; i < names.size(); i = next++) {
      RunRequest req;
      req.experiment = names[i];
      req.seed = seed;
      req.out_dir = out_dir;
      // Parallelism is across experiments when jobs > 1.
      req.jobs = 1;
      codes[i] = RunOne(req);
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  try {
    EmitSummary(out_dir);
  } catch (const std::exception& e) {
    std::cerr << "softpref: summary: " << e.what() << "\n";
    return kExitFault;
  }
  int worst = kExitOk;
  for (int c : codes) {
    if (c == kExitFault || c == kExitInvalidConfig) return c;
    worst = std::max(worst, c);
  }
  return worst;
}

SummaryTable EmitSummary(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    Fail(ErrorCode::kEmptyDirectory, dir.string() + " is not a directory");
  }
  SummaryTable table;
  table.csv = "experiment,seed,label,alpha,final_distance,iterations,pass\n";
  Json rows = Json::array();
  std::size_t files = 0;
  for (const fs::path& exp_dir : SortedSubdirs(dir)) {
    std::vector<fs::path> seeds = SortedSubdirs(exp_dir);
    std::sort(seeds.begin(), seeds.end(), SeedLess);
    for (const fs::path& seed_dir : seeds) {
      const fs::path file = seed_dir / "summary.json";
      if (!fs::exists(file)) continue;
      ++files;
      const Json doc = ReadJsonFile(file);
      try {
        const std::string experiment = doc.at("experiment").get<std::string>();
        const auto seed = doc.at("seed").get<std::uint64_t>();
        for (const Json& r : doc.at("rows")) {
          Json row = {{"experiment", experiment},
                      {"seed", seed},
                      {"label", r.at("label").get<std::string>()},
                      {"alpha", r.at("alpha")},
                      {"final_distance", r.at("final_distance")},
                      {"iterations", r.at("iterations")},
                      {"pass", r.at("pass").get<bool>()}};
          for (const auto& [key, value] : row.items()) {
            if (key != "experiment") table.csv += ',';
            table.csv += CsvCell(value);
          }
          table.csv += '\n';
          rows.push_back(std::move(row));
        }
      } catch (const Json::exception& e) {
        Fail(ErrorCode::kParseError, file.string() + ": " + e.what());
      }
    }
  }
  if (files == 0) {
    Fail(ErrorCode::kEmptyDirectory, "no summary.json files under " + dir.string());
  }
  table.json = Json{{"rows", std::move(rows)}};
  WriteFile(dir / "summary.csv", table.csv);
  WriteFile(dir / "summary.json", table.json.dump(2) + "\n");
  return table;
}

int Main(int argc, char** argv) {
  CLI::App app{"Softmax preference optimization toolkit: experiments and checks"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  RunRequest run;
  std::uint64_t seed = 0;
  std::string config_file;
  std::string out_dir;
  std::size_t jobs = 1;
  CLI::App* run_cmd = app.add_subcommand("run", "Run one registered experiment");
  run_cmd->add_option("experiment", run.experiment, "Experiment name")->required();
  run_cmd->add_option("--config", config_file, "JSON config file");
  auto* seed_opt = run_cmd->add_option("--seed", seed, "Seed");
  run_cmd->add_option("--out", out_dir, "Output directory");
  run_cmd->add_option("--jobs", jobs, "Worker threads for multi-start runs");
  run_cmd->allow_extras();
  run_cmd->footer("Any config field can be overridden as --field.path=value.");

  CLI::App* verify_cmd = app.add_subcommand("verify-all", "Run every experiment");
  std::string verify_out;
  std::size_t verify_jobs = 1;
  std::uint64_t verify_seed = 0;
  verify_cmd->add_option("--out", verify_out, "Output directory");
  verify_cmd->add_option("--jobs", verify_jobs, "Experiments run concurrently");
  auto* verify_seed_opt = verify_cmd->add_option("--seed", verify_seed, "Seed for all");

  CLI::App* summarize_cmd = app.add_subcommand("summarize", "Consolidate a results directory");
  std::string summarize_dir;
  summarize_cmd->add_option("dir", summarize_dir, "Results directory")->required();

  CLI::App* list_cmd = app.add_subcommand("list", "List registered experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalidConfig;
  }

  if (*list_cmd) {
    for (const auto& name : ExperimentNames()) std::cout << name << "\n";
    return kExitOk;
  }
  if (*run_cmd) {
    try {
      run.overrides = ParseOverrides(run_cmd->remaining());
    } catch (const Error& e) {
      std::cerr << "softpref: " << e.what() << "\n";
      return kExitInvalidConfig;
    }
    if (!config_file.empty()) run.config_file = config_file;
    if (*seed_opt) run.seed = seed;
    run.out_dir = out_dir.empty() ? DefaultOutDir() : fs::path(out_dir);
    run.jobs = std::max<std::size_t>(jobs, 1);
    return RunOne(run);
  }
  if (*verify_cmd) {
    const fs::path dir = verify_out.empty() ? DefaultOutDir() : fs::path(verify_out);
    std::optional<std::uint64_t> s;
    if (*verify_seed_opt) s = verify_seed;
    return VerifyAll(dir, std::max<std::size_t>(verify_jobs, 1), s);
  }
  if (*summarize_cmd) {
    try {
      std::cout << EmitSummary(summarize_dir).csv;
      return kExitOk;
    } catch (const Error& e) {
      std::cerr << "softpref: " << e.what() << "\n";
      return e.code() == ErrorCode::kEmptyDirectory ? kExitInvalidConfig : kExitFault;
    }
  }
  return kExitInvalidConfig;
}

}  // namespace softpref::cli
