/*
 * Copyright 2026 The ABC-DFL Simulator Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
// Batch command-line front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "abcdfl/config.hpp"
#include "abcdfl/consensus.hpp"
#include "abcdfl/core.hpp"
#include "abcdfl/orchestrator.hpp"

namespace fs = std::filesystem;
using abcdfl::ExperimentConfig;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitStalled = 3;
constexpr int kExitOracle = 4;

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string mode;
  std::string aggregator;
  std::string attack;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config_path, "Experiment config (JSON)");
  cmd->add_option("--seed", flags.seed, "Override the config seed");
  cmd->add_option("--out", flags.out_dir, "Output directory");
  cmd->add_option("--mode", flags.mode, "Accounting mode: abc_dfl or pure_bfl");
  cmd->add_option("--aggregator", flags.aggregator, "Override the aggregator");
  cmd->add_option("--attack", flags.attack, "Override the attack kind");
}

ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig c = flags.config_path.empty() ? ExperimentConfig{} : abcdfl::load_config(flags.config_path);
  if (flags.seed) c.seed = *flags.seed;
  if (!flags.mode.empty()) c.mode = abcdfl::parse_mode(flags.mode);
  if (!flags.aggregator.empty()) c.aggregator = abcdfl::parse_aggregator(flags.aggregator);
  if (!flags.attack.empty()) c.adversary.kind = abcdfl::parse_attack(flags.attack);
  c.validate();
  return c;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw abcdfl::Error("cannot write " + path.string());
  out << text;
}

int cmd_run(const CommonFlags& flags) {
  const ExperimentConfig c = resolve_config(flags);
  abcdfl::RunOptions opts;
  opts.record_consensus_messages = !flags.out_dir.empty();
  const auto result = abcdfl::run_experiment(c, opts);
  if (!flags.out_dir.empty()) abcdfl::write_experiment_outputs(result, flags.out_dir);
  std::cout << abcdfl::summary_json(result) << "\n";
  return result.stalled ? kExitStalled : kExitOk;
}

int cmd_sweep(const CommonFlags& flags, const std::string& axis, const std::string& values,
              const std::string& seeds_text) {
  const ExperimentConfig c = resolve_config(flags);
  std::vector<std::uint64_t> seeds = abcdfl::kSweepSeeds;
  if (!seeds_text.empty()) {
    seeds.clear();
    for (const auto& s : split_list(seeds_text)) seeds.push_back(std::stoull(s));
  }
  const auto cells = abcdfl::run_sweep(c, axis, split_list(values), seeds);
  const std::string table = abcdfl::sweep_table_csv(cells);
  if (flags.out_dir.empty()) {
    std::cout << table;
  } else {
    write_text(fs::path(flags.out_dir) / "sweep.csv", table);
  }
  for (const auto& cell : cells) {
    if (cell.result.stalled) return kExitStalled;
  }
  return kExitOk;
}

int cmd_bench(const CommonFlags& flags, int runs) {
  const ExperimentConfig c = resolve_config(flags);
  const auto report = abcdfl::consensus_bench(c, runs, c.seed);
  const std::string text = abcdfl::bench_report_json(report);
  if (!flags.out_dir.empty()) write_text(fs::path(flags.out_dir) / "consensus_bench.json", text + "\n");
  std::cout << text << "\n";
  return (report.safety_violations == 0 && report.liveness_failures == 0) ? kExitOk : kExitFailure;
}

int cmd_replay(const std::string& trace_path) {
  const auto traces = abcdfl::read_traces_jsonl(trace_path);
  json out = json::array();
  bool ok = true;
  for (const auto& t : traces) {
    const bool safe = abcdfl::check_safety(t);
    const bool live = abcdfl::check_liveness(t, t.gst);
    ok = ok && safe && live;
    out.push_back({{"n", t.n}, {"f", t.f}, {"safe", safe}, {"live", live}, {"stalled", t.stalled},
                   {"blocks", t.chain.size()}});
  }
  std::cout << out.dump(2) << "\n";
  return ok ? kExitOk : kExitFailure;
}

json load_summary(const fs::path& path) {
  const fs::path file = fs::is_directory(path) ? path / "summary.json" : path;
  std::ifstream in(file);
  if (!in) throw abcdfl::ConfigError("report: cannot read " + file.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw abcdfl::ConfigError("report: " + file.string() + ": " + e.what());
  }
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& format, const std::string& out_path) {
  std::vector<json> rows;
  for (const auto& in : inputs) {
    json s = load_summary(in);
    s["source"] = in;
    rows.push_back(std::move(s));
  }
  std::string text;
  if (format == "json") {
    text = json(rows).dump(2) + "\n";
  } else {
    std::ostringstream csv;
    csv << "source,seed,aggregator,attack,mode,rounds,f1,rmse,asr,safe,live,stalled,digest\n";
    for (const auto& r : rows) {
      csv << r.value("source", "") << ',' << r.value("seed", 0ULL) << ',' << r.value("aggregator", "") << ','
          << r.value("attack", "") << ',' << r.value("mode", "") << ',' << r.value("rounds_completed", 0) << ','
          << r["final"].value("f1", 0.0) << ',' << r["final"].value("rmse", 0.0) << ','
          << (r.contains("asr") && !r["asr"].is_null() ? std::to_string(r["asr"].get<double>()) : "") << ','
          << r["consensus"].value("safe", false) << ',' << r["consensus"].value("live", false) << ','
          << r["consensus"].value("stalled", false) << ',' << r.value("digest", "") << '\n';
    }
    text = csv.str();
  }
  if (out_path.empty()) {
    std::cout << text;
  } else {
    write_text(out_path, text);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ABC-DFL simulator"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  auto* run = app.add_subcommand("run", "Run a single experiment");
  add_common(run, run_flags);

  CommonFlags sweep_flags;
  std::string axis;
  std::string values;
  std::string seeds;
  auto* sweep = app.add_subcommand("sweep", "Sweep one config axis over seeds");
  add_common(sweep, sweep_flags);
  sweep->add_option("--axis", axis, "Axis name")->required();
  sweep->add_option("--values", values, "Comma-separated values");
  sweep->add_option("--seeds", seeds, "Comma-separated seeds (default 42,70,84)");

  CommonFlags bench_flags;
  int runs = 100;
  auto* bench = app.add_subcommand("consensus-bench", "Randomized consensus safety/liveness bench");
  add_common(bench, bench_flags);
  bench->add_option("--runs", runs, "Number of randomized runs")->check(CLI::PositiveNumber);

  std::string trace_path;
  auto* replay = app.add_subcommand("replay", "Re-verify a recorded consensus trace");
  replay->add_option("trace", trace_path, "consensus_trace.jsonl")->required();

  std::vector<std::string> inputs;
  std::string format = "csv";
  std::string report_out;
  auto* report = app.add_subcommand("report", "Summarize stored experiment results");
  report->add_option("inputs", inputs, "summary.json files or output directories")->required();
  report->add_option("--format", format, "csv or json")->check(CLI::IsMember({"csv", "json"}));
  report->add_option("--out", report_out, "Output file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(run_flags);
    if (*sweep) return cmd_sweep(sweep_flags, axis, values, seeds);
    if (*bench) return cmd_bench(bench_flags, runs);
    if (*replay) return cmd_replay(trace_path);
    if (*report) return cmd_report(inputs, format, report_out);
  } catch (const abcdfl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const abcdfl::OracleDisagreement& e) {
    std::cerr << "oracle disagreement: " << e.what() << "\n";
    return kExitOracle;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}
