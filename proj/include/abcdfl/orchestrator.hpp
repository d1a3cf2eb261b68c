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
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "abcdfl/config.hpp"
#include "abcdfl/consensus.hpp"
#include "abcdfl/core.hpp"
#include "abcdfl/data.hpp"
#include "abcdfl/incentives.hpp"

namespace abcdfl {

// The oracles computed different Stage-II results. CLI exit code 4.
class OracleDisagreement : public Error {
 public:
  using Error::Error;
};

struct RunOptions {
  // Empty disables file output.
  std::filesystem::path out_dir;
  // Test hook: perturbs this oracle's Stage-II result.
  int faulty_oracle = -1;
  bool record_consensus_messages = false;
};

struct GroupReport {
  int cs = 0;
  std::string im_cid;
  int cluster_label = kNoise;
  bool in_majority = false;
  double score_delta = 0.0;
  bool malicious = false;
  int present = 0;
  // No member was present; the CS submitted a zero update.
  bool skipped = false;
};

struct RoundReport {
  int round = 0;  // 1-based
  std::vector<GroupReport> groups;
  std::string gm_cid;
  TaskMetrics metrics;
  std::int64_t consensus_ticks = 0;
  bool stalled = false;
  std::vector<UpdateDelta> ims;
  UpdateDelta gm_delta;
};

struct AisBreakdown {
  double ais_a = 0.0;
  double ais_c = 0.0;
  double ais = 0.0;
};

struct ExperimentResult {
  std::string config_digest;
  ExperimentConfig config;
  std::vector<RoundReport> rounds;
  TaskMetrics final_metrics;
  std::optional<double> asr;
  std::vector<IncentiveRow> incentives;
  std::vector<double> ledger_rewards;
  std::vector<double> oracle_rewards;
  bool consensus_safe = true;
  bool consensus_live = true;
  bool stalled = false;
  std::map<std::string, std::uint64_t> tx_counts;       // for config.mode
  std::map<std::string, std::uint64_t> tx_counts_abc;
  std::map<std::string, std::uint64_t> tx_counts_pure;
  std::string ledger_digest;
  std::string results_csv;
  std::string events_jsonl;
  std::string incentives_csv;
  std::vector<Trace> consensus_traces;
  // Fraction of (round, malicious group) pairs left out of the majority cluster.
  double malicious_flag_rate = 0.0;
  std::string digest;
};

// Runs one learning task end to end. A stalled consensus segment stops the
// run and sets `stalled`.
ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// F1 drop plus relative RMSE rise (RMSE clamped at 10), clamped to [0, 1].
AisBreakdown compute_ais(const TaskMetrics& benign, const TaskMetrics& attack);
double compute_asr(std::span<const int> predictions, std::span<const int> truths,
                   std::span<const std::size_t> backdoored);
// ASR of a model on triggered copies of the test samples whose label differs
// from the attack target.
double backdoor_asr(const MultiTaskModel& model, const Dataset& test, const AttackParams& params);

// Same config with the adversary disabled.
ExperimentConfig benign_counterpart(const ExperimentConfig& config);

inline const std::vector<std::uint64_t> kSweepSeeds = {42, 70, 84};

struct SweepCell {
  std::string axis;
  std::string value;
  std::uint64_t seed = 0;
  ExperimentResult result;
  std::optional<AisBreakdown> ais;
};

// Axes: attack, aggregator, malicious_fraction, m, dirichlet_alpha, beta,
// kappa, min_pts, sigma, clip, churn, evs, group_size, rounds.
ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis, const std::string& value);
std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                 const std::vector<std::string>& values,
                                 const std::vector<std::uint64_t>& seeds = kSweepSeeds);
// Per-cell rows followed by mean/std rows per value.
std::string sweep_table_csv(const std::vector<SweepCell>& cells);

// Max AIS over seeds of `config` versus its benign counterpart.
struct AttackImpact {
  std::vector<AisBreakdown> per_seed;
  std::vector<ExperimentResult> attacked;
  std::vector<ExperimentResult> benign;
  double max_ais = 0.0;
};
AttackImpact measure_attack_impact(const ExperimentConfig& config,
                                   const std::vector<std::uint64_t>& seeds = kSweepSeeds);

struct FairnessStats {
  std::vector<double> weights;
  std::vector<double> selection_frequency;
  std::vector<double> leader_frequency;
  double max_selection_deviation = 0.0;
  double max_leader_deviation = 0.0;
  int proofs_verified = 0;
  int tampered_accepted = 0;
  int epochs = 0;
};
FairnessStats committee_fairness(const std::vector<double>& weights, int epochs, std::uint64_t seed);

struct ConsensusBenchReport {
  int runs = 0;
  int safety_violations = 0;
  int liveness_failures = 0;
  double mean_views_per_block = 0.0;
  int max_views_per_block = 0;
  // Views per block over honest synchronous runs; all ones when healthy.
  std::vector<int> honest_views;
  std::map<std::string, int> runs_by_behavior;
  FairnessStats fairness;
};
ConsensusBenchReport consensus_bench(const ExperimentConfig& config, int runs, std::uint64_t seed);
std::string bench_report_json(const ConsensusBenchReport& report);

// Writes results.csv, events.jsonl, incentives.csv, consensus_trace.jsonl
// and summary.json.
void write_experiment_outputs(const ExperimentResult& result, const std::filesystem::path& dir);
std::string summary_json(const ExperimentResult& result);

}  // namespace abcdfl
