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

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "abcdfl/clustering.hpp"
#include "abcdfl/config.hpp"

namespace abcdfl {

// eta * (|C_i| / sum_j |C_j|) * exp(-alpha_dist * d).
double score_delta(std::span<const std::size_t> cluster_sizes, std::size_t own_cluster_idx, double dist_to_centroid,
                   double eta, double alpha_dist);
double apply_score(double s_old, double delta, bool in_majority);
std::vector<double> normalize_rewards(std::span<const double> counts, double reward_b, double budget);
double gompertz(double s, double b, double c);
double gompertz_reputation(double r_old, double s, double a, double b, double c);

struct CsIncentive {
  double score = 0.0;
  double reputation = 0.5;
  double cumulative_reward = 0.0;
  int majority_count = 0;
  int rounds = 0;
  double deposit = 0.0;
  bool slashed = false;
};

struct RoundScoring {
  std::vector<double> deltas;
  std::vector<bool> in_majority;
};

struct TaskSettlement {
  std::vector<double> rewards;
  std::vector<double> reputations;
  std::vector<double> returned_deposits;
  std::vector<double> slashed_deposits;
};

struct IncentiveRow {
  int task = 0;
  int round = 0;
  int cs_id = 0;
  double score = 0.0;
  double reputation = 0.0;
  double reward = 0.0;
};

class IncentiveEngine {
 public:
  IncentiveEngine(const IncentiveSettings& settings, int cs_count);

  // Scores one round from the Stage-II clustering of the submitted IMs.
  // `participants` maps point index -> CS id; `points` are the clustered
  // vectors used for the centroid distance.
  RoundScoring score_round(const ClusterLabels& labels, const std::vector<Vector>& points,
                           std::span<const int> participants);
  // Pays rewards, updates reputations, settles deposits and starts a new task.
  TaskSettlement settle_task();

  // Sampling weights for future selection, proportional to reputation.
  std::vector<double> selection_probabilities() const;

  const std::vector<CsIncentive>& state() const { return cs_; }
  const std::vector<IncentiveRow>& history() const { return history_; }
  double treasury() const { return treasury_; }
  int task() const { return task_; }
  void lock_deposits();

  void write_csv(const std::filesystem::path& path) const;

 private:
  IncentiveSettings settings_;
  std::vector<CsIncentive> cs_;
  std::vector<IncentiveRow> history_;
  double treasury_ = 0.0;
  int task_ = 0;
  int round_ = 0;
};

// Rounds of Stage-II scoring with synthetic IM positions: honest CSs sit in
// one tight blob, intermittent CSs leave it on alternate rounds, malicious
// CSs always sit far away.
struct ScenarioOutcome {
  std::vector<std::string> roles;
  std::vector<double> cumulative_rewards;
  std::vector<std::vector<double>> reputation_by_task;
  std::vector<double> reward_sums;
  IncentiveEngine engine;
};

ScenarioOutcome run_incentive_scenario(const IncentiveSettings& settings, int tasks, int rounds_per_task,
                                       int honest, int intermittent, int malicious, std::uint64_t seed,
                                       int min_pts = 3);

}  // namespace abcdfl
