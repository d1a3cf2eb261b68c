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
#include <string>
#include <vector>

namespace abcdfl {

enum class AggregatorKind { kFleca, kFedAvg, kTrimmedMean, kMultiKrum, kNormClip, kWeakDp, kFlameLite };
enum class FlecaVariant { kV1, kV2 };
enum class AttackKind { kNone, kGauss, kLabelFlip, kFeature, kTrimAttack, kKrumAttack, kAdaptiveMinMax, kBadnets, kScaling };
enum class AccountingMode { kAbcDfl, kPureBfl };

std::string to_string(AggregatorKind kind);
std::string to_string(FlecaVariant variant);
std::string to_string(AttackKind kind);
std::string to_string(AccountingMode mode);
AggregatorKind parse_aggregator(const std::string& name);
FlecaVariant parse_variant(const std::string& name);
AttackKind parse_attack(const std::string& name);
AccountingMode parse_mode(const std::string& name);

struct DataConfig {
  int samples = 8400;
  double test_fraction = 0.2;
  double dirichlet_alpha = 0.8;
  // IID splits ignore dirichlet_alpha and deal samples uniformly.
  bool iid = false;
};

struct TrainConfig {
  int hidden = 16;
  int epochs = 5;
  int batch = 32;
  double lr = 0.05;
  double mu = 0.2;
};

struct FilterSettings {
  double beta = 0.3;
  double kappa = 1.0;
  double eps_stability = 1e-8;
  // Entries ending in ".*" select every layer with that prefix as one group.
  std::vector<std::string> monitored_layers = {"cls_head.*", "reg_head.*"};
  int intra_min_pts = 3;
  int inter_min_pts = 3;
  FlecaVariant variant = FlecaVariant::kV1;
  // Stage-II distances over the monitored heads (true) or the full model.
  bool stage2_monitored_only = true;
};

struct DpSettings {
  bool enabled = true;
  double clip = 4.0;
  double sigma = 0.005;
};

struct AttackParams {
  double gauss_std_multiplier = 100.0;
  double flip_rate = 1.0;
  int feature_index = 0;
  double feature_shift = 4.0;
  double feature_rate = 1.0;
  double trim_epsilon = 1.0;
  double trigger_offset = 3.0;
  double trigger_rate = 0.5;
  int target_label = 0;
  // 0 selects the group size k.
  double scale_gamma = 0.0;
  int adaptive_iterations = 20;
};

struct AdversaryConfig {
  double malicious_group_fraction = 0.0;
  double malicious_ev_fraction = 0.0;
  AttackKind kind = AttackKind::kNone;
  AttackParams params;
};

struct ConsensusSettings {
  // 0 selects one validator per charging station.
  int validators = 0;
  // -1 selects floor((n - 1) / 3).
  int f = -1;
  // 0 selects the validator count.
  int committee_size = 0;
  int epoch_length = 10;
  int delta = 10;
  int gst = 0;
  bool rotation = true;
  int block_tx_limit = 200;
  int max_views = 10;
};

struct IncentiveSettings {
  double eta = 1.0;
  double alpha_dist = 1.0;
  double reward_b = 1.0;
  double budget = 1000.0;
  double deposit = 100.0;
  double gompertz_a = 0.1;
  double gompertz_b = 5.0;
  double gompertz_c = 0.5;
  double slash_threshold = 0.2;
  double initial_reputation = 0.5;
};

struct BaselineSettings {
  double trim_fraction = 0.1;
  // -1 selects the largest f with n >= 2f + 3.
  int krum_f = -1;
  // -1 selects n - f.
  int krum_m = -1;
  double norm_bound = 1.0;
  double weak_dp_sigma = 0.01;
  double flame_lambda = 0.001;
};

struct ExperimentConfig {
  int evs = 42;
  int group_size = 7;
  int rounds = 50;
  std::uint64_t seed = 42;
  DataConfig data;
  TrainConfig train;
  FilterSettings filter;
  DpSettings dp;
  AdversaryConfig adversary;
  ConsensusSettings consensus;
  IncentiveSettings incentives;
  BaselineSettings baseline;
  double churn = 0.0;
  AggregatorKind aggregator = AggregatorKind::kFleca;
  int oracles = 3;
  AccountingMode mode = AccountingMode::kAbcDfl;

  int groups() const { return group_size > 0 ? evs / group_size : 0; }
  // Throws ConfigError on any violated invariant.
  void validate() const;
};

// Parses a JSON document. Unknown keys and type mismatches are ConfigErrors.
ExperimentConfig parse_config(const std::string& json_text);
ExperimentConfig load_config(const std::filesystem::path& path);
// Canonical JSON (sorted keys, every field present).
std::string config_to_json(const ExperimentConfig& config);
std::string config_digest(const ExperimentConfig& config);

}  // namespace abcdfl
