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

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "abcdfl/clustering.hpp"
#include "abcdfl/config.hpp"
#include "abcdfl/core.hpp"

namespace abcdfl {

struct FilterConfig {
  double beta = 0.3;
  double kappa = 1.0;
  double eps_stability = 1e-8;
  std::vector<std::string> monitored_layers = {"cls_head.*", "reg_head.*"};

  static FilterConfig from(const FilterSettings& s);
  void validate() const;
};

// Resolves monitored entries against a schema. "prefix.*" groups every layer
// starting with "prefix."; a plain name is a group of its own.
std::vector<std::vector<std::string>> monitored_groups(const UpdateDelta& schema,
                                                       const std::vector<std::string>& monitored);
std::set<std::string> monitored_layer_set(const UpdateDelta& schema, const std::vector<std::string>& monitored);

// s_k = max over monitored groups of ||n_k - ref|| / (||ref|| + eps).
std::vector<double> similarity_scores(const UpdateDelta& reference, std::span<const UpdateDelta> neighbors,
                                      const FilterConfig& cfg);

// (median + beta * MAD) / (1 + kappa * t / T).
double adaptive_threshold(std::span<const double> scores, double beta, double kappa, const RoundClock& clock);

struct AcceptanceRecord {
  int ev_id = 0;
  std::set<int> accepted_ids;
  std::map<int, double> scores;
  double threshold = 0.0;
};

struct IdentifiedUpdate {
  int ev_id = 0;
  UpdateDelta delta;
};

struct FilterResult {
  UpdateDelta aggregate;
  AcceptanceRecord record;
};

FilterResult ev_filter_aggregate(const IdentifiedUpdate& own, std::span<const IdentifiedUpdate> neighbors,
                                 const FilterConfig& cfg, const RoundClock& clock);

// Ids accepted by more than half of the records, or the most frequent ids.
std::vector<int> majority_vote_ids(std::span<const AcceptanceRecord> records);
UpdateDelta majority_vote_aggregate(std::span<const AcceptanceRecord> records,
                                    const std::map<int, UpdateDelta>& models);

struct ClusterAggregate {
  UpdateDelta aggregate;
  ClusterLabels labels;
  std::vector<std::size_t> members;
};

// HDBSCAN over the monitored layers (or the full model when `monitored` is
// empty), then the uniform mean of the largest cluster's full updates.
ClusterAggregate cluster_aggregate_detailed(std::span<const UpdateDelta> updates, int min_pts,
                                            const std::vector<std::string>& monitored,
                                            Metric metric = Metric::kEuclidean);
UpdateDelta cluster_aggregate(std::span<const UpdateDelta> updates, int min_pts,
                              const std::vector<std::string>& monitored);

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

struct BaselineParams {
  // -1 selects the default for the input size.
  int trim_count = -1;
  double trim_fraction = 0.1;
  int krum_f = -1;
  int krum_m = -1;
  double norm_bound = 1.0;
  double weak_dp_sigma = 0.01;
  double flame_lambda = 0.001;

  static BaselineParams from(const BaselineSettings& s);
};

UpdateDelta fedavg(std::span<const UpdateDelta> updates);
UpdateDelta trimmed_mean(std::span<const UpdateDelta> updates, int b);
int default_trim_count(std::size_t n, double fraction);
// Sum of squared distances to the n - f - 2 nearest other updates.
std::vector<double> krum_scores(std::span<const UpdateDelta> updates, int f);
std::vector<std::size_t> multi_krum_select(std::span<const UpdateDelta> updates, int f, int m);
UpdateDelta multi_krum(std::span<const UpdateDelta> updates, int f, int m);
int default_krum_f(std::size_t n);
UpdateDelta norm_clip(std::span<const UpdateDelta> updates, double bound);
UpdateDelta weak_dp(std::span<const UpdateDelta> updates, double bound, double sigma, SeededRng& rng);
UpdateDelta flame_lite(std::span<const UpdateDelta> updates, double lambda, SeededRng& rng);

UpdateDelta baseline_aggregate(AggregatorKind kind, std::span<const UpdateDelta> updates, const BaselineParams& params,
                               SeededRng& rng);

}  // namespace abcdfl
