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
#include "abcdfl/fleca.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "abcdfl/privacy.hpp"

namespace abcdfl {

FilterConfig FilterConfig::from(const FilterSettings& s) {
  FilterConfig c;
  c.beta = s.beta;
  c.kappa = s.kappa;
  c.eps_stability = s.eps_stability;
  c.monitored_layers = s.monitored_layers;
  c.validate();
  return c;
}

void FilterConfig::validate() const {
  if (!(eps_stability > 0.0)) throw ConfigError("filter: eps_stability must be positive");
  if (monitored_layers.empty()) throw ConfigError("filter: monitored_layers must be non-empty");
  if (beta < 0.0 || kappa < 0.0) throw ConfigError("filter: beta and kappa must be nonnegative");
}

std::vector<std::vector<std::string>> monitored_groups(const UpdateDelta& schema,
                                                       const std::vector<std::string>& monitored) {
  std::vector<std::vector<std::string>> groups;
  for (const auto& entry : monitored) {
    std::vector<std::string> group;
    if (entry.size() >= 2 && entry.compare(entry.size() - 2, 2, ".*") == 0) {
      const std::string prefix = entry.substr(0, entry.size() - 1);
      for (const auto& [name, v] : schema.layers) {
        if (name.compare(0, prefix.size(), prefix) == 0) group.push_back(name);
      }
    } else if (schema.layers.count(entry)) {
      group.push_back(entry);
    }
    if (group.empty()) throw ConfigError("monitored layer '" + entry + "' matches nothing");
    groups.push_back(std::move(group));
  }
  return groups;
}

std::set<std::string> monitored_layer_set(const UpdateDelta& schema, const std::vector<std::string>& monitored) {
  std::set<std::string> out;
  for (const auto& g : monitored_groups(schema, monitored)) out.insert(g.begin(), g.end());
  return out;
}

std::vector<double> similarity_scores(const UpdateDelta& reference, std::span<const UpdateDelta> neighbors,
                                      const FilterConfig& cfg) {
  const auto groups = monitored_groups(reference, cfg.monitored_layers);
  std::vector<Vector> ref_parts;
  std::vector<double> ref_norms;
  for (const auto& g : groups) {
    ref_parts.push_back(flatten(reference, std::set<std::string>(g.begin(), g.end())));
    ref_norms.push_back(l2_norm(ref_parts.back()));
  }
  std::vector<double> scores;
  scores.reserve(neighbors.size());
  for (const auto& nb : neighbors) {
    if (!same_schema(reference, nb)) throw AggregationError("similarity_scores: schema mismatch");
    double s = 0.0;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      const Vector part = flatten(nb, std::set<std::string>(groups[gi].begin(), groups[gi].end()));
      s = std::max(s, l2_distance(part, ref_parts[gi]) / (ref_norms[gi] + cfg.eps_stability));
    }
    scores.push_back(s);
  }
  return scores;
}

double adaptive_threshold(std::span<const double> scores, double beta, double kappa, const RoundClock& clock) {
  if (scores.empty()) throw AggregationError("adaptive_threshold: no scores");
  std::vector<double> v(scores.begin(), scores.end());
  return (median(v) + beta * median_absolute_deviation(v)) / (1.0 + kappa * clock.progress());
}

FilterResult ev_filter_aggregate(const IdentifiedUpdate& own, std::span<const IdentifiedUpdate> neighbors,
                                 const FilterConfig& cfg, const RoundClock& clock) {
  FilterResult out;
  out.record.ev_id = own.ev_id;
  out.record.accepted_ids.insert(own.ev_id);
  std::vector<UpdateDelta> accepted{own.delta};
  if (!neighbors.empty()) {
    std::vector<UpdateDelta> deltas;
    for (const auto& nb : neighbors) deltas.push_back(nb.delta);
    const auto scores = similarity_scores(own.delta, deltas, cfg);
    out.record.threshold = adaptive_threshold(scores, cfg.beta, cfg.kappa, clock);
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      out.record.scores[neighbors[i].ev_id] = scores[i];
      if (scores[i] <= out.record.threshold) {
        out.record.accepted_ids.insert(neighbors[i].ev_id);
        accepted.push_back(neighbors[i].delta);
      }
    }
  }
  out.aggregate = mean(accepted);
  out.aggregate.round = own.delta.round;
  return out;
}

std::vector<int> majority_vote_ids(std::span<const AcceptanceRecord> records) {
  if (records.empty()) throw AggregationError("majority_vote: no records");
  std::map<int, int> counts;
  for (const auto& r : records) {
    for (int id : r.accepted_ids) counts[id]++;
  }
  std::vector<int> strict;
  int best = 0;
  for (const auto& [id, c] : counts) {
    if (2 * c > static_cast<int>(records.size())) strict.push_back(id);
    best = std::max(best, c);
  }
  if (!strict.empty()) return strict;
  std::vector<int> fallback;
  for (const auto& [id, c] : counts) {
    if (c == best) fallback.push_back(id);
  }
  return fallback;
}

UpdateDelta majority_vote_aggregate(std::span<const AcceptanceRecord> records,
                                    const std::map<int, UpdateDelta>& models) {
  std::vector<UpdateDelta> chosen;
  for (int id : majority_vote_ids(records)) {
    auto it = models.find(id);
    if (it == models.end()) throw AggregationError("majority_vote: missing model for id " + std::to_string(id));
    chosen.push_back(it->second);
  }
  return mean(chosen);
}

ClusterAggregate cluster_aggregate_detailed(std::span<const UpdateDelta> updates, int min_pts,
                                            const std::vector<std::string>& monitored, Metric metric) {
  if (updates.empty()) throw AggregationError("cluster_aggregate: no updates");
  ClusterAggregate out;
  if (updates.size() == 1) {
    out.aggregate = updates.front();
    out.labels.labels = {kNoise};
    out.members = {0};
    return out;
  }
  std::vector<Vector> points;
  if (monitored.empty()) {
    for (const auto& u : updates) points.push_back(flatten(u));
  } else {
    const auto subset = monitored_layer_set(updates.front(), monitored);
    for (const auto& u : updates) points.push_back(flatten(u, subset));
  }
  out.labels = hdbscan(pairwise_distances(points, metric), min_pts);
  out.members = largest_non_noise_cluster(out.labels);
  std::vector<UpdateDelta> chosen;
  for (std::size_t i : out.members) chosen.push_back(updates[i]);
  out.aggregate = mean(chosen);
  out.aggregate.round = updates.front().round;
  return out;
}

UpdateDelta cluster_aggregate(std::span<const UpdateDelta> updates, int min_pts,
                              const std::vector<std::string>& monitored) {
  return cluster_aggregate_detailed(updates, min_pts, monitored).aggregate;
}

BaselineParams BaselineParams::from(const BaselineSettings& s) {
  BaselineParams p;
  p.trim_fraction = s.trim_fraction;
  p.krum_f = s.krum_f;
  p.krum_m = s.krum_m;
  p.norm_bound = s.norm_bound;
  p.weak_dp_sigma = s.weak_dp_sigma;
  p.flame_lambda = s.flame_lambda;
  return p;
}

UpdateDelta fedavg(std::span<const UpdateDelta> updates) { return mean(updates); }

int default_trim_count(std::size_t n, double fraction) {
  if (n < 3) return 0;
  int b = std::max(1, static_cast<int>(std::floor(fraction * static_cast<double>(n))));
  while (2 * b >= static_cast<int>(n)) --b;
  return b;
}

UpdateDelta trimmed_mean(std::span<const UpdateDelta> updates, int b) {
  if (updates.empty()) throw AggregationError("trimmed_mean: no updates");
  const auto n = static_cast<int>(updates.size());
  if (b < 0 || 2 * b >= n) throw ConfigError("trimmed_mean: need 0 <= 2b < n");
  UpdateDelta out = zeros_like(updates.front());
  std::vector<double> column(updates.size());
  for (auto& [name, v] : out.layers) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      for (std::size_t k = 0; k < updates.size(); ++k) column[k] = updates[k].layers.at(name)[i];
      std::sort(column.begin(), column.end());
      double sum = 0.0;
      for (int k = b; k < n - b; ++k) sum += column[static_cast<std::size_t>(k)];
      v[i] = sum / static_cast<double>(n - 2 * b);
    }
  }
  out.round = updates.front().round;
  return out;
}

int default_krum_f(std::size_t n) { return n < 3 ? -1 : static_cast<int>((n - 3) / 2); }

std::vector<double> krum_scores(std::span<const UpdateDelta> updates, int f) {
  const auto n = static_cast<int>(updates.size());
  if (f < 0 || n < 2 * f + 3) throw ConfigError("multi_krum: need n >= 2f + 3");
  std::vector<Vector> flat;
  for (const auto& u : updates) flat.push_back(flatten(u));
  std::vector<double> scores(updates.size(), 0.0);
  const std::size_t nearest = static_cast<std::size_t>(n - f - 2);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    std::vector<double> d;
    for (std::size_t j = 0; j < flat.size(); ++j) {
      if (i == j) continue;
      const double dist = l2_distance(flat[i], flat[j]);
      d.push_back(dist * dist);
    }
    std::sort(d.begin(), d.end());
    scores[i] = std::accumulate(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(nearest), 0.0);
  }
  return scores;
}

std::vector<std::size_t> multi_krum_select(std::span<const UpdateDelta> updates, int f, int m) {
  const auto scores = krum_scores(updates, f);
  const auto n = static_cast<int>(updates.size());
  if (m < 1 || m > n) throw ConfigError("multi_krum: need 1 <= m <= n");
  std::vector<std::size_t> order(updates.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(static_cast<std::size_t>(m));
  std::sort(order.begin(), order.end());
  return order;
}

UpdateDelta multi_krum(std::span<const UpdateDelta> updates, int f, int m) {
  std::vector<UpdateDelta> chosen;
  for (std::size_t i : multi_krum_select(updates, f, m)) chosen.push_back(updates[i]);
  return mean(chosen);
}

UpdateDelta norm_clip(std::span<const UpdateDelta> updates, double bound) {
  if (!(bound > 0.0)) throw ConfigError("norm_clip: bound must be positive");
  std::vector<UpdateDelta> clipped;
  for (const auto& u : updates) clipped.push_back(clip_update(u, bound));
  return mean(clipped);
}

UpdateDelta weak_dp(std::span<const UpdateDelta> updates, double bound, double sigma, SeededRng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("weak_dp: sigma must be nonnegative");
  return add_gaussian_noise(norm_clip(updates, bound), sigma, rng);
}

UpdateDelta flame_lite(std::span<const UpdateDelta> updates, double lambda, SeededRng& rng) {
  if (updates.empty()) throw AggregationError("flame_lite: no updates");
  if (!(lambda >= 0.0)) throw ConfigError("flame_lite: lambda must be nonnegative");
  std::vector<std::size_t> members{0};
  if (updates.size() > 1) {
    std::vector<Vector> flat;
    for (const auto& u : updates) flat.push_back(flatten(u));
    const int min_pts = std::max(2, static_cast<int>(updates.size() / 2) + 1);
    members = largest_non_noise_cluster(hdbscan(pairwise_distances(flat, Metric::kCosine), min_pts));
  }
  std::vector<double> norms;
  for (const auto& u : updates) norms.push_back(l2_norm(flatten(u)));
  const double bound = median(norms);
  std::vector<UpdateDelta> clipped;
  for (std::size_t i : members) {
    clipped.push_back(bound > 0.0 ? clip_update(updates[i], bound) : zeros_like(updates[i]));
  }
  return add_gaussian_noise(mean(clipped), lambda * bound, rng);
}

UpdateDelta baseline_aggregate(AggregatorKind kind, std::span<const UpdateDelta> updates, const BaselineParams& params,
                               SeededRng& rng) {
  if (updates.empty()) throw AggregationError("baseline_aggregate: no updates");
  switch (kind) {
    case AggregatorKind::kFedAvg:
      return fedavg(updates);
    case AggregatorKind::kTrimmedMean: {
      const int b = params.trim_count >= 0 ? params.trim_count : default_trim_count(updates.size(), params.trim_fraction);
      return trimmed_mean(updates, b);
    }
    case AggregatorKind::kMultiKrum: {
      const int f = params.krum_f >= 0 ? params.krum_f : default_krum_f(updates.size());
      if (f < 0) return fedavg(updates);
      const int m = params.krum_m >= 1 ? params.krum_m : static_cast<int>(updates.size()) - f;
      return multi_krum(updates, f, m);
    }
    case AggregatorKind::kNormClip:
      return norm_clip(updates, params.norm_bound);
    case AggregatorKind::kWeakDp:
      return weak_dp(updates, params.norm_bound, params.weak_dp_sigma, rng);
    case AggregatorKind::kFlameLite:
      return flame_lite(updates, params.flame_lambda, rng);
    case AggregatorKind::kFleca:
      break;
  }
  throw ConfigError("baseline_aggregate: '" + to_string(kind) + "' is not a baseline");
}

}  // namespace abcdfl
