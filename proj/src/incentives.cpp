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
#include "abcdfl/incentives.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

namespace abcdfl {

double score_delta(std::span<const std::size_t> cluster_sizes, std::size_t own_cluster_idx, double dist_to_centroid,
                   double eta, double alpha_dist) {
  if (own_cluster_idx >= cluster_sizes.size()) throw ConfigError("score_delta: cluster index out of range");
  if (dist_to_centroid < 0.0) throw ConfigError("score_delta: negative distance");
  double total = 0.0;
  for (std::size_t s : cluster_sizes) {
    if (s == 0) throw ConfigError("score_delta: cluster sizes must be positive");
    total += static_cast<double>(s);
  }
  return eta * (static_cast<double>(cluster_sizes[own_cluster_idx]) / total) * std::exp(-alpha_dist * dist_to_centroid);
}

double apply_score(double s_old, double delta, bool in_majority) { return in_majority ? s_old + delta : s_old - delta; }

std::vector<double> normalize_rewards(std::span<const double> counts, double reward_b, double budget) {
  if (budget < 0.0) throw ConfigError("normalize_rewards: negative budget");
  std::vector<double> raw(counts.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    raw[i] = reward_b * counts[i];
    sum += raw[i];
  }
  std::vector<double> out(counts.size(), 0.0);
  if (sum <= 0.0) return out;
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / sum * budget;
  return out;
}

double gompertz(double s, double b, double c) { return std::exp(-b * std::exp(-c * s)); }

double gompertz_reputation(double r_old, double s, double a, double b, double c) {
  if (!(a > 0.0 && a < 1.0)) throw ConfigError("gompertz: a must be in (0,1)");
  if (!(b > 0.0 && c > 0.0)) throw ConfigError("gompertz: b and c must be positive");
  return (1.0 - a) * r_old + a * gompertz(s, b, c);
}

IncentiveEngine::IncentiveEngine(const IncentiveSettings& settings, int cs_count)
    : settings_(settings), cs_(static_cast<std::size_t>(cs_count)) {
  if (cs_count < 1) throw ConfigError("IncentiveEngine: need at least one CS");
  for (auto& c : cs_) c.reputation = settings.initial_reputation;
}

void IncentiveEngine::lock_deposits() {
  for (auto& c : cs_) {
    if (!c.slashed) c.deposit = settings_.deposit;
  }
}

RoundScoring IncentiveEngine::score_round(const ClusterLabels& labels, const std::vector<Vector>& points,
                                          std::span<const int> participants) {
  const std::size_t n = labels.labels.size();
  if (points.size() != n || participants.size() != n) throw ConfigError("score_round: size mismatch");
  RoundScoring out;
  out.deltas.assign(n, 0.0);
  out.in_majority.assign(n, false);
  if (n == 0) return out;

  const auto majority = largest_non_noise_cluster(labels);
  Vector centroid(points.front().size(), 0.0);
  for (std::size_t i : majority) {
    for (std::size_t j = 0; j < centroid.size(); ++j) centroid[j] += points[i][j];
  }
  for (double& v : centroid) v /= static_cast<double>(majority.size());

  // Noise points count as singleton clusters.
  std::map<int, std::size_t> cluster_index;
  std::vector<std::size_t> sizes;
  std::vector<std::size_t> own(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels.labels[i];
    if (l == kNoise) {
      own[i] = sizes.size();
      sizes.push_back(1);
    } else {
      auto [it, inserted] = cluster_index.emplace(l, sizes.size());
      if (inserted) sizes.push_back(0);
      sizes[it->second] += 1;
      own[i] = it->second;
    }
  }
  for (std::size_t i : majority) out.in_majority[i] = true;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = l2_distance(points[i], centroid);
    out.deltas[i] = score_delta(sizes, own[i], d, settings_.eta, settings_.alpha_dist);
    auto& c = cs_.at(static_cast<std::size_t>(participants[i]));
    c.score = apply_score(c.score, out.deltas[i], out.in_majority[i]);
    c.rounds += 1;
    if (out.in_majority[i]) c.majority_count += 1;
  }
  for (std::size_t s = 0; s < cs_.size(); ++s) {
    history_.push_back({task_, round_, static_cast<int>(s), cs_[s].score, cs_[s].reputation, 0.0});
  }
  ++round_;
  return out;
}

TaskSettlement IncentiveEngine::settle_task() {
  TaskSettlement out;
  std::vector<double> counts;
  for (const auto& c : cs_) counts.push_back(static_cast<double>(c.majority_count));
  out.rewards = normalize_rewards(counts, settings_.reward_b, settings_.budget);
  for (std::size_t s = 0; s < cs_.size(); ++s) {
    auto& c = cs_[s];
    c.cumulative_reward += out.rewards[s];
    c.reputation = gompertz_reputation(c.reputation, c.score, settings_.gompertz_a, settings_.gompertz_b,
                                       settings_.gompertz_c);
    out.reputations.push_back(c.reputation);
    if (c.reputation < settings_.slash_threshold) {
      out.slashed_deposits.push_back(c.deposit);
      out.returned_deposits.push_back(0.0);
      treasury_ += c.deposit;
      c.slashed = true;
    } else {
      out.slashed_deposits.push_back(0.0);
      out.returned_deposits.push_back(c.deposit);
    }
    c.deposit = 0.0;
    history_.push_back({task_, -1, static_cast<int>(s), c.score, c.reputation, out.rewards[s]});
    c.score = 0.0;
    c.majority_count = 0;
    c.rounds = 0;
  }
  ++task_;
  round_ = 0;
  return out;
}

std::vector<double> IncentiveEngine::selection_probabilities() const {
  std::vector<double> p;
  double total = 0.0;
  for (const auto& c : cs_) {
    p.push_back(c.reputation);
    total += c.reputation;
  }
  for (double& v : p) v /= total;
  return p;
}

void IncentiveEngine::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(12);
  out << "task,round,cs_id,S,R,reward\n";
  for (const auto& r : history_) {
    out << r.task << ',' << r.round << ',' << r.cs_id << ',' << r.score << ',' << r.reputation << ',' << r.reward
        << '\n';
  }
}

ScenarioOutcome run_incentive_scenario(const IncentiveSettings& settings, int tasks, int rounds_per_task,
                                       int honest, int intermittent, int malicious, std::uint64_t seed,
                                       int min_pts) {
  const int n = honest + intermittent + malicious;
  ScenarioOutcome out{{}, {}, {}, {}, IncentiveEngine(settings, n)};
  for (int i = 0; i < honest; ++i) out.roles.push_back("honest");
  for (int i = 0; i < intermittent; ++i) out.roles.push_back("intermittent");
  for (int i = 0; i < malicious; ++i) out.roles.push_back("malicious");
  std::vector<int> ids(static_cast<std::size_t>(n));
  std::iota(ids.begin(), ids.end(), 0);
  SeededRng rng(seed, Stream::kTest, 14);
  constexpr double kSpread = 0.05;
  for (int task = 0; task < tasks; ++task) {
    out.engine.lock_deposits();
    for (int round = 0; round < rounds_per_task; ++round) {
      std::vector<Vector> points;
      for (int i = 0; i < n; ++i) {
        const std::string& role = out.roles[static_cast<std::size_t>(i)];
        const bool divergent = role == "malicious" || (role == "intermittent" && (round + i) % 2 == 1);
        Vector p{rng.normal(0.0, kSpread), rng.normal(0.0, kSpread)};
        if (divergent) {
          const double angle = 2.0 * 3.141592653589793 * rng.uniform();
          p[0] += 5.0 * std::cos(angle) * (1.0 + i);
          p[1] += 5.0 * std::sin(angle) * (1.0 + i);
        }
        points.push_back(p);
      }
      out.engine.score_round(hdbscan(pairwise_distances(points, Metric::kEuclidean), min_pts), points, ids);
    }
    const auto settlement = out.engine.settle_task();
    out.reward_sums.push_back(std::accumulate(settlement.rewards.begin(), settlement.rewards.end(), 0.0));
    out.reputation_by_task.push_back(settlement.reputations);
  }
  for (const auto& c : out.engine.state()) out.cumulative_rewards.push_back(c.cumulative_reward);
  return out;
}

}  // namespace abcdfl
