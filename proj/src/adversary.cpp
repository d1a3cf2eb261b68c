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
#include "abcdfl/adversary.hpp"

#include <algorithm>
#include <cmath>

#include "abcdfl/fleca.hpp"

namespace abcdfl {

bool ThreatPlacement::is_malicious_ev(int group, int ev) const {
  if (is_malicious_group(group)) return true;
  auto it = malicious_evs.find(group);
  return it != malicious_evs.end() && it->second.count(ev) != 0;
}

bool ThreatPlacement::empty() const {
  if (!malicious_groups.empty()) return false;
  for (const auto& [g, evs] : malicious_evs) {
    if (!evs.empty()) return false;
  }
  return true;
}

bool is_data_attack(AttackKind kind) {
  return kind == AttackKind::kLabelFlip || kind == AttackKind::kFeature || kind == AttackKind::kBadnets ||
         kind == AttackKind::kScaling;
}

bool is_model_attack(AttackKind kind) {
  return kind == AttackKind::kGauss || kind == AttackKind::kTrimAttack || kind == AttackKind::kKrumAttack ||
         kind == AttackKind::kAdaptiveMinMax || kind == AttackKind::kScaling;
}

bool is_backdoor_attack(AttackKind kind) { return kind == AttackKind::kBadnets || kind == AttackKind::kScaling; }

ThreatPlacement place_threats(const ExperimentConfig& cfg, std::uint64_t seed) {
  const double fg = cfg.adversary.malicious_group_fraction;
  const double fe = cfg.adversary.malicious_ev_fraction;
  if (!(fg >= 0.0 && fg <= 1.0 && fe >= 0.0 && fe <= 1.0)) throw ConfigError("place_threats: fractions must be in [0,1]");
  ThreatPlacement p;
  p.group_fraction = fg;
  p.ev_fraction = fe;
  if (cfg.adversary.kind == AttackKind::kNone) return p;
  const int groups = cfg.groups();
  const int k = cfg.group_size;
  SeededRng rng(seed, Stream::kAttack, 0);
  const auto n_bad = static_cast<std::size_t>(std::llround(fg * groups));
  for (std::size_t g : sample_without_replacement(rng, static_cast<std::size_t>(groups), n_bad)) {
    p.malicious_groups.insert(static_cast<int>(g));
  }
  const auto per_group = static_cast<std::size_t>(std::floor(fe * k + 1e-9));
  for (int g = 0; g < groups; ++g) {
    if (p.is_malicious_group(g) || per_group == 0) continue;
    for (std::size_t i : sample_without_replacement(rng, static_cast<std::size_t>(k), per_group)) {
      p.malicious_evs[g].insert(g * k + static_cast<int>(i));
    }
  }
  return p;
}

void stamp_trigger(Sample& sample, double offset) {
  sample.features[6] += offset;
  sample.features[7] += offset;
}

Partition poison_data(const Partition& partition, const AttackSpec& spec, SeededRng& rng) {
  const auto& a = spec.params;
  Partition out = partition;
  const std::size_t n = out.samples.size();
  auto pick = [&](double rate) {
    const auto count = static_cast<std::size_t>(std::llround(std::clamp(rate, 0.0, 1.0) * static_cast<double>(n)));
    return sample_without_replacement(rng, n, count);
  };
  switch (spec.kind) {
    case AttackKind::kLabelFlip:
      for (std::size_t i : pick(a.flip_rate)) out.samples[i].anomaly = 1 - out.samples[i].anomaly;
      return out;
    case AttackKind::kFeature:
      if (a.feature_index < 0 || a.feature_index >= kFeatureCount) throw ConfigError("feature attack: bad index");
      for (std::size_t i : pick(a.feature_rate)) {
        out.samples[i].features[static_cast<std::size_t>(a.feature_index)] += a.feature_shift;
        out.samples[i].capacity = kCapacityMax;
      }
      return out;
    case AttackKind::kBadnets:
    case AttackKind::kScaling:
      for (std::size_t i : pick(a.trigger_rate)) {
        stamp_trigger(out.samples[i], a.trigger_offset);
        out.samples[i].anomaly = a.target_label;
      }
      return out;
    default:
      throw ConfigError("poison_data: '" + to_string(spec.kind) + "' is not a data attack");
  }
}

namespace {

UpdateDelta gaussian_update(std::span<const UpdateDelta> visible, const UpdateDelta& own, double multiplier,
                            SeededRng& rng) {
  std::vector<double> coords;
  if (visible.empty()) {
    coords = flatten(own);
  } else {
    for (const auto& u : visible) {
      const Vector f = flatten(u);
      coords.insert(coords.end(), f.begin(), f.end());
    }
  }
  const double sigma = multiplier * (coords.size() > 1 ? sample_stddev(coords) : 0.0);
  UpdateDelta out = zeros_like(own);
  if (sigma > 0.0) {
    for (auto& [name, v] : out.layers) {
      for (double& x : v) x = rng.normal(0.0, sigma);
    }
  }
  return out;
}

UpdateDelta trim_update(std::span<const UpdateDelta> visible, const UpdateDelta& own, double eps, SeededRng& rng) {
  const Schema schema = schema_of(own);
  std::vector<Vector> flat;
  for (const auto& u : visible) flat.push_back(flatten(u));
  const std::size_t d = flat.front().size();
  Vector out(d);
  const double b = 1.0 + eps;
  for (std::size_t j = 0; j < d; ++j) {
    double lo = flat[0][j], hi = flat[0][j], sum = 0.0;
    for (const auto& f : flat) {
      lo = std::min(lo, f[j]);
      hi = std::max(hi, f[j]);
      sum += f[j];
    }
    if (sum >= 0.0) {
      // Push below the benign minimum.
      out[j] = lo > 0.0 ? rng.uniform(lo / b, lo) : rng.uniform(lo * b, lo);
    } else {
      out[j] = hi > 0.0 ? rng.uniform(hi, hi * b) : rng.uniform(hi, hi / b);
    }
  }
  return unflatten(schema, out, own.round);
}

UpdateDelta krum_update(std::span<const UpdateDelta> visible, const UpdateDelta& own, int colluders) {
  const UpdateDelta avg = mean(visible);
  const Vector mu = flatten(avg);
  Vector direction(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) direction[j] = mu[j] > 0 ? -1.0 : (mu[j] < 0 ? 1.0 : 0.0);
  const Schema schema = schema_of(own);
  double scale = 0.0;
  for (const auto& u : visible) scale = std::max(scale, l2_norm(flatten(u)));
  scale = scale / std::sqrt(static_cast<double>(std::max<std::size_t>(1, mu.size()))) * 4.0;
  const int c = std::max(1, colluders);
  UpdateDelta candidate = zeros_like(own);
  for (int iter = 0; iter < 30; ++iter, scale *= 0.5) {
    Vector v(direction.size());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = scale * direction[j];
    candidate = unflatten(schema, v, own.round);
    std::vector<UpdateDelta> pool(visible.begin(), visible.end());
    for (int i = 0; i < c; ++i) pool.push_back(candidate);
    const int n = static_cast<int>(pool.size());
    const int f = std::min(c, (n - 3) / 2);
    if (f < 0) break;
    const auto scores = krum_scores(pool, f);
    const auto best = static_cast<std::size_t>(std::min_element(scores.begin(), scores.end()) - scores.begin());
    if (best >= visible.size()) break;
  }
  return candidate;
}

}  // namespace

double adaptive_minmax_gamma(std::span<const UpdateDelta> benign, int iterations) {
  if (benign.size() < 2) return 0.0;
  std::vector<Vector> flat;
  for (const auto& u : benign) flat.push_back(flatten(u));
  double max_pair = 0.0;
  for (std::size_t i = 0; i < flat.size(); ++i) {
    for (std::size_t j = i + 1; j < flat.size(); ++j) max_pair = std::max(max_pair, l2_distance(flat[i], flat[j]));
  }
  const Vector mu = flatten(mean(benign));
  const double mu_norm = l2_norm(mu);
  if (mu_norm == 0.0 || max_pair == 0.0) return 0.0;
  auto fits = [&](double gamma) {
    Vector cand(mu.size());
    for (std::size_t j = 0; j < mu.size(); ++j) cand[j] = mu[j] - gamma * mu[j] / mu_norm;
    for (const auto& f : flat) {
      if (l2_distance(cand, f) > max_pair) return false;
    }
    return true;
  };
  double lo = 0.0;
  double hi = max_pair;
  while (fits(hi)) {
    lo = hi;
    hi *= 2.0;
  }
  for (int i = 0; i < iterations; ++i) {
    const double mid = 0.5 * (lo + hi);
    (fits(mid) ? lo : hi) = mid;
  }
  return lo;
}

UpdateDelta poison_update(std::span<const UpdateDelta> visible, const UpdateDelta& own_benign, const AttackSpec& spec,
                          SeededRng& rng, int colluders, int group_size) {
  const auto& a = spec.params;
  const bool need_visible = spec.kind == AttackKind::kTrimAttack || spec.kind == AttackKind::kKrumAttack ||
                            spec.kind == AttackKind::kAdaptiveMinMax;
  if (need_visible && visible.empty()) return gaussian_update(visible, own_benign, a.gauss_std_multiplier, rng);
  switch (spec.kind) {
    case AttackKind::kGauss:
      return gaussian_update(visible, own_benign, a.gauss_std_multiplier, rng);
    case AttackKind::kTrimAttack:
      return trim_update(visible, own_benign, a.trim_epsilon, rng);
    case AttackKind::kKrumAttack:
      return krum_update(visible, own_benign, colluders);
    case AttackKind::kAdaptiveMinMax: {
      const double gamma = adaptive_minmax_gamma(visible, a.adaptive_iterations);
      const UpdateDelta avg = mean(visible);
      const double norm = l2_norm(flatten(avg));
      if (norm == 0.0) return avg;
      UpdateDelta out = add(avg, scaled(avg, -gamma / norm));
      out.round = own_benign.round;
      return out;
    }
    case AttackKind::kScaling: {
      const double gamma = a.scale_gamma > 0.0 ? a.scale_gamma : static_cast<double>(group_size);
      return scaled(own_benign, gamma);
    }
    default:
      throw ConfigError("poison_update: '" + to_string(spec.kind) + "' is not a model attack");
  }
}

}  // namespace abcdfl
