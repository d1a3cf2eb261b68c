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

#include "abcdfl/config.hpp"
#include "abcdfl/core.hpp"
#include "abcdfl/data.hpp"

namespace abcdfl {

struct ThreatPlacement {
  std::set<int> malicious_groups;
  // Malicious EVs (global ids) inside otherwise benign groups.
  std::map<int, std::set<int>> malicious_evs;
  double group_fraction = 0.0;
  double ev_fraction = 0.0;

  bool is_malicious_group(int group) const { return malicious_groups.count(group) != 0; }
  // True for every EV of a malicious group and for planted EVs elsewhere.
  bool is_malicious_ev(int group, int ev) const;
  bool empty() const;
};

struct AttackSpec {
  AttackKind kind = AttackKind::kNone;
  AttackParams params;
};

bool is_data_attack(AttackKind kind);
bool is_model_attack(AttackKind kind);
bool is_backdoor_attack(AttackKind kind);

// Groups are contiguous blocks of `group_size` EV ids.
ThreatPlacement place_threats(const ExperimentConfig& cfg, std::uint64_t seed);

// Applies the BadNets trigger (offset on f6 and f7) in place.
void stamp_trigger(Sample& sample, double offset);

// label_flip, feature and badnets. Scaling attacks poison data like badnets.
Partition poison_data(const Partition& partition, const AttackSpec& spec, SeededRng& rng);

// Model-poisoning update for one attacker. `visible` holds the benign updates
// the attacker can observe; `colluders` is the number of attackers sharing
// the vector (krum_attack); `group_size` is the default scaling factor.
UpdateDelta poison_update(std::span<const UpdateDelta> visible, const UpdateDelta& own_benign, const AttackSpec& spec,
                          SeededRng& rng, int colluders = 1, int group_size = 1);

// Largest gamma (bisection) such that mean + gamma * (-mean/|mean|) stays
// within the maximum pairwise benign distance of every benign update.
double adaptive_minmax_gamma(std::span<const UpdateDelta> benign, int iterations);

}  // namespace abcdfl
