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
#include <string>
#include <vector>

#include "abcdfl/crypto.hpp"

namespace abcdfl {

// ---------------------------------------------------------------------------
// Committee selection and leader election
// ---------------------------------------------------------------------------

struct Candidate {
  int id = 0;
  double weight = 1.0;
};

struct Committee {
  std::vector<int> members;  // distinct, in first-draw order
  std::vector<int> draws;    // candidate id per draw, before deduplication
  int epoch = 0;
  VrfOutput proof;
  std::string source_block_hash;
};

// Draws `size` values from the VRF chain seeded by the source block and maps
// each through the weight CDF. When `min_distinct` exceeds the number of
// distinct ids, the chain is extended until it is reached (capped at the
// candidate count).
Committee select_committee(const std::vector<Candidate>& candidates, int size, const std::string& last_block_hash,
                           const SecretKey& leader_sk, int epoch = 0, int min_distinct = 0);
bool verify_committee(const Committee& committee, const std::vector<Candidate>& candidates, int size,
                      const PublicKey& leader_pk, const KeyRegistry& registry, int min_distinct = 0);

// floor(1000 * reputation), at least 1.
std::vector<std::uint64_t> quantize_weights(const std::vector<double>& reputations);
// Idx = r mod sum(w); first member whose cumulative weight exceeds Idx.
int elect_leader(const std::vector<int>& members, const std::vector<std::uint64_t>& weights, std::uint64_t r);
std::uint64_t leader_randomness(std::uint64_t epoch_value, int height, int round);

// ceil(2n/3).
int quorum_size(int n);
int max_faulty(int n);

// ---------------------------------------------------------------------------
// Consensus simulation
// ---------------------------------------------------------------------------

enum class Behavior { kHonest, kSilent, kEquivocate, kDelay, kWithhold };
std::string to_string(Behavior b);
Behavior parse_behavior(const std::string& name);

struct ValidatorSpec {
  int id = 0;
  double reputation = 1.0;
  Behavior behavior = Behavior::kHonest;
};

struct NetworkModel {
  int delta = 10;
  int gst = 0;
  // Before GST a message is either held until GST + U[0, delta] with this
  // probability, or delayed by U[1, pre_gst_max_delay].
  double pre_gst_hold = 0.5;
  int pre_gst_max_delay = 30;
};

struct Block {
  int height = 0;
  std::string parent_hash;
  int proposer = -1;
  int round = 0;
  std::vector<std::string> payload;
  std::vector<int> commit_signers;

  // Excludes the commit certificate.
  std::string hash() const;
};

struct TraceEvent {
  std::int64_t tick = 0;
  std::string kind;
  int sender = -1;
  int receiver = -1;
  int height = 0;
  int round = 0;
  std::string digest;
};

struct Trace {
  int n = 0;
  int f = 0;
  int delta = 0;
  int gst = 0;
  int target_heights = 0;
  int max_views = 10;
  std::vector<int> validator_ids;
  std::map<int, std::string> byzantine;
  std::vector<TraceEvent> events;
  std::vector<Block> chain;
  bool stalled = false;
  std::int64_t end_tick = 0;
};

struct ConsensusRun {
  std::vector<ValidatorSpec> validators;
  NetworkModel network;
  std::vector<std::string> txs;
  int heights = 1;
  int epoch_length = 10;
  // 0 selects the validator count.
  int committee_size = 0;
  // -1 selects floor((n - 1) / 3).
  int f = -1;
  bool rotation = true;
  int block_tx_limit = 200;
  int max_views = 10;
  std::uint64_t seed = 0;
  std::string genesis_hash = "genesis";
  // Message events are large; finalization and round events are always kept.
  bool record_messages = true;
};

Trace run_consensus(const ConsensusRun& run);

// No two honest validators finalize different blocks at one height.
bool check_safety(const Trace& trace);
// Every target height finalizes, at least one finalization happens after
// GST, and no honest validator enters more than max_views rounds after GST
// at any height.
bool check_liveness(const Trace& trace, int gst);
// Distinct rounds an honest validator entered at the height of each block.
std::vector<int> views_per_block(const Trace& trace);

void write_trace_jsonl(const Trace& trace, const std::filesystem::path& path);
Trace read_trace_jsonl(const std::filesystem::path& path);
// Several traces in one file, each introduced by its own header line.
void write_traces_jsonl(const std::vector<Trace>& traces, const std::filesystem::path& path);
std::vector<Trace> read_traces_jsonl(const std::filesystem::path& path);

// Keys used by the simulator for validator `id`.
KeyPair validator_keys(std::uint64_t seed, int id);

}  // namespace abcdfl
