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
#include "abcdfl/consensus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <memory>
#include <queue>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace abcdfl {

namespace {

std::string u64_string(std::uint64_t v) { return std::to_string(v); }

int map_through_cdf(const std::vector<Candidate>& candidates, double total, std::uint64_t r) {
  double u = std::ldexp(static_cast<double>(r >> 11), -53);
  double cumulative = 0.0;
  for (const auto& c : candidates) {
    cumulative += c.weight;
    if (u < cumulative / total) return c.id;
  }
  return candidates.back().id;
}

std::string committee_seed(const std::string& last_block_hash, int epoch) {
  return "committee|" + last_block_hash + "|" + std::to_string(epoch);
}

void fill_committee(Committee& committee, const std::vector<Candidate>& candidates, int size, int min_distinct) {
  if (candidates.empty()) throw ConfigError("committee selection needs at least one candidate");
  if (size < 1) throw ConfigError("committee size must be positive");
  double total = 0.0;
  for (const auto& c : candidates) {
    if (!(c.weight > 0.0) || !std::isfinite(c.weight)) throw ConfigError("candidate weights must be positive");
    total += c.weight;
  }
  if (!(total > 0.0)) throw ConfigError("zero total candidate weight");
  std::set<int> ids;
  for (const auto& c : candidates) ids.insert(c.id);
  int target = std::min<int>(min_distinct, static_cast<int>(ids.size()));
  // Bounds the work for pathological weight ratios.
  constexpr int kMaxDraws = 1 << 20;

  committee.draws.clear();
  committee.members.clear();
  std::set<int> seen;
  std::uint64_t r = committee.proof.value;
  for (int i = 0;; ++i) {
    if (i >= size && static_cast<int>(seen.size()) >= target) break;
    if (i >= kMaxDraws) throw ConfigError("committee selection: distinct-member target not reached");
    if (i > 0) r = hash_u64(r);
    int id = map_through_cdf(candidates, total, r);
    committee.draws.push_back(id);
    if (seen.insert(id).second) committee.members.push_back(id);
  }
}

}  // namespace

Committee select_committee(const std::vector<Candidate>& candidates, int size, const std::string& last_block_hash,
                           const SecretKey& leader_sk, int epoch, int min_distinct) {
  Committee committee;
  committee.epoch = epoch;
  committee.source_block_hash = last_block_hash;
  committee.proof = vrf_eval(leader_sk, committee_seed(last_block_hash, epoch));
  fill_committee(committee, candidates, size, min_distinct);
  return committee;
}

bool verify_committee(const Committee& committee, const std::vector<Candidate>& candidates, int size,
                      const PublicKey& leader_pk, const KeyRegistry& registry, int min_distinct) {
  if (!vrf_verify(registry, leader_pk, committee_seed(committee.source_block_hash, committee.epoch), committee.proof)) {
    return false;
  }
  Committee replay = committee;
  try {
    fill_committee(replay, candidates, size, min_distinct);
  } catch (const ConfigError&) {
    return false;
  }
  return replay.members == committee.members && replay.draws == committee.draws;
}

std::vector<std::uint64_t> quantize_weights(const std::vector<double>& reputations) {
  std::vector<std::uint64_t> out;
  out.reserve(reputations.size());
  for (double r : reputations) {
    double q = std::floor(1000.0 * std::max(0.0, r));
    out.push_back(std::max<std::uint64_t>(1, static_cast<std::uint64_t>(q)));
  }
  return out;
}

int elect_leader(const std::vector<int>& members, const std::vector<std::uint64_t>& weights, std::uint64_t r) {
  if (members.empty()) throw ConfigError("leader election needs a non-empty committee");
  if (weights.size() != members.size()) throw ConfigError("one weight per committee member is required");
  std::uint64_t total = 0;
  for (auto w : weights) total += w;
  if (total == 0) throw ConfigError("zero total leader weight");
  std::uint64_t idx = r % total;
  std::uint64_t cumulative = 0;
  for (std::size_t j = 0; j < members.size(); ++j) {
    cumulative += weights[j];
    if (cumulative > idx) return members[j];
  }
  return members.back();
}

std::uint64_t leader_randomness(std::uint64_t epoch_value, int height, int round) {
  return digest_prefix_u64(
      sha256("leader|" + u64_string(epoch_value) + "|" + std::to_string(height) + "|" + std::to_string(round)));
}

int quorum_size(int n) { return (2 * n + 2) / 3; }
int max_faulty(int n) { return n > 0 ? (n - 1) / 3 : 0; }

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::kHonest: return "honest";
    case Behavior::kSilent: return "silent";
    case Behavior::kEquivocate: return "equivocate";
    case Behavior::kDelay: return "delay";
    case Behavior::kWithhold: return "withhold";
  }
  return "honest";
}

Behavior parse_behavior(const std::string& name) {
  for (Behavior b : {Behavior::kHonest, Behavior::kSilent, Behavior::kEquivocate, Behavior::kDelay,
                     Behavior::kWithhold}) {
    if (to_string(b) == name) return b;
  }
  throw ConfigError("unknown validator behavior: " + name);
}

std::string Block::hash() const {
  nlohmann::json j;
  j["height"] = height;
  j["parent"] = parent_hash;
  j["proposer"] = proposer;
  j["round"] = round;
  j["payload"] = payload;
  return sha256_hex(j.dump());
}

KeyPair validator_keys(std::uint64_t seed, int id) {
  SeededRng rng(seed, Stream::kConsensus, 1000 + static_cast<std::uint64_t>(id));
  return KeyPair::generate(rng);
}

// ---------------------------------------------------------------------------
// Simulator
// ---------------------------------------------------------------------------

namespace {

enum class MsgKind { kPropose, kPrepare, kCommit, kRoundChange };

const char* kind_name(MsgKind k) {
  switch (k) {
    case MsgKind::kPropose: return "propose";
    case MsgKind::kPrepare: return "prepare";
    case MsgKind::kCommit: return "commit";
    case MsgKind::kRoundChange: return "round_change";
  }
  return "?";
}

struct SignedVote {
  int sender = -1;
  Signature sig{};
};

struct PreparedCert {
  int round = -1;
  std::string digest;
  std::vector<SignedVote> prepares;
};

struct Message {
  MsgKind kind = MsgKind::kPrepare;
  int height = 0;
  int round = 0;
  std::string digest;
  int sender = -1;
  Signature sig{};
  std::vector<Message> justification;  // round changes backing a re-proposal
  PreparedCert prepared;               // round-change payload
};

std::string vote_text(MsgKind kind, int height, int round, const std::string& digest) {
  return std::string(kind_name(kind)) + "|" + std::to_string(height) + "|" + std::to_string(round) + "|" + digest;
}

std::string signing_text(const Message& m) {
  std::string text = vote_text(m.kind, m.height, m.round, m.digest);
  if (m.kind == MsgKind::kRoundChange) text += "|" + std::to_string(m.prepared.round) + "|" + m.prepared.digest;
  return text;
}

struct Event {
  std::int64_t tick = 0;
  int priority = 0;  // deliveries before timers at equal ticks
  std::uint64_t seq = 0;
  int receiver = -1;
  std::shared_ptr<const Message> message;
  int timer_height = 0;
  int timer_round = 0;
};

struct EventOrder {
  bool operator()(const Event& a, const Event& b) const {
    if (a.tick != b.tick) return a.tick > b.tick;
    if (a.priority != b.priority) return a.priority > b.priority;
    return a.seq > b.seq;
  }
};

struct Validator {
  ValidatorSpec spec;
  KeyPair keys;
  int height = 1;
  int round = 0;
  std::string tip_hash;
  bool done = false;

  // Per-round flags.
  std::string accepted_digest;
  bool commit_sent = false;
  bool proposed = false;
  std::set<std::string> equivocator_voted;

  PreparedCert prepared;
  std::map<std::pair<int, std::string>, std::map<int, Signature>> prepares;
  std::map<std::pair<int, std::string>, std::set<int>> commits;
  std::map<int, std::map<int, Message>> round_changes;  // round -> sender -> message
  std::vector<std::shared_ptr<const Message>> future;
  int views_after_gst = 0;
};

class Simulator {
 public:
  explicit Simulator(const ConsensusRun& run)
      : run_(run), net_rng_(run.seed, Stream::kNetwork, 0) {
    if (run.validators.empty()) throw ConfigError("consensus needs at least one validator");
    n_ = static_cast<int>(run.validators.size());
    f_ = run.f >= 0 ? run.f : max_faulty(n_);
    committee_size_ = run.committee_size > 0 ? run.committee_size : n_;
    std::set<int> ids;
    for (const auto& spec : run.validators) {
      if (!ids.insert(spec.id).second) throw ConfigError("duplicate validator id");
      Validator v;
      v.spec = spec;
      v.keys = validator_keys(run.seed, spec.id);
      v.tip_hash = run.genesis_hash;
      registry_.add(v.keys);
      index_[spec.id] = static_cast<int>(validators_.size());
      validators_.push_back(std::move(v));
      candidates_.push_back({spec.id, std::max(spec.reputation, 1e-3)});
    }
    genesis_keys_ = KeyPair::from_secret(sha256("genesis-key|" + std::to_string(run.seed)));
    registry_.add(genesis_keys_);

    trace_.n = n_;
    trace_.f = f_;
    trace_.delta = run.network.delta;
    trace_.gst = run.network.gst;
    trace_.target_heights = run.heights;
    trace_.max_views = run.max_views;
    for (const auto& spec : run.validators) {
      trace_.validator_ids.push_back(spec.id);
      if (spec.behavior != Behavior::kHonest) trace_.byzantine[spec.id] = to_string(spec.behavior);
    }
  }

  Trace run() {
    for (auto& v : validators_) {
      if (v.spec.behavior == Behavior::kSilent) continue;
      enter_round(v, 0);
    }
    const std::int64_t tick_cap =
        static_cast<std::int64_t>(run_.network.gst) +
        static_cast<std::int64_t>(run_.heights + 4) * 4LL * run_.network.delta * (1LL << std::min(run_.max_views + 2, 30));
    while (!queue_.empty()) {
      if (all_honest_done()) break;
      Event ev = queue_.top();
      queue_.pop();
      now_ = ev.tick;
      if (now_ > tick_cap) {
        trace_.stalled = true;
        break;
      }
      Validator& v = validators_[index_.at(ev.receiver)];
      if (v.done || v.spec.behavior == Behavior::kSilent) continue;
      if (ev.message) {
        handle(v, ev.message);
      } else if (ev.timer_height == v.height && ev.timer_round == v.round) {
        on_timeout(v);
      }
      if (trace_.stalled) break;
    }
    if (!all_honest_done()) trace_.stalled = true;
    trace_.end_tick = now_;
    for (int h = 1; h <= static_cast<int>(chain_.size()); ++h) trace_.chain.push_back(chain_.at(h - 1));
    return std::move(trace_);
  }

 private:
  // --- committee and leader schedule -------------------------------------

  int epoch_of(int height) const {
    if (!run_.rotation || run_.epoch_length < 1) return 0;
    return (height - 1) / run_.epoch_length;
  }

  const Committee& committee_for(const Validator& v, int height) {
    int epoch = epoch_of(height);
    std::string source = run_.genesis_hash;
    SecretKey sk = genesis_keys_.secret;
    if (epoch > 0) {
      int source_height = epoch * run_.epoch_length;
      const auto& local = local_chain_[v.spec.id];
      const Block& b = local.at(source_height - 1);
      source = b.hash();
      sk = validators_[index_.at(b.proposer)].keys.secret;
    }
    auto key = std::make_pair(epoch, source);
    auto it = committees_.find(key);
    if (it == committees_.end()) {
      int min_distinct = std::min(n_, 3 * f_ + 1);
      Committee c = select_committee(candidates_, committee_size_, source, sk, epoch, min_distinct);
      TraceEvent te;
      te.tick = now_;
      te.kind = "committee";
      te.height = height;
      te.round = epoch;
      std::string members;
      for (int id : c.members) members += (members.empty() ? "" : ",") + std::to_string(id);
      te.digest = members;
      trace_.events.push_back(te);
      std::vector<double> reps;
      for (int id : c.members) reps.push_back(validators_[index_.at(id)].spec.reputation);
      weights_[key] = quantize_weights(reps);
      it = committees_.emplace(key, std::move(c)).first;
    }
    return it->second;
  }

  bool is_member(const Committee& c, int id) const {
    return std::find(c.members.begin(), c.members.end(), id) != c.members.end();
  }

  int leader_of(const Validator& v, int height, int round) {
    const Committee& c = committee_for(v, height);
    auto key = std::make_pair(c.epoch, c.source_block_hash);
    return elect_leader(c.members, weights_.at(key), leader_randomness(c.proof.value, height, round));
  }

  int committee_quorum(const Committee& c) const { return quorum_size(static_cast<int>(c.members.size())); }
  int committee_f(const Committee& c) const { return max_faulty(static_cast<int>(c.members.size())); }

  // --- messaging -----------------------------------------------------------

  std::int64_t delivery_tick(int sender, int receiver) {
    if (sender == receiver) return now_;
    const auto& net = run_.network;
    std::int64_t d;
    if (now_ >= net.gst) {
      d = 1 + static_cast<std::int64_t>(net_rng_.below(std::max(1, net.delta)));
      return now_ + d;
    }
    std::int64_t latest = static_cast<std::int64_t>(net.gst) + net.delta;
    if (net_rng_.bernoulli(net.pre_gst_hold)) {
      return net.gst + static_cast<std::int64_t>(net_rng_.below(static_cast<std::uint64_t>(net.delta) + 1));
    }
    d = 1 + static_cast<std::int64_t>(net_rng_.below(std::max(1, net.pre_gst_max_delay)));
    return std::min(now_ + d, latest);
  }

  void send_to(const Validator& from, int receiver, std::shared_ptr<const Message> m) {
    std::int64_t at = delivery_tick(from.spec.id, receiver);
    if (from.spec.behavior == Behavior::kDelay && receiver != from.spec.id) at += 3LL * run_.network.delta;
    if (run_.record_messages) {
      TraceEvent te;
      te.tick = now_;
      te.kind = kind_name(m->kind);
      te.sender = from.spec.id;
      te.receiver = receiver;
      te.height = m->height;
      te.round = m->round;
      te.digest = m->digest;
      trace_.events.push_back(std::move(te));
    }
    Event ev;
    ev.tick = at;
    ev.priority = 0;
    ev.seq = seq_++;
    ev.receiver = receiver;
    ev.message = std::move(m);
    queue_.push(std::move(ev));
  }

  void broadcast(const Validator& from, Message m) {
    m.sender = from.spec.id;
    m.sig = sign(from.keys.secret, signing_text(m));
    auto shared = std::make_shared<const Message>(std::move(m));
    for (const auto& v : validators_) send_to(from, v.spec.id, shared);
  }

  void schedule_timer(const Validator& v) {
    Event ev;
    int shift = std::min(v.round, 30);
    ev.tick = now_ + 4LL * run_.network.delta * (1LL << shift);
    ev.priority = 1;
    ev.seq = seq_++;
    ev.receiver = v.spec.id;
    ev.timer_height = v.height;
    ev.timer_round = v.round;
    queue_.push(std::move(ev));
  }

  void record(const char* kind, const Validator& v, int height, int round, const std::string& digest = "") {
    TraceEvent te;
    te.tick = now_;
    te.kind = kind;
    te.sender = v.spec.id;
    te.height = height;
    te.round = round;
    te.digest = digest;
    trace_.events.push_back(std::move(te));
  }

  // --- state machine ------------------------------------------------------

  void enter_round(Validator& v, int round) {
    v.round = round;
    v.accepted_digest.clear();
    v.commit_sent = false;
    v.proposed = false;
    v.equivocator_voted.clear();
    record("enter_round", v, v.height, round);
    if (now_ >= run_.network.gst && v.spec.behavior == Behavior::kHonest) {
      ++v.views_after_gst;
      if (v.views_after_gst > run_.max_views) trace_.stalled = true;
    }
    schedule_timer(v);
    const Committee& c = committee_for(v, v.height);
    if (!is_member(c, v.spec.id)) return;
    if (leader_of(v, v.height, round) == v.spec.id) {
      if (round == 0) {
        propose(v, {});
      } else {
        try_repropose(v);
      }
    }
  }

  std::vector<std::string> pending_payload(const Validator& v) const {
    std::set<std::string> included;
    for (const auto& b : local_chain_.count(v.spec.id) ? local_chain_.at(v.spec.id) : std::vector<Block>{}) {
      included.insert(b.payload.begin(), b.payload.end());
    }
    std::vector<std::string> out;
    for (const auto& tx : run_.txs) {
      if (static_cast<int>(out.size()) >= run_.block_tx_limit) break;
      if (!included.count(tx)) out.push_back(tx);
    }
    return out;
  }

  std::string make_block(const Validator& v, std::vector<std::string> payload) {
    Block b;
    b.height = v.height;
    b.parent_hash = v.tip_hash;
    b.proposer = v.spec.id;
    b.round = v.round;
    b.payload = std::move(payload);
    std::string h = b.hash();
    blocks_.emplace(h, std::move(b));
    return h;
  }

  void propose(Validator& v, std::vector<Message> justification, const std::string& forced_digest = "") {
    if (v.proposed) return;
    if (v.spec.behavior == Behavior::kWithhold) return;
    v.proposed = true;
    std::string digest = forced_digest.empty() ? make_block(v, pending_payload(v)) : forced_digest;
    Message m;
    m.kind = MsgKind::kPropose;
    m.height = v.height;
    m.round = v.round;
    m.digest = digest;
    m.justification = std::move(justification);
    if (v.spec.behavior != Behavior::kEquivocate) {
      broadcast(v, std::move(m));
      return;
    }
    // Two conflicting proposals, each sent to half of the validators.
    auto payload = pending_payload(v);
    payload.push_back("equivocation|" + std::to_string(v.spec.id) + "|" + std::to_string(v.height) + "|" +
                      std::to_string(v.round));
    Message alt = m;
    alt.digest = make_block(v, std::move(payload));
    m.sender = alt.sender = v.spec.id;
    m.sig = sign(v.keys.secret, signing_text(m));
    alt.sig = sign(v.keys.secret, signing_text(alt));
    auto first = std::make_shared<const Message>(std::move(m));
    auto second = std::make_shared<const Message>(std::move(alt));
    for (std::size_t i = 0; i < validators_.size(); ++i) {
      int id = validators_[i].spec.id;
      if (id == v.spec.id) {
        send_to(v, id, first);
        send_to(v, id, second);
      } else {
        send_to(v, id, i % 2 == 0 ? first : second);
      }
    }
  }

  bool valid_prepared_cert(const Validator& v, const PreparedCert& cert, int height, const Committee& c) const {
    if (cert.round < 0) return cert.prepares.empty() && cert.digest.empty();
    std::set<int> signers;
    for (const auto& vote : cert.prepares) {
      if (!is_member(c, vote.sender)) continue;
      const auto& keys = validators_[index_.at(vote.sender)].keys;
      if (!registry_.verify(keys.public_key, vote_text(MsgKind::kPrepare, height, cert.round, cert.digest), vote.sig)) {
        continue;
      }
      signers.insert(vote.sender);
    }
    (void)v;
    return static_cast<int>(signers.size()) >= committee_quorum(c);
  }

  bool authentic(const Message& m, const Committee& c) const {
    if (!is_member(c, m.sender)) return false;
    const auto& keys = validators_[index_.at(m.sender)].keys;
    return registry_.verify(keys.public_key, signing_text(m), m.sig);
  }

  // Returns the digest a justified proposal must carry ("" if unconstrained),
  // or nullopt when the justification is invalid.
  std::optional<std::string> justified_digest(const Validator& v, const Message& proposal, const Committee& c) const {
    std::set<int> senders;
    const PreparedCert* best = nullptr;
    for (const auto& rc : proposal.justification) {
      if (rc.kind != MsgKind::kRoundChange || rc.height != proposal.height || rc.round != proposal.round) continue;
      if (!authentic(rc, c)) continue;
      if (!valid_prepared_cert(v, rc.prepared, rc.height, c)) continue;
      senders.insert(rc.sender);
      if (rc.prepared.round >= 0 && (!best || rc.prepared.round > best->round)) best = &rc.prepared;
    }
    if (static_cast<int>(senders.size()) < committee_quorum(c)) return std::nullopt;
    return best ? best->digest : std::string();
  }

  void handle(Validator& v, const std::shared_ptr<const Message>& msg) {
    const Message& m = *msg;
    if (m.height < v.height) return;
    if (m.height > v.height) {
      v.future.push_back(msg);
      return;
    }
    const Committee& c = committee_for(v, v.height);
    if (!authentic(m, c)) return;
    bool member = is_member(c, v.spec.id);
    switch (m.kind) {
      case MsgKind::kPropose:
        if (member) on_propose(v, m, c);
        break;
      case MsgKind::kPrepare:
        v.prepares[{m.round, m.digest}][m.sender] = m.sig;
        if (member) try_commit(v, c);
        break;
      case MsgKind::kCommit:
        v.commits[{m.round, m.digest}].insert(m.sender);
        try_finalize(v, c, m.round, m.digest);
        break;
      case MsgKind::kRoundChange:
        if (member) on_round_change(v, m, c);
        break;
    }
  }

  void on_propose(Validator& v, const Message& m, const Committee& c) {
    if (m.sender != leader_of(v, m.height, m.round)) return;
    auto bit = blocks_.find(m.digest);
    if (bit == blocks_.end()) return;
    const Block& b = bit->second;
    if (b.height != v.height || b.parent_hash != v.tip_hash) return;
    bool fresh = b.round == m.round && b.proposer == m.sender;

    if (v.spec.behavior == Behavior::kEquivocate) {
      // Votes for every proposal it sees, regardless of round or validity.
      if (!v.equivocator_voted.insert(std::to_string(m.round) + "|" + m.digest).second) return;
      Message p;
      p.kind = MsgKind::kPrepare;
      p.height = m.height;
      p.round = m.round;
      p.digest = m.digest;
      broadcast(v, p);
      Message cm = p;
      cm.kind = MsgKind::kCommit;
      broadcast(v, cm);
      return;
    }

    if (m.round < v.round) return;
    if (m.round > 0) {
      auto required = justified_digest(v, m, c);
      if (!required) return;
      if (required->empty() ? !fresh : *required != m.digest) return;
    } else if (!fresh) {
      return;
    }
    if (m.round > v.round) enter_round(v, m.round);
    if (!v.accepted_digest.empty()) return;
    v.accepted_digest = m.digest;
    Message p;
    p.kind = MsgKind::kPrepare;
    p.height = v.height;
    p.round = v.round;
    p.digest = m.digest;
    broadcast(v, p);
    try_commit(v, c);
  }

  void try_commit(Validator& v, const Committee& c) {
    if (v.commit_sent || v.accepted_digest.empty()) return;
    auto it = v.prepares.find({v.round, v.accepted_digest});
    if (it == v.prepares.end() || static_cast<int>(it->second.size()) < committee_quorum(c)) return;
    v.prepared.round = v.round;
    v.prepared.digest = v.accepted_digest;
    v.prepared.prepares.clear();
    for (const auto& [sender, sig] : it->second) v.prepared.prepares.push_back({sender, sig});
    v.commit_sent = true;
    if (v.spec.behavior == Behavior::kWithhold) return;
    Message cm;
    cm.kind = MsgKind::kCommit;
    cm.height = v.height;
    cm.round = v.round;
    cm.digest = v.accepted_digest;
    broadcast(v, cm);
  }

  void try_finalize(Validator& v, const Committee& c, int round, const std::string& digest) {
    const auto& signers = v.commits[{round, digest}];
    if (static_cast<int>(signers.size()) < committee_quorum(c)) return;
    auto bit = blocks_.find(digest);
    if (bit == blocks_.end()) return;
    Block b = bit->second;
    b.commit_signers.assign(signers.begin(), signers.end());
    record("finalize", v, v.height, round, digest);
    local_chain_[v.spec.id].push_back(b);
    if (static_cast<int>(chain_.size()) < v.height) chain_.push_back(b);

    v.tip_hash = digest;
    v.height += 1;
    v.prepared = PreparedCert{};
    v.prepares.clear();
    v.commits.clear();
    v.round_changes.clear();
    v.views_after_gst = 0;
    if (v.height > run_.heights) {
      v.done = true;
      return;
    }
    enter_round(v, 0);
    auto future = std::move(v.future);
    v.future.clear();
    for (const auto& m : future) {
      if (v.done) break;
      handle(v, m);
    }
  }

  Message round_change_message(const Validator& v, int round) const {
    Message rc;
    rc.kind = MsgKind::kRoundChange;
    rc.height = v.height;
    rc.round = round;
    rc.prepared = v.prepared;
    return rc;
  }

  void on_timeout(Validator& v) {
    const Committee& c = committee_for(v, v.height);
    int next = v.round + 1;
    enter_round(v, next);
    if (is_member(c, v.spec.id)) broadcast(v, round_change_message(v, next));
  }

  void on_round_change(Validator& v, const Message& m, const Committee& c) {
    if (!valid_prepared_cert(v, m.prepared, m.height, c)) return;
    v.round_changes[m.round][m.sender] = m;

    // Jump forward once f+1 members are ahead of us.
    std::map<int, int> highest;
    for (const auto& [round, by_sender] : v.round_changes) {
      if (round <= v.round) continue;
      for (const auto& [sender, msg] : by_sender) highest[sender] = std::max(highest[sender], round);
    }
    int needed = committee_f(c) + 1;
    if (static_cast<int>(highest.size()) >= needed) {
      std::vector<int> rounds;
      for (const auto& [sender, r] : highest) rounds.push_back(r);
      std::sort(rounds.rbegin(), rounds.rend());
      int target = rounds[needed - 1];
      if (target > v.round) {
        enter_round(v, target);
        broadcast(v, round_change_message(v, target));
      }
    }
    try_repropose(v);
  }

  void try_repropose(Validator& v) {
    if (v.round == 0 || v.proposed) return;
    const Committee& c = committee_for(v, v.height);
    if (!is_member(c, v.spec.id) || leader_of(v, v.height, v.round) != v.spec.id) return;
    auto it = v.round_changes.find(v.round);
    if (it == v.round_changes.end() || static_cast<int>(it->second.size()) < committee_quorum(c)) return;
    std::vector<Message> justification;
    const PreparedCert* best = nullptr;
    for (const auto& [sender, msg] : it->second) {
      justification.push_back(msg);
      if (msg.prepared.round >= 0 && (!best || msg.prepared.round > best->round)) best = &msg.prepared;
    }
    // Re-propose the highest prepared block unchanged.
    std::string forced = best ? best->digest : std::string();
    propose(v, std::move(justification), forced);
  }

  bool all_honest_done() const {
    for (const auto& v : validators_) {
      if (v.spec.behavior == Behavior::kHonest && !v.done) return false;
    }
    return true;
  }

  const ConsensusRun& run_;
  SeededRng net_rng_;
  int n_ = 0;
  int f_ = 0;
  int committee_size_ = 0;
  KeyRegistry registry_;
  KeyPair genesis_keys_;
  std::vector<Validator> validators_;
  std::map<int, int> index_;
  std::vector<Candidate> candidates_;
  std::map<std::pair<int, std::string>, Committee> committees_;
  std::map<std::pair<int, std::string>, std::vector<std::uint64_t>> weights_;
  std::map<std::string, Block> blocks_;
  std::map<int, std::vector<Block>> local_chain_;
  std::vector<Block> chain_;
  std::priority_queue<Event, std::vector<Event>, EventOrder> queue_;
  std::uint64_t seq_ = 0;
  std::int64_t now_ = 0;
  Trace trace_;
};

}  // namespace

Trace run_consensus(const ConsensusRun& run) {
  Simulator sim(run);
  return sim.run();
}

// ---------------------------------------------------------------------------
// Trace checks
// ---------------------------------------------------------------------------

namespace {

std::set<int> honest_ids(const Trace& trace) {
  std::set<int> out;
  for (int id : trace.validator_ids) {
    if (!trace.byzantine.count(id)) out.insert(id);
  }
  return out;
}

}  // namespace

bool check_safety(const Trace& trace) {
  auto honest = honest_ids(trace);
  std::map<int, std::string> decided;
  for (const auto& e : trace.events) {
    if (e.kind != "finalize" || !honest.count(e.sender)) continue;
    auto [it, inserted] = decided.emplace(e.height, e.digest);
    if (!inserted && it->second != e.digest) return false;
  }
  return true;
}

bool check_liveness(const Trace& trace, int gst) {
  auto honest = honest_ids(trace);
  std::map<int, std::set<int>> finalized;                 // validator -> heights
  std::map<std::pair<int, int>, std::set<int>> late_views;  // (validator, height) -> rounds
  for (const auto& e : trace.events) {
    if (!honest.count(e.sender)) continue;
    if (e.kind == "finalize") finalized[e.sender].insert(e.height);
    if (e.kind == "enter_round" && e.tick >= gst) late_views[{e.sender, e.height}].insert(e.round);
  }
  for (int id : honest) {
    for (int h = 1; h <= trace.target_heights; ++h) {
      if (!finalized[id].count(h)) return false;
    }
  }
  for (const auto& [key, rounds] : late_views) {
    if (static_cast<int>(rounds.size()) > trace.max_views) return false;
  }
  return true;
}

std::vector<int> views_per_block(const Trace& trace) {
  auto honest = honest_ids(trace);
  std::map<int, std::map<int, std::set<int>>> rounds;  // height -> validator -> rounds
  std::set<int> finalized_heights;
  for (const auto& e : trace.events) {
    if (!honest.count(e.sender)) continue;
    if (e.kind == "enter_round") rounds[e.height][e.sender].insert(e.round);
    if (e.kind == "finalize") finalized_heights.insert(e.height);
  }
  std::vector<int> out;
  for (int h : finalized_heights) {
    int views = 0;
    for (const auto& [id, set] : rounds[h]) views = std::max(views, static_cast<int>(set.size()));
    out.push_back(views);
  }
  return out;
}

namespace {

void write_trace_stream(const Trace& trace, std::ostream& out) {
  nlohmann::json header;
  header["type"] = "header";
  header["n"] = trace.n;
  header["f"] = trace.f;
  header["delta"] = trace.delta;
  header["gst"] = trace.gst;
  header["target_heights"] = trace.target_heights;
  header["max_views"] = trace.max_views;
  header["validators"] = trace.validator_ids;
  nlohmann::json byz = nlohmann::json::object();
  for (const auto& [id, name] : trace.byzantine) byz[std::to_string(id)] = name;
  header["byzantine"] = byz;
  header["stalled"] = trace.stalled;
  header["end_tick"] = trace.end_tick;
  out << header.dump() << '\n';
  for (const auto& e : trace.events) {
    nlohmann::json j;
    j["type"] = "event";
    j["tick"] = e.tick;
    j["kind"] = e.kind;
    j["sender"] = e.sender;
    j["receiver"] = e.receiver;
    j["height"] = e.height;
    j["round"] = e.round;
    j["digest"] = e.digest;
    out << j.dump() << '\n';
  }
  for (const auto& b : trace.chain) {
    nlohmann::json j;
    j["type"] = "block";
    j["height"] = b.height;
    j["parent"] = b.parent_hash;
    j["proposer"] = b.proposer;
    j["round"] = b.round;
    j["payload"] = b.payload;
    j["commit_signers"] = b.commit_signers;
    j["hash"] = b.hash();
    out << j.dump() << '\n';
  }
}

std::ofstream open_trace_file(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write trace: " + path.string());
  return out;
}

}  // namespace

void write_trace_jsonl(const Trace& trace, const std::filesystem::path& path) {
  auto out = open_trace_file(path);
  write_trace_stream(trace, out);
}

void write_traces_jsonl(const std::vector<Trace>& traces, const std::filesystem::path& path) {
  auto out = open_trace_file(path);
  for (const auto& t : traces) write_trace_stream(t, out);
}

Trace read_trace_jsonl(const std::filesystem::path& path) {
  auto traces = read_traces_jsonl(path);
  if (traces.size() != 1) throw ConfigError("expected exactly one trace in " + path.string());
  return std::move(traces.front());
}

std::vector<Trace> read_traces_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read trace: " + path.string());
  std::vector<Trace> traces;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      std::string type = j.at("type").get<std::string>();
      if (type != "header" && traces.empty()) throw ConfigError("trace does not start with a header line");
      if (type == "header") {
        traces.emplace_back();
      }
      Trace& trace = traces.back();
      if (type == "header") {
        trace.n = j.at("n").get<int>();
        trace.f = j.at("f").get<int>();
        trace.delta = j.at("delta").get<int>();
        trace.gst = j.at("gst").get<int>();
        trace.target_heights = j.at("target_heights").get<int>();
        trace.max_views = j.at("max_views").get<int>();
        trace.validator_ids = j.at("validators").get<std::vector<int>>();
        for (const auto& [id, name] : j.at("byzantine").items()) trace.byzantine[std::stoi(id)] = name.get<std::string>();
        trace.stalled = j.at("stalled").get<bool>();
        trace.end_tick = j.at("end_tick").get<std::int64_t>();
      } else if (type == "event") {
        TraceEvent e;
        e.tick = j.at("tick").get<std::int64_t>();
        e.kind = j.at("kind").get<std::string>();
        e.sender = j.at("sender").get<int>();
        e.receiver = j.at("receiver").get<int>();
        e.height = j.at("height").get<int>();
        e.round = j.at("round").get<int>();
        e.digest = j.at("digest").get<std::string>();
        trace.events.push_back(std::move(e));
      } else if (type == "block") {
        Block b;
        b.height = j.at("height").get<int>();
        b.parent_hash = j.at("parent").get<std::string>();
        b.proposer = j.at("proposer").get<int>();
        b.round = j.at("round").get<int>();
        b.payload = j.at("payload").get<std::vector<std::string>>();
        b.commit_signers = j.at("commit_signers").get<std::vector<int>>();
        trace.chain.push_back(std::move(b));
      } else {
        throw ConfigError("unknown trace record type: " + type);
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("trace line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (traces.empty()) throw ConfigError("trace has no header line");
  return traces;
}

}  // namespace abcdfl
