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

// Contract state machine for registration, task publication, certified IM
// submission, oracle-side global model and score updates, and settlement.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "abcdfl/config.hpp"
#include "abcdfl/core.hpp"
#include "abcdfl/crypto.hpp"

namespace abcdfl {

enum class TxKind {
  kRegisterMP,
  kRegisterCS,
  kRegisterEV,
  kPublishModel,
  kJoinCSModel,
  kJoinEVModel,
  kSubmitIM,
  kSubmitGM,
  kUpdateCSScores,
  kUpdateEVScores,
  kDistributeReward,
};

std::string to_string(TxKind kind);
TxKind parse_tx_kind(const std::string& name);
const std::vector<TxKind>& all_tx_kinds();

enum class RejectCode {
  kNone,
  kNotRegistered,
  kNotJoined,
  kDuplicate,
  kBadCert,
  kUnknownCid,
  kWrongRound,
  kUnauthorized,
  kBadSignature,
  kUnknownTask,
  kMalformed,
};

std::string to_string(RejectCode code);

class LedgerError : public Error {
 public:
  LedgerError(RejectCode code, const std::string& what) : Error(what), code_(code) {}
  RejectCode code() const { return code_; }

 private:
  RejectCode code_;
};

std::string hex_encode(const Digest& d);
// Throws LedgerError(kMalformed) on bad input.
Digest hex_decode(const std::string& hex);

// ---------------------------------------------------------------------------
// Blob store
// ---------------------------------------------------------------------------

class BlobStore {
 public:
  BlobStore() = default;
  // Every stored blob is also written to `directory` under its CID.
  explicit BlobStore(std::filesystem::path directory);

  std::string store(const std::string& bytes);
  // Throws LedgerError(kUnknownCid).
  const std::string& fetch(const std::string& cid) const;
  bool contains(const std::string& cid) const { return blobs_.count(cid) > 0; }
  std::size_t size() const { return blobs_.size(); }

  void persist(const std::filesystem::path& directory) const;
  // Rejects files whose content does not hash to their name.
  static BlobStore load(const std::filesystem::path& directory);

 private:
  std::map<std::string, std::string> blobs_;
  std::optional<std::filesystem::path> directory_;
};

std::string content_id(const std::string& bytes);

// 32-byte schema digest followed by every parameter as little-endian
// float64, layers in lexicographic order.
std::string serialize_model(const UpdateDelta& delta);
// Throws ConfigError if the schema digest does not match.
UpdateDelta deserialize_model(const std::string& bytes, const Schema& schema, int round = 0);
Digest schema_digest(const Schema& schema);

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

struct Transaction {
  TxKind kind = TxKind::kRegisterMP;
  std::string sender;
  PublicKey sender_pk{};
  nlohmann::json payload = nlohmann::json::object();
  Signature signature{};

  std::string signing_text() const;
  std::string id() const;
  std::string serialize() const;
  // Throws LedgerError(kMalformed).
  static Transaction deserialize(const std::string& text);
  static Transaction make(TxKind kind, const std::string& sender, const KeyPair& keys, nlohmann::json payload);
};

// Admin endorsement carried in registration payloads.
std::string admission_text(TxKind kind, const std::string& id, const PublicKey& pk);
nlohmann::json admission_fields(TxKind kind, const std::string& id, const PublicKey& pk, const KeyPair& admin);

nlohmann::json cert_to_json(const QuorumCert& cert);
QuorumCert cert_from_json(const nlohmann::json& j);

struct LedgerEvent {
  std::string kind;  // AGGREGATE, TASK_COMPLETE, TASK_SETTLED
  std::string model_id;
  int round = 0;
  std::vector<std::string> cids;
};

struct TxResult {
  bool accepted = false;
  RejectCode code = RejectCode::kNone;
  std::string message;
  std::vector<LedgerEvent> events;
};

struct CsRecord {
  PublicKey pk{};
  std::vector<PublicKey> ev_pks;
  double reputation = 0.5;
  double balance = 0.0;
};

struct CsTaskState {
  double deposit = 0.0;
  double score = 0.0;
  int majority_count = 0;
  bool settled = false;
  double reward = 0.0;
  double reputation_after = 0.0;
  bool slashed = false;
};

struct TaskState {
  std::string publisher;
  std::string model_cid;
  int required_cs = 0;
  int max_rounds = 0;
  int round = 0;  // 0 until the required CS count joined, then 1..T
  std::string status = "open";  // open, running, completed, settled
  std::map<std::string, CsTaskState> joined;
  std::set<std::string> joined_evs;
  std::map<int, std::map<std::string, std::string>> im_cids;
  std::map<int, std::string> gm_cids;
  std::set<std::pair<int, std::string>> scored;  // (round, participant)
  std::map<std::string, double> ev_scores;
};

class Ledger {
 public:
  Ledger(const KeyRegistry& registry, std::vector<PublicKey> admins, std::vector<PublicKey> oracles,
         const IncentiveSettings& incentives, const BlobStore* blobs);

  TxResult apply(const Transaction& tx);

  const std::map<std::string, PublicKey>& mps() const { return mps_; }
  const std::map<std::string, CsRecord>& css() const { return css_; }
  const std::map<std::string, PublicKey>& evs() const { return evs_; }
  const std::map<std::string, TaskState>& tasks() const { return tasks_; }
  const TaskState& task(const std::string& model_id) const;
  const std::vector<Transaction>& accepted() const { return accepted_; }
  const std::vector<LedgerEvent>& events() const { return events_; }
  const std::map<std::string, int>& counters() const { return counters_; }
  double treasury() const { return treasury_; }

  // Deterministic JSON text of the full state, accepted log excluded.
  std::string snapshot() const;
  void restore(const std::string& snapshot_text);
  std::string state_digest() const { return sha256_hex(snapshot()); }

 private:
  void require(bool condition, RejectCode code, const std::string& message) const;
  void check_admission(const Transaction& tx) const;
  TaskState& task_for(const nlohmann::json& payload);
  bool is_oracle(const PublicKey& pk) const;
  void compute_settlement(TaskState& task);

  void do_register_mp(const Transaction& tx);
  void do_register_cs(const Transaction& tx);
  void do_register_ev(const Transaction& tx);
  void do_publish(const Transaction& tx);
  void do_join_cs(const Transaction& tx);
  void do_join_ev(const Transaction& tx);
  void do_submit_im(const Transaction& tx, TxResult& result);
  void do_submit_gm(const Transaction& tx, TxResult& result);
  void do_update_scores(const Transaction& tx, bool cs_level);
  void do_distribute(const Transaction& tx, TxResult& result);

  const KeyRegistry& registry_;
  std::vector<PublicKey> admins_;
  std::vector<PublicKey> oracles_;
  IncentiveSettings incentives_;
  const BlobStore* blobs_;

  std::map<std::string, PublicKey> mps_;
  std::map<std::string, CsRecord> css_;
  std::map<std::string, PublicKey> evs_;
  std::map<std::string, TaskState> tasks_;
  std::map<std::string, int> counters_;
  double treasury_ = 0.0;
  std::vector<Transaction> accepted_;
  std::vector<LedgerEvent> events_;
};

// ---------------------------------------------------------------------------
// Transaction accounting
// ---------------------------------------------------------------------------

// Reporting classes: registerMP, publishModel, submitGM, register[CS/EV],
// join[CS/EV]Model, submitIM, update[CS/EV]Scores, distributeReward.
std::string accounting_class(TxKind kind);
// True for classes issued once per participant (CS or EV).
bool per_participant(TxKind kind);

// Counts accepted transactions of a clustered run. In pure_bfl mode every
// per-participant transaction is issued by each EV of the group instead of
// its CS, i.e. multiplied by the group size.
std::map<std::string, std::uint64_t> tx_accounting(const std::vector<Transaction>& log, int group_size,
                                                   AccountingMode mode);
// Constant per-call cost table used for end-to-end cost reports.
std::uint64_t gas_per_call(const std::string& accounting_class);
std::uint64_t total_gas(const std::map<std::string, std::uint64_t>& counts);

}  // namespace abcdfl
