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
#include "abcdfl/ledger.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>

#include "abcdfl/incentives.hpp"

namespace abcdfl {

using nlohmann::json;

namespace {

struct KindName {
  TxKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {TxKind::kRegisterMP, "registerMP"},         {TxKind::kRegisterCS, "registerCS"},
    {TxKind::kRegisterEV, "registerEV"},         {TxKind::kPublishModel, "publishModel"},
    {TxKind::kJoinCSModel, "joinCSModel"},       {TxKind::kJoinEVModel, "joinEVModel"},
    {TxKind::kSubmitIM, "submitIM"},             {TxKind::kSubmitGM, "submitGM"},
    {TxKind::kUpdateCSScores, "updateCSScores"}, {TxKind::kUpdateEVScores, "updateEVScores"},
    {TxKind::kDistributeReward, "distributeReward"},
};

template <typename T>
T field(const json& payload, const char* key) {
  auto it = payload.find(key);
  if (it == payload.end()) throw LedgerError(RejectCode::kMalformed, std::string("missing payload field ") + key);
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw LedgerError(RejectCode::kMalformed, std::string("bad payload field ") + key);
  }
}

}  // namespace

std::string to_string(TxKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "?";
}

TxKind parse_tx_kind(const std::string& name) {
  for (const auto& kn : kKindNames) {
    if (name == kn.name) return kn.kind;
  }
  throw LedgerError(RejectCode::kMalformed, "unknown transaction kind: " + name);
}

const std::vector<TxKind>& all_tx_kinds() {
  static const std::vector<TxKind> kinds = [] {
    std::vector<TxKind> out;
    for (const auto& kn : kKindNames) out.push_back(kn.kind);
    return out;
  }();
  return kinds;
}

std::string to_string(RejectCode code) {
  switch (code) {
    case RejectCode::kNone: return "OK";
    case RejectCode::kNotRegistered: return "NOT_REGISTERED";
    case RejectCode::kNotJoined: return "NOT_JOINED";
    case RejectCode::kDuplicate: return "DUPLICATE";
    case RejectCode::kBadCert: return "BAD_CERT";
    case RejectCode::kUnknownCid: return "UNKNOWN_CID";
    case RejectCode::kWrongRound: return "WRONG_ROUND";
    case RejectCode::kUnauthorized: return "UNAUTHORIZED";
    case RejectCode::kBadSignature: return "BAD_SIGNATURE";
    case RejectCode::kUnknownTask: return "UNKNOWN_TASK";
    case RejectCode::kMalformed: return "MALFORMED";
  }
  return "?";
}

std::string hex_encode(const Digest& d) { return to_hex(d); }

Digest hex_decode(const std::string& hex) {
  Digest out{};
  if (hex.size() != 2 * out.size()) throw LedgerError(RejectCode::kMalformed, "bad hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw LedgerError(RejectCode::kMalformed, "bad hex digit");
  };
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) * 16 + nibble(hex[2 * i + 1]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Blob store
// ---------------------------------------------------------------------------

std::string content_id(const std::string& bytes) { return sha256_hex(bytes); }

BlobStore::BlobStore(std::filesystem::path directory) : directory_(std::move(directory)) {
  std::filesystem::create_directories(*directory_);
}

std::string BlobStore::store(const std::string& bytes) {
  std::string cid = content_id(bytes);
  auto [it, inserted] = blobs_.emplace(cid, bytes);
  if (inserted && directory_) {
    std::ofstream out(*directory_ / cid, std::ios::binary);
    if (!out) throw Error("cannot write blob " + cid);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  return cid;
}

const std::string& BlobStore::fetch(const std::string& cid) const {
  auto it = blobs_.find(cid);
  if (it == blobs_.end()) throw LedgerError(RejectCode::kUnknownCid, "unknown CID " + cid);
  return it->second;
}

void BlobStore::persist(const std::filesystem::path& directory) const {
  std::filesystem::create_directories(directory);
  for (const auto& [cid, bytes] : blobs_) {
    std::ofstream out(directory / cid, std::ios::binary);
    if (!out) throw Error("cannot write blob " + cid);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
}

BlobStore BlobStore::load(const std::filesystem::path& directory) {
  BlobStore store;
  if (!std::filesystem::is_directory(directory)) throw ConfigError("blob directory missing: " + directory.string());
  for (const auto& entry : std::filesystem::directory_iterator(directory)) {
    if (!entry.is_regular_file()) continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::string name = entry.path().filename().string();
    if (content_id(bytes) != name) throw ConfigError("blob content does not match its CID: " + name);
    store.blobs_.emplace(name, std::move(bytes));
  }
  return store;
}

Digest schema_digest(const Schema& schema) {
  std::string text;
  for (const auto& [name, dim] : schema) text += name + ":" + std::to_string(dim) + ";";
  return sha256(text);
}

std::string serialize_model(const UpdateDelta& delta) {
  Digest d = schema_digest(schema_of(delta));
  std::string out(d.begin(), d.end());
  Vector flat = flatten(delta);
  out.reserve(out.size() + 8 * flat.size());
  for (double v : flat) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int b = 0; b < 8; ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xFF));
  }
  return out;
}

UpdateDelta deserialize_model(const std::string& bytes, const Schema& schema, int round) {
  Digest d = schema_digest(schema);
  std::size_t count = 0;
  for (const auto& [name, dim] : schema) count += dim;
  if (bytes.size() != d.size() + 8 * count) throw ConfigError("serialized model has the wrong length");
  if (std::memcmp(bytes.data(), d.data(), d.size()) != 0) throw ConfigError("serialized model schema mismatch");
  Vector flat(count);
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(bytes[d.size() + 8 * i + b])) << (8 * b);
    }
    std::memcpy(&flat[i], &bits, sizeof bits);
  }
  return unflatten(schema, flat, round);
}

// ---------------------------------------------------------------------------
// Transactions
// ---------------------------------------------------------------------------

std::string Transaction::signing_text() const {
  return to_string(kind) + "|" + sender + "|" + hex_encode(sender_pk) + "|" + payload.dump();
}

std::string Transaction::id() const { return sha256_hex(signing_text() + "|" + hex_encode(signature)); }

std::string Transaction::serialize() const {
  json j;
  j["kind"] = to_string(kind);
  j["sender"] = sender;
  j["pk"] = hex_encode(sender_pk);
  j["payload"] = payload;
  j["sig"] = hex_encode(signature);
  return j.dump();
}

Transaction Transaction::deserialize(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw LedgerError(RejectCode::kMalformed, std::string("transaction is not JSON: ") + e.what());
  }
  Transaction tx;
  tx.kind = parse_tx_kind(field<std::string>(j, "kind"));
  tx.sender = field<std::string>(j, "sender");
  tx.sender_pk = hex_decode(field<std::string>(j, "pk"));
  tx.payload = j.contains("payload") && j["payload"].is_object() ? j["payload"] : json::object();
  tx.signature = hex_decode(field<std::string>(j, "sig"));
  return tx;
}

Transaction Transaction::make(TxKind kind, const std::string& sender, const KeyPair& keys, json payload) {
  Transaction tx;
  tx.kind = kind;
  tx.sender = sender;
  tx.sender_pk = keys.public_key;
  tx.payload = std::move(payload);
  tx.signature = sign(keys.secret, tx.signing_text());
  return tx;
}

std::string admission_text(TxKind kind, const std::string& id, const PublicKey& pk) {
  return "admit|" + to_string(kind) + "|" + id + "|" + hex_encode(pk);
}

json admission_fields(TxKind kind, const std::string& id, const PublicKey& pk, const KeyPair& admin) {
  json j;
  j["admin"] = hex_encode(admin.public_key);
  j["endorsement"] = hex_encode(sign(admin.secret, admission_text(kind, id, pk)));
  return j;
}

json cert_to_json(const QuorumCert& cert) {
  json j;
  j["digest"] = cert.digest;
  j["threshold"] = cert.threshold;
  json partials = json::array();
  for (const auto& p : cert.partials) {
    partials.push_back({{"signer", hex_encode(p.signer)}, {"sig", hex_encode(p.signature)}});
  }
  j["partials"] = partials;
  return j;
}

QuorumCert cert_from_json(const json& j) {
  QuorumCert cert;
  cert.digest = field<std::string>(j, "digest");
  cert.threshold = field<int>(j, "threshold");
  for (const auto& p : field<json>(j, "partials")) {
    cert.partials.push_back({hex_decode(field<std::string>(p, "signer")), hex_decode(field<std::string>(p, "sig"))});
  }
  return cert;
}

// ---------------------------------------------------------------------------
// Ledger
// ---------------------------------------------------------------------------

Ledger::Ledger(const KeyRegistry& registry, std::vector<PublicKey> admins, std::vector<PublicKey> oracles,
               const IncentiveSettings& incentives, const BlobStore* blobs)
    : registry_(registry),
      admins_(std::move(admins)),
      oracles_(std::move(oracles)),
      incentives_(incentives),
      blobs_(blobs) {}

void Ledger::require(bool condition, RejectCode code, const std::string& message) const {
  if (!condition) throw LedgerError(code, message);
}

const TaskState& Ledger::task(const std::string& model_id) const {
  auto it = tasks_.find(model_id);
  if (it == tasks_.end()) throw LedgerError(RejectCode::kUnknownTask, "unknown task " + model_id);
  return it->second;
}

TaskState& Ledger::task_for(const json& payload) {
  std::string id = field<std::string>(payload, "model_id");
  auto it = tasks_.find(id);
  require(it != tasks_.end(), RejectCode::kUnknownTask, "unknown task " + id);
  return it->second;
}

bool Ledger::is_oracle(const PublicKey& pk) const {
  return std::find(oracles_.begin(), oracles_.end(), pk) != oracles_.end();
}

void Ledger::check_admission(const Transaction& tx) const {
  PublicKey admin = hex_decode(field<std::string>(tx.payload, "admin"));
  Signature endorsement = hex_decode(field<std::string>(tx.payload, "endorsement"));
  require(std::find(admins_.begin(), admins_.end(), admin) != admins_.end(), RejectCode::kUnauthorized,
          "registration not endorsed by an admin");
  require(registry_.verify(admin, admission_text(tx.kind, tx.sender, tx.sender_pk), endorsement),
          RejectCode::kUnauthorized, "invalid admin endorsement");
}

TxResult Ledger::apply(const Transaction& tx) {
  TxResult result;
  try {
    require(registry_.verify(tx.sender_pk, tx.signing_text(), tx.signature), RejectCode::kBadSignature,
            "transaction signature does not verify");
    switch (tx.kind) {
      case TxKind::kRegisterMP: do_register_mp(tx); break;
      case TxKind::kRegisterCS: do_register_cs(tx); break;
      case TxKind::kRegisterEV: do_register_ev(tx); break;
      case TxKind::kPublishModel: do_publish(tx); break;
      case TxKind::kJoinCSModel: do_join_cs(tx); break;
      case TxKind::kJoinEVModel: do_join_ev(tx); break;
      case TxKind::kSubmitIM: do_submit_im(tx, result); break;
      case TxKind::kSubmitGM: do_submit_gm(tx, result); break;
      case TxKind::kUpdateCSScores: do_update_scores(tx, true); break;
      case TxKind::kUpdateEVScores: do_update_scores(tx, false); break;
      case TxKind::kDistributeReward: do_distribute(tx, result); break;
    }
  } catch (const LedgerError& e) {
    result = TxResult{};
    result.code = e.code();
    result.message = e.what();
    return result;
  }
  result.accepted = true;
  counters_[to_string(tx.kind)] += 1;
  accepted_.push_back(tx);
  events_.insert(events_.end(), result.events.begin(), result.events.end());
  return result;
}

void Ledger::do_register_mp(const Transaction& tx) {
  check_admission(tx);
  require(!mps_.count(tx.sender), RejectCode::kDuplicate, "MP already registered");
  mps_[tx.sender] = tx.sender_pk;
}

void Ledger::do_register_cs(const Transaction& tx) {
  check_admission(tx);
  require(!css_.count(tx.sender), RejectCode::kDuplicate, "CS already registered");
  CsRecord rec;
  rec.pk = tx.sender_pk;
  rec.reputation = incentives_.initial_reputation;
  std::set<PublicKey> seen;
  for (const auto& hex : field<std::vector<std::string>>(tx.payload, "ev_pks")) {
    PublicKey pk = hex_decode(hex);
    require(seen.insert(pk).second, RejectCode::kMalformed, "duplicate EV key in group");
    rec.ev_pks.push_back(pk);
  }
  require(!rec.ev_pks.empty(), RejectCode::kMalformed, "CS group has no EVs");
  css_[tx.sender] = std::move(rec);
}

void Ledger::do_register_ev(const Transaction& tx) {
  check_admission(tx);
  require(!evs_.count(tx.sender), RejectCode::kDuplicate, "EV already registered");
  evs_[tx.sender] = tx.sender_pk;
}

void Ledger::do_publish(const Transaction& tx) {
  auto mp = mps_.find(tx.sender);
  require(mp != mps_.end() && mp->second == tx.sender_pk, RejectCode::kNotRegistered, "publisher is not an MP");
  std::string id = field<std::string>(tx.payload, "model_id");
  require(!tasks_.count(id), RejectCode::kDuplicate, "model id already published");
  TaskState t;
  t.publisher = tx.sender;
  t.model_cid = field<std::string>(tx.payload, "model_cid");
  t.required_cs = field<int>(tx.payload, "required_cs");
  t.max_rounds = field<int>(tx.payload, "rounds");
  require(t.required_cs >= 1 && t.max_rounds >= 1, RejectCode::kMalformed, "task needs CSs and rounds");
  require(blobs_ && blobs_->contains(t.model_cid), RejectCode::kUnknownCid, "model CID not in blob store");
  tasks_[id] = std::move(t);
}

void Ledger::do_join_cs(const Transaction& tx) {
  auto cs = css_.find(tx.sender);
  require(cs != css_.end() && cs->second.pk == tx.sender_pk, RejectCode::kNotRegistered, "CS not registered");
  TaskState& t = task_for(tx.payload);
  require(!t.joined.count(tx.sender), RejectCode::kDuplicate, "CS already joined");
  require(t.status == "open", RejectCode::kUnauthorized, "task is not accepting CSs");
  double deposit = field<double>(tx.payload, "deposit");
  require(deposit >= 0.0, RejectCode::kMalformed, "negative deposit");
  CsTaskState st;
  st.deposit = deposit;
  t.joined[tx.sender] = st;
  if (static_cast<int>(t.joined.size()) == t.required_cs) {
    t.status = "running";
    t.round = 1;
  }
}

void Ledger::do_join_ev(const Transaction& tx) {
  auto ev = evs_.find(tx.sender);
  require(ev != evs_.end() && ev->second == tx.sender_pk, RejectCode::kNotRegistered, "EV not registered");
  TaskState& t = task_for(tx.payload);
  require(!t.joined_evs.count(tx.sender), RejectCode::kDuplicate, "EV already joined");
  t.joined_evs.insert(tx.sender);
}

void Ledger::do_submit_im(const Transaction& tx, TxResult& result) {
  auto cs = css_.find(tx.sender);
  require(cs != css_.end() && cs->second.pk == tx.sender_pk, RejectCode::kNotRegistered, "CS not registered");
  TaskState& t = task_for(tx.payload);
  require(t.joined.count(tx.sender) > 0, RejectCode::kNotJoined, "CS has not joined the task");
  int round = field<int>(tx.payload, "round");
  require(t.status == "running" && round == t.round, RejectCode::kWrongRound, "round does not match task round");
  auto& submitted = t.im_cids[round];
  require(!submitted.count(tx.sender), RejectCode::kDuplicate, "IM already submitted this round");
  std::string cid = field<std::string>(tx.payload, "cid");
  QuorumCert cert = cert_from_json(field<json>(tx.payload, "cert"));
  int tau = default_threshold(static_cast<int>(cs->second.ev_pks.size()));
  require(cert.digest == cid && cert.threshold >= tau && verify_quorum_cert(cert, registry_, &cs->second.ev_pks),
          RejectCode::kBadCert, "quorum certificate does not endorse the CID");
  require(blobs_ && blobs_->contains(cid), RejectCode::kUnknownCid, "IM CID not in blob store");
  submitted[tx.sender] = cid;
  if (submitted.size() == t.joined.size()) {
    LedgerEvent ev;
    ev.kind = "AGGREGATE";
    ev.model_id = field<std::string>(tx.payload, "model_id");
    ev.round = round;
    for (const auto& [id, c] : submitted) ev.cids.push_back(c);
    result.events.push_back(std::move(ev));
  }
}

void Ledger::do_submit_gm(const Transaction& tx, TxResult& result) {
  require(is_oracle(tx.sender_pk), RejectCode::kUnauthorized, "only oracles submit global models");
  TaskState& t = task_for(tx.payload);
  int round = field<int>(tx.payload, "round");
  require(!t.gm_cids.count(round), RejectCode::kDuplicate, "global model already submitted for this round");
  require(t.status == "running" && round == t.round, RejectCode::kWrongRound, "round does not match task round");
  require(t.im_cids[round].size() == t.joined.size(), RejectCode::kWrongRound, "round has not been aggregated");
  std::string cid = field<std::string>(tx.payload, "cid");
  require(blobs_ && blobs_->contains(cid), RejectCode::kUnknownCid, "GM CID not in blob store");
  t.gm_cids[round] = cid;
  if (round >= t.max_rounds) {
    t.status = "completed";
    LedgerEvent ev;
    ev.kind = "TASK_COMPLETE";
    ev.model_id = field<std::string>(tx.payload, "model_id");
    ev.round = round;
    ev.cids.push_back(cid);
    result.events.push_back(std::move(ev));
  } else {
    t.round = round + 1;
  }
}

void Ledger::do_update_scores(const Transaction& tx, bool cs_level) {
  require(is_oracle(tx.sender_pk), RejectCode::kUnauthorized, "only oracles update scores");
  TaskState& t = task_for(tx.payload);
  int round = field<int>(tx.payload, "round");
  std::string who = field<std::string>(tx.payload, cs_level ? "cs" : "ev");
  require(t.status == "running" || t.status == "completed", RejectCode::kWrongRound, "task is not active");
  require(t.gm_cids.count(round) > 0, RejectCode::kWrongRound, "scores precede the round's global model");
  require(!t.scored.count({round, std::string(cs_level ? "cs:" : "ev:") + who}), RejectCode::kDuplicate,
          "scores already updated for this round");
  double delta = field<double>(tx.payload, "delta");
  if (cs_level) {
    auto it = t.joined.find(who);
    require(it != t.joined.end(), RejectCode::kNotJoined, "scored CS has not joined");
    bool majority = field<bool>(tx.payload, "majority");
    it->second.score = apply_score(it->second.score, delta, majority);
    if (majority) it->second.majority_count += 1;
  } else {
    require(evs_.count(who) > 0, RejectCode::kNotRegistered, "scored EV not registered");
    t.ev_scores[who] += delta;
  }
  t.scored.insert({round, std::string(cs_level ? "cs:" : "ev:") + who});
}

void Ledger::compute_settlement(TaskState& t) {
  std::vector<double> counts;
  for (const auto& [id, st] : t.joined) counts.push_back(static_cast<double>(st.majority_count));
  auto rewards = normalize_rewards(counts, incentives_.reward_b, incentives_.budget);
  std::size_t i = 0;
  for (auto& [id, st] : t.joined) {
    st.reward = rewards[i++];
    st.reputation_after = gompertz_reputation(css_.at(id).reputation, st.score, incentives_.gompertz_a,
                                              incentives_.gompertz_b, incentives_.gompertz_c);
    st.slashed = st.reputation_after < incentives_.slash_threshold;
  }
}

void Ledger::do_distribute(const Transaction& tx, TxResult& result) {
  require(is_oracle(tx.sender_pk), RejectCode::kUnauthorized, "only oracles distribute rewards");
  TaskState& t = task_for(tx.payload);
  require(t.status == "completed", RejectCode::kWrongRound, "task has not completed");
  std::string who = field<std::string>(tx.payload, "cs");
  auto it = t.joined.find(who);
  require(it != t.joined.end(), RejectCode::kNotJoined, "CS has not joined");
  require(!it->second.settled, RejectCode::kDuplicate, "CS already settled");
  bool first = std::none_of(t.joined.begin(), t.joined.end(), [](const auto& kv) { return kv.second.settled; });
  if (first) compute_settlement(t);
  CsTaskState& st = it->second;
  CsRecord& rec = css_.at(who);
  rec.balance += st.reward;
  rec.reputation = st.reputation_after;
  if (st.slashed) {
    treasury_ += st.deposit;
  } else {
    rec.balance += st.deposit;
  }
  st.settled = true;
  bool all = std::all_of(t.joined.begin(), t.joined.end(), [](const auto& kv) { return kv.second.settled; });
  if (all) {
    t.status = "settled";
    LedgerEvent ev;
    ev.kind = "TASK_SETTLED";
    ev.model_id = field<std::string>(tx.payload, "model_id");
    ev.round = t.round;
    result.events.push_back(std::move(ev));
  }
}

// ---------------------------------------------------------------------------
// Snapshot
// ---------------------------------------------------------------------------

std::string Ledger::snapshot() const {
  json j;
  json mps = json::object();
  for (const auto& [id, pk] : mps_) mps[id] = hex_encode(pk);
  json evs = json::object();
  for (const auto& [id, pk] : evs_) evs[id] = hex_encode(pk);
  json css = json::object();
  for (const auto& [id, rec] : css_) {
    json c;
    c["pk"] = hex_encode(rec.pk);
    json keys = json::array();
    for (const auto& pk : rec.ev_pks) keys.push_back(hex_encode(pk));
    c["ev_pks"] = keys;
    c["reputation"] = rec.reputation;
    c["balance"] = rec.balance;
    css[id] = c;
  }
  json tasks = json::object();
  for (const auto& [id, t] : tasks_) {
    json tj;
    tj["publisher"] = t.publisher;
    tj["model_cid"] = t.model_cid;
    tj["required_cs"] = t.required_cs;
    tj["max_rounds"] = t.max_rounds;
    tj["round"] = t.round;
    tj["status"] = t.status;
    json joined = json::object();
    for (const auto& [cs, st] : t.joined) {
      joined[cs] = {{"deposit", st.deposit},       {"score", st.score},   {"majority_count", st.majority_count},
                    {"settled", st.settled},       {"reward", st.reward}, {"reputation_after", st.reputation_after},
                    {"slashed", st.slashed}};
    }
    tj["joined"] = joined;
    tj["joined_evs"] = t.joined_evs;
    json ims = json::object();
    for (const auto& [round, m] : t.im_cids) ims[std::to_string(round)] = m;
    tj["im_cids"] = ims;
    json gms = json::object();
    for (const auto& [round, cid] : t.gm_cids) gms[std::to_string(round)] = cid;
    tj["gm_cids"] = gms;
    json scored = json::array();
    for (const auto& [round, who] : t.scored) scored.push_back({round, who});
    tj["scored"] = scored;
    tj["ev_scores"] = t.ev_scores;
    tasks[id] = tj;
  }
  j["mps"] = mps;
  j["css"] = css;
  j["evs"] = evs;
  j["tasks"] = tasks;
  j["counters"] = counters_;
  j["treasury"] = treasury_;
  return j.dump(1);
}

void Ledger::restore(const std::string& snapshot_text) {
  json j;
  try {
    j = json::parse(snapshot_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad ledger snapshot: ") + e.what());
  }
  try {
    mps_.clear();
    evs_.clear();
    css_.clear();
    tasks_.clear();
    for (const auto& [id, pk] : j.at("mps").items()) mps_[id] = hex_decode(pk.get<std::string>());
    for (const auto& [id, pk] : j.at("evs").items()) evs_[id] = hex_decode(pk.get<std::string>());
    for (const auto& [id, c] : j.at("css").items()) {
      CsRecord rec;
      rec.pk = hex_decode(c.at("pk").get<std::string>());
      for (const auto& k : c.at("ev_pks")) rec.ev_pks.push_back(hex_decode(k.get<std::string>()));
      rec.reputation = c.at("reputation").get<double>();
      rec.balance = c.at("balance").get<double>();
      css_[id] = std::move(rec);
    }
    for (const auto& [id, tj] : j.at("tasks").items()) {
      TaskState t;
      t.publisher = tj.at("publisher").get<std::string>();
      t.model_cid = tj.at("model_cid").get<std::string>();
      t.required_cs = tj.at("required_cs").get<int>();
      t.max_rounds = tj.at("max_rounds").get<int>();
      t.round = tj.at("round").get<int>();
      t.status = tj.at("status").get<std::string>();
      for (const auto& [cs, sj] : tj.at("joined").items()) {
        CsTaskState st;
        st.deposit = sj.at("deposit").get<double>();
        st.score = sj.at("score").get<double>();
        st.majority_count = sj.at("majority_count").get<int>();
        st.settled = sj.at("settled").get<bool>();
        st.reward = sj.at("reward").get<double>();
        st.reputation_after = sj.at("reputation_after").get<double>();
        st.slashed = sj.at("slashed").get<bool>();
        t.joined[cs] = st;
      }
      t.joined_evs = tj.at("joined_evs").get<std::set<std::string>>();
      for (const auto& [round, m] : tj.at("im_cids").items()) {
        t.im_cids[std::stoi(round)] = m.get<std::map<std::string, std::string>>();
      }
      for (const auto& [round, cid] : tj.at("gm_cids").items()) t.gm_cids[std::stoi(round)] = cid.get<std::string>();
      for (const auto& pair : tj.at("scored")) t.scored.insert({pair.at(0).get<int>(), pair.at(1).get<std::string>()});
      t.ev_scores = tj.at("ev_scores").get<std::map<std::string, double>>();
      tasks_[id] = std::move(t);
    }
    counters_ = j.at("counters").get<std::map<std::string, int>>();
    treasury_ = j.at("treasury").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad ledger snapshot: ") + e.what());
  }
  accepted_.clear();
  events_.clear();
}

// ---------------------------------------------------------------------------
// Accounting
// ---------------------------------------------------------------------------

std::string accounting_class(TxKind kind) {
  switch (kind) {
    case TxKind::kRegisterMP: return "registerMP";
    case TxKind::kPublishModel: return "publishModel";
    case TxKind::kSubmitGM: return "submitGM";
    case TxKind::kRegisterCS:
    case TxKind::kRegisterEV: return "register[CS/EV]";
    case TxKind::kJoinCSModel:
    case TxKind::kJoinEVModel: return "join[CS/EV]Model";
    case TxKind::kSubmitIM: return "submitIM";
    case TxKind::kUpdateCSScores:
    case TxKind::kUpdateEVScores: return "update[CS/EV]Scores";
    case TxKind::kDistributeReward: return "distributeReward";
  }
  return "?";
}

bool per_participant(TxKind kind) {
  return kind != TxKind::kRegisterMP && kind != TxKind::kPublishModel && kind != TxKind::kSubmitGM;
}

std::map<std::string, std::uint64_t> tx_accounting(const std::vector<Transaction>& log, int group_size,
                                                   AccountingMode mode) {
  if (group_size < 1) throw ConfigError("group size must be positive");
  std::map<std::string, std::uint64_t> counts;
  for (TxKind kind : all_tx_kinds()) counts[accounting_class(kind)] += 0;
  const std::uint64_t factor = mode == AccountingMode::kPureBfl ? static_cast<std::uint64_t>(group_size) : 1;
  for (const auto& tx : log) {
    // EV-level kinds only appear when a run already issues them per EV.
    bool ev_level = tx.kind == TxKind::kRegisterEV || tx.kind == TxKind::kJoinEVModel ||
                    tx.kind == TxKind::kUpdateEVScores;
    std::uint64_t mult = per_participant(tx.kind) && !ev_level ? factor : 1;
    counts[accounting_class(tx.kind)] += mult;
  }
  return counts;
}

std::uint64_t gas_per_call(const std::string& cls) {
  static const std::map<std::string, std::uint64_t> table = {
      {"registerMP", 120000},       {"publishModel", 200000},        {"submitGM", 100000},
      {"register[CS/EV]", 115000},  {"join[CS/EV]Model", 90000},     {"submitIM", 140000},
      {"update[CS/EV]Scores", 85000}, {"distributeReward", 110000},
  };
  auto it = table.find(cls);
  if (it == table.end()) throw ConfigError("unknown accounting class: " + cls);
  return it->second;
}

std::uint64_t total_gas(const std::map<std::string, std::uint64_t>& counts) {
  std::uint64_t total = 0;
  for (const auto& [cls, n] : counts) total += n * gas_per_call(cls);
  return total;
}

}  // namespace abcdfl
