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
#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "abcdfl/incentives.hpp"
#include "abcdfl/ledger.hpp"

namespace abcdfl {
namespace {

using nlohmann::json;

// Two CSs with three EVs each, one MP, one admin and one oracle.
class LedgerFixture : public ::testing::Test {
 protected:
  void SetUp() override {
    SeededRng rng(3, Stream::kTest);
    admin = KeyPair::generate(rng);
    oracle = KeyPair::generate(rng);
    mp = KeyPair::generate(rng);
    registry.add(admin);
    registry.add(oracle);
    registry.add(mp);
    for (int c = 0; c < 2; ++c) {
      cs.push_back(KeyPair::generate(rng));
      registry.add(cs.back());
      evs.emplace_back();
      for (int e = 0; e < 3; ++e) {
        evs.back().push_back(KeyPair::generate(rng));
        registry.add(evs.back().back());
      }
    }
    model_cid = blobs.store("initial-model");
    ledger = std::make_unique<Ledger>(registry, std::vector<PublicKey>{admin.public_key},
                                      std::vector<PublicKey>{oracle.public_key}, incentives, &blobs);
  }

  static std::string cs_name(int c) { return "cs" + std::to_string(c); }

  Transaction register_mp() {
    json p = admission_fields(TxKind::kRegisterMP, "mp", mp.public_key, admin);
    return Transaction::make(TxKind::kRegisterMP, "mp", mp, p);
  }

  Transaction register_cs(int c) {
    json p = admission_fields(TxKind::kRegisterCS, cs_name(c), cs[c].public_key, admin);
    json keys = json::array();
    for (const auto& e : evs[c]) keys.push_back(hex_encode(e.public_key));
    p["ev_pks"] = keys;
    return Transaction::make(TxKind::kRegisterCS, cs_name(c), cs[c], p);
  }

  Transaction publish(const std::string& id = "m1", int rounds = 2) {
    return Transaction::make(TxKind::kPublishModel, "mp", mp,
                             {{"model_id", id}, {"model_cid", model_cid}, {"required_cs", 2}, {"rounds", rounds}});
  }

  Transaction join(int c) {
    return Transaction::make(TxKind::kJoinCSModel, cs_name(c), cs[c], {{"model_id", "m1"}, {"deposit", 100.0}});
  }

  QuorumCert cert_for(int c, const std::string& cid, int signers) {
    std::vector<PartialSignature> parts;
    for (int e = 0; e < signers; ++e) parts.push_back({evs[c][e].public_key, sign(evs[c][e].secret, cid)});
    return build_quorum_cert(cid, parts, default_threshold(3));
  }

  Transaction submit_im(int c, int round, const std::string& cid, int signers = 3) {
    return Transaction::make(TxKind::kSubmitIM, cs_name(c), cs[c],
                             {{"model_id", "m1"}, {"round", round}, {"cid", cid},
                              {"cert", cert_to_json(cert_for(c, cid, signers))}});
  }

  Transaction submit_gm(int round, const std::string& cid) {
    return Transaction::make(TxKind::kSubmitGM, "oracle", oracle, {{"model_id", "m1"}, {"round", round}, {"cid", cid}});
  }

  Transaction update_cs(int round, int c, double delta, bool majority) {
    return Transaction::make(TxKind::kUpdateCSScores, "oracle", oracle,
                             {{"model_id", "m1"}, {"round", round}, {"cs", cs_name(c)}, {"delta", delta},
                              {"majority", majority}});
  }

  Transaction distribute(int c) {
    return Transaction::make(TxKind::kDistributeReward, "oracle", oracle, {{"model_id", "m1"}, {"cs", cs_name(c)}});
  }

  void accept(const Transaction& tx) {
    const auto r = ledger->apply(tx);
    ASSERT_TRUE(r.accepted) << to_string(tx.kind) << ": " << r.message;
  }

  void expect_reject(const Transaction& tx, RejectCode code) {
    const auto r = ledger->apply(tx);
    EXPECT_FALSE(r.accepted) << to_string(tx.kind);
    EXPECT_EQ(r.code, code) << to_string(tx.kind) << ": " << r.message << " got " << to_string(r.code);
  }

  void setup_running() {
    accept(register_mp());
    accept(register_cs(0));
    accept(register_cs(1));
    accept(publish());
    accept(join(0));
    accept(join(1));
  }

  // Runs both rounds with CS0 in the majority and CS1 outside it.
  std::vector<Transaction> full_task() {
    std::vector<Transaction> log{register_mp(), register_cs(0), register_cs(1), publish(), join(0), join(1)};
    for (int round = 1; round <= 2; ++round) {
      const std::string a = blobs.store("im-a-" + std::to_string(round));
      const std::string b = blobs.store("im-b-" + std::to_string(round));
      const std::string g = blobs.store("gm-" + std::to_string(round));
      log.push_back(submit_im(0, round, a));
      log.push_back(submit_im(1, round, b));
      log.push_back(submit_gm(round, g));
      log.push_back(update_cs(round, 0, 0.5, true));
      log.push_back(update_cs(round, 1, 0.2, false));
    }
    log.push_back(distribute(0));
    log.push_back(distribute(1));
    return log;
  }

  KeyRegistry registry;
  KeyPair admin, oracle, mp;
  std::vector<KeyPair> cs;
  std::vector<std::vector<KeyPair>> evs;
  IncentiveSettings incentives;
  BlobStore blobs;
  std::string model_cid;
  std::unique_ptr<Ledger> ledger;
};

TEST_F(LedgerFixture, HappyPathRunsToSettlement) {
  for (const auto& tx : full_task()) accept(tx);
  const auto& t = ledger->task("m1");
  EXPECT_EQ(t.status, "settled");
  int aggregates = 0;
  for (const auto& e : ledger->events()) aggregates += e.kind == "AGGREGATE";
  EXPECT_EQ(aggregates, 2);
  EXPECT_EQ(t.joined.at("cs0").majority_count, 2);
  EXPECT_DOUBLE_EQ(t.joined.at("cs0").score, 1.0);
  EXPECT_DOUBLE_EQ(t.joined.at("cs1").score, -0.4);
  EXPECT_DOUBLE_EQ(t.joined.at("cs0").reward, incentives.budget);
  EXPECT_DOUBLE_EQ(t.joined.at("cs1").reward, 0.0);
  const double want_rep = gompertz_reputation(0.5, 1.0, incentives.gompertz_a, incentives.gompertz_b,
                                              incentives.gompertz_c);
  EXPECT_DOUBLE_EQ(ledger->css().at("cs0").reputation, want_rep);
}

TEST_F(LedgerFixture, SingleAggregateEventPerRound) {
  setup_running();
  const std::string a = blobs.store("a");
  const std::string b = blobs.store("b");
  const auto r0 = ledger->apply(submit_im(0, 1, a));
  EXPECT_TRUE(r0.events.empty());
  const auto r1 = ledger->apply(submit_im(1, 1, b));
  ASSERT_EQ(r1.events.size(), 1u);
  EXPECT_EQ(r1.events[0].kind, "AGGREGATE");
  EXPECT_EQ(r1.events[0].round, 1);
  EXPECT_EQ(r1.events[0].cids.size(), 2u);
  expect_reject(submit_im(1, 1, b), RejectCode::kDuplicate);
  int aggregates = 0;
  for (const auto& e : ledger->events()) aggregates += e.kind == "AGGREGATE";
  EXPECT_EQ(aggregates, 1);
}

TEST_F(LedgerFixture, RejectCodes) {
  // Bad signature: payload altered after signing.
  auto forged = register_mp();
  forged.payload["extra"] = 1;
  expect_reject(forged, RejectCode::kBadSignature);

  // Registration without a valid admin endorsement.
  json p = admission_fields(TxKind::kRegisterMP, "mp", mp.public_key, mp);
  expect_reject(Transaction::make(TxKind::kRegisterMP, "mp", mp, p), RejectCode::kUnauthorized);

  // Publishing before MP registration.
  expect_reject(publish(), RejectCode::kNotRegistered);
  accept(register_mp());
  expect_reject(register_mp(), RejectCode::kDuplicate);

  // Unknown model CID.
  auto bad_cid = Transaction::make(TxKind::kPublishModel, "mp", mp,
                                   {{"model_id", "m2"}, {"model_cid", "nope"}, {"required_cs", 1}, {"rounds", 1}});
  expect_reject(bad_cid, RejectCode::kUnknownCid);
  auto malformed = Transaction::make(TxKind::kPublishModel, "mp", mp, {{"model_id", "m3"}});
  expect_reject(malformed, RejectCode::kMalformed);

  accept(register_cs(0));
  accept(publish());
  expect_reject(Transaction::make(TxKind::kJoinCSModel, "cs0", cs[0], {{"model_id", "zzz"}, {"deposit", 1.0}}),
                RejectCode::kUnknownTask);
  expect_reject(join(1), RejectCode::kNotRegistered);
  accept(join(0));
  expect_reject(join(0), RejectCode::kDuplicate);

  // Not yet running: IM submission has the wrong round.
  const std::string a = blobs.store("a");
  expect_reject(submit_im(0, 1, a), RejectCode::kWrongRound);
  accept(register_cs(1));
  expect_reject(submit_im(1, 1, a), RejectCode::kNotJoined);
  accept(join(1));
  expect_reject(submit_im(0, 2, a), RejectCode::kWrongRound);

  // τ = 2 of 3 EVs; one signer is not enough.
  expect_reject(submit_im(0, 1, a, 1), RejectCode::kBadCert);
  // Certificate over a different CID.
  auto wrong = submit_im(0, 1, a);
  wrong.payload["cert"] = cert_to_json(cert_for(0, blobs.store("other"), 3));
  wrong = Transaction::make(TxKind::kSubmitIM, "cs0", cs[0], wrong.payload);
  expect_reject(wrong, RejectCode::kBadCert);
  // EVs of the other CS cannot endorse.
  auto cross = submit_im(0, 1, a);
  cross.payload["cert"] = cert_to_json(cert_for(1, a, 3));
  cross = Transaction::make(TxKind::kSubmitIM, "cs0", cs[0], cross.payload);
  expect_reject(cross, RejectCode::kBadCert);
  expect_reject(submit_im(0, 1, "bafy-unknown"), RejectCode::kUnknownCid);

  // Global model before aggregation, and from a non-oracle.
  const std::string g = blobs.store("g");
  expect_reject(submit_gm(1, g), RejectCode::kWrongRound);
  accept(submit_im(0, 1, a));
  accept(submit_im(1, 1, blobs.store("b")));
  expect_reject(Transaction::make(TxKind::kSubmitGM, "mp", mp, {{"model_id", "m1"}, {"round", 1}, {"cid", g}}),
                RejectCode::kUnauthorized);
  expect_reject(update_cs(1, 0, 0.1, true), RejectCode::kWrongRound);
  expect_reject(submit_gm(1, "missing"), RejectCode::kUnknownCid);
  accept(submit_gm(1, g));
  expect_reject(submit_gm(1, g), RejectCode::kDuplicate);
  accept(update_cs(1, 0, 0.1, true));
  expect_reject(update_cs(1, 0, 0.1, true), RejectCode::kDuplicate);
  expect_reject(distribute(0), RejectCode::kWrongRound);
}

TEST_F(LedgerFixture, SnapshotRestoreAndReplayDeterminism) {
  const auto log = full_task();
  for (const auto& tx : log) accept(tx);
  const std::string snap = ledger->snapshot();

  Ledger replay(registry, {admin.public_key}, {oracle.public_key}, incentives, &blobs);
  for (const auto& tx : log) {
    ASSERT_TRUE(replay.apply(Transaction::deserialize(tx.serialize())).accepted);
  }
  EXPECT_EQ(replay.state_digest(), ledger->state_digest());

  Ledger restored(registry, {admin.public_key}, {oracle.public_key}, incentives, &blobs);
  restored.restore(snap);
  EXPECT_EQ(restored.snapshot(), snap);
}

TEST_F(LedgerFixture, BalanceConservation) {
  for (const auto& tx : full_task()) accept(tx);
  double paid = 0.0;
  for (const auto& [id, rec] : ledger->css()) paid += rec.balance;
  const double deposits = 2 * 100.0;
  EXPECT_NEAR(paid + ledger->treasury(), incentives.budget + deposits, 1e-9);
}

TEST_F(LedgerFixture, TransactionAccountingRatio) {
  for (const auto& tx : full_task()) accept(tx);
  const auto abc = tx_accounting(ledger->accepted(), 7, AccountingMode::kAbcDfl);
  const auto pure = tx_accounting(ledger->accepted(), 7, AccountingMode::kPureBfl);
  for (const auto& [cls, n] : abc) {
    if (n == 0) continue;
    const bool per = cls == "register[CS/EV]" || cls == "join[CS/EV]Model" || cls == "submitIM" ||
                     cls == "update[CS/EV]Scores" || cls == "distributeReward";
    EXPECT_EQ(pure.at(cls), per ? 7 * n : n) << cls;
  }
  EXPECT_EQ(abc.at("publishModel"), pure.at("publishModel"));
  EXPECT_EQ(abc.at("submitIM"), 4u);
  EXPECT_GT(total_gas(pure), total_gas(abc));
  for (TxKind k : all_tx_kinds()) EXPECT_EQ(parse_tx_kind(to_string(k)), k);
}

TEST(BlobStore, StoreFetchPersistLoad) {
  BlobStore s;
  const std::string cid = s.store("hello");
  EXPECT_EQ(cid, content_id("hello"));
  EXPECT_EQ(s.store("hello"), cid);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.fetch(cid), "hello");
  EXPECT_THROW(s.fetch("missing"), LedgerError);
  const auto dir = std::filesystem::temp_directory_path() / "abcdfl_blob_test";
  std::filesystem::remove_all(dir);
  s.persist(dir);
  EXPECT_EQ(BlobStore::load(dir).fetch(cid), "hello");
  {
    std::ofstream(dir / cid, std::ios::binary) << "tampered";
  }
  EXPECT_ANY_THROW(BlobStore::load(dir));
  std::filesystem::remove_all(dir);
}

TEST(ModelCodec, RoundTripAndSchemaCheck) {
  SeededRng rng(4, Stream::kTest);
  UpdateDelta d;
  d.layers["a.w"] = {rng.normal(), rng.normal()};
  d.layers["b.b"] = {rng.normal()};
  const std::string bytes = serialize_model(d);
  EXPECT_EQ(bytes.size(), 32u + 3u * 8u);
  EXPECT_EQ(deserialize_model(bytes, schema_of(d)).layers, d.layers);
  UpdateDelta other;
  other.layers["c"] = {1.0, 2.0, 3.0};
  EXPECT_THROW(deserialize_model(bytes, schema_of(other)), ConfigError);
}

TEST(Hex, RoundTripAndMalformed) {
  Digest d = sha256("x");
  EXPECT_EQ(hex_decode(hex_encode(d)), d);
  try {
    hex_decode("zz");
    FAIL();
  } catch (const LedgerError& e) {
    EXPECT_EQ(e.code(), RejectCode::kMalformed);
  }
}

}  // namespace
}  // namespace abcdfl
