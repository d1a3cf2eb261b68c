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
#include "abcdfl/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "abcdfl/adversary.hpp"
#include "abcdfl/clustering.hpp"
#include "abcdfl/crypto.hpp"
#include "abcdfl/fleca.hpp"
#include "abcdfl/ledger.hpp"
#include "abcdfl/privacy.hpp"

namespace abcdfl {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(10);
  os << v;
  return os.str();
}

KeyPair derived_keys(const std::string& label, std::uint64_t seed) {
  return KeyPair::from_secret(sha256(label + "|" + std::to_string(seed)));
}

std::string cs_name(int s) { return "cs" + std::to_string(s); }

UpdateDelta delta_mean(const std::vector<UpdateDelta>& v) { return mean(std::span<const UpdateDelta>(v)); }

// Everything one run needs between rounds.
class Experiment {
 public:
  Experiment(const ExperimentConfig& cfg, const RunOptions& options)
      : cfg_(cfg),
        options_(options),
        k_(cfg.group_size),
        groups_(cfg.groups()),
        filter_(FilterConfig::from(cfg.filter)),
        baseline_(BaselineParams::from(cfg.baseline)),
        attack_{cfg.adversary.kind, cfg.adversary.params} {
    cfg_.validate();
    result_.config = cfg_;
    result_.config_digest = config_digest(cfg_);

    Dataset data = generate_dataset(cfg_.data.samples, cfg_.seed);
    split_ = train_test_split(data, cfg_.data.test_fraction, cfg_.seed);
    standardizer_ = Standardizer::fit(split_.train);
    partitions_ = cfg_.data.iid ? iid_partition(split_.train, cfg_.evs, cfg_.seed)
                                : dirichlet_partition(split_.train, cfg_.evs, cfg_.data.dirichlet_alpha, cfg_.seed);
    threats_ = place_threats(cfg_, cfg_.seed);
    if (is_data_attack(attack_.kind)) {
      for (int ev = 0; ev < cfg_.evs; ++ev) {
        if (!threats_.is_malicious_ev(ev / k_, ev)) continue;
        SeededRng rng(cfg_.seed, Stream::kAttack, 10000 + static_cast<std::uint64_t>(ev));
        partitions_[ev] = poison_data(partitions_[ev], attack_, rng);
      }
    }
    SeededRng init(cfg_.seed, Stream::kInit, 0);
    model_ = MultiTaskModel::initialize(cfg_.train.hidden, init);
  }

  ExperimentResult run() {
    setup_ledger();
    for (int t = 0; t < cfg_.rounds && !result_.stalled; ++t) run_round(t);
    if (!result_.stalled) settle();
    finish();
    return std::move(result_);
  }

 private:
  // --- ledger and consensus plumbing ------------------------------------

  void setup_ledger() {
    admin_ = derived_keys("admin", cfg_.seed);
    mp_ = derived_keys("mp", cfg_.seed);
    registry_.add(admin_);
    registry_.add(mp_);
    for (int o = 0; o < cfg_.oracles; ++o) {
      oracle_keys_.push_back(derived_keys("oracle" + std::to_string(o), cfg_.seed));
      registry_.add(oracle_keys_.back());
    }
    for (int s = 0; s < groups_; ++s) {
      cs_keys_.push_back(derived_keys("cs" + std::to_string(s), cfg_.seed));
      registry_.add(cs_keys_.back());
    }
    for (int ev = 0; ev < cfg_.evs; ++ev) {
      ev_keys_.push_back(derived_keys("ev" + std::to_string(ev), cfg_.seed));
      registry_.add(ev_keys_.back());
    }
    std::vector<PublicKey> oracle_pks;
    for (const auto& kp : oracle_keys_) oracle_pks.push_back(kp.public_key);
    ledger_ = std::make_unique<Ledger>(registry_, std::vector<PublicKey>{admin_.public_key}, oracle_pks,
                                       cfg_.incentives, &blobs_);
    for (int o = 0; o < cfg_.oracles; ++o) engines_.emplace_back(cfg_.incentives, groups_);

    model_id_ = "task-" + result_.config_digest.substr(0, 12);
    std::string model_cid = blobs_.store(serialize_model(model_.params()));

    std::vector<Transaction> batch;
    batch.push_back(Transaction::make(TxKind::kRegisterMP, "mp0", mp_,
                                      admission_fields(TxKind::kRegisterMP, "mp0", mp_.public_key, admin_)));
    for (int s = 0; s < groups_; ++s) {
      json payload = admission_fields(TxKind::kRegisterCS, cs_name(s), cs_keys_[s].public_key, admin_);
      json keys = json::array();
      for (int j = 0; j < k_; ++j) keys.push_back(hex_encode(ev_keys_[s * k_ + j].public_key));
      payload["ev_pks"] = keys;
      batch.push_back(Transaction::make(TxKind::kRegisterCS, cs_name(s), cs_keys_[s], payload));
    }
    batch.push_back(Transaction::make(TxKind::kPublishModel, "mp0", mp_,
                                      {{"model_id", model_id_},
                                       {"model_cid", model_cid},
                                       {"required_cs", groups_},
                                       {"rounds", cfg_.rounds}}));
    for (int s = 0; s < groups_; ++s) {
      batch.push_back(Transaction::make(TxKind::kJoinCSModel, cs_name(s), cs_keys_[s],
                                        {{"model_id", model_id_}, {"deposit", cfg_.incentives.deposit}}));
    }
    finalize_batch(batch, 0, "setup");
    for (auto& e : engines_) e.lock_deposits();
  }

  std::vector<ValidatorSpec> validator_specs() const {
    int n = cfg_.consensus.validators > 0 ? cfg_.consensus.validators : groups_;
    std::vector<ValidatorSpec> out;
    for (int i = 0; i < n; ++i) {
      ValidatorSpec v;
      v.id = i;
      if (n == groups_) {
        auto it = ledger_->css().find(cs_name(i));
        v.reputation = it != ledger_->css().end() ? it->second.reputation : cfg_.incentives.initial_reputation;
      }
      out.push_back(v);
    }
    return out;
  }

  // Orders the batch through consensus and applies finalized transactions.
  std::vector<LedgerEvent> finalize_batch(const std::vector<Transaction>& batch, int round, const std::string& phase) {
    ConsensusRun run;
    run.validators = validator_specs();
    run.network.delta = cfg_.consensus.delta;
    run.network.gst = cfg_.consensus.gst;
    for (const auto& tx : batch) run.txs.push_back(tx.serialize());
    run.block_tx_limit = cfg_.consensus.block_tx_limit;
    run.heights = std::max<int>(1, static_cast<int>((run.txs.size() + run.block_tx_limit - 1) / run.block_tx_limit));
    run.epoch_length = cfg_.consensus.epoch_length;
    run.committee_size = cfg_.consensus.committee_size;
    run.f = cfg_.consensus.f;
    run.rotation = cfg_.consensus.rotation;
    run.max_views = cfg_.consensus.max_views;
    run.seed = digest_prefix_u64(sha256(std::to_string(cfg_.seed) + "|segment|" + std::to_string(segment_++)));
    run.genesis_hash = chain_tip_;
    run.record_messages = options_.record_consensus_messages;

    Trace trace = run_consensus(run);
    bool safe = check_safety(trace);
    bool live = check_liveness(trace, run.network.gst);
    result_.consensus_safe = result_.consensus_safe && safe;
    result_.consensus_live = result_.consensus_live && live;
    consensus_ticks_ += trace.end_tick;

    std::vector<LedgerEvent> events;
    std::set<std::string> finalized;
    for (const auto& block : trace.chain) {
      for (const auto& text : block.payload) {
        Transaction tx = Transaction::deserialize(text);
        TxResult res = ledger_->apply(tx);
        finalized.insert(text);
        json j;
        j["type"] = "tx";
        j["round"] = round;
        j["phase"] = phase;
        j["height"] = block.height;
        j["kind"] = to_string(tx.kind);
        j["sender"] = tx.sender;
        j["tx"] = tx.id();
        j["accepted"] = res.accepted;
        j["code"] = to_string(res.code);
        events_ << j.dump() << '\n';
        for (const auto& ev : res.events) {
          json e;
          e["type"] = "event";
          e["round"] = round;
          e["kind"] = ev.kind;
          e["model_id"] = ev.model_id;
          e["ledger_round"] = ev.round;
          e["cids"] = ev.cids;
          events_ << e.dump() << '\n';
          events.push_back(ev);
        }
      }
      chain_tip_ = block.hash();
    }
    result_.consensus_traces.push_back(std::move(trace));
    if (finalized.size() != run.txs.size() || !safe || !live) {
      result_.stalled = true;
      json j;
      j["type"] = "stalled";
      j["round"] = round;
      j["phase"] = phase;
      j["finalized"] = finalized.size();
      j["submitted"] = run.txs.size();
      events_ << j.dump() << '\n';
    }
    return events;
  }

  // --- one round ---------------------------------------------------------

  std::vector<bool> presence(int t) const {
    std::vector<bool> present(cfg_.evs, true);
    if (cfg_.churn <= 0.0) return present;
    SeededRng rng(cfg_.seed, Stream::kChurn, static_cast<std::uint64_t>(t));
    for (int ev = 0; ev < cfg_.evs; ++ev) present[ev] = !rng.bernoulli(cfg_.churn);
    return present;
  }

  UpdateDelta intra_aggregate_baseline(const std::vector<UpdateDelta>& sent, int group, int t) const {
    if (cfg_.aggregator == AggregatorKind::kFedAvg) return delta_mean(sent);
    SeededRng rng(cfg_.seed, Stream::kDp, 500000 + static_cast<std::uint64_t>(t) * 1000 + group);
    return baseline_aggregate(cfg_.aggregator, sent, baseline_, rng);
  }

  struct GroupOutput {
    UpdateDelta im;
    int present = 0;
    bool skipped = false;
  };

  GroupOutput group_round(int g, int t, const std::vector<bool>& present, const RoundClock& clock) {
    GroupOutput out;
    std::vector<int> members;
    for (int j = 0; j < k_; ++j) {
      if (present[g * k_ + j]) members.push_back(g * k_ + j);
    }
    out.present = static_cast<int>(members.size());
    if (members.empty()) {
      out.im = zeros_like(model_.params());
      out.skipped = true;
      return out;
    }

    // Honest local training for everybody; attackers poison afterwards.
    std::map<int, UpdateDelta> trained;
    for (int ev : members) {
      SeededRng rng(cfg_.seed, Stream::kTraining, static_cast<std::uint64_t>(t) * cfg_.evs + ev);
      trained[ev] = local_train(model_, partitions_[ev].samples, cfg_.train, standardizer_, rng).delta;
      trained[ev].round = t;
    }
    const bool malicious_group = threats_.is_malicious_group(g);
    std::map<int, UpdateDelta> sent;
    std::vector<UpdateDelta> benign_visible;
    int colluders = 0;
    for (int ev : members) {
      bool bad = threats_.is_malicious_ev(g, ev);
      if (bad) {
        ++colluders;
        if (malicious_group) benign_visible.push_back(trained[ev]);
        continue;
      }
      UpdateDelta d = trained[ev];
      if (cfg_.dp.enabled) {
        DpConfig dp{cfg_.dp.clip, cfg_.dp.sigma, std::nullopt, std::nullopt};
        SeededRng rng(cfg_.seed, Stream::kDp, static_cast<std::uint64_t>(t) * cfg_.evs + ev);
        d = privatize(d, dp, rng);
      }
      sent[ev] = d;
      benign_visible.push_back(d);
    }
    for (int ev : members) {
      if (!threats_.is_malicious_ev(g, ev)) continue;
      UpdateDelta d = trained[ev];
      if (is_model_attack(attack_.kind)) {
        SeededRng rng(cfg_.seed, Stream::kAttack, 1000000 + static_cast<std::uint64_t>(t) * cfg_.evs + ev);
        d = poison_update(benign_visible, trained[ev], attack_, rng, colluders, k_);
      }
      d.round = t;
      sent[ev] = d;
    }

    std::vector<UpdateDelta> sent_list;
    for (const auto& [ev, d] : sent) sent_list.push_back(d);
    if (malicious_group) {
      out.im = delta_mean(sent_list);
      return out;
    }
    if (cfg_.aggregator != AggregatorKind::kFleca) {
      out.im = intra_aggregate_baseline(sent_list, g, t);
      return out;
    }

    // Stage I at every EV, then the CS-level variant. Byzantine EVs accept
    // every neighbor.
    std::vector<AcceptanceRecord> records;
    std::vector<UpdateDelta> filtered;
    std::map<int, UpdateDelta> im_star;
    for (int ev : members) {
      IdentifiedUpdate own{ev, sent[ev]};
      std::vector<IdentifiedUpdate> neighbors;
      for (int other : members) {
        if (other != ev) neighbors.push_back({other, sent[other]});
      }
      FilterResult fr = ev_filter_aggregate(own, neighbors, filter_, clock);
      if (threats_.is_malicious_ev(g, ev)) {
        fr.record.accepted_ids.clear();
        for (int other : members) fr.record.accepted_ids.insert(other);
        fr.aggregate = delta_mean(sent_list);
        fr.aggregate.round = t;
      }
      records.push_back(fr.record);
      filtered.push_back(fr.aggregate);
      im_star[ev] = fr.aggregate;
    }
    if (cfg_.filter.variant == FlecaVariant::kV1) {
      out.im = majority_vote_aggregate(records, im_star);
    } else {
      out.im = cluster_aggregate(filtered, cfg_.filter.intra_min_pts, filter_.monitored_layers);
    }
    out.im.round = t;
    return out;
  }

  struct OracleOutput {
    UpdateDelta gm;
    ClusterLabels labels;
    std::vector<std::size_t> members;
    RoundScoring scoring;
    std::string digest;
  };

  OracleOutput oracle_compute(int oracle, const std::vector<UpdateDelta>& ims, int t) {
    OracleOutput out;
    std::vector<std::string> monitored =
        cfg_.filter.stage2_monitored_only ? filter_.monitored_layers : std::vector<std::string>{};
    ClusterAggregate ca = cluster_aggregate_detailed(ims, cfg_.filter.inter_min_pts, monitored);
    out.labels = ca.labels;
    out.members = ca.members;
    if (cfg_.aggregator == AggregatorKind::kFleca) {
      out.gm = ca.aggregate;
    } else if (cfg_.aggregator == AggregatorKind::kFedAvg) {
      out.gm = delta_mean(ims);
    } else {
      SeededRng rng(cfg_.seed, Stream::kDp, 900000 + static_cast<std::uint64_t>(t));
      out.gm = baseline_aggregate(cfg_.aggregator, ims, baseline_, rng);
    }
    out.gm.round = t;
    std::vector<Vector> points;
    std::set<std::string> subset =
        monitored.empty() ? std::set<std::string>{} : monitored_layer_set(ims.front(), monitored);
    for (const auto& im : ims) points.push_back(subset.empty() ? flatten(im) : flatten(im, subset));
    std::vector<int> participants(ims.size());
    std::iota(participants.begin(), participants.end(), 0);
    out.scoring = engines_[oracle].score_round(out.labels, points, participants);
    if (oracle == options_.faulty_oracle) out.gm.layers.begin()->second.front() += 1e-9;

    std::string text = serialize_model(out.gm);
    for (double d : out.scoring.deltas) text += "|" + fmt(d);
    for (bool m : out.scoring.in_majority) text += m ? "1" : "0";
    out.digest = sha256_hex(text);
    return out;
  }

  void run_round(int t) {
    RoundClock clock(t, cfg_.rounds);
    RoundReport report;
    report.round = t + 1;
    const auto present = presence(t);
    const std::int64_t ticks_before = consensus_ticks_;

    std::vector<UpdateDelta> ims;
    std::vector<Transaction> submissions;
    for (int g = 0; g < groups_; ++g) {
      GroupOutput go = group_round(g, t, present, clock);
      if (!all_finite(go.im)) throw TrainingError("non-finite intermediate model in group " + std::to_string(g));
      std::string cid = blobs_.store(serialize_model(go.im));
      // Every registered EV endorses the CID, including those absent from
      // this round's training.
      std::vector<PartialSignature> partials;
      for (int j = 0; j < k_; ++j) {
        const auto& kp = ev_keys_[g * k_ + j];
        partials.push_back({kp.public_key, sign(kp.secret, cid)});
      }
      QuorumCert cert = build_quorum_cert(cid, partials, default_threshold(k_));
      submissions.push_back(Transaction::make(
          TxKind::kSubmitIM, cs_name(g), cs_keys_[g],
          {{"model_id", model_id_}, {"round", t + 1}, {"cid", cid}, {"cert", cert_to_json(cert)}}));
      GroupReport gr;
      gr.cs = g;
      gr.im_cid = cid;
      gr.malicious = threats_.is_malicious_group(g);
      gr.present = go.present;
      gr.skipped = go.skipped;
      report.groups.push_back(gr);
      ims.push_back(std::move(go.im));
    }

    auto events = finalize_batch(submissions, t + 1, "submitIM");
    if (result_.stalled) return;
    bool aggregate = std::any_of(events.begin(), events.end(),
                                 [&](const LedgerEvent& e) { return e.kind == "AGGREGATE" && e.round == t + 1; });
    if (!aggregate) throw Error("ledger did not trigger aggregation in round " + std::to_string(t + 1));

    // Oracles fetch the IMs by CID and compute independently.
    std::vector<UpdateDelta> fetched;
    for (const auto& gr : report.groups) {
      fetched.push_back(deserialize_model(blobs_.fetch(gr.im_cid), schema_of(model_.params()), t));
    }
    std::vector<OracleOutput> outputs;
    for (int o = 0; o < cfg_.oracles; ++o) outputs.push_back(oracle_compute(o, fetched, t));
    for (const auto& out : outputs) {
      if (out.digest != outputs.front().digest) {
        throw OracleDisagreement("oracle results disagree in round " + std::to_string(t + 1));
      }
    }
    const OracleOutput& primary = outputs.front();

    model_ = MultiTaskModel::from_delta(add(model_.params(), primary.gm));
    model_.params().round = 0;
    std::string gm_cid = blobs_.store(serialize_model(model_.params()));
    std::vector<Transaction> oracle_batch;
    oracle_batch.push_back(Transaction::make(TxKind::kSubmitGM, "oracle0", oracle_keys_[0],
                                             {{"model_id", model_id_}, {"round", t + 1}, {"cid", gm_cid}}));
    for (int g = 0; g < groups_; ++g) {
      oracle_batch.push_back(Transaction::make(TxKind::kUpdateCSScores, "oracle0", oracle_keys_[0],
                                               {{"model_id", model_id_},
                                                {"round", t + 1},
                                                {"cs", cs_name(g)},
                                                {"delta", primary.scoring.deltas[g]},
                                                {"majority", static_cast<bool>(primary.scoring.in_majority[g])}}));
    }
    finalize_batch(oracle_batch, t + 1, "submitGM");

    std::set<std::size_t> cmax(primary.members.begin(), primary.members.end());
    for (int g = 0; g < groups_; ++g) {
      auto& gr = report.groups[g];
      gr.cluster_label = primary.labels.labels[g];
      gr.in_majority = primary.scoring.in_majority[g];
      gr.score_delta = primary.scoring.deltas[g];
      if (gr.malicious) {
        ++malicious_observations_;
        if (!cmax.count(static_cast<std::size_t>(g))) ++malicious_flagged_;
      }
    }
    report.gm_cid = gm_cid;
    report.gm_delta = primary.gm;
    report.ims = std::move(fetched);
    report.metrics = evaluate(model_, split_.test, standardizer_);
    report.consensus_ticks = consensus_ticks_ - ticks_before;
    report.stalled = result_.stalled;
    result_.rounds.push_back(std::move(report));
  }

  void settle() {
    std::vector<TaskSettlement> settlements;
    for (auto& e : engines_) settlements.push_back(e.settle_task());
    for (const auto& s : settlements) {
      if (s.rewards != settlements.front().rewards || s.reputations != settlements.front().reputations) {
        throw OracleDisagreement("oracle settlements disagree");
      }
    }
    result_.oracle_rewards = settlements.front().rewards;
    std::vector<Transaction> batch;
    for (int g = 0; g < groups_; ++g) {
      batch.push_back(Transaction::make(TxKind::kDistributeReward, "oracle0", oracle_keys_[0],
                                        {{"model_id", model_id_}, {"cs", cs_name(g)}}));
    }
    finalize_batch(batch, cfg_.rounds, "distributeReward");
    if (result_.stalled) return;
    const auto& task = ledger_->task(model_id_);
    for (int g = 0; g < groups_; ++g) result_.ledger_rewards.push_back(task.joined.at(cs_name(g)).reward);
  }

  // --- outputs -----------------------------------------------------------

  void finish() {
    if (!result_.rounds.empty()) result_.final_metrics = result_.rounds.back().metrics;
    if (is_backdoor_attack(attack_.kind) && !threats_.empty()) {
      result_.asr = backdoor_asr(model_, split_.test, attack_.params);
    }
    result_.incentives = engines_.empty() ? std::vector<IncentiveRow>{} : engines_.front().history();
    result_.malicious_flag_rate =
        malicious_observations_ > 0 ? static_cast<double>(malicious_flagged_) / malicious_observations_ : 0.0;
    result_.tx_counts_abc = tx_accounting(ledger_->accepted(), k_, AccountingMode::kAbcDfl);
    result_.tx_counts_pure = tx_accounting(ledger_->accepted(), k_, AccountingMode::kPureBfl);
    result_.tx_counts = cfg_.mode == AccountingMode::kPureBfl ? result_.tx_counts_pure : result_.tx_counts_abc;
    result_.ledger_digest = ledger_->state_digest();

    std::ostringstream csv;
    csv << "round,accuracy,precision,recall,f1,mae,mse,rmse,gm_cid,majority_groups,consensus_ticks,stalled\n";
    for (const auto& r : result_.rounds) {
      int majority = 0;
      for (const auto& g : r.groups) majority += g.in_majority ? 1 : 0;
      csv << r.round << ',' << fmt(r.metrics.accuracy) << ',' << fmt(r.metrics.precision) << ','
          << fmt(r.metrics.recall) << ',' << fmt(r.metrics.f1) << ',' << fmt(r.metrics.mae) << ','
          << fmt(r.metrics.mse) << ',' << fmt(r.metrics.rmse) << ',' << r.gm_cid << ',' << majority << ','
          << r.consensus_ticks << ',' << (r.stalled ? 1 : 0) << '\n';
    }
    result_.results_csv = csv.str();

    std::ostringstream inc;
    inc << "task,round,cs_id,S,R,reward\n";
    for (const auto& row : result_.incentives) {
      inc << row.task << ',' << row.round << ',' << row.cs_id << ',' << fmt(row.score) << ',' << fmt(row.reputation)
          << ',' << fmt(row.reward) << '\n';
    }
    result_.incentives_csv = inc.str();
    result_.events_jsonl = events_.str();

    std::string material = result_.config_digest + "\n" + result_.results_csv + "\n" + result_.incentives_csv + "\n" +
                           result_.events_jsonl + "\n" + result_.ledger_digest + "\n" +
                           (result_.asr ? fmt(*result_.asr) : std::string("-")) + "\n" +
                           (result_.stalled ? "stalled" : "ok");
    result_.digest = sha256_hex(material);
    if (!options_.out_dir.empty()) write_experiment_outputs(result_, options_.out_dir);
  }

  ExperimentConfig cfg_;
  RunOptions options_;
  int k_;
  int groups_;
  FilterConfig filter_;
  BaselineParams baseline_;
  AttackSpec attack_;
  ExperimentResult result_;

  DataSplit split_;
  Standardizer standardizer_;
  std::vector<Partition> partitions_;
  ThreatPlacement threats_;
  MultiTaskModel model_;

  KeyRegistry registry_;
  KeyPair admin_;
  KeyPair mp_;
  std::vector<KeyPair> oracle_keys_;
  std::vector<KeyPair> cs_keys_;
  std::vector<KeyPair> ev_keys_;
  BlobStore blobs_;
  std::unique_ptr<Ledger> ledger_;
  std::vector<IncentiveEngine> engines_;
  std::string model_id_;
  std::string chain_tip_ = "genesis";
  int segment_ = 0;
  std::int64_t consensus_ticks_ = 0;
  std::ostringstream events_;
  int malicious_observations_ = 0;
  int malicious_flagged_ = 0;
};

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  Experiment exp(config, options);
  return exp.run();
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

AisBreakdown compute_ais(const TaskMetrics& benign, const TaskMetrics& attack) {
  if (!(benign.f1 > 0.0)) throw ConfigError("compute_ais: benign F1 must be positive");
  if (!(benign.rmse > 0.0)) throw ConfigError("compute_ais: benign RMSE must be positive");
  constexpr double kRmseClamp = 10.0;
  AisBreakdown out;
  out.ais_a = (benign.f1 - attack.f1) / benign.f1;
  double rb = std::min(benign.rmse, kRmseClamp);
  double ra = std::min(attack.rmse, kRmseClamp);
  out.ais_c = (ra - rb) / rb;
  out.ais = std::min(std::max(0.0, out.ais_a + out.ais_c), 1.0);
  return out;
}

double compute_asr(std::span<const int> predictions, std::span<const int> truths,
                   std::span<const std::size_t> backdoored) {
  if (backdoored.empty()) throw ConfigError("compute_asr: no backdoored samples");
  if (predictions.size() != truths.size()) throw ConfigError("compute_asr: size mismatch");
  std::size_t wrong = 0;
  for (std::size_t i : backdoored) {
    if (i >= predictions.size()) throw ConfigError("compute_asr: index out of range");
    if (predictions[i] != truths[i]) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(backdoored.size());
}

double backdoor_asr(const MultiTaskModel& model, const Dataset& test, const AttackParams& params) {
  Dataset triggered;
  std::vector<int> truths;
  for (const auto& s : test) {
    if (s.anomaly == params.target_label) continue;
    Sample copy = s;
    stamp_trigger(copy, params.trigger_offset);
    triggered.push_back(copy);
    truths.push_back(s.anomaly);
  }
  if (triggered.empty()) throw ConfigError("backdoor_asr: no samples outside the target class");
  auto predictions = predict_labels(model, triggered);
  std::vector<std::size_t> idx(triggered.size());
  std::iota(idx.begin(), idx.end(), 0);
  return compute_asr(predictions, truths, idx);
}

ExperimentConfig benign_counterpart(const ExperimentConfig& config) {
  ExperimentConfig c = config;
  c.adversary.kind = AttackKind::kNone;
  c.adversary.malicious_group_fraction = 0.0;
  c.adversary.malicious_ev_fraction = 0.0;
  return c;
}

AttackImpact measure_attack_impact(const ExperimentConfig& config, const std::vector<std::uint64_t>& seeds) {
  AttackImpact out;
  for (auto seed : seeds) {
    ExperimentConfig attacked = config;
    attacked.seed = seed;
    out.attacked.push_back(run_experiment(attacked));
    out.benign.push_back(run_experiment(benign_counterpart(attacked)));
    out.per_seed.push_back(compute_ais(out.benign.back().final_metrics, out.attacked.back().final_metrics));
    out.max_ais = std::max(out.max_ais, out.per_seed.back().ais);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

namespace {

double parse_double(const std::string& axis, const std::string& value) {
  try {
    std::size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("sweep value for " + axis + " is not a number: " + value);
  }
}

int parse_int(const std::string& axis, const std::string& value) {
  double v = parse_double(axis, value);
  if (v != std::floor(v)) throw ConfigError("sweep value for " + axis + " must be an integer: " + value);
  return static_cast<int>(v);
}

}  // namespace

ExperimentConfig apply_axis(const ExperimentConfig& base, const std::string& axis, const std::string& value) {
  ExperimentConfig c = base;
  if (axis == "attack") {
    c.adversary.kind = parse_attack(value);
  } else if (axis == "aggregator") {
    c.aggregator = parse_aggregator(value);
  } else if (axis == "malicious_fraction") {
    c.adversary.malicious_group_fraction = parse_double(axis, value);
  } else if (axis == "m") {
    c.adversary.malicious_ev_fraction = parse_double(axis, value);
  } else if (axis == "dirichlet_alpha") {
    c.data.dirichlet_alpha = parse_double(axis, value);
  } else if (axis == "beta") {
    c.filter.beta = parse_double(axis, value);
  } else if (axis == "kappa") {
    c.filter.kappa = parse_double(axis, value);
  } else if (axis == "min_pts") {
    c.filter.intra_min_pts = c.filter.inter_min_pts = parse_int(axis, value);
  } else if (axis == "sigma") {
    c.dp.sigma = parse_double(axis, value);
  } else if (axis == "clip") {
    c.dp.clip = parse_double(axis, value);
  } else if (axis == "churn") {
    c.churn = parse_double(axis, value);
  } else if (axis == "evs") {
    c.evs = parse_int(axis, value);
  } else if (axis == "group_size") {
    c.group_size = parse_int(axis, value);
  } else if (axis == "rounds") {
    c.rounds = parse_int(axis, value);
  } else {
    throw ConfigError("unknown sweep axis: " + axis);
  }
  c.validate();
  return c;
}

std::vector<SweepCell> run_sweep(const ExperimentConfig& base, const std::string& axis,
                                 const std::vector<std::string>& values, const std::vector<std::uint64_t>& seeds) {
  std::vector<ExperimentConfig> configs;
  for (const auto& v : values) configs.push_back(apply_axis(base, axis, v));
  std::vector<SweepCell> cells;
  for (std::size_t i = 0; i < values.size(); ++i) {
    for (auto seed : seeds) {
      ExperimentConfig c = configs[i];
      c.seed = seed;
      SweepCell cell;
      cell.axis = axis;
      cell.value = values[i];
      cell.seed = seed;
      cell.result = run_experiment(c);
      if (c.adversary.kind != AttackKind::kNone) {
        ExperimentResult benign = run_experiment(benign_counterpart(c));
        cell.ais = compute_ais(benign.final_metrics, cell.result.final_metrics);
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_table_csv(const std::vector<SweepCell>& cells) {
  auto stats = [](const std::vector<double>& v) {
    double m = sample_mean(v);
    double s = v.size() > 1 ? sample_stddev(v) : 0.0;
    return std::make_pair(m, s);
  };
  std::ostringstream os;
  os << "axis,value,seed,f1,rmse,ais,asr,digest\n";
  std::vector<std::string> order;
  std::map<std::string, std::vector<const SweepCell*>> by_value;
  for (const auto& c : cells) {
    os << c.axis << ',' << c.value << ',' << c.seed << ',' << fmt(c.result.final_metrics.f1) << ','
       << fmt(c.result.final_metrics.rmse) << ',' << (c.ais ? fmt(c.ais->ais) : "") << ','
       << (c.result.asr ? fmt(*c.result.asr) : "") << ',' << c.result.digest << '\n';
    if (!by_value.count(c.value)) order.push_back(c.value);
    by_value[c.value].push_back(&c);
  }
  if (cells.empty()) return os.str();
  os << "\naxis,value,runs,f1_mean,f1_std,rmse_mean,rmse_std,ais_mean,ais_std,ais_max\n";
  for (const auto& v : order) {
    std::vector<double> f1, rmse, ais;
    for (const auto* c : by_value[v]) {
      f1.push_back(c->result.final_metrics.f1);
      rmse.push_back(c->result.final_metrics.rmse);
      if (c->ais) ais.push_back(c->ais->ais);
    }
    auto [f1m, f1s] = stats(f1);
    auto [rm, rs] = stats(rmse);
    os << cells.front().axis << ',' << v << ',' << f1.size() << ',' << fmt(f1m) << ',' << fmt(f1s) << ',' << fmt(rm)
       << ',' << fmt(rs) << ',';
    if (ais.empty()) {
      os << ",,\n";
    } else {
      auto [am, as] = stats(ais);
      os << fmt(am) << ',' << fmt(as) << ',' << fmt(*std::max_element(ais.begin(), ais.end())) << '\n';
    }
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Consensus bench
// ---------------------------------------------------------------------------

FairnessStats committee_fairness(const std::vector<double>& weights, int epochs, std::uint64_t seed) {
  FairnessStats out;
  out.weights = weights;
  out.epochs = epochs;
  const std::size_t n = weights.size();
  std::vector<Candidate> candidates;
  for (std::size_t i = 0; i < n; ++i) candidates.push_back({static_cast<int>(i), weights[i]});
  std::vector<std::uint64_t> int_weights;
  for (double w : weights) int_weights.push_back(static_cast<std::uint64_t>(std::llround(w)));
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 0);

  KeyRegistry registry;
  KeyPair leader = validator_keys(seed, 0);
  registry.add(leader);
  KeyPair other = validator_keys(seed, 1);
  registry.add(other);
  std::vector<double> sel(n, 0.0), lead(n, 0.0);
  double total_w = std::accumulate(weights.begin(), weights.end(), 0.0);
  SeededRng rng(seed, Stream::kTest, 77);
  std::string block = "genesis-" + std::to_string(seed);
  for (int e = 0; e < epochs; ++e) {
    Committee c = select_committee(candidates, 1, block, leader.secret, e);
    sel[static_cast<std::size_t>(c.draws.front())] += 1.0;
    if (verify_committee(c, candidates, 1, leader.public_key, registry)) ++out.proofs_verified;
    // Tamper with the proof, the value, or the claimed signer.
    Committee bad = c;
    switch (e % 3) {
      case 0: bad.proof.proof[static_cast<std::size_t>(e % 32)] ^= 0x01; break;
      case 1: bad.proof.value ^= (1ULL << (e % 64)); break;
      default: break;
    }
    const PublicKey& claimed = e % 3 == 2 ? other.public_key : leader.public_key;
    if (verify_committee(bad, candidates, 1, claimed, registry)) ++out.tampered_accepted;
    int l = elect_leader(ids, int_weights, leader_randomness(c.proof.value, e + 1, 0));
    lead[static_cast<std::size_t>(l)] += 1.0;
    block = sha256_hex(block + "|" + std::to_string(rng.next_u64()));
  }
  for (std::size_t i = 0; i < n; ++i) {
    double expected = weights[i] / total_w;
    out.selection_frequency.push_back(sel[i] / epochs);
    out.leader_frequency.push_back(lead[i] / epochs);
    out.max_selection_deviation = std::max(out.max_selection_deviation, std::abs(sel[i] / epochs - expected));
    out.max_leader_deviation = std::max(out.max_leader_deviation, std::abs(lead[i] / epochs - expected));
  }
  return out;
}

ConsensusBenchReport consensus_bench(const ExperimentConfig& config, int runs, std::uint64_t seed) {
  ConsensusBenchReport report;
  report.runs = runs;
  SeededRng rng(seed, Stream::kConsensus, 0);
  const std::vector<Behavior> kinds = {Behavior::kSilent, Behavior::kEquivocate, Behavior::kDelay,
                                       Behavior::kWithhold};
  const int sizes[3] = {4, 7, 10};
  long long views_total = 0;
  long long blocks_total = 0;
  const int delta = config.consensus.delta;
  for (int r = 0; r < runs; ++r) {
    ConsensusRun run;
    int n = sizes[rng.below(3)];
    int f = static_cast<int>(rng.below(static_cast<std::uint64_t>(max_faulty(n)) + 1));
    Behavior kind = kinds[rng.below(kinds.size())];
    auto byz = sample_without_replacement(rng, static_cast<std::size_t>(n), static_cast<std::size_t>(f));
    for (int i = 0; i < n; ++i) run.validators.push_back({i, 0.2 + 0.8 * rng.uniform(), Behavior::kHonest});
    for (auto i : byz) run.validators[i].behavior = kind;
    run.network.delta = delta;
    run.network.gst = static_cast<int>(rng.below(static_cast<std::uint64_t>(20 * delta) + 1));
    run.heights = 3 + static_cast<int>(rng.below(4));
    run.epoch_length = std::max(1, config.consensus.epoch_length / 5);
    run.rotation = config.consensus.rotation;
    run.max_views = config.consensus.max_views;
    run.seed = rng.next_u64();
    run.record_messages = false;
    for (int i = 0; i < 10; ++i) run.txs.push_back("bench-tx-" + std::to_string(r) + "-" + std::to_string(i));
    run.block_tx_limit = 4;
    Trace trace = run_consensus(run);
    if (!check_safety(trace)) ++report.safety_violations;
    if (!check_liveness(trace, run.network.gst)) ++report.liveness_failures;
    report.runs_by_behavior[f == 0 ? "none" : to_string(kind)] += 1;
    for (int v : views_per_block(trace)) {
      views_total += v;
      ++blocks_total;
      report.max_views_per_block = std::max(report.max_views_per_block, v);
    }
  }
  report.mean_views_per_block = blocks_total > 0 ? static_cast<double>(views_total) / blocks_total : 0.0;

  // Honest, synchronous reference runs.
  for (int n : sizes) {
    ConsensusRun run;
    for (int i = 0; i < n; ++i) run.validators.push_back({i, 1.0, Behavior::kHonest});
    run.network.delta = delta;
    run.heights = 5;
    run.epoch_length = 2;
    run.seed = seed + static_cast<std::uint64_t>(n);
    run.record_messages = false;
    Trace trace = run_consensus(run);
    for (int v : views_per_block(trace)) report.honest_views.push_back(v);
  }
  report.fairness = committee_fairness({1.0, 2.0, 3.0}, 10000, seed);
  return report;
}

std::string bench_report_json(const ConsensusBenchReport& r) {
  json j;
  j["runs"] = r.runs;
  j["safety_violations"] = r.safety_violations;
  j["liveness_failures"] = r.liveness_failures;
  j["mean_views_per_block"] = r.mean_views_per_block;
  j["max_views_per_block"] = r.max_views_per_block;
  j["honest_views"] = r.honest_views;
  j["runs_by_behavior"] = r.runs_by_behavior;
  j["fairness"] = {{"weights", r.fairness.weights},
                   {"selection_frequency", r.fairness.selection_frequency},
                   {"leader_frequency", r.fairness.leader_frequency},
                   {"max_selection_deviation", r.fairness.max_selection_deviation},
                   {"max_leader_deviation", r.fairness.max_leader_deviation},
                   {"proofs_verified", r.fairness.proofs_verified},
                   {"tampered_accepted", r.fairness.tampered_accepted},
                   {"epochs", r.fairness.epochs}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

std::string summary_json(const ExperimentResult& r) {
  json j;
  j["config_digest"] = r.config_digest;
  j["digest"] = r.digest;
  j["seed"] = r.config.seed;
  j["aggregator"] = to_string(r.config.aggregator);
  j["attack"] = to_string(r.config.adversary.kind);
  j["mode"] = to_string(r.config.mode);
  j["rounds_completed"] = r.rounds.size();
  j["final"] = {{"accuracy", r.final_metrics.accuracy}, {"precision", r.final_metrics.precision},
                {"recall", r.final_metrics.recall},     {"f1", r.final_metrics.f1},
                {"mae", r.final_metrics.mae},           {"mse", r.final_metrics.mse},
                {"rmse", r.final_metrics.rmse}};
  j["asr"] = r.asr ? json(*r.asr) : json(nullptr);
  j["consensus"] = {{"safe", r.consensus_safe}, {"live", r.consensus_live}, {"stalled", r.stalled}};
  j["tx_counts"] = r.tx_counts;
  j["tx_counts_abc_dfl"] = r.tx_counts_abc;
  j["tx_counts_pure_bfl"] = r.tx_counts_pure;
  j["gas_abc_dfl"] = total_gas(r.tx_counts_abc);
  j["gas_pure_bfl"] = total_gas(r.tx_counts_pure);
  j["malicious_flag_rate"] = r.malicious_flag_rate;
  j["ledger_digest"] = r.ledger_digest;
  return j.dump(2);
}

void write_experiment_outputs(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw Error("cannot write " + (dir / name).string());
    out << text;
  };
  write("results.csv", result.results_csv);
  write("events.jsonl", result.events_jsonl);
  write("incentives.csv", result.incentives_csv);
  write("summary.json", summary_json(result) + "\n");
  write_traces_jsonl(result.consensus_traces, dir / "consensus_trace.jsonl");
}

}  // namespace abcdfl
