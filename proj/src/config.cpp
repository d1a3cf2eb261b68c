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
#include "abcdfl/config.hpp"

#include <fstream>
#include <sstream>

#include "abcdfl/core.hpp"
#include "json.hpp"

namespace abcdfl {

using nlohmann::json;

namespace {

template <typename Enum>
struct NameTable {
  Enum value;
  const char* name;
};

constexpr NameTable<AggregatorKind> kAggregators[] = {
    {AggregatorKind::kFleca, "fleca"},          {AggregatorKind::kFedAvg, "fedavg"},
    {AggregatorKind::kTrimmedMean, "trimmed_mean"}, {AggregatorKind::kMultiKrum, "multi_krum"},
    {AggregatorKind::kNormClip, "norm_clip"},   {AggregatorKind::kWeakDp, "weak_dp"},
    {AggregatorKind::kFlameLite, "flame_lite"},
};

constexpr NameTable<FlecaVariant> kVariants[] = {{FlecaVariant::kV1, "v1"}, {FlecaVariant::kV2, "v2"}};

constexpr NameTable<AttackKind> kAttacks[] = {
    {AttackKind::kNone, "none"},
    {AttackKind::kGauss, "gauss"},
    {AttackKind::kLabelFlip, "label_flip"},
    {AttackKind::kFeature, "feature"},
    {AttackKind::kTrimAttack, "trim_attack"},
    {AttackKind::kKrumAttack, "krum_attack"},
    {AttackKind::kAdaptiveMinMax, "adaptive_minmax"},
    {AttackKind::kBadnets, "badnets"},
    {AttackKind::kScaling, "scaling"},
};

constexpr NameTable<AccountingMode> kModes[] = {{AccountingMode::kAbcDfl, "abc_dfl"},
                                                {AccountingMode::kPureBfl, "pure_bfl"}};

template <typename Enum, std::size_t N>
std::string name_of(const NameTable<Enum> (&table)[N], Enum value) {
  for (const auto& row : table) {
    if (row.value == value) return row.name;
  }
  return "unknown";
}

template <typename Enum, std::size_t N>
Enum parse_name(const NameTable<Enum> (&table)[N], const std::string& name, const char* what) {
  for (const auto& row : table) {
    if (name == row.name) return row.value;
  }
  throw ConfigError(std::string("unknown ") + what + " '" + name + "'");
}

// Reads fields from one JSON object and rejects anything it did not consume.
class ObjectReader {
 public:
  ObjectReader(const json& object, std::string path) : object_(object), path_(std::move(path)) {
    if (!object_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  ~ObjectReader() = default;

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = object_.find(key);
    if (it == object_.end()) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!it->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!it->is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!it->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!it->is_string()) throw ConfigError("");
      }
      out = it->get<T>();
    } catch (const std::exception&) {
      throw ConfigError(path_ + "." + key + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = object_.find(key);
    return it == object_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = object_.begin(); it != object_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(path_ + ": unknown key '" + it.key() + "'");
    }
  }

 private:
  const json& object_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
void with_child(ObjectReader& parent, const char* key, const std::string& path, Fn fn) {
  if (const json* node = parent.child(key)) {
    ObjectReader reader(*node, path + "." + key);
    fn(reader);
    reader.finish();
  }
}

}  // namespace

std::string to_string(AggregatorKind kind) { return name_of(kAggregators, kind); }
std::string to_string(FlecaVariant variant) { return name_of(kVariants, variant); }
std::string to_string(AttackKind kind) { return name_of(kAttacks, kind); }
std::string to_string(AccountingMode mode) { return name_of(kModes, mode); }
AggregatorKind parse_aggregator(const std::string& name) { return parse_name(kAggregators, name, "aggregator"); }
FlecaVariant parse_variant(const std::string& name) { return parse_name(kVariants, name, "variant"); }
AttackKind parse_attack(const std::string& name) { return parse_name(kAttacks, name, "attack kind"); }
AccountingMode parse_mode(const std::string& name) { return parse_name(kModes, name, "mode"); }

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("config: " + what);
  };
  auto fraction = [&](double v, const std::string& what) { require(v >= 0.0 && v <= 1.0, what + " must be in [0,1]"); };

  require(evs >= 1, "evs must be positive");
  require(group_size >= 1, "group_size must be positive");
  require(evs % group_size == 0, "evs must be a multiple of group_size");
  require(rounds >= 1, "rounds must be positive");
  require(data.samples >= 2, "data.samples too small");
  require(data.test_fraction > 0.0 && data.test_fraction < 1.0, "data.test_fraction must be in (0,1)");
  require(data.dirichlet_alpha > 0.0, "data.dirichlet_alpha must be positive");
  require(train.hidden >= 1, "train.hidden must be positive");
  require(train.epochs >= 1, "train.epochs must be positive");
  require(train.batch >= 1, "train.batch must be positive");
  require(train.lr > 0.0, "train.lr must be positive");
  require(train.mu >= 0.0, "train.mu must be nonnegative");
  require(filter.beta >= 0.0, "filter.beta must be nonnegative");
  require(filter.kappa >= 0.0, "filter.kappa must be nonnegative");
  require(filter.eps_stability > 0.0, "filter.eps_stability must be positive");
  require(!filter.monitored_layers.empty(), "filter.monitored_layers must be non-empty");
  require(filter.intra_min_pts >= 2 && filter.inter_min_pts >= 2, "min_pts must be >= 2");
  require(dp.clip > 0.0, "dp.clip must be positive");
  require(dp.sigma >= 0.0, "dp.sigma must be nonnegative");
  fraction(adversary.malicious_group_fraction, "adversary.malicious_group_fraction");
  fraction(adversary.malicious_ev_fraction, "adversary.malicious_ev_fraction");
  fraction(adversary.params.flip_rate, "attack.flip_rate");
  fraction(adversary.params.feature_rate, "attack.feature_rate");
  fraction(adversary.params.trigger_rate, "attack.trigger_rate");
  require(adversary.params.gauss_std_multiplier >= 0.0, "attack.gauss_std_multiplier must be nonnegative");
  require(adversary.params.feature_index >= 0 && adversary.params.feature_index < 8, "attack.feature_index out of range");
  require(adversary.params.target_label == 0 || adversary.params.target_label == 1, "attack.target_label must be 0 or 1");
  require(adversary.params.scale_gamma >= 0.0, "attack.scale_gamma must be nonnegative");
  require(adversary.params.adaptive_iterations >= 1, "attack.adaptive_iterations must be positive");
  fraction(churn, "churn");
  require(consensus.validators >= 0, "consensus.validators must be nonnegative");
  require(consensus.committee_size >= 0, "consensus.committee_size must be nonnegative");
  require(consensus.epoch_length >= 1, "consensus.epoch_length must be positive");
  require(consensus.delta >= 1, "consensus.delta must be positive");
  require(consensus.gst >= 0, "consensus.gst must be nonnegative");
  require(consensus.block_tx_limit >= 1, "consensus.block_tx_limit must be positive");
  require(consensus.max_views >= 1, "consensus.max_views must be positive");
  {
    const int n = consensus.validators == 0 ? groups() : consensus.validators;
    const int v = consensus.committee_size == 0 ? n : consensus.committee_size;
    require(v <= n, "consensus.committee_size must not exceed the validator count");
    require(consensus.f < 0 || 3 * consensus.f + 1 <= n, "consensus.f requires n >= 3f + 1");
  }
  require(incentives.eta >= 0.0 && incentives.alpha_dist >= 0.0, "incentives.eta/alpha_dist must be nonnegative");
  require(incentives.reward_b >= 0.0 && incentives.budget >= 0.0 && incentives.deposit >= 0.0,
          "incentives amounts must be nonnegative");
  require(incentives.gompertz_a > 0.0 && incentives.gompertz_a < 1.0, "incentives.gompertz_a must be in (0,1)");
  require(incentives.gompertz_b > 0.0 && incentives.gompertz_c > 0.0, "incentives.gompertz_b/c must be positive");
  require(incentives.initial_reputation > 0.0 && incentives.initial_reputation < 1.0,
          "incentives.initial_reputation must be in (0,1)");
  require(baseline.trim_fraction >= 0.0 && baseline.trim_fraction < 0.5, "baseline.trim_fraction must be in [0,0.5)");
  require(baseline.norm_bound > 0.0, "baseline.norm_bound must be positive");
  require(baseline.weak_dp_sigma >= 0.0 && baseline.flame_lambda >= 0.0, "baseline noise must be nonnegative");
  require(oracles >= 1, "oracles must be positive");
}

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  ObjectReader root(doc, "config");
  root.read("evs", c.evs);
  root.read("group_size", c.group_size);
  root.read("rounds", c.rounds);
  root.read("seed", c.seed);
  root.read("churn", c.churn);
  root.read("oracles", c.oracles);
  // Free-form documentation; not part of the canonical form.
  std::string description;
  root.read("description", description);
  std::string name;
  name = to_string(c.aggregator);
  root.read("aggregator", name);
  c.aggregator = parse_aggregator(name);
  name = to_string(c.mode);
  root.read("mode", name);
  c.mode = parse_mode(name);

  with_child(root, "data", "config", [&](ObjectReader& r) {
    r.read("samples", c.data.samples);
    r.read("test_fraction", c.data.test_fraction);
    r.read("dirichlet_alpha", c.data.dirichlet_alpha);
    r.read("iid", c.data.iid);
  });
  with_child(root, "train", "config", [&](ObjectReader& r) {
    r.read("hidden", c.train.hidden);
    r.read("epochs", c.train.epochs);
    r.read("batch", c.train.batch);
    r.read("lr", c.train.lr);
    r.read("mu", c.train.mu);
  });
  with_child(root, "filter", "config", [&](ObjectReader& r) {
    r.read("beta", c.filter.beta);
    r.read("kappa", c.filter.kappa);
    r.read("eps_stability", c.filter.eps_stability);
    r.read("monitored_layers", c.filter.monitored_layers);
    r.read("intra_min_pts", c.filter.intra_min_pts);
    r.read("inter_min_pts", c.filter.inter_min_pts);
    r.read("stage2_monitored_only", c.filter.stage2_monitored_only);
    std::string v = to_string(c.filter.variant);
    r.read("variant", v);
    c.filter.variant = parse_variant(v);
  });
  with_child(root, "dp", "config", [&](ObjectReader& r) {
    r.read("enabled", c.dp.enabled);
    r.read("clip", c.dp.clip);
    r.read("sigma", c.dp.sigma);
  });
  with_child(root, "adversary", "config", [&](ObjectReader& r) {
    r.read("malicious_group_fraction", c.adversary.malicious_group_fraction);
    r.read("malicious_ev_fraction", c.adversary.malicious_ev_fraction);
    std::string kind = to_string(c.adversary.kind);
    r.read("kind", kind);
    c.adversary.kind = parse_attack(kind);
    with_child(r, "params", "config.adversary", [&](ObjectReader& p) {
      auto& a = c.adversary.params;
      p.read("gauss_std_multiplier", a.gauss_std_multiplier);
      p.read("flip_rate", a.flip_rate);
      p.read("feature_index", a.feature_index);
      p.read("feature_shift", a.feature_shift);
      p.read("feature_rate", a.feature_rate);
      p.read("trim_epsilon", a.trim_epsilon);
      p.read("trigger_offset", a.trigger_offset);
      p.read("trigger_rate", a.trigger_rate);
      p.read("target_label", a.target_label);
      p.read("scale_gamma", a.scale_gamma);
      p.read("adaptive_iterations", a.adaptive_iterations);
    });
  });
  with_child(root, "consensus", "config", [&](ObjectReader& r) {
    r.read("validators", c.consensus.validators);
    r.read("f", c.consensus.f);
    r.read("committee_size", c.consensus.committee_size);
    r.read("epoch_length", c.consensus.epoch_length);
    r.read("delta", c.consensus.delta);
    r.read("gst", c.consensus.gst);
    r.read("rotation", c.consensus.rotation);
    r.read("block_tx_limit", c.consensus.block_tx_limit);
    r.read("max_views", c.consensus.max_views);
  });
  with_child(root, "incentives", "config", [&](ObjectReader& r) {
    r.read("eta", c.incentives.eta);
    r.read("alpha_dist", c.incentives.alpha_dist);
    r.read("reward_b", c.incentives.reward_b);
    r.read("budget", c.incentives.budget);
    r.read("deposit", c.incentives.deposit);
    r.read("gompertz_a", c.incentives.gompertz_a);
    r.read("gompertz_b", c.incentives.gompertz_b);
    r.read("gompertz_c", c.incentives.gompertz_c);
    r.read("slash_threshold", c.incentives.slash_threshold);
    r.read("initial_reputation", c.incentives.initial_reputation);
  });
  with_child(root, "baseline", "config", [&](ObjectReader& r) {
    r.read("trim_fraction", c.baseline.trim_fraction);
    r.read("krum_f", c.baseline.krum_f);
    r.read("krum_m", c.baseline.krum_m);
    r.read("norm_bound", c.baseline.norm_bound);
    r.read("weak_dp_sigma", c.baseline.weak_dp_sigma);
    r.read("flame_lambda", c.baseline.flame_lambda);
  });
  root.finish();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["evs"] = c.evs;
  j["group_size"] = c.group_size;
  j["rounds"] = c.rounds;
  j["seed"] = c.seed;
  j["churn"] = c.churn;
  j["oracles"] = c.oracles;
  j["aggregator"] = to_string(c.aggregator);
  j["mode"] = to_string(c.mode);
  j["data"] = {{"samples", c.data.samples},
               {"test_fraction", c.data.test_fraction},
               {"dirichlet_alpha", c.data.dirichlet_alpha},
               {"iid", c.data.iid}};
  j["train"] = {{"hidden", c.train.hidden}, {"epochs", c.train.epochs}, {"batch", c.train.batch},
                {"lr", c.train.lr},         {"mu", c.train.mu}};
  j["filter"] = {{"beta", c.filter.beta},
                 {"kappa", c.filter.kappa},
                 {"eps_stability", c.filter.eps_stability},
                 {"monitored_layers", c.filter.monitored_layers},
                 {"intra_min_pts", c.filter.intra_min_pts},
                 {"inter_min_pts", c.filter.inter_min_pts},
                 {"stage2_monitored_only", c.filter.stage2_monitored_only},
                 {"variant", to_string(c.filter.variant)}};
  j["dp"] = {{"enabled", c.dp.enabled}, {"clip", c.dp.clip}, {"sigma", c.dp.sigma}};
  const auto& a = c.adversary.params;
  j["adversary"] = {{"malicious_group_fraction", c.adversary.malicious_group_fraction},
                    {"malicious_ev_fraction", c.adversary.malicious_ev_fraction},
                    {"kind", to_string(c.adversary.kind)},
                    {"params",
                     {{"gauss_std_multiplier", a.gauss_std_multiplier},
                      {"flip_rate", a.flip_rate},
                      {"feature_index", a.feature_index},
                      {"feature_shift", a.feature_shift},
                      {"feature_rate", a.feature_rate},
                      {"trim_epsilon", a.trim_epsilon},
                      {"trigger_offset", a.trigger_offset},
                      {"trigger_rate", a.trigger_rate},
                      {"target_label", a.target_label},
                      {"scale_gamma", a.scale_gamma},
                      {"adaptive_iterations", a.adaptive_iterations}}}};
  j["consensus"] = {{"validators", c.consensus.validators},     {"f", c.consensus.f},
                    {"committee_size", c.consensus.committee_size}, {"epoch_length", c.consensus.epoch_length},
                    {"delta", c.consensus.delta},               {"gst", c.consensus.gst},
                    {"rotation", c.consensus.rotation},         {"block_tx_limit", c.consensus.block_tx_limit},
                    {"max_views", c.consensus.max_views}};
  j["incentives"] = {{"eta", c.incentives.eta},
                     {"alpha_dist", c.incentives.alpha_dist},
                     {"reward_b", c.incentives.reward_b},
                     {"budget", c.incentives.budget},
                     {"deposit", c.incentives.deposit},
                     {"gompertz_a", c.incentives.gompertz_a},
                     {"gompertz_b", c.incentives.gompertz_b},
                     {"gompertz_c", c.incentives.gompertz_c},
                     {"slash_threshold", c.incentives.slash_threshold},
                     {"initial_reputation", c.incentives.initial_reputation}};
  j["baseline"] = {{"trim_fraction", c.baseline.trim_fraction}, {"krum_f", c.baseline.krum_f},
                   {"krum_m", c.baseline.krum_m},               {"norm_bound", c.baseline.norm_bound},
                   {"weak_dp_sigma", c.baseline.weak_dp_sigma}, {"flame_lambda", c.baseline.flame_lambda}};
  return j.dump(2);
}

std::string config_digest(const ExperimentConfig& config) { return sha256_hex(config_to_json(config)); }

}  // namespace abcdfl
