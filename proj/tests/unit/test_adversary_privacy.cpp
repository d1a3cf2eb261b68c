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

#include <cmath>

#include "abcdfl/adversary.hpp"
#include "abcdfl/privacy.hpp"

namespace abcdfl {
namespace {

ExperimentConfig threat_config(double fg, double fe) {
  ExperimentConfig c;
  c.adversary.kind = AttackKind::kGauss;
  c.adversary.malicious_group_fraction = fg;
  c.adversary.malicious_ev_fraction = fe;
  return c;
}

UpdateDelta random_delta(SeededRng& rng, double scale = 1.0) {
  UpdateDelta d;
  d.layers["a"] = Vector(5);
  d.layers["b"] = Vector(3);
  for (auto& [name, v] : d.layers) {
    for (double& x : v) x = scale * rng.normal();
  }
  return d;
}

Partition labeled(std::initializer_list<int> labels) {
  Partition p;
  for (int y : labels) {
    Sample s;
    s.anomaly = y;
    p.samples.push_back(s);
  }
  return p;
}

TEST(Placement, CountsAndDeterminism) {
  const auto cfg = threat_config(0.5, 0.0);
  const auto p = place_threats(cfg, 42);
  EXPECT_EQ(p.malicious_groups.size(), 3u);
  for (int g : p.malicious_groups) {
    EXPECT_GE(g, 0);
    EXPECT_LT(g, 6);
    for (int ev = g * 7; ev < g * 7 + 7; ++ev) EXPECT_TRUE(p.is_malicious_ev(g, ev));
  }
  EXPECT_EQ(place_threats(cfg, 42).malicious_groups, p.malicious_groups);
  EXPECT_TRUE(place_threats(threat_config(0.0, 0.0), 1).empty());
}

TEST(Placement, PlantedEvsStayInBenignGroups) {
  const auto p = place_threats(threat_config(1.0 / 3.0, 2.0 / 7.0), 7);
  EXPECT_EQ(p.malicious_groups.size(), 2u);
  int planted = 0;
  for (const auto& [g, evs] : p.malicious_evs) {
    EXPECT_FALSE(p.is_malicious_group(g));
    EXPECT_EQ(evs.size(), 2u);
    for (int ev : evs) {
      EXPECT_GE(ev, g * 7);
      EXPECT_LT(ev, g * 7 + 7);
    }
    planted += static_cast<int>(evs.size());
  }
  EXPECT_EQ(planted, 8);
}

TEST(Placement, NoAttackMeansNoThreats) {
  auto cfg = threat_config(0.5, 0.5);
  cfg.adversary.kind = AttackKind::kNone;
  EXPECT_TRUE(place_threats(cfg, 1).empty());
  EXPECT_THROW(place_threats(threat_config(1.5, 0.0), 1), ConfigError);
}

TEST(Poison, LabelFlipExample) {
  AttackSpec spec{AttackKind::kLabelFlip, {}};
  SeededRng rng(1, Stream::kTest);
  const auto out = poison_data(labeled({0, 1, 1}), spec, rng);
  EXPECT_EQ(out.samples[0].anomaly, 1);
  EXPECT_EQ(out.samples[1].anomaly, 0);
  EXPECT_EQ(out.samples[2].anomaly, 0);
}

TEST(Poison, BadnetsZeroRateUnchanged) {
  const Dataset data = generate_dataset(50, 3);
  Partition p{4, data};
  AttackSpec spec{AttackKind::kBadnets, {}};
  spec.params.trigger_rate = 0.0;
  SeededRng rng(2, Stream::kTest);
  EXPECT_EQ(poison_data(p, spec, rng).samples, p.samples);
}

TEST(Poison, BadnetsStampsTriggerAndTarget) {
  const Dataset data = generate_dataset(100, 3);
  Partition p{0, data};
  AttackSpec spec{AttackKind::kBadnets, {}};
  SeededRng rng(3, Stream::kTest);
  const auto out = poison_data(p, spec, rng);
  int changed = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (out.samples[i].features == data[i].features) continue;
    ++changed;
    EXPECT_DOUBLE_EQ(out.samples[i].features[6], data[i].features[6] + spec.params.trigger_offset);
    EXPECT_DOUBLE_EQ(out.samples[i].features[7], data[i].features[7] + spec.params.trigger_offset);
    EXPECT_EQ(out.samples[i].anomaly, spec.params.target_label);
  }
  EXPECT_EQ(changed, 50);
}

TEST(Poison, FeatureAttackTouchesOneColumn) {
  const Dataset data = generate_dataset(40, 5);
  AttackSpec spec{AttackKind::kFeature, {}};
  spec.params.feature_index = 2;
  SeededRng rng(4, Stream::kTest);
  const auto out = poison_data(Partition{0, data}, spec, rng);
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (int j = 0; j < kFeatureCount; ++j) {
      const double want = data[i].features[j] + (j == 2 ? spec.params.feature_shift : 0.0);
      EXPECT_DOUBLE_EQ(out.samples[i].features[j], want);
    }
  }
  spec.params.feature_index = kFeatureCount;
  EXPECT_THROW(poison_data(Partition{0, data}, spec, rng), ConfigError);
}

TEST(Poison, GaussWithZeroMultiplierIsZero) {
  SeededRng rng(5, Stream::kTest);
  std::vector<UpdateDelta> visible{random_delta(rng), random_delta(rng)};
  AttackSpec spec{AttackKind::kGauss, {}};
  spec.params.gauss_std_multiplier = 0.0;
  const auto out = poison_update(visible, visible[0], spec, rng);
  EXPECT_DOUBLE_EQ(l2_norm(flatten(out)), 0.0);
}

TEST(Poison, GaussNoiseScale) {
  SeededRng rng(6, Stream::kTest);
  UpdateDelta big;
  big.layers["w"] = Vector(20000);
  std::vector<UpdateDelta> visible{big};
  for (double& x : visible[0].layers["w"]) x = rng.normal(0.0, 0.5);
  AttackSpec spec{AttackKind::kGauss, {}};
  const auto out = poison_update(visible, visible[0], spec, rng);
  const Vector f = flatten(out);
  const double want = spec.params.gauss_std_multiplier * sample_stddev(flatten(visible[0]));
  EXPECT_NEAR(sample_stddev(f), want, 0.02 * want);
}

TEST(Poison, ScalingWithUnitGammaIsIdentity) {
  SeededRng rng(7, Stream::kTest);
  const auto own = random_delta(rng);
  AttackSpec spec{AttackKind::kScaling, {}};
  spec.params.scale_gamma = 1.0;
  EXPECT_EQ(poison_update({}, own, spec, rng).layers, own.layers);
  spec.params.scale_gamma = 0.0;
  const auto k = poison_update({}, own, spec, rng, 1, 7);
  const Vector a = flatten(k);
  const Vector b = flatten(own);
  for (std::size_t j = 0; j < a.size(); ++j) EXPECT_DOUBLE_EQ(a[j], 7.0 * b[j]);
}

TEST(Poison, AdaptiveMinMaxStaysWithinBenignSpread) {
  SeededRng rng(8, Stream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<UpdateDelta> benign;
    UpdateDelta center = random_delta(rng);
    for (int i = 0; i < 6; ++i) {
      UpdateDelta d = center;
      for (auto& [n, v] : d.layers) {
        for (double& x : v) x += rng.normal(0.0, 0.3);
      }
      benign.push_back(d);
    }
    double max_pair = 0.0;
    for (const auto& a : benign) {
      for (const auto& b : benign) max_pair = std::max(max_pair, l2_distance(flatten(a), flatten(b)));
    }
    AttackSpec spec{AttackKind::kAdaptiveMinMax, {}};
    const auto out = poison_update(benign, benign[0], spec, rng);
    for (const auto& b : benign) EXPECT_LE(l2_distance(flatten(out), flatten(b)), max_pair * (1.0 + 1e-9));
    EXPECT_GT(adaptive_minmax_gamma(benign, 20), 0.0);
  }
}

TEST(Poison, TrimAttackOpposesBenignSign) {
  SeededRng rng(9, Stream::kTest);
  std::vector<UpdateDelta> visible;
  for (int i = 0; i < 5; ++i) visible.push_back(random_delta(rng));
  AttackSpec spec{AttackKind::kTrimAttack, {}};
  const Vector out = flatten(poison_update(visible, visible[0], spec, rng));
  for (std::size_t j = 0; j < out.size(); ++j) {
    double lo = 1e300, hi = -1e300, sum = 0.0;
    for (const auto& u : visible) {
      const double x = flatten(u)[j];
      lo = std::min(lo, x);
      hi = std::max(hi, x);
      sum += x;
    }
    if (sum >= 0.0) {
      EXPECT_LE(out[j], lo);
    } else {
      EXPECT_GE(out[j], hi);
    }
  }
}

TEST(Poison, WrongFamilyIsError) {
  SeededRng rng(10, Stream::kTest);
  EXPECT_THROW(poison_data(labeled({0}), AttackSpec{AttackKind::kGauss, {}}, rng), ConfigError);
  const auto d = random_delta(rng);
  EXPECT_THROW(poison_update({}, d, AttackSpec{AttackKind::kLabelFlip, {}}, rng), ConfigError);
}

TEST(Privacy, ClipBoundsNorm) {
  SeededRng rng(11, Stream::kTest);
  for (int trial = 0; trial < 100; ++trial) {
    const auto d = random_delta(rng, rng.uniform(0.01, 10.0));
    const auto c = clip_update(d, 4.0);
    const double n = l2_norm(flatten(d));
    EXPECT_LE(l2_norm(flatten(c)), 4.0 + 1e-9);
    if (n <= 4.0) EXPECT_EQ(c.layers, d.layers);
  }
  EXPECT_THROW(clip_update(random_delta(rng), 0.0), ConfigError);
}

TEST(Privacy, ClipIsIdempotent) {
  SeededRng rng(12, Stream::kTest);
  for (int trial = 0; trial < 50; ++trial) {
    const auto once = clip_update(random_delta(rng, 5.0), 1.5);
    const auto twice = clip_update(once, 1.5);
    const Vector a = flatten(once);
    const Vector b = flatten(twice);
    for (std::size_t j = 0; j < a.size(); ++j) EXPECT_NEAR(a[j], b[j], 1e-12);
  }
}

TEST(Privacy, NoiseHasRequestedStd) {
  SeededRng rng(13, Stream::kTest);
  UpdateDelta z;
  z.layers["w"] = Vector(50000, 0.0);
  const Vector noisy = flatten(add_gaussian_noise(z, 0.005, rng));
  EXPECT_NEAR(sample_mean(noisy), 0.0, 1e-4);
  EXPECT_NEAR(sample_stddev(noisy), 0.005, 0.005 * 0.02);
  EXPECT_EQ(add_gaussian_noise(z, 0.0, rng).layers, z.layers);
}

TEST(Privacy, PrivatizeIsClipThenNoise) {
  SeededRng a(14, Stream::kDp);
  SeededRng b(14, Stream::kDp);
  SeededRng src(15, Stream::kTest);
  const auto d = random_delta(src, 10.0);
  DpConfig cfg;
  const auto got = privatize(d, cfg, a);
  const auto want = add_gaussian_noise(clip_update(d, cfg.clip), cfg.sigma, b);
  EXPECT_EQ(got.layers, want.layers);
}

TEST(Privacy, RequiredSigmaFormula) {
  EXPECT_NEAR(required_sigma(1.0, 1e-5, 4.0), 19.379221050421556, 1e-12);
  EXPECT_NEAR(required_sigma(2.0, 1e-5, 4.0), 19.379221050421556 / 2.0, 1e-12);
  EXPECT_THROW(required_sigma(0.0, 1e-5, 4.0), ConfigError);
  EXPECT_THROW(required_sigma(1.0, 1.0, 4.0), ConfigError);
}

TEST(Privacy, ConfigValidation) {
  DpConfig c;
  EXPECT_NO_THROW(c.validate());
  c.epsilon = -1.0;
  EXPECT_THROW(c.validate(), ConfigError);
}

}  // namespace
}  // namespace abcdfl
