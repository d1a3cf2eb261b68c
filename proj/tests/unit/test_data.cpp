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

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "abcdfl/data.hpp"

namespace abcdfl {
namespace {

TEST(Dataset, DeterministicForSeed) {
  EXPECT_EQ(generate_dataset(1000, 5), generate_dataset(1000, 5));
  EXPECT_NE(generate_dataset(1000, 5), generate_dataset(1000, 6));
}

TEST(Dataset, AnomalyRateAndCapacityRange) {
  const Dataset d = generate_dataset(10000, 42);
  int anomalies = 0;
  for (const auto& s : d) {
    ASSERT_TRUE(s.anomaly == 0 || s.anomaly == 1);
    ASSERT_GE(s.capacity, kCapacityMin);
    ASSERT_LE(s.capacity, kCapacityMax);
    anomalies += s.anomaly;
  }
  const double rate = anomalies / 10000.0;
  EXPECT_GE(rate, 0.15);
  EXPECT_LE(rate, 0.25);
}

TEST(Dataset, CsvRoundTrip) {
  const Dataset d = generate_dataset(50, 1);
  const auto path = std::filesystem::temp_directory_path() / "abcdfl_dataset_test.csv";
  write_dataset_csv(d, path);
  const Dataset back = read_dataset_csv(path);
  ASSERT_EQ(back.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    EXPECT_EQ(back[i].anomaly, d[i].anomaly);
    EXPECT_NEAR(back[i].capacity, d[i].capacity, 1e-12);
  }
  std::filesystem::remove(path);
}

std::size_t total_size(const std::vector<Partition>& parts) {
  std::size_t n = 0;
  for (const auto& p : parts) n += p.samples.size();
  return n;
}

TEST(Partition, DirichletDisjointCover) {
  const Dataset d = generate_dataset(8400, 42);
  const auto parts = dirichlet_partition(d, 42, 0.8, 42, 32);
  ASSERT_EQ(parts.size(), 42u);
  EXPECT_EQ(total_size(parts), d.size());
  // Samples are distinct by construction of the generator, so a multiset
  // comparison checks disjointness and cover at once.
  std::multiset<double> all;
  for (const auto& s : d) all.insert(s.features[0] * 1e3 + s.capacity);
  std::multiset<double> got;
  for (const auto& p : parts) {
    EXPECT_GE(p.samples.size(), 32u);
    for (const auto& s : p.samples) got.insert(s.features[0] * 1e3 + s.capacity);
  }
  EXPECT_EQ(all, got);
}

TEST(Partition, LargeAlphaApproachesGlobalRatio) {
  const Dataset d = generate_dataset(8400, 3);
  double global = 0.0;
  for (const auto& s : d) global += s.anomaly;
  global /= static_cast<double>(d.size());
  const auto parts = dirichlet_partition(d, 10, 1e6, 3, 10);
  for (const auto& p : parts) {
    double r = 0.0;
    for (const auto& s : p.samples) r += s.anomaly;
    r /= static_cast<double>(p.samples.size());
    EXPECT_NEAR(r, global, 0.05);
  }
}

TEST(Partition, TooSmallIsConfigError) {
  const Dataset d = generate_dataset(100, 3);
  EXPECT_THROW(dirichlet_partition(d, 42, 0.8, 1, 10), ConfigError);
}

TEST(Partition, IidConservesSamples) {
  const Dataset d = generate_dataset(500, 3);
  EXPECT_EQ(total_size(iid_partition(d, 7, 3)), d.size());
}

TEST(Standardizer, RoundTrip) {
  const Dataset d = generate_dataset(300, 3);
  const auto st = Standardizer::fit(d);
  for (double y : {28.28, 35.0, 46.23}) EXPECT_NEAR(st.destandardize(st.standardize(y)), y, 1e-9);
}

TEST(Model, DeltaRoundTripAndLayerNames) {
  SeededRng rng(1, Stream::kInit);
  const auto m = MultiTaskModel::initialize(16, rng);
  const std::set<std::string> names{"cls_head.b", "cls_head.w", "reg_head.b", "reg_head.w", "shared.b", "shared.w"};
  std::set<std::string> got;
  for (const auto& [k, v] : m.params().layers) got.insert(k);
  EXPECT_EQ(got, names);
  EXPECT_EQ(parameter_count(m.params()), 8u * 16 + 16 + 16 + 1 + 16 + 1);
  EXPECT_EQ(MultiTaskModel::from_delta(m.to_delta()), m);
}

TEST(Training, GradientMatchesFiniteDifferences) {
  SeededRng rng(2, Stream::kInit);
  const auto model = MultiTaskModel::initialize(6, rng);
  const Dataset d = generate_dataset(40, 9);
  const auto st = Standardizer::fit(d);
  SeededRng ref_rng(3, Stream::kInit);
  const auto ref = MultiTaskModel::initialize(6, ref_rng);
  const double mu = 0.2;
  const UpdateDelta grad = batch_gradient(model, d, st, mu, &ref);
  const Vector g = flatten(grad);
  const Vector w = flatten(model.params());
  SeededRng pick(4, Stream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t j = pick.below(w.size());
    const double h = 1e-5;
    Vector wp = w;
    Vector wm = w;
    wp[j] += h;
    wm[j] -= h;
    const auto mp = MultiTaskModel::from_delta(unflatten(schema_of(model.params()), wp));
    const auto mm = MultiTaskModel::from_delta(unflatten(schema_of(model.params()), wm));
    const double numeric = (batch_loss(mp, d, st, mu, &ref) - batch_loss(mm, d, st, mu, &ref)) / (2 * h);
    const double denom = std::max({std::abs(numeric), std::abs(g[j]), 1e-6});
    EXPECT_LT(std::abs(numeric - g[j]) / denom, 1e-4) << "coordinate " << j;
  }
}

TEST(Training, ZeroEpochsRejected) {
  SeededRng rng(2, Stream::kInit);
  const auto model = MultiTaskModel::initialize(4, rng);
  const Dataset d = generate_dataset(40, 9);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.mu = 0.0;
  SeededRng t(1, Stream::kTraining);
  EXPECT_THROW(local_train(model, d, cfg, Standardizer::fit(d), t), TrainingError);
  cfg.epochs = 1;
  EXPECT_THROW(local_train(model, Dataset{}, cfg, Standardizer::fit(d), t), TrainingError);
}

TEST(Training, LargeProximalTermShrinksUpdate) {
  SeededRng rng(2, Stream::kInit);
  const auto model = MultiTaskModel::initialize(8, rng);
  const Dataset d = generate_dataset(200, 9);
  const auto st = Standardizer::fit(d);
  TrainConfig cfg;
  cfg.lr = 1e-7;
  cfg.mu = 0.0;
  SeededRng a(1, Stream::kTraining);
  const double free_norm = l2_norm(flatten(local_train(model, d, cfg, st, a).delta));
  cfg.mu = 1e6;
  SeededRng b(1, Stream::kTraining);
  const double prox_norm = l2_norm(flatten(local_train(model, d, cfg, st, b).delta));
  EXPECT_LT(prox_norm, free_norm);
}

TEST(Training, FullBatchLossNonIncreasing) {
  SeededRng rng(5, Stream::kInit);
  const auto model = MultiTaskModel::initialize(8, rng);
  const Dataset d = generate_dataset(128, 11);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.batch = 128;
  cfg.lr = 0.01;
  cfg.mu = 0.0;
  SeededRng t(1, Stream::kTraining);
  const auto r = local_train(model, d, cfg, Standardizer::fit(d), t);
  ASSERT_EQ(r.epoch_losses.size(), 10u);
  for (std::size_t i = 1; i < r.epoch_losses.size(); ++i) EXPECT_LE(r.epoch_losses[i], r.epoch_losses[i - 1] + 1e-12);
}

TEST(Training, CentralizedModelLearnsTask) {
  const Dataset all = generate_dataset(3000, 21);
  const auto split = train_test_split(all, 0.2, 21);
  const auto st = Standardizer::fit(split.train);
  SeededRng rng(1, Stream::kInit);
  auto model = MultiTaskModel::initialize(16, rng);
  TrainConfig cfg;
  cfg.epochs = 20;
  cfg.mu = 0.0;
  SeededRng t(1, Stream::kTraining);
  const auto r = local_train(model, split.train, cfg, st, t);
  model = MultiTaskModel::from_delta(add(model.params(), r.delta));
  EXPECT_GE(evaluate(model, split.test, st).accuracy, 0.9);
}

TEST(Metrics, PerfectPredictor) {
  std::vector<int> y{0, 1, 1, 0};
  std::vector<double> c{30.0, 40.0, 35.0, 29.0};
  const auto m = metrics_from_predictions(y, y, c, c);
  EXPECT_DOUBLE_EQ(m.accuracy, 1.0);
  EXPECT_DOUBLE_EQ(m.precision, 1.0);
  EXPECT_DOUBLE_EQ(m.recall, 1.0);
  EXPECT_DOUBLE_EQ(m.f1, 1.0);
  EXPECT_DOUBLE_EQ(m.mae, 0.0);
  EXPECT_DOUBLE_EQ(m.rmse, 0.0);
}

TEST(Metrics, ConstantMajorityPredictor) {
  std::vector<int> truth(100, 0);
  for (int i = 0; i < 20; ++i) truth[i] = 1;
  std::vector<int> pred(100, 0);
  std::vector<double> c(100, 30.0);
  const auto m = metrics_from_predictions(pred, truth, c, c);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.8);
  EXPECT_DOUBLE_EQ(m.recall, 0.0);
  EXPECT_DOUBLE_EQ(m.f1, 0.0);
}

TEST(Metrics, MatchConfusionMatrixOracle) {
  SeededRng rng(13, Stream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<int> p(200);
    std::vector<int> t(200);
    std::vector<double> pc(200);
    std::vector<double> tc(200);
    int tp = 0, fp = 0, fn = 0, tn = 0;
    double se = 0.0, ae = 0.0;
    for (int i = 0; i < 200; ++i) {
      p[i] = rng.bernoulli(0.3);
      t[i] = rng.bernoulli(0.3);
      pc[i] = rng.uniform(28.0, 46.0);
      tc[i] = rng.uniform(28.0, 46.0);
      tp += p[i] && t[i];
      fp += p[i] && !t[i];
      fn += !p[i] && t[i];
      tn += !p[i] && !t[i];
      se += (pc[i] - tc[i]) * (pc[i] - tc[i]);
      ae += std::abs(pc[i] - tc[i]);
    }
    const auto m = metrics_from_predictions(p, t, pc, tc);
    const double prec = tp + fp ? double(tp) / (tp + fp) : 0.0;
    const double rec = tp + fn ? double(tp) / (tp + fn) : 0.0;
    EXPECT_NEAR(m.accuracy, double(tp + tn) / 200, 1e-12);
    EXPECT_NEAR(m.precision, prec, 1e-12);
    EXPECT_NEAR(m.recall, rec, 1e-12);
    EXPECT_NEAR(m.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0.0, 1e-12);
    EXPECT_NEAR(m.mse, se / 200, 1e-9);
    EXPECT_NEAR(m.mae, ae / 200, 1e-9);
    EXPECT_NEAR(m.rmse, std::sqrt(m.mse), 1e-12);
  }
}

}  // namespace
}  // namespace abcdfl
