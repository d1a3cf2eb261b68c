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

#include <array>
#include <filesystem>
#include <vector>

#include "abcdfl/config.hpp"
#include "abcdfl/core.hpp"

namespace abcdfl {

inline constexpr int kFeatureCount = 8;
inline constexpr double kCapacityMin = 28.28;
inline constexpr double kCapacityMax = 46.23;

struct Sample {
  std::array<double, kFeatureCount> features{};
  int anomaly = 0;
  double capacity = kCapacityMin;

  bool operator==(const Sample&) const = default;
};

using Dataset = std::vector<Sample>;

// Two Gaussian regimes over f0..f5 (anomalies ~20%); f6 and f7 are pure
// noise. Capacity is affine in the features with a penalty for anomalies.
Dataset generate_dataset(int n, std::uint64_t seed);

struct DataSplit {
  Dataset train;
  Dataset test;
};

DataSplit train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed);

struct Partition {
  int ev_id = 0;
  Dataset samples;
};

// Every EV first receives a class-stratified block of `min_size` samples; the
// remainder of each class is spread with Dirichlet(alpha) proportions.
std::vector<Partition> dirichlet_partition(const Dataset& data, int evs, double alpha, std::uint64_t seed,
                                           int min_size = 10);
std::vector<Partition> iid_partition(const Dataset& data, int evs, std::uint64_t seed);

// Capacity standardization fitted once on the global training split.
struct Standardizer {
  double mean = 0.0;
  double scale = 1.0;

  static Standardizer fit(const Dataset& data);
  double standardize(double y) const { return (y - mean) / scale; }
  double destandardize(double z) const { return z * scale + mean; }
};

// One tanh hidden layer with a classification and a regression head. The
// parameters live directly in an UpdateDelta so serialization is trivial.
class MultiTaskModel {
 public:
  MultiTaskModel() = default;
  explicit MultiTaskModel(int hidden);

  static MultiTaskModel initialize(int hidden, SeededRng& rng);
  static MultiTaskModel from_delta(const UpdateDelta& params);

  int hidden() const { return hidden_; }
  const UpdateDelta& params() const { return params_; }
  UpdateDelta& params() { return params_; }
  const UpdateDelta& to_delta() const { return params_; }

  struct Output {
    double logit = 0.0;
    double regression = 0.0;
  };
  Output forward(const std::array<double, kFeatureCount>& x) const;

  bool operator==(const MultiTaskModel&) const = default;

 private:
  int hidden_ = 0;
  UpdateDelta params_;
};

// Mean over `batch` of BCE + squared error on standardized capacity, plus the
// proximal term (mu/2)||w - w_ref||^2 when mu > 0.
double batch_loss(const MultiTaskModel& model, std::span<const Sample> batch, const Standardizer& standardizer,
                  double mu, const MultiTaskModel* global_ref);
UpdateDelta batch_gradient(const MultiTaskModel& model, std::span<const Sample> batch,
                           const Standardizer& standardizer, double mu, const MultiTaskModel* global_ref,
                           double* loss_out = nullptr);

struct LocalTrainResult {
  UpdateDelta delta;
  // Full-partition loss after each epoch.
  std::vector<double> epoch_losses;
};

LocalTrainResult local_train(const MultiTaskModel& global_model, const Dataset& partition, const TrainConfig& cfg,
                             const Standardizer& standardizer, SeededRng& rng);

struct TaskMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double mae = 0.0;
  double mse = 0.0;
  double rmse = 0.0;
};

TaskMetrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                     std::span<const double> predicted_capacity,
                                     std::span<const double> true_capacity);
std::vector<int> predict_labels(const MultiTaskModel& model, const Dataset& data);
TaskMetrics evaluate(const MultiTaskModel& model, const Dataset& testset, const Standardizer& standardizer);

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path);
Dataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace abcdfl
