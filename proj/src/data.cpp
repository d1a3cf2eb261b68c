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
#include "abcdfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace abcdfl {

namespace {

constexpr double kAnomalyRate = 0.2;
constexpr double kRegimeShift = 1.5;
constexpr double kCapacityBase = 38.0;
constexpr double kAnomalyPenalty = 3.0;
constexpr double kCapacityNoise = 0.8;
constexpr std::array<double, kFeatureCount> kCapacityWeights = {1.5, -1.0, 0.8, 0.5, -0.6, 0.4, 0.0, 0.0};

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

// Splits `total` into integer counts proportional to `weights` (largest remainder).
std::vector<std::size_t> apportion(std::size_t total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<std::size_t> counts(weights.size(), 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = sum > 0 ? static_cast<double>(total) * weights[i] / sum : 0.0;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(-(exact - std::floor(exact)), i);
  }
  std::sort(remainders.begin(), remainders.end());
  for (std::size_t r = 0; assigned < total; ++r, ++assigned) counts[remainders[r % remainders.size()].second] += 1;
  return counts;
}

}  // namespace

Dataset generate_dataset(int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("generate_dataset: n must be positive");
  SeededRng rng(seed, Stream::kData);
  Dataset out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Sample s;
    s.anomaly = rng.bernoulli(kAnomalyRate) ? 1 : 0;
    for (int f = 0; f < kFeatureCount; ++f) {
      const double shift = (s.anomaly && f < 6) ? kRegimeShift : 0.0;
      s.features[static_cast<std::size_t>(f)] = rng.normal(shift, 1.0);
    }
    double cap = kCapacityBase;
    for (int f = 0; f < kFeatureCount; ++f) cap += kCapacityWeights[static_cast<std::size_t>(f)] * s.features[static_cast<std::size_t>(f)];
    if (s.anomaly) cap -= kAnomalyPenalty;
    cap += rng.normal(0.0, kCapacityNoise);
    s.capacity = std::clamp(cap, kCapacityMin, kCapacityMax);
    out.push_back(s);
  }
  return out;
}

DataSplit train_test_split(const Dataset& data, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ConfigError("test_fraction must be in (0,1)");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed, Stream::kPartition, 1);
  rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(data.size())));
  DataSplit split;
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_test ? split.test : split.train).push_back(data[order[i]]);
  }
  return split;
}

std::vector<Partition> dirichlet_partition(const Dataset& data, int evs, double alpha, std::uint64_t seed,
                                           int min_size) {
  if (evs < 1) throw ConfigError("dirichlet_partition: E must be positive");
  if (!(alpha > 0.0)) throw ConfigError("dirichlet_partition: alpha must be positive");
  if (min_size < 1) throw ConfigError("dirichlet_partition: min_size must be positive");
  const auto e = static_cast<std::size_t>(evs);
  const auto min = static_cast<std::size_t>(min_size);
  if (data.size() < e * min) throw ConfigError("dirichlet_partition: dataset too small for the per-EV minimum");

  SeededRng rng(seed, Stream::kPartition, 2);
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < data.size(); ++i) by_class[static_cast<std::size_t>(data[i].anomaly)].push_back(i);
  for (auto& idx : by_class) rng.shuffle(idx);

  // Stratified reserve: the same per-class count per EV.
  const auto reserve = apportion(min, {static_cast<double>(by_class[0].size()), static_cast<double>(by_class[1].size())});
  for (std::size_t c = 0; c < 2; ++c) {
    if (reserve[c] * e > by_class[c].size()) throw ConfigError("dirichlet_partition: class too small for the minimum");
  }

  std::vector<Partition> parts(e);
  for (std::size_t i = 0; i < e; ++i) parts[i].ev_id = static_cast<int>(i);
  for (std::size_t c = 0; c < 2; ++c) {
    std::size_t cursor = 0;
    for (std::size_t i = 0; i < e; ++i) {
      for (std::size_t r = 0; r < reserve[c]; ++r) parts[i].samples.push_back(data[by_class[c][cursor++]]);
    }
    std::vector<double> props(e);
    for (auto& p : props) p = rng.gamma(alpha);
    const auto counts = apportion(by_class[c].size() - cursor, props);
    for (std::size_t i = 0; i < e; ++i) {
      for (std::size_t r = 0; r < counts[i]; ++r) parts[i].samples.push_back(data[by_class[c][cursor++]]);
    }
  }
  for (auto& p : parts) rng.shuffle(p.samples);
  return parts;
}

std::vector<Partition> iid_partition(const Dataset& data, int evs, std::uint64_t seed) {
  if (evs < 1) throw ConfigError("iid_partition: E must be positive");
  if (data.size() < static_cast<std::size_t>(evs)) throw ConfigError("iid_partition: fewer samples than EVs");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  SeededRng rng(seed, Stream::kPartition, 3);
  rng.shuffle(order);
  std::vector<Partition> parts(static_cast<std::size_t>(evs));
  for (std::size_t i = 0; i < parts.size(); ++i) parts[i].ev_id = static_cast<int>(i);
  for (std::size_t i = 0; i < order.size(); ++i) parts[i % parts.size()].samples.push_back(data[order[i]]);
  return parts;
}

Standardizer Standardizer::fit(const Dataset& data) {
  if (data.empty()) throw TrainingError("Standardizer::fit: empty dataset");
  std::vector<double> y;
  y.reserve(data.size());
  for (const auto& s : data) y.push_back(s.capacity);
  Standardizer st;
  st.mean = sample_mean(y);
  double var = 0.0;
  for (double v : y) var += (v - st.mean) * (v - st.mean);
  var /= static_cast<double>(y.size());
  st.scale = var > 0 ? std::sqrt(var) : 1.0;
  return st;
}

MultiTaskModel::MultiTaskModel(int hidden) : hidden_(hidden) {
  if (hidden < 1) throw ConfigError("MultiTaskModel: hidden must be positive");
  const auto h = static_cast<std::size_t>(hidden);
  params_.layers["shared.w"] = Vector(kFeatureCount * h, 0.0);
  params_.layers["shared.b"] = Vector(h, 0.0);
  params_.layers["cls_head.w"] = Vector(h, 0.0);
  params_.layers["cls_head.b"] = Vector(1, 0.0);
  params_.layers["reg_head.w"] = Vector(h, 0.0);
  params_.layers["reg_head.b"] = Vector(1, 0.0);
}

MultiTaskModel MultiTaskModel::initialize(int hidden, SeededRng& rng) {
  MultiTaskModel m(hidden);
  const double in_bound = std::sqrt(6.0 / (kFeatureCount + hidden));
  const double out_bound = std::sqrt(6.0 / (hidden + 1));
  for (double& w : m.params_.layers["shared.w"]) w = rng.uniform(-in_bound, in_bound);
  for (double& w : m.params_.layers["cls_head.w"]) w = rng.uniform(-out_bound, out_bound);
  for (double& w : m.params_.layers["reg_head.w"]) w = rng.uniform(-out_bound, out_bound);
  return m;
}

MultiTaskModel MultiTaskModel::from_delta(const UpdateDelta& params) {
  auto it = params.layers.find("shared.b");
  if (it == params.layers.end() || it->second.empty()) throw ConfigError("MultiTaskModel: missing shared.b");
  MultiTaskModel m(static_cast<int>(it->second.size()));
  if (!same_schema(m.params_, params)) throw ConfigError("MultiTaskModel: schema mismatch");
  m.params_ = params;
  return m;
}

MultiTaskModel::Output MultiTaskModel::forward(const std::array<double, kFeatureCount>& x) const {
  const auto h = static_cast<std::size_t>(hidden_);
  const Vector& w = params_.layers.at("shared.w");
  const Vector& b = params_.layers.at("shared.b");
  const Vector& cw = params_.layers.at("cls_head.w");
  const Vector& rw = params_.layers.at("reg_head.w");
  Output out{params_.layers.at("cls_head.b")[0], params_.layers.at("reg_head.b")[0]};
  for (std::size_t j = 0; j < h; ++j) {
    double z = b[j];
    for (std::size_t i = 0; i < kFeatureCount; ++i) z += x[i] * w[i * h + j];
    const double a = std::tanh(z);
    out.logit += cw[j] * a;
    out.regression += rw[j] * a;
  }
  return out;
}

namespace {

double proximal(const MultiTaskModel& model, double mu, const MultiTaskModel* ref) {
  if (mu <= 0.0 || ref == nullptr) return 0.0;
  double sq = 0.0;
  for (const auto& [name, v] : model.params().layers) {
    const Vector& r = ref->params().layers.at(name);
    for (std::size_t i = 0; i < v.size(); ++i) sq += (v[i] - r[i]) * (v[i] - r[i]);
  }
  return 0.5 * mu * sq;
}

}  // namespace

double batch_loss(const MultiTaskModel& model, std::span<const Sample> batch, const Standardizer& standardizer,
                  double mu, const MultiTaskModel* global_ref) {
  if (batch.empty()) throw TrainingError("batch_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const auto out = model.forward(s.features);
    const double err = out.regression - standardizer.standardize(s.capacity);
    total += softplus(out.logit) - s.anomaly * out.logit + err * err;
  }
  return total / static_cast<double>(batch.size()) + proximal(model, mu, global_ref);
}

UpdateDelta batch_gradient(const MultiTaskModel& model, std::span<const Sample> batch,
                           const Standardizer& standardizer, double mu, const MultiTaskModel* global_ref,
                           double* loss_out) {
  if (batch.empty()) throw TrainingError("batch_gradient: empty batch");
  const auto h = static_cast<std::size_t>(model.hidden());
  const auto& P = model.params().layers;
  const Vector& w = P.at("shared.w");
  const Vector& b = P.at("shared.b");
  const Vector& cw = P.at("cls_head.w");
  const Vector& rw = P.at("reg_head.w");
  const double cb = P.at("cls_head.b")[0];
  const double rb = P.at("reg_head.b")[0];

  UpdateDelta g = zeros_like(model.params());
  Vector& gw = g.layers["shared.w"];
  Vector& gb = g.layers["shared.b"];
  Vector& gcw = g.layers["cls_head.w"];
  Vector& grw = g.layers["reg_head.w"];
  double& gcb = g.layers["cls_head.b"][0];
  double& grb = g.layers["reg_head.b"][0];

  std::vector<double> a(h);
  double loss = 0.0;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    double logit = cb;
    double reg = rb;
    for (std::size_t j = 0; j < h; ++j) {
      double z = b[j];
      for (std::size_t i = 0; i < kFeatureCount; ++i) z += s.features[i] * w[i * h + j];
      a[j] = std::tanh(z);
      logit += cw[j] * a[j];
      reg += rw[j] * a[j];
    }
    const double err = reg - standardizer.standardize(s.capacity);
    loss += softplus(logit) - s.anomaly * logit + err * err;
    const double dlogit = (sigmoid(logit) - s.anomaly) * inv;
    const double dreg = 2.0 * err * inv;
    gcb += dlogit;
    grb += dreg;
    for (std::size_t j = 0; j < h; ++j) {
      gcw[j] += dlogit * a[j];
      grw[j] += dreg * a[j];
      const double dz = (dlogit * cw[j] + dreg * rw[j]) * (1.0 - a[j] * a[j]);
      gb[j] += dz;
      for (std::size_t i = 0; i < kFeatureCount; ++i) gw[i * h + j] += dz * s.features[i];
    }
  }
  loss *= inv;
  if (mu > 0.0 && global_ref != nullptr) {
    for (auto& [name, gv] : g.layers) {
      const Vector& v = P.at(name);
      const Vector& r = global_ref->params().layers.at(name);
      for (std::size_t i = 0; i < gv.size(); ++i) gv[i] += mu * (v[i] - r[i]);
    }
    loss += proximal(model, mu, global_ref);
  }
  if (loss_out) *loss_out = loss;
  return g;
}

LocalTrainResult local_train(const MultiTaskModel& global_model, const Dataset& partition, const TrainConfig& cfg,
                             const Standardizer& standardizer, SeededRng& rng) {
  if (partition.empty()) throw TrainingError("local_train: empty partition");
  if (cfg.epochs < 1) throw TrainingError("local_train: epochs must be >= 1");
  if (!(cfg.lr > 0.0)) throw TrainingError("local_train: lr must be positive");
  if (cfg.mu < 0.0) throw TrainingError("local_train: mu must be nonnegative");
  if (cfg.batch < 1) throw TrainingError("local_train: batch must be >= 1");

  MultiTaskModel model = global_model;
  Dataset order = partition;
  std::vector<Sample> batch;
  LocalTrainResult result;
  const auto bsz = static_cast<std::size_t>(cfg.batch);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += bsz) {
      const std::size_t end = std::min(order.size(), start + bsz);
      const std::span<const Sample> mb(order.data() + start, end - start);
      const UpdateDelta g = batch_gradient(model, mb, standardizer, cfg.mu, &global_model);
      for (auto& [name, v] : model.params().layers) {
        const Vector& gv = g.layers.at(name);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= cfg.lr * gv[i];
      }
    }
    result.epoch_losses.push_back(batch_loss(model, partition, standardizer, cfg.mu, &global_model));
  }
  result.delta = subtract(model.params(), global_model.params());
  if (!all_finite(result.delta)) throw TrainingError("local_train: non-finite update");
  return result;
}

TaskMetrics metrics_from_predictions(std::span<const int> predicted, std::span<const int> truth,
                                     std::span<const double> predicted_capacity,
                                     std::span<const double> true_capacity) {
  if (predicted.size() != truth.size() || predicted_capacity.size() != true_capacity.size()) {
    throw ConfigError("metrics: size mismatch");
  }
  TaskMetrics m;
  if (!truth.empty()) {
    std::size_t tp = 0, tn = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (predicted[i] == 1 && truth[i] == 1) ++tp;
      else if (predicted[i] == 0 && truth[i] == 0) ++tn;
      else if (predicted[i] == 1) ++fp;
      else ++fn;
    }
    m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(truth.size());
    m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  }
  if (!true_capacity.empty()) {
    double abs_sum = 0.0, sq_sum = 0.0;
    for (std::size_t i = 0; i < true_capacity.size(); ++i) {
      const double e = predicted_capacity[i] - true_capacity[i];
      abs_sum += std::abs(e);
      sq_sum += e * e;
    }
    m.mae = abs_sum / static_cast<double>(true_capacity.size());
    m.mse = sq_sum / static_cast<double>(true_capacity.size());
    m.rmse = std::sqrt(m.mse);
  }
  return m;
}

std::vector<int> predict_labels(const MultiTaskModel& model, const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data) out.push_back(model.forward(s.features).logit >= 0.0 ? 1 : 0);
  return out;
}

TaskMetrics evaluate(const MultiTaskModel& model, const Dataset& testset, const Standardizer& standardizer) {
  std::vector<int> pred, truth;
  std::vector<double> pcap, tcap;
  for (const auto& s : testset) {
    const auto out = model.forward(s.features);
    // sigmoid(logit) >= 0.5 exactly when logit >= 0.
    pred.push_back(out.logit >= 0.0 ? 1 : 0);
    truth.push_back(s.anomaly);
    pcap.push_back(standardizer.destandardize(out.regression));
    tcap.push_back(s.capacity);
  }
  return metrics_from_predictions(pred, truth, pcap, tcap);
}

void write_dataset_csv(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "f0,f1,f2,f3,f4,f5,f6,f7,anomaly,capacity\n";
  out.precision(17);
  for (const auto& s : data) {
    for (double f : s.features) out << f << ',';
    out << s.anomaly << ',' << s.capacity << '\n';
  }
}

Dataset read_dataset_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "f0,f1,f2,f3,f4,f5,f6,f7,anomaly,capacity") throw ConfigError("dataset csv: bad header");
  Dataset out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Sample s;
    for (int f = 0; f < kFeatureCount; ++f) {
      std::getline(ss, cell, ',');
      s.features[static_cast<std::size_t>(f)] = std::stod(cell);
    }
    std::getline(ss, cell, ',');
    s.anomaly = std::stoi(cell);
    std::getline(ss, cell, ',');
    s.capacity = std::stod(cell);
    out.push_back(s);
  }
  return out;
}

}  // namespace abcdfl
