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
#include "abcdfl/core.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace abcdfl {

Schema schema_of(const UpdateDelta& delta) {
  Schema schema;
  for (const auto& [name, values] : delta.layers) schema.emplace(name, values.size());
  return schema;
}

bool same_schema(const UpdateDelta& a, const UpdateDelta& b) {
  if (a.layers.size() != b.layers.size()) return false;
  auto it = b.layers.begin();
  for (const auto& [name, values] : a.layers) {
    if (it->first != name || it->second.size() != values.size()) return false;
    ++it;
  }
  return true;
}

std::size_t parameter_count(const UpdateDelta& delta) {
  std::size_t n = 0;
  for (const auto& [name, values] : delta.layers) n += values.size();
  return n;
}

bool all_finite(const UpdateDelta& delta) {
  for (const auto& [name, values] : delta.layers) {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

Vector flatten(const UpdateDelta& delta, const std::set<std::string>& layer_subset) {
  Vector out;
  for (const auto& name : layer_subset) {
    auto it = delta.layers.find(name);
    if (it == delta.layers.end()) throw ConfigError("flatten: unknown layer '" + name + "'");
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

Vector flatten(const UpdateDelta& delta) {
  Vector out;
  out.reserve(parameter_count(delta));
  for (const auto& [name, values] : delta.layers) out.insert(out.end(), values.begin(), values.end());
  return out;
}

UpdateDelta unflatten(const Schema& schema, std::span<const double> flat, int round) {
  std::size_t total = 0;
  for (const auto& [name, dim] : schema) total += dim;
  if (total != flat.size()) throw ConfigError("unflatten: vector length does not match schema");
  UpdateDelta out;
  out.round = round;
  std::size_t offset = 0;
  for (const auto& [name, dim] : schema) {
    out.layers.emplace(name, Vector(flat.begin() + offset, flat.begin() + offset + dim));
    offset += dim;
  }
  return out;
}

double l2_norm(std::span<const double> v) {
  // Scaled accumulation avoids overflow for the very large attack vectors.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0 || !std::isfinite(scale)) return scale;
  double sum = 0.0;
  for (double x : v) {
    double y = x / scale;
    sum += y * y;
  }
  return scale * std::sqrt(sum);
}

double l2_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ConfigError("l2_distance: dimension mismatch");
  Vector diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = a[i] - b[i];
  return l2_norm(diff);
}

UpdateDelta zeros_like(const UpdateDelta& delta) {
  UpdateDelta out;
  out.round = delta.round;
  for (const auto& [name, values] : delta.layers) out.layers.emplace(name, Vector(values.size(), 0.0));
  return out;
}

UpdateDelta scaled(const UpdateDelta& delta, double factor) {
  UpdateDelta out = delta;
  for (auto& [name, values] : out.layers) {
    for (double& v : values) v *= factor;
  }
  return out;
}

namespace {

template <typename Op>
UpdateDelta zip_layers(const UpdateDelta& a, const UpdateDelta& b, Op op) {
  if (!same_schema(a, b)) throw AggregationError("update schema mismatch");
  UpdateDelta out = a;
  auto it = b.layers.begin();
  for (auto& [name, values] : out.layers) {
    const Vector& other = it->second;
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = op(values[i], other[i]);
    ++it;
  }
  return out;
}

}  // namespace

UpdateDelta add(const UpdateDelta& a, const UpdateDelta& b) {
  return zip_layers(a, b, [](double x, double y) { return x + y; });
}

UpdateDelta subtract(const UpdateDelta& a, const UpdateDelta& b) {
  return zip_layers(a, b, [](double x, double y) { return x - y; });
}

UpdateDelta weighted_average(std::span<const UpdateDelta> deltas, std::span<const double> weights) {
  if (deltas.empty()) throw AggregationError("weighted_average: empty update list");
  if (deltas.size() != weights.size()) throw AggregationError("weighted_average: weight count mismatch");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw AggregationError("weighted_average: invalid weight");
    total += w;
  }
  if (total <= 0.0) throw AggregationError("weighted_average: weights sum to zero");

  UpdateDelta out = zeros_like(deltas.front());
  for (std::size_t k = 0; k < deltas.size(); ++k) {
    if (!same_schema(out, deltas[k])) throw AggregationError("weighted_average: schema mismatch");
    const double w = weights[k] / total;
    if (w == 0.0) continue;
    auto it = deltas[k].layers.begin();
    for (auto& [name, values] : out.layers) {
      const Vector& src = it->second;
      for (std::size_t i = 0; i < values.size(); ++i) values[i] += w * src[i];
      ++it;
    }
  }
  return out;
}

UpdateDelta mean(std::span<const UpdateDelta> deltas) {
  std::vector<double> weights(deltas.size(), 1.0);
  return weighted_average(deltas, weights);
}

// ---------------------------------------------------------------------------

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

SeededRng::SeededRng(std::uint64_t seed, Stream stream, std::uint64_t substream)
    : seed_(seed), stream_(stream), substream_(substream) {
  std::uint64_t x = seed;
  x ^= splitmix64(x) ^ (static_cast<std::uint64_t>(stream) * 0xd1b54a32d192ed03ULL);
  x ^= splitmix64(x) ^ (substream * 0x8cb92ba72f3d8dd7ULL);
  for (auto& s : state_) s = splitmix64(x);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double SeededRng::uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

std::uint64_t SeededRng::below(std::uint64_t n) {
  if (n == 0) throw ConfigError("SeededRng::below: n must be positive");
  // Rejection sampling removes modulo bias.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double SeededRng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

double SeededRng::normal(double mean, double stddev) { return mean + stddev * normal(); }

double SeededRng::gamma(double shape) {
  if (!(shape > 0.0)) throw ConfigError("gamma: shape must be positive");
  if (shape < 1.0) {
    // Boost to shape + 1 and scale by U^(1/shape).
    double u;
    do {
      u = uniform();
    } while (u <= 0.0);
    return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  while (true) {
    double x, v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

bool SeededRng::bernoulli(double p) { return uniform() < p; }

SeededRng SeededRng::fork(std::uint64_t substream) const {
  std::uint64_t mixed = substream_;
  std::uint64_t sub = splitmix64(mixed) ^ (substream + 0x632be59bd9b4e019ULL);
  return SeededRng(seed_, stream_, sub);
}

std::vector<std::size_t> sample_without_replacement(SeededRng& rng, std::size_t n, std::size_t k) {
  if (k > n) throw ConfigError("sample_without_replacement: k > n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

// ---------------------------------------------------------------------------

Digest sha256(std::span<const std::uint8_t> data) {
  Digest out{};
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size()) {
    throw CryptoError("sha256 failed");
  }
  return out;
}

Digest sha256(std::string_view data) {
  return sha256(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(data.data()), data.size()));
}

std::string to_hex(const Digest& digest) {
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(64);
  for (std::uint8_t b : digest) {
    out.push_back(kHex[b >> 4]);
    out.push_back(kHex[b & 0xf]);
  }
  return out;
}

std::string sha256_hex(std::string_view data) { return to_hex(sha256(data)); }

std::uint64_t digest_prefix_u64(const Digest& digest) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v = (v << 8) | digest[static_cast<std::size_t>(i)];
  return v;
}

// ---------------------------------------------------------------------------

RoundClock::RoundClock(int t_, int total_) : t(t_), total(total_) {
  if (total <= 0) throw ConfigError("RoundClock: total rounds must be positive");
  if (t < 0 || t >= total) throw ConfigError("RoundClock: round out of range");
}

double median(std::vector<double> values) {
  if (values.empty()) throw AggregationError("median of empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double median_absolute_deviation(const std::vector<double>& values) {
  const double m = median(values);
  std::vector<double> dev;
  dev.reserve(values.size());
  for (double v : values) dev.push_back(std::abs(v - m));
  return median(std::move(dev));
}

double sample_mean(std::span<const double> values) {
  if (values.empty()) return 0.0;
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double sample_stddev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  const double m = sample_mean(values);
  double acc = 0.0;
  for (double v : values) acc += (v - m) * (v - m);
  return std::sqrt(acc / static_cast<double>(values.size() - 1));
}

}  // namespace abcdfl
