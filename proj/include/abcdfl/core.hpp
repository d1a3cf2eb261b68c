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
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace abcdfl {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or parameters. The CLI maps this to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class AggregationError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

class CryptoError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Parameter vectors
// ---------------------------------------------------------------------------

using Vector = std::vector<double>;

// A model update: flat parameter vectors keyed by layer name. std::map keeps
// layers in lexicographic order, which is the canonical flattening order.
struct UpdateDelta {
  std::map<std::string, Vector> layers;
  int round = 0;

  bool operator==(const UpdateDelta&) const = default;
};

// Layer name -> dimension.
using Schema = std::map<std::string, std::size_t>;

Schema schema_of(const UpdateDelta& delta);
bool same_schema(const UpdateDelta& a, const UpdateDelta& b);
std::size_t parameter_count(const UpdateDelta& delta);
bool all_finite(const UpdateDelta& delta);

// Concatenates the selected layers in lexicographic order. Throws ConfigError
// for unknown layer names.
Vector flatten(const UpdateDelta& delta, const std::set<std::string>& layer_subset);
Vector flatten(const UpdateDelta& delta);
// Inverse of flatten over the full schema.
UpdateDelta unflatten(const Schema& schema, std::span<const double> flat, int round = 0);

double l2_norm(std::span<const double> v);
double l2_distance(std::span<const double> a, std::span<const double> b);

UpdateDelta zeros_like(const UpdateDelta& delta);
UpdateDelta scaled(const UpdateDelta& delta, double factor);
UpdateDelta add(const UpdateDelta& a, const UpdateDelta& b);
UpdateDelta subtract(const UpdateDelta& a, const UpdateDelta& b);

// Per-coordinate weighted mean. Throws AggregationError on an empty list, a
// size mismatch, negative weights or a zero weight sum.
UpdateDelta weighted_average(std::span<const UpdateDelta> deltas, std::span<const double> weights);
UpdateDelta mean(std::span<const UpdateDelta> deltas);

// ---------------------------------------------------------------------------
// Deterministic randomness
// ---------------------------------------------------------------------------

// Named streams so that enabling one feature never perturbs another.
enum class Stream : std::uint32_t {
  kData = 1,
  kPartition = 2,
  kTraining = 3,
  kAttack = 4,
  kConsensus = 5,
  kDp = 6,
  kChurn = 7,
  kInit = 8,
  kNetwork = 9,
  kTest = 10,
};

// xoshiro256** seeded through splitmix64 from (seed, stream, substream).
// Distributions are implemented here rather than via <random> so sequences
// are identical across standard library implementations.
class SeededRng {
 public:
  SeededRng(std::uint64_t seed, Stream stream, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double stddev);
  // Marsaglia-Tsang; shape > 0.
  double gamma(double shape);
  bool bernoulli(double p);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // Derives an independent generator; the parent state is not advanced.
  SeededRng fork(std::uint64_t substream) const;

  std::uint64_t seed() const { return seed_; }
  Stream stream() const { return stream_; }

 private:
  std::uint64_t seed_;
  Stream stream_;
  std::uint64_t substream_;
  std::array<std::uint64_t, 4> state_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Samples k distinct indices from [0, n) uniformly, returned sorted.
std::vector<std::size_t> sample_without_replacement(SeededRng& rng, std::size_t n, std::size_t k);

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
Digest sha256(std::span<const std::uint8_t> data);
std::string to_hex(const Digest& digest);
std::string sha256_hex(std::string_view data);
// First eight bytes of the digest, big-endian.
std::uint64_t digest_prefix_u64(const Digest& digest);

// ---------------------------------------------------------------------------
// Round schedule
// ---------------------------------------------------------------------------

struct RoundClock {
  int t = 0;
  int total = 1;

  RoundClock(int t_, int total_);
  // t / T in [0, 1).
  double progress() const { return static_cast<double>(t) / static_cast<double>(total); }
};

// Small statistics helpers shared by several modules.
double median(std::vector<double> values);
double median_absolute_deviation(const std::vector<double>& values);
double sample_mean(std::span<const double> values);
double sample_stddev(std::span<const double> values);

}  // namespace abcdfl
