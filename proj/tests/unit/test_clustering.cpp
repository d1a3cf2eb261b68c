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
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <numeric>
#include <set>

#include "abcdfl/clustering.hpp"
#include "abcdfl/core.hpp"

namespace abcdfl {
namespace {

using nlohmann::json;

DistanceMatrix matrix_from_json(const json& rows) {
  DistanceMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j].get<double>();
  }
  return m;
}

json load_fixture() {
  std::ifstream in(std::string(ABCDFL_TEST_DATA) + "/hdbscan_fixture.json");
  return json::parse(in);
}

// Two labelings agree when they induce the same partition of points.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab;
  std::map<int, int> ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == kNoise) != (b[i] == kNoise)) return false;
    if (a[i] == kNoise) continue;
    auto [x, inserted_x] = ab.emplace(a[i], b[i]);
    auto [y, inserted_y] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

void check_membership_invariant(const ClusterLabels& labels, int min_pts) {
  std::map<int, int> counts;
  for (int l : labels.labels) {
    if (l != kNoise) counts[l]++;
  }
  EXPECT_EQ(static_cast<int>(counts.size()), labels.cluster_count);
  for (const auto& [id, c] : counts) EXPECT_GE(c, min_pts) << "cluster " << id;
}

TEST(PairwiseDistances, KnownValues) {
  const auto d = pairwise_distances({{0.0, 0.0}, {3.0, 4.0}}, Metric::kEuclidean);
  EXPECT_DOUBLE_EQ(d(0, 1), 5.0);
  EXPECT_DOUBLE_EQ(d(1, 0), 5.0);
  EXPECT_DOUBLE_EQ(d(0, 0), 0.0);
  const auto z = pairwise_distances({{1.0, 2.0}, {1.0, 2.0}, {1.0, 2.0}}, Metric::kEuclidean);
  for (double x : z.d) EXPECT_EQ(x, 0.0);
}

TEST(PairwiseDistances, CosineAndZeroNorm) {
  const auto d = pairwise_distances({{1.0, 0.0}, {0.0, 1.0}, {2.0, 0.0}, {0.0, 0.0}}, Metric::kCosine);
  EXPECT_NEAR(d(0, 1), 1.0, 1e-12);
  EXPECT_NEAR(d(0, 2), 0.0, 1e-12);
  EXPECT_NEAR(d(0, 3), 1.0, 1e-12);
  EXPECT_NEAR(d(3, 3), 0.0, 1e-12);
}

TEST(PairwiseDistances, MatchesNaiveLoop) {
  SeededRng rng(3, Stream::kTest);
  std::vector<Vector> pts(10, Vector(6));
  for (auto& p : pts) {
    for (double& x : p) x = rng.normal();
  }
  const auto d = pairwise_distances(pts, Metric::kEuclidean);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts.size(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 6; ++k) s += (pts[i][k] - pts[j][k]) * (pts[i][k] - pts[j][k]);
      EXPECT_NEAR(d(i, j), std::sqrt(s), 1e-9);
    }
  }
}

TEST(PairwiseDistances, DimensionMismatch) {
  EXPECT_THROW(pairwise_distances({{1.0}, {1.0, 2.0}}, Metric::kEuclidean), ConfigError);
}

TEST(Hdbscan, SinglePointIsNoise) {
  DistanceMatrix d(1);
  const auto l = hdbscan(d, 2);
  EXPECT_EQ(l.labels, (std::vector<int>{kNoise}));
}

TEST(Hdbscan, IdenticalPointsFormOneCluster) {
  DistanceMatrix d(6);
  const auto l = hdbscan(d, 3);
  EXPECT_EQ(l.cluster_count, 1);
  for (int x : l.labels) EXPECT_EQ(x, 0);
}

TEST(Hdbscan, TwoBlobsAndOutlier) {
  SeededRng rng(17, Stream::kTest);
  std::vector<Vector> pts;
  for (int i = 0; i < 10; ++i) pts.push_back({rng.normal(0.0, 0.1), rng.normal(0.0, 0.1)});
  for (int i = 0; i < 6; ++i) pts.push_back({10.0 + rng.normal(0.0, 0.1), rng.normal(0.0, 0.1)});
  pts.push_back({-40.0, 40.0});
  const auto l = hdbscan(pairwise_distances(pts, Metric::kEuclidean), 3);
  EXPECT_EQ(l.cluster_count, 2);
  for (int i = 1; i < 10; ++i) EXPECT_EQ(l.labels[i], l.labels[0]);
  for (int i = 11; i < 16; ++i) EXPECT_EQ(l.labels[i], l.labels[10]);
  EXPECT_NE(l.labels[0], l.labels[10]);
  EXPECT_NE(l.labels[0], kNoise);
  EXPECT_EQ(l.labels[16], kNoise);
  const auto cmax = largest_non_noise_cluster(l);
  EXPECT_EQ(cmax.size(), 10u);
}

TEST(Hdbscan, MinPtsBelowTwoRejected) {
  DistanceMatrix d(3);
  EXPECT_THROW(hdbscan(d, 1), ConfigError);
}

TEST(Hdbscan, ReferenceFixturePlantedInstances) {
  const json fx = load_fixture();
  int cmax_matches = 0;
  int label_matches = 0;
  const auto& instances = fx.at("instances");
  ASSERT_GE(instances.size(), 100u);
  for (const auto& inst : instances) {
    const int min_pts = inst.at("min_pts").get<int>();
    const auto labels = hdbscan(matrix_from_json(inst.at("distances")), min_pts);
    check_membership_invariant(labels, min_pts);
    const auto ref = inst.at("reference_labels").get<std::vector<int>>();
    label_matches += same_partition(labels.labels, ref);
    const auto truth = inst.at("true_majority").get<std::vector<std::size_t>>();
    auto cmax = largest_non_noise_cluster(labels);
    std::sort(cmax.begin(), cmax.end());
    cmax_matches += cmax == truth;
  }
  EXPECT_GE(cmax_matches, 95);
  EXPECT_GE(label_matches, 95);
}

TEST(Hdbscan, ReferenceFixtureMixedInstances) {
  const json fx = load_fixture();
  int matches = 0;
  int total = 0;
  for (const auto& inst : fx.at("mixed")) {
    const int min_pts = inst.at("min_pts").get<int>();
    const auto labels = hdbscan(matrix_from_json(inst.at("distances")), min_pts);
    check_membership_invariant(labels, min_pts);
    matches += same_partition(labels.labels, inst.at("reference_labels").get<std::vector<int>>());
    ++total;
  }
  ASSERT_GT(total, 0);
  EXPECT_GE(static_cast<double>(matches) / total, 0.9);
}

TEST(Hdbscan, PermutationEquivariance) {
  SeededRng rng(23, Stream::kTest);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vector> pts;
    for (int i = 0; i < 9; ++i) pts.push_back({rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
    for (int i = 0; i < 5; ++i) pts.push_back({6.0 + rng.normal(0.0, 0.3), rng.normal(0.0, 0.3)});
    pts.push_back({rng.uniform(-30.0, 30.0), 30.0});
    std::vector<std::size_t> perm(pts.size());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<Vector> permuted;
    for (std::size_t p : perm) permuted.push_back(pts[p]);
    const auto a = hdbscan(pairwise_distances(pts, Metric::kEuclidean), 3);
    const auto b = hdbscan(pairwise_distances(permuted, Metric::kEuclidean), 3);
    std::vector<int> b_back(pts.size());
    for (std::size_t i = 0; i < perm.size(); ++i) b_back[perm[i]] = b.labels[i];
    EXPECT_TRUE(same_partition(a.labels, b_back));
    std::set<std::size_t> ca;
    for (std::size_t i : largest_non_noise_cluster(a)) ca.insert(i);
    std::set<std::size_t> cb;
    for (std::size_t i : largest_non_noise_cluster(b)) cb.insert(perm[i]);
    EXPECT_EQ(ca, cb);
  }
}

TEST(Hdbscan, MembershipInvariantOnRandomData) {
  SeededRng rng(29, Stream::kTest);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 3 + static_cast<int>(rng.below(25));
    const int min_pts = 2 + static_cast<int>(rng.below(4));
    std::vector<Vector> pts(n, Vector(3));
    for (auto& p : pts) {
      for (double& x : p) x = rng.normal(0.0, 1.0 + 5.0 * rng.uniform());
    }
    check_membership_invariant(hdbscan(pairwise_distances(pts, Metric::kEuclidean), min_pts), min_pts);
  }
}

TEST(LargestCluster, Examples) {
  ClusterLabels a{{0, 0, 0, 1, 1, kNoise}, 2};
  EXPECT_EQ(largest_non_noise_cluster(a), (std::vector<std::size_t>{0, 1, 2}));
  ClusterLabels b{{kNoise, kNoise, kNoise}, 0};
  EXPECT_EQ(largest_non_noise_cluster(b), (std::vector<std::size_t>{0, 1, 2}));
  ClusterLabels c{{1, 1, 0, 0}, 2};
  EXPECT_EQ(largest_non_noise_cluster(c), (std::vector<std::size_t>{2, 3}));
}

TEST(DistanceCsv, RoundTrip) {
  SeededRng rng(31, Stream::kTest);
  std::vector<Vector> pts(5, Vector(2));
  for (auto& p : pts) {
    for (double& x : p) x = rng.normal();
  }
  const auto d = pairwise_distances(pts, Metric::kEuclidean);
  const auto path = std::filesystem::temp_directory_path() / "abcdfl_distance_test.csv";
  write_distance_csv(d, path);
  const auto back = read_distance_csv(path);
  ASSERT_EQ(back.n, d.n);
  for (std::size_t i = 0; i < d.d.size(); ++i) EXPECT_NEAR(back.d[i], d.d[i], 1e-12);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace abcdfl
