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

#include <filesystem>
#include <vector>

#include "abcdfl/core.hpp"

namespace abcdfl {

enum class Metric { kEuclidean, kCosine };

// Dense symmetric matrix with zero diagonal, row-major.
struct DistanceMatrix {
  std::size_t n = 0;
  std::vector<double> d;

  DistanceMatrix() = default;
  explicit DistanceMatrix(std::size_t n_) : n(n_), d(n_ * n_, 0.0) {}
  double operator()(std::size_t i, std::size_t j) const { return d[i * n + j]; }
  double& at(std::size_t i, std::size_t j) { return d[i * n + j]; }
};

// Cosine distance is 1 - cos(a, b); a zero-norm vector is at distance 1 from
// everything except itself.
DistanceMatrix pairwise_distances(const std::vector<Vector>& points, Metric metric);

inline constexpr int kNoise = -1;

struct ClusterLabels {
  std::vector<int> labels;
  int cluster_count = 0;
};

// HDBSCAN with min_cluster_size = min_samples = min_pts, excess-of-mass
// selection, and the root allowed as a single cluster. Core distances count
// the point itself. Fewer than min_pts points are all noise.
ClusterLabels hdbscan(const DistanceMatrix& distances, int min_pts);

// Members of the most populous cluster, smallest id on ties. All indices when
// every point is noise.
std::vector<std::size_t> largest_non_noise_cluster(const ClusterLabels& labels);

void write_distance_csv(const DistanceMatrix& m, const std::filesystem::path& path);
DistanceMatrix read_distance_csv(const std::filesystem::path& path);

}  // namespace abcdfl
