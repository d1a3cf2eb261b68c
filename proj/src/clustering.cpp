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
#include "abcdfl/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace abcdfl {

DistanceMatrix pairwise_distances(const std::vector<Vector>& points, Metric metric) {
  if (points.empty()) throw ConfigError("pairwise_distances: no points");
  const std::size_t dim = points.front().size();
  for (const auto& p : points) {
    if (p.size() != dim) throw ConfigError("pairwise_distances: dimension mismatch");
  }
  const std::size_t n = points.size();
  DistanceMatrix m(n);
  std::vector<double> norms(n);
  for (std::size_t i = 0; i < n; ++i) norms[i] = l2_norm(points[i]);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      double v;
      if (metric == Metric::kEuclidean) {
        v = l2_distance(points[i], points[j]);
      } else if (norms[i] == 0.0 || norms[j] == 0.0) {
        v = 1.0;
      } else {
        double dot = 0.0;
        for (std::size_t k = 0; k < dim; ++k) dot += points[i][k] * points[j][k];
        v = std::clamp(1.0 - dot / (norms[i] * norms[j]), 0.0, 2.0);
      }
      m.at(i, j) = v;
      m.at(j, i) = v;
    }
  }
  return m;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct MergeRow {
  std::size_t left;
  std::size_t right;
  double distance;
  std::size_t size;
};

struct CondensedRow {
  std::size_t parent;
  std::size_t child;
  double lambda;
  std::size_t size;
};

struct MstEdge {
  std::size_t a;
  std::size_t b;
  double w;
};

// Prim over the dense mutual-reachability graph starting from node 0.
std::vector<MstEdge> prim_mst(const std::vector<double>& mr, std::size_t n) {
  std::vector<MstEdge> edges;
  std::vector<bool> in_tree(n, false);
  std::vector<double> best(n, kInf);
  std::vector<std::size_t> source(n, 0);
  std::size_t current = 0;
  in_tree[0] = true;
  for (std::size_t step = 1; step < n; ++step) {
    std::size_t next = n;
    double next_w = kInf;
    for (std::size_t j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      const double w = mr[current * n + j];
      if (w < best[j]) {
        best[j] = w;
        source[j] = current;
      }
      if (next == n || best[j] < next_w) {
        next = j;
        next_w = best[j];
      }
    }
    edges.push_back({source[next], next, next_w});
    in_tree[next] = true;
    current = next;
  }
  return edges;
}

std::vector<MergeRow> single_linkage(std::vector<MstEdge> edges, std::size_t n) {
  std::stable_sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) { return x.w < y.w; });
  std::vector<std::size_t> parent(2 * n - 1);
  std::vector<std::size_t> size(2 * n - 1, 1);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    std::size_t root = x;
    while (parent[root] != root) root = parent[root];
    while (parent[x] != root) {
      const std::size_t next = parent[x];
      parent[x] = root;
      x = next;
    }
    return root;
  };
  std::vector<MergeRow> rows;
  std::size_t next_label = n;
  for (const auto& e : edges) {
    const std::size_t ra = find(e.a);
    const std::size_t rb = find(e.b);
    rows.push_back({ra, rb, e.w, size[ra] + size[rb]});
    parent[ra] = next_label;
    parent[rb] = next_label;
    size[next_label] = size[ra] + size[rb];
    ++next_label;
  }
  return rows;
}

std::vector<std::size_t> bfs_hierarchy(const std::vector<MergeRow>& h, std::size_t root, std::size_t n) {
  std::vector<std::size_t> result;
  std::vector<std::size_t> queue{root};
  while (!queue.empty()) {
    result.insert(result.end(), queue.begin(), queue.end());
    std::vector<std::size_t> next;
    for (std::size_t node : queue) {
      if (node >= n) {
        next.push_back(h[node - n].left);
        next.push_back(h[node - n].right);
      }
    }
    queue = std::move(next);
  }
  return result;
}

std::vector<CondensedRow> condense(const std::vector<MergeRow>& h, std::size_t n, std::size_t min_size) {
  const std::size_t root = 2 * (n - 1);
  std::vector<std::size_t> relabel(root + 1, 0);
  std::vector<bool> ignore(root + 1, false);
  relabel[root] = n;
  std::size_t next_label = n + 1;
  std::vector<CondensedRow> out;
  auto count_of = [&](std::size_t node) { return node >= n ? h[node - n].size : std::size_t{1}; };
  auto drop_points = [&](std::size_t sub_root, std::size_t parent_label, double lambda) {
    for (std::size_t sub : bfs_hierarchy(h, sub_root, n)) {
      if (sub < n) out.push_back({parent_label, sub, lambda, 1});
      ignore[sub] = true;
    }
  };
  for (std::size_t node : bfs_hierarchy(h, root, n)) {
    if (ignore[node] || node < n) continue;
    const MergeRow& row = h[node - n];
    const double lambda = row.distance > 0.0 ? 1.0 / row.distance : kInf;
    const std::size_t lc = count_of(row.left);
    const std::size_t rc = count_of(row.right);
    if (lc >= min_size && rc >= min_size) {
      relabel[row.left] = next_label++;
      out.push_back({relabel[node], relabel[row.left], lambda, lc});
      relabel[row.right] = next_label++;
      out.push_back({relabel[node], relabel[row.right], lambda, rc});
    } else if (lc < min_size && rc < min_size) {
      drop_points(row.left, relabel[node], lambda);
      drop_points(row.right, relabel[node], lambda);
    } else if (lc < min_size) {
      relabel[row.right] = relabel[node];
      drop_points(row.left, relabel[node], lambda);
    } else {
      relabel[row.left] = relabel[node];
      drop_points(row.right, relabel[node], lambda);
    }
  }
  return out;
}

}  // namespace

ClusterLabels hdbscan(const DistanceMatrix& distances, int min_pts) {
  if (min_pts < 2) throw ConfigError("hdbscan: min_pts must be >= 2");
  const std::size_t n = distances.n;
  ClusterLabels result;
  result.labels.assign(n, kNoise);
  const auto mp = static_cast<std::size_t>(min_pts);
  if (n < mp || n < 2) return result;

  std::vector<double> core(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> row(distances.d.begin() + static_cast<std::ptrdiff_t>(i * n),
                            distances.d.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(mp - 1), row.end());
    core[i] = row[mp - 1];
  }
  std::vector<double> mr(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) mr[i * n + j] = std::max({core[i], core[j], distances(i, j)});
  }

  const auto hierarchy = single_linkage(prim_mst(mr, n), n);
  const auto tree = condense(hierarchy, n, mp);

  const std::size_t root = n;
  std::size_t max_label = root;
  for (const auto& r : tree) max_label = std::max({max_label, r.parent, r.child});

  // Stability = sum over rows of (lambda - birth(parent)) * size, root born at 0.
  std::vector<double> birth(max_label + 1, 0.0);
  std::vector<std::size_t> parent_of(max_label + 1, root);
  for (const auto& r : tree) {
    birth[r.child] = r.lambda;
    parent_of[r.child] = r.parent;
  }
  birth[root] = 0.0;
  std::map<std::size_t, double> stability;
  stability[root] = 0.0;
  for (const auto& r : tree) {
    if (r.size > 1) stability.emplace(r.child, 0.0);
  }
  for (const auto& r : tree) {
    const double span = (r.lambda == kInf && birth[r.parent] == kInf) ? 0.0 : r.lambda - birth[r.parent];
    stability[r.parent] += span * static_cast<double>(r.size);
  }

  std::map<std::size_t, std::vector<std::size_t>> children;
  for (const auto& r : tree) {
    if (r.size > 1) children[r.parent].push_back(r.child);
  }
  std::map<std::size_t, bool> selected;
  for (const auto& [id, s] : stability) selected[id] = true;
  for (auto it = stability.rbegin(); it != stability.rend(); ++it) {
    const std::size_t node = it->first;
    double subtree = 0.0;
    for (std::size_t c : children[node]) subtree += stability[c];
    if (subtree > stability[node]) {
      selected[node] = false;
      stability[node] = subtree;
    } else {
      std::vector<std::size_t> stack(children[node].begin(), children[node].end());
      while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        selected[c] = false;
        stack.insert(stack.end(), children[c].begin(), children[c].end());
      }
    }
  }

  std::map<std::size_t, int> label_of;
  for (const auto& [id, is] : selected) {
    if (is) label_of.emplace(id, static_cast<int>(label_of.size()));
  }
  result.cluster_count = static_cast<int>(label_of.size());

  double root_max_lambda = -kInf;
  std::vector<double> point_lambda(n, 0.0);
  for (const auto& r : tree) {
    if (r.parent == root) root_max_lambda = std::max(root_max_lambda, r.lambda);
    if (r.child < n) point_lambda[r.child] = r.lambda;
  }
  for (std::size_t p = 0; p < n; ++p) {
    std::size_t node = parent_of[p];
    while (node != root && !selected[node]) node = parent_of[node];
    if (node != root) {
      result.labels[p] = label_of.at(node);
    } else if (label_of.size() == 1 && label_of.count(root) && point_lambda[p] >= root_max_lambda) {
      result.labels[p] = label_of.at(root);
    }
  }
  return result;
}

std::vector<std::size_t> largest_non_noise_cluster(const ClusterLabels& labels) {
  std::map<int, std::size_t> counts;
  for (int l : labels.labels) {
    if (l != kNoise) counts[l]++;
  }
  std::vector<std::size_t> out;
  if (counts.empty()) {
    out.resize(labels.labels.size());
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  int best = counts.begin()->first;
  for (const auto& [id, c] : counts) {
    if (c > counts[best]) best = id;
  }
  for (std::size_t i = 0; i < labels.labels.size(); ++i) {
    if (labels.labels[i] == best) out.push_back(i);
  }
  return out;
}

void write_distance_csv(const DistanceMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.precision(17);
  for (std::size_t i = 0; i < m.n; ++i) {
    for (std::size_t j = 0; j < m.n; ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

DistanceMatrix read_distance_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    rows.emplace_back();
    while (std::getline(ss, cell, ',')) rows.back().push_back(std::stod(cell));
  }
  DistanceMatrix m(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.size()) throw ConfigError("distance csv: not square");
    for (std::size_t j = 0; j < rows.size(); ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace abcdfl
