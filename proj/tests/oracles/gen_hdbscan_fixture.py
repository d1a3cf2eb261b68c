# Copyright 2026 The ABC-DFL Simulator Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
"""Freezes reference HDBSCAN labels for planted-blob instances.

Usage: python3 gen_hdbscan_fixture.py ../data/hdbscan_fixture.json
"""
import json
import sys

import numpy as np
from sklearn.cluster import HDBSCAN
from sklearn.metrics import pairwise_distances


def planted_instance(rng):
    dim = int(rng.integers(2, 7))
    min_pts = int(rng.choice([3, 3, 4, 5]))
    major = int(rng.integers(8, 14))
    minor = int(rng.integers(min_pts, major - 1))
    outliers = int(rng.integers(0, 3))
    spread = 1.0
    separation = float(rng.uniform(5.0, 15.0)) * spread * np.sqrt(dim)
    direction = rng.normal(size=dim)
    direction /= np.linalg.norm(direction)
    points = [rng.normal(0.0, spread / np.sqrt(dim), size=(major, dim)),
              separation * direction + rng.normal(0.0, spread / np.sqrt(dim), size=(minor, dim))]
    truth = [0] * major + [1] * minor
    for _ in range(outliers):
        far = rng.normal(size=dim)
        far = far / np.linalg.norm(far) * separation * float(rng.uniform(3.0, 5.0))
        points.append(far[None, :])
        truth.append(-1)
    x = np.vstack(points)
    perm = rng.permutation(len(x))
    x = x[perm]
    truth = [truth[i] for i in perm]
    d = pairwise_distances(x)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    model = HDBSCAN(metric="precomputed", min_cluster_size=min_pts, min_samples=min_pts,
                    allow_single_cluster=True)
    labels = model.fit_predict(d.copy())
    return {
        "min_pts": min_pts,
        "distances": d.tolist(),
        "reference_labels": [int(v) for v in labels],
        "true_majority": [i for i, t in enumerate(truth) if t == 0],
    }


def mixed_instance(rng):
    """Overlapping blobs of varying density; exercises the full label vector."""
    dim = int(rng.integers(2, 5))
    min_pts = int(rng.choice([2, 3, 4, 5]))
    parts = []
    for _ in range(int(rng.integers(1, 5))):
        size = int(rng.integers(2, 12))
        parts.append(rng.uniform(-6, 6, size=dim) + rng.normal(0.0, rng.uniform(0.2, 2.0), size=(size, dim)))
    parts.append(rng.uniform(-10, 10, size=(int(rng.integers(0, 4)), dim)))
    x = np.vstack(parts)
    d = pairwise_distances(x)
    d = (d + d.T) / 2.0
    np.fill_diagonal(d, 0.0)
    if len(x) < min_pts:
        labels = [-1] * len(x)
    else:
        model = HDBSCAN(metric="precomputed", min_cluster_size=min_pts, min_samples=min_pts,
                        allow_single_cluster=True)
        labels = [int(v) for v in model.fit_predict(d.copy())]
    return {"min_pts": min_pts, "distances": d.tolist(), "reference_labels": labels}


def main():
    out = sys.argv[1] if len(sys.argv) > 1 else "hdbscan_fixture.json"
    rng = np.random.default_rng(20260101)
    instances = [planted_instance(rng) for _ in range(100)]
    with open(out, "w") as f:
        json.dump({"instances": instances,
                   "mixed": [mixed_instance(rng) for _ in range(200)]}, f)


if __name__ == "__main__":
    main()
