"""
Building LSH tables
===================

An index hashes every point into L tables with a composite hash of k atoms.
Buckets with at least m members also carry a HyperLogLog sketch of their ids.
k is planned so that a point at distance r collides with the query in at
least one table with probability 1 - delta.
"""

import tempfile
from pathlib import Path

import numpy as np

from hybridlsh import IndexParams, build_index, collision_prob, load_index, save_index
from hybridlsh.data_io import bimodal_spec, generate_synthetic

data, labels = generate_synthetic(bimodal_spec(n=20_000, d=32, dense_fraction=0.7, seed=0))
print("points:", data.n, "dims:", data.d, "dense cluster share:", round(float(np.mean(labels == 0)), 2))

r = 0.4
params = IndexParams.for_metric("l2", data.d, r, L=50, delta=0.1, seed=0)
print(f"bucket width w={params.family.w:g}, p1={collision_prob(params.family, r):.3f}, planned k={params.k}")

index = build_index(data, params)
print(index)
print(index.space())

# bucket sizes: the dense cluster lands in a few huge buckets per table
sizes = np.sort(index.sizes[index.table_start[0]:index.table_start[1]])[::-1]
print("largest buckets of table 0:", sizes[:5].tolist(), "of", sizes.size)

# every point sits in exactly one bucket per table
q = data.point(0)
print("point 0 found in its bucket in every table:",
      all(0 in index.lookup(t, q).point_ids for t in range(index.L)))

# the file format round-trips; points are not stored, so pass the data back in
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.hlsh"
    save_index(index, path)
    again = load_index(path, data)
    print("bytes on disk:", path.stat().st_size, " same buckets:", np.array_equal(again.ids, index.ids))
