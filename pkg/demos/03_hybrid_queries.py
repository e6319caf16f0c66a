"""
Switching between LSH search and a linear scan
==============================================

For each query the engine merges the sketches of its L buckets to estimate
the number of distinct candidates, then compares

    alpha * collisions + beta * candidates    (LSH search)
    beta * n                                  (linear scan)

Queries in the dense cluster collide with most of the data in every table,
so deduplicating their buckets costs more than scanning.  Queries in the
sparse background have tiny buckets and stay with LSH.
"""

import numpy as np

from hybridlsh import CostParams, QueryContext, execute_query
from hybridlsh.data_io import bimodal_spec, generate_synthetic, sample_queries
from hybridlsh.oracle import GroundTruth, recall
from hybridlsh.tables import IndexParams, build_index

data, labels = generate_synthetic(bimodal_spec(n=20_000, d=32, dense_fraction=0.7, seed=0))
queries, reduced = sample_queries(data, 60, seed=1)
in_cluster = labels[queries.source_ids] == 0

costs = CostParams(1.0, 14.0)  # about what `hybridlsh-bench calibrate` measures for l2, d=32
for r in (0.2, 0.4, 0.8):
    index = build_index(reduced, IndexParams.for_metric("l2", 32, r, seed=0))
    truth = GroundTruth.compute(reduced, queries, r)
    ctx = QueryContext(index)
    for mode in ("hybrid", "lsh-only", "linear-only"):  # warm-up: compile and touch the tables
        execute_query(index, queries.point(0), costs, mode=mode, ctx=ctx)
    print(f"\nr={r}  k={index.k}")
    for mode in ("hybrid", "lsh-only", "linear-only"):
        reps = [execute_query(index, queries.point(i), costs, mode=mode, ctx=ctx) for i in range(queries.n)]
        ms = np.mean([x.total_ns for x in reps]) / 1e6
        rec = np.mean([recall(x.neighbors.ids, t) for x, t in zip(reps, truth.ids)])
        line = f"  {mode:12s} {ms:7.3f} ms/query  recall {rec:.3f}"
        if mode == "hybrid":
            linear = np.array([x.strategy.value == "linear" for x in reps])
            line += (f"  linear scans: {linear[in_cluster].mean():.0%} of cluster queries, "
                     f"{linear[~in_cluster].mean():.0%} of background queries")
        print(line)
