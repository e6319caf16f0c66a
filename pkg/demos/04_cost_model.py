"""
Calibrating the cost model
==========================

alpha is the time to push one bucket entry through the dedup table and beta
the time of one distance computation.  Only beta/alpha matters for the
decision; calibrate() measures both on a sample of the data.
"""

import numpy as np

from hybridlsh.cost import CandidateEstimate, CostParams, calibrate, decide, linear_cost, lsh_cost
from hybridlsh.data_io import bimodal_spec, generate_synthetic

for d in (8, 32, 128):
    data, _ = generate_synthetic(bimodal_spec(n=10_000, d=d, seed=0))
    p = calibrate(data, [data.point(i) for i in range(100)], trials=3)
    print(f"d={d:4d}  alpha={p.alpha:5.2f} ns  beta={p.beta:6.2f} ns  beta/alpha={p.ratio:5.1f}")

# where the switch happens: with n points, LSH wins while
# collisions + ratio * candidates < ratio * n
p = CostParams(1.0, 14.0)
n = 100_000
for collisions, cand in [(5_000, 800), (500_000, 40_000), (300_000, 60_000), (1_500_000, 70_000)]:
    e = CandidateEstimate(collisions, cand)
    print(f"collisions={collisions:>9,} candidates={cand:>7,} -> "
          f"{decide(lsh_cost(p, e), linear_cost(p, n)).value}")
