"""
Counting distinct ids with HyperLogLog sketches
===============================================

A sketch is 128 one-byte registers.  Inserting an id hashes it to a register
and a rank; the register keeps the largest rank it has seen.  Two sketches
merge by taking the register-wise maximum, which is what lets an index keep
one sketch per bucket and combine them at query time.
"""

import numpy as np

from hybridlsh import HllSketch, SketchConfig

cfg = SketchConfig(m=128, hash_seed=0)

# 10000 distinct ids, inserted twice: duplicates do not move any register
s = HllSketch(cfg).add_many(range(10_000)).add_many(range(10_000))
print("estimate for 10000 ids:", round(s.estimate()))
print("expected relative error about", round(1.04 / np.sqrt(cfg.m), 3))

# two overlapping sets: the merge equals the sketch of the union, exactly
a = HllSketch(cfg).add_many(range(0, 6000))
b = HllSketch(cfg).add_many(range(4000, 9000))
union = HllSketch(cfg).add_many(range(0, 9000))
print("merge == sketch of union:", a.merge(b) == union)
print("merged estimate:", round(a.merge(b).estimate()), "true: 9000")

# the error shrinks like 1/sqrt(m)
rng = np.random.default_rng(1)
for m in (32, 128, 512):
    errs = []
    for t in range(200):
        ids = rng.choice(10**9, 5000, replace=False)
        errs.append(abs(HllSketch(SketchConfig(m, t)).add_many(ids).estimate() / 5000 - 1))
    print(f"m={m:4d}  mean |error| {np.mean(errs):.3f}")
