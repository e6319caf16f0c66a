"""Per-query cost model for LSH search versus a linear scan.

LSH search pays ``alpha`` per bucket entry it deduplicates and ``beta`` per
distinct candidate it measures; a linear scan pays ``beta`` per point.  Only
the ratio ``beta / alpha`` affects decisions.
"""

from __future__ import annotations

import csv
import enum
import statistics
import time
from dataclasses import dataclass

import numpy as np

from hybridlsh import _kernels
from hybridlsh.errors import ConfigError
from hybridlsh.metrics import Dataset, Metric, distances_to

__all__ = [
    "Strategy",
    "CostParams",
    "CandidateEstimate",
    "PRESET_BETA_ALPHA",
    "lsh_cost",
    "linear_cost",
    "decide",
    "calibrate",
    "write_calibration_csv",
]

# beta / alpha ratios used in the reference experiments
PRESET_BETA_ALPHA = {Metric.COSINE: 10.0, Metric.L1: 10.0, Metric.L2: 6.0, Metric.HAMMING: 1.0}


class Strategy(str, enum.Enum):
    LSH_SEARCH = "lsh"
    LINEAR_SEARCH = "linear"


@dataclass(frozen=True)
class CostParams:
    """Unit costs of one duplicate-removal step (``alpha``) and one distance (``beta``)."""

    alpha: float
    beta: float
    metric: Metric | None = None

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ConfigError(f"costs must be positive, got alpha={self.alpha}, beta={self.beta}")

    @property
    def ratio(self) -> float:
        return self.beta / self.alpha

    @classmethod
    def preset(cls, metric) -> "CostParams":
        metric = Metric.parse(metric)
        return cls(1.0, PRESET_BETA_ALPHA[metric], metric)

    def scaled(self, c: float) -> "CostParams":
        return CostParams(self.alpha * c, self.beta * c, self.metric)


@dataclass(frozen=True)
class CandidateEstimate:
    collisions: int
    cand_size_est: float


def lsh_cost(p: CostParams, e: CandidateEstimate) -> float:
    return p.alpha * e.collisions + p.beta * e.cand_size_est


def linear_cost(p: CostParams, n: int) -> float:
    return p.beta * n


def decide(lsh: float, linear: float) -> Strategy:
    """LSH search only when strictly cheaper; ties go to the exact linear scan."""
    return Strategy.LSH_SEARCH if lsh < linear else Strategy.LINEAR_SEARCH


def _time_distances(data: Dataset, queries: list) -> float:
    total = 0
    for q in queries:
        t0 = time.perf_counter_ns()
        distances_to(data, q)
        total += time.perf_counter_ns() - t0
    return total / (len(queries) * data.n)


def dedup_workload(n: int, n_queries: int, L: int = 50, seed: int = 0):
    """Synthetic bucket layouts mimicking the collision streams of ``n_queries`` queries.

    Each query draws ``L`` buckets from a neighbourhood of ``n // 4`` ids, so
    ids repeat across tables like near-duplicate candidates do.
    """
    rng = np.random.default_rng(seed)
    hood = max(1, n // 4)
    out = []
    for _ in range(n_queries):
        centre = rng.integers(0, n)
        sizes = rng.integers(1, max(2, hood // 2), size=L)
        ids = np.concatenate([(centre + rng.integers(0, hood, size=s)) % n for s in sizes]).astype(np.int64)
        offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
        meta = np.stack([offsets[:-1], offsets[1:], np.full(L, -1)], axis=1).astype(np.int64)
        out.append((np.arange(L, dtype=np.int64), meta, ids))
    return out


def _time_dedup(n: int, workload) -> float:
    stamp = np.zeros(n, dtype=np.uint32)
    buf = np.empty(n, dtype=np.int64)
    total_ns = 0
    total_coll = 0
    for gen, (bidx, meta, ids) in enumerate(workload, start=1):
        t0 = time.perf_counter_ns()
        _kernels.gather_dedup(bidx, meta, ids, stamp, np.uint32(gen), buf)
        total_ns += time.perf_counter_ns() - t0
        total_coll += ids.size
    return total_ns / total_coll


def calibrate(data_sample: Dataset, query_sample: list, trials: int = 5, seed: int = 0) -> CostParams:
    """Measure ``alpha`` and ``beta`` in nanoseconds on a data/query sample.

    ``beta`` is the mean time of one distance computation inside a linear
    scan; ``alpha`` the mean time of one duplicate-removal step of the
    generation-stamped dedup table, replayed over synthetic collision streams.
    Each trial averages over all queries; the median over trials is returned.
    Runs single-threaded by design.
    """
    if data_sample.n < 100:
        raise ConfigError(f"calibration needs >= 100 points, got {data_sample.n}")
    if len(query_sample) < 10:
        raise ConfigError(f"calibration needs >= 10 queries, got {len(query_sample)}")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    queries = [data_sample.check_query(q) for q in query_sample]
    workload = dedup_workload(data_sample.n, len(queries), seed=seed)
    # warm-up: JIT compilation and caches
    _time_distances(data_sample, queries[:2])
    _time_dedup(data_sample.n, workload[:2])
    betas = [_time_distances(data_sample, queries) for _ in range(trials)]
    alphas = [_time_dedup(data_sample.n, workload) for _ in range(trials)]
    return CostParams(statistics.median(alphas), statistics.median(betas), data_sample.metric)


CALIBRATION_FIELDS = ["metric", "alpha_ns", "beta_ns", "ratio"]


def write_calibration_csv(path, params: CostParams) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CALIBRATION_FIELDS)
        metric = params.metric.value if params.metric else ""
        w.writerow([metric, f"{params.alpha:.6g}", f"{params.beta:.6g}", f"{params.ratio:.6g}"])


def read_calibration_csv(path) -> CostParams:
    with open(path, newline="") as fh:
        row = next(csv.DictReader(fh))
    metric = Metric.parse(row["metric"]) if row["metric"] else None
    return CostParams(float(row["alpha_ns"]), float(row["beta_ns"]), metric)
