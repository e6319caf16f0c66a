"""Query execution: candidate estimation, LSH search, linear scan and the hybrid switch."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from hybridlsh import _kernels
from hybridlsh.cost import (
    CandidateEstimate,
    CostParams,
    Strategy,
    decide,
    linear_cost,
    lsh_cost,
)
from hybridlsh.errors import InputError
from hybridlsh.metrics import Dataset, within
from hybridlsh.sketch import HllSketch, _POW2_NEG, _corrected, alpha_m
from hybridlsh.tables import HybridIndex

__all__ = [
    "Neighbors",
    "QueryReport",
    "QueryContext",
    "estimate_candidates",
    "estimate_from_buckets",
    "lsh_search",
    "linear_search",
    "hybrid_query",
    "execute_query",
    "MODES",
]

MODES = ("hybrid", "lsh-only", "linear-only")


@dataclass(frozen=True, eq=False)
class Neighbors:
    """Reported points sorted by id, with their distances to the query."""

    ids: np.ndarray
    distances: np.ndarray

    def __len__(self) -> int:
        return int(self.ids.size)

    def pairs(self) -> list[tuple[int, float]]:
        return list(zip(self.ids.tolist(), self.distances.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, Neighbors):
            return NotImplemented
        return np.array_equal(self.ids, other.ids) and np.array_equal(self.distances, other.distances)


class QueryContext:
    """Per-thread scratch state: the query sketch and the dedup table.

    The dedup table stamps each visited id with the current query's
    generation number, so it never needs clearing between queries.
    """

    def __init__(self, index: HybridIndex):
        self.index = index
        self.scratch = HllSketch(index.params.sketch)
        self._stamp = np.zeros(index.n, dtype=np.uint32)
        self._buf = np.empty(index.n, dtype=np.int64)
        self._gen = 0

    def _next_generation(self) -> np.uint32:
        self._gen += 1
        if self._gen >= 2**32:
            self._stamp[:] = 0
            self._gen = 1
        return np.uint32(self._gen)


def _context(index: HybridIndex, ctx: QueryContext | None) -> QueryContext:
    if ctx is None:
        return QueryContext(index)
    if ctx.index is not index:
        raise InputError("query context belongs to another index")
    return ctx


def _prepare(index: HybridIndex, q):
    if index.data is None:
        raise InputError("index has no dataset attached; pass data to load_index")
    return index.data.check_query(q)


def _estimate(index: HybridIndex, bidx: np.ndarray, ctx: QueryContext) -> CandidateEstimate:
    regs = ctx.scratch.registers
    collisions, total, zeros = _kernels.merge_estimate(
        bidx, index.meta, index.slot_hll, index.sketches, regs, _POW2_NEG)
    m = regs.size
    return CandidateEstimate(int(collisions), _corrected(alpha_m(m) * m * m / total, m, int(zeros)))


def _lsh_search(index: HybridIndex, q, bidx: np.ndarray, r: float, ctx: QueryContext):
    gen = ctx._next_generation()
    c = _kernels.gather_dedup(bidx, index.meta, index.ids, ctx._stamp, gen, ctx._buf)
    # id order makes the distance gather sequential in memory and the output sorted
    if c > index.n // 16:
        cand = ctx._buf[:_kernels.stamped_ids(ctx._stamp, gen, ctx._buf)]
    else:
        cand = np.sort(ctx._buf[:c])
    return Neighbors(*within(index.data, q, r, cand)), c


def estimate_from_buckets(index: HybridIndex, bidx: np.ndarray, ctx: QueryContext | None = None) -> CandidateEstimate:
    """The estimation step alone, for bucket indices from :meth:`HybridIndex.query_buckets`."""
    return _estimate(index, np.asarray(bidx, dtype=np.int64), _context(index, ctx))


def estimate_candidates(index: HybridIndex, q, ctx: QueryContext | None = None) -> CandidateEstimate:
    """Exact collision count and sketch-estimated candidate count, in ``O(m L)`` plus small buckets."""
    ctx = _context(index, ctx)
    if index.data is not None:
        q = index.data.check_query(q)
    return _estimate(index, index.query_buckets(q), ctx)


def lsh_search(index: HybridIndex, q, r: float | None = None, ctx: QueryContext | None = None) -> Neighbors:
    """Distinct points of the query's ``L`` buckets within distance ``r`` (default: the index radius)."""
    q = _prepare(index, q)
    r = index.params.r if r is None else r
    return _lsh_search(index, q, index.query_buckets(q), r, _context(index, ctx))[0]


def linear_search(data: Dataset, q, r: float) -> Neighbors:
    """Exact answer by scanning every point once."""
    return Neighbors(*within(data, q, r))


@dataclass
class QueryReport:
    query_id: int
    strategy: Strategy
    collisions: int
    cand_size_est: float
    neighbors: Neighbors
    n_distance_evals: int
    hash_ns: int = 0
    estimate_ns: int = 0
    search_ns: int = 0
    lsh_cost: float = float("nan")
    linear_cost: float = float("nan")
    cand_size_exact: int | None = None
    mode: str = "hybrid"
    extra: dict = field(default_factory=dict, repr=False)

    @property
    def total_ns(self) -> int:
        return self.hash_ns + self.estimate_ns + self.search_ns

    CSV_FIELDS = ["query_id", "mode", "strategy", "collisions", "cand_size_est", "cand_size_exact",
                  "n_neighbors", "n_distance_evals", "hash_ns", "estimate_ns", "search_ns", "total_ns",
                  "lsh_cost", "linear_cost"]

    def to_row(self) -> dict:
        return {
            "query_id": self.query_id,
            "mode": self.mode,
            "strategy": self.strategy.value,
            "collisions": self.collisions,
            "cand_size_est": f"{self.cand_size_est:.6g}",
            "cand_size_exact": "" if self.cand_size_exact is None else self.cand_size_exact,
            "n_neighbors": len(self.neighbors),
            "n_distance_evals": self.n_distance_evals,
            "hash_ns": self.hash_ns,
            "estimate_ns": self.estimate_ns,
            "search_ns": self.search_ns,
            "total_ns": self.total_ns,
            "lsh_cost": f"{self.lsh_cost:.6g}",
            "linear_cost": f"{self.linear_cost:.6g}",
        }

    def same_result(self, other: "QueryReport") -> bool:
        """Equal in every field except timings."""
        return (self.strategy == other.strategy and self.collisions == other.collisions
                and self.cand_size_est == other.cand_size_est and self.neighbors == other.neighbors
                and self.n_distance_evals == other.n_distance_evals)


def execute_query(index: HybridIndex, q, costs: CostParams | None = None, *, mode: str = "hybrid",
                  r: float | None = None, ctx: QueryContext | None = None, query_id: int = 0,
                  oracle: bool = False) -> QueryReport:
    """Run one query under ``mode`` (``hybrid``, ``lsh-only`` or ``linear-only``) and time its steps.

    ``hash_ns`` covers hashing the query and locating its buckets,
    ``estimate_ns`` the sketch merge, estimate and cost comparison, and
    ``search_ns`` the chosen search including result materialization.
    With ``oracle=True`` the exact candidate count is added (untimed).
    """
    if mode not in MODES:
        raise InputError(f"mode must be one of {MODES}, got {mode!r}")
    if mode == "hybrid" and costs is None:
        raise InputError("hybrid mode needs cost parameters")
    ctx = _context(index, ctx)
    q = _prepare(index, q)
    r = index.params.r if r is None else r
    n = index.n

    t0 = time.perf_counter_ns()
    if mode == "linear-only":
        bidx = None
        t1 = t2 = t0
        est = CandidateEstimate(0, float("nan"))
        strategy = Strategy.LINEAR_SEARCH
        lc = lin = float("nan")
    else:
        bidx = index.query_buckets(q)
        t1 = time.perf_counter_ns()
        if mode == "hybrid":
            est = _estimate(index, bidx, ctx)
            lc, lin = lsh_cost(costs, est), linear_cost(costs, n)
            strategy = decide(lc, lin)
        else:
            est = None
            strategy = Strategy.LSH_SEARCH
            lc = lin = float("nan")
        t2 = time.perf_counter_ns()

    if strategy is Strategy.LSH_SEARCH:
        neighbors, evals = _lsh_search(index, q, bidx, r, ctx)
    else:
        neighbors, evals = linear_search(index.data, q, r), n
    t3 = time.perf_counter_ns()
    if est is None:
        # lsh-only reports the collision count too, outside the timed region
        est = CandidateEstimate(int(index.sizes[bidx[bidx >= 0]].sum()), float("nan"))

    report = QueryReport(query_id, strategy, est.collisions, est.cand_size_est, neighbors, int(evals),
                         hash_ns=t1 - t0, estimate_ns=t2 - t1, search_ns=t3 - t2,
                         lsh_cost=lc, linear_cost=lin, mode=mode)
    if oracle:
        from hybridlsh.oracle import exact_candidate_stats

        collisions, distinct = exact_candidate_stats(index, q)
        report.cand_size_exact = distinct
        if mode == "linear-only":
            report.collisions = collisions
    return report


def hybrid_query(index: HybridIndex, q, costs: CostParams, r: float | None = None,
                 ctx: QueryContext | None = None, query_id: int = 0, oracle: bool = False) -> QueryReport:
    """Estimate both costs, pick the cheaper strategy and run it."""
    return execute_query(index, q, costs, mode="hybrid", r=r, ctx=ctx, query_id=query_id, oracle=oracle)
