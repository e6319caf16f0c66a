"""LSH hash tables with per-bucket HyperLogLog sketches.

Buckets of all ``L`` tables live in flat arrays.  Table ``t`` owns the bucket
range ``table_start[t]:table_start[t+1]``, sorted by 64-bit tuple key; bucket
``b`` holds the sorted point ids ``ids[offsets[b]:offsets[b+1]]`` and, when
it has at least ``hll_threshold`` members, the sketch ``sketches[sketch_row[b]]``.
Lookups binary-search the key and then compare the full atomic tuple (stored
as ``tuples[b]``, bit-packed for the 0/1 families), so two distinct tuples
sharing a 64-bit key never merge.
"""

from __future__ import annotations

import os
import struct
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from hybridlsh import _kernels
from hybridlsh.errors import ConfigError, FormatError, InputError
from hybridlsh.families import (
    BucketKey,
    FamilyKind,
    FamilySpec,
    HashBank,
    collision_prob,
    family_for_metric,
    plan_k,
)
from hybridlsh.metrics import Dataset, Metric, n_words
from hybridlsh.sketch import HllSketch, SketchConfig, mix64, position_rank_array

__all__ = [
    "IndexParams",
    "Bucket",
    "HybridIndex",
    "build_index",
    "lookup",
    "save_index",
    "load_index",
    "MAGIC",
]

MAGIC = b"HLSH1"

_METRIC_CODES = {Metric.HAMMING: 0, Metric.L1: 1, Metric.L2: 2, Metric.COSINE: 3}
_FAMILY_CODES = {FamilyKind.BIT_SAMPLING: 0, FamilyKind.SIMHASH: 1, FamilyKind.PSTABLE_L1: 2, FamilyKind.PSTABLE_L2: 3}
_KIND_CODES = {"dense": 0, "sparse": 1, "bits": 2}
# magic, metric, family, representation, r, delta, L, k, d, n, w, family seed, m, sketch seed, threshold
_HEADER = struct.Struct("<5sBBBddQQQQdQIQQ")


@dataclass(frozen=True)
class IndexParams:
    """Everything needed to build an index.

    ``hll_threshold`` defaults to the sketch width ``m``: buckets smaller than
    that carry no sketch and are folded into the query sketch id by id.
    """

    r: float
    k: int
    family: FamilySpec
    L: int = 50
    delta: float = 0.1
    sketch: SketchConfig = field(default_factory=SketchConfig)
    hll_threshold: int | None = None

    def __post_init__(self):
        if self.L < 1 or self.k < 1:
            raise ConfigError(f"need L >= 1 and k >= 1, got L={self.L}, k={self.k}")
        if self.hll_threshold is None:
            object.__setattr__(self, "hll_threshold", self.sketch.m)
        if self.hll_threshold < 0:
            raise ConfigError("hll_threshold must be non-negative")
        if not self.r > 0:
            raise ConfigError(f"radius must be positive, got {self.r}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")

    @classmethod
    def for_metric(cls, metric, d: int, r: float, *, L: int = 50, delta: float = 0.1, m: int = 128,
                   k: int | None = None, w_factor: float | None = None, seed: int = 0,
                   hll_threshold: int | None = None, rounding: str = "floor") -> "IndexParams":
        """Pick the family for ``metric`` and plan ``k`` from its collision probability at ``r``."""
        family = family_for_metric(metric, d, r, rng_seed=seed, w_factor=w_factor)
        if k is None:
            k = plan_k(delta, L, collision_prob(family, r), rounding=rounding)
        sketch = SketchConfig(m, mix64(seed ^ 0x5EED5EED5EED5EED))
        return cls(r=r, k=k, family=family, L=L, delta=delta, sketch=sketch, hll_threshold=hll_threshold)

    @property
    def p1(self) -> float:
        return collision_prob(self.family, self.r)


@dataclass
class Bucket:
    point_ids: np.ndarray
    sketch: HllSketch | None = None

    @property
    def size(self) -> int:
        return int(self.point_ids.size)

    def __len__(self) -> int:
        return self.size


_EMPTY_IDS = np.zeros(0, dtype=np.int64)
_EMPTY_IDS.setflags(write=False)


class HybridIndex:
    """``L`` hash tables over a dataset, with sketches on the large buckets."""

    def __init__(self, params: IndexParams, data: Dataset | None, table_start, keys, tuples,
                 offsets, ids, sketch_row, sketches, n: int | None = None):
        self.params = params
        self.data = data
        self.n = data.n if data is not None else int(n)
        self.bank = HashBank(params.family, params.L, params.k)
        self.table_start = table_start
        self.keys = keys
        self.tuples = tuples
        self.offsets = offsets
        self.ids = ids
        self.sketch_row = sketch_row
        self.sketches = sketches
        self.pos, self.rank = position_rank_array(np.arange(self.n), params.sketch)
        # query-time layouts: one row per bucket, and sketch slots aligned with ids
        self.meta = np.ascontiguousarray(np.stack([offsets[:-1], offsets[1:], sketch_row], axis=1))
        self.slot_hll = ((self.pos[ids] << 8) | self.rank[ids]).astype(np.uint32)
        for arr in (table_start, keys, tuples, offsets, ids, sketch_row, sketches,
                    self.meta, self.slot_hll, self.pos, self.rank):
            arr.setflags(write=False)

    @property
    def L(self) -> int:
        return self.params.L

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def n_buckets(self) -> int:
        return int(self.keys.size)

    @property
    def key_seed(self) -> int:
        return self.params.family.rng_seed

    @cached_property
    def sizes(self) -> np.ndarray:
        sizes = np.diff(self.offsets)
        sizes.setflags(write=False)
        return sizes

    def query_buckets(self, q) -> np.ndarray:
        """Bucket index of ``q`` in every table (-1 where its key is unoccupied)."""
        codes = self.bank.encode(self.bank.evaluate_query(q))
        qkeys = _kernels.tuple_keys(codes, np.arange(self.L), self.key_seed)
        return _kernels.find_buckets(self.table_start, self.keys, self.tuples, qkeys, codes)

    def bucket(self, b: int) -> Bucket:
        if b < 0:
            return Bucket(_EMPTY_IDS)
        ids = self.ids[self.offsets[b]:self.offsets[b + 1]]
        row = self.sketch_row[b]
        sketch = HllSketch(self.params.sketch, self.sketches[row].copy()) if row >= 0 else None
        return Bucket(ids, sketch)

    def lookup(self, table_i: int, q) -> Bucket:
        if not 0 <= table_i < self.L:
            raise InputError(f"table index {table_i} outside [0, {self.L})")
        if self.data is not None:
            q = self.data.check_query(q)
        return self.bucket(int(self.query_buckets(q)[table_i]))

    def buckets(self, table_i: int):
        """Iterate ``(BucketKey, Bucket)`` pairs of one table."""
        for b in range(self.table_start[table_i], self.table_start[table_i + 1]):
            yield BucketKey(tuple(int(v) for v in self.bank.decode(self.tuples[b]))), self.bucket(b)

    def space(self) -> dict:
        """Bytes used by bucket membership (keys, tuples, ids, offsets) and by sketches."""
        bucket_bytes = (self.keys.nbytes + self.tuples.nbytes + self.ids.nbytes
                        + self.offsets.nbytes + self.sketch_row.nbytes)
        return {
            "buckets": self.n_buckets,
            "sketched_buckets": int(self.sketches.shape[0]),
            "bucket_bytes": int(bucket_bytes),
            "sketch_bytes": int(self.sketches.nbytes),
        }

    def __repr__(self) -> str:
        fam = self.params.family
        return (f"HybridIndex(n={self.n}, L={self.L}, k={self.k}, family={fam.kind.value}, "
                f"r={self.params.r:g}, m={self.params.sketch.m}, buckets={self.n_buckets})")


def _group_table(vals: np.ndarray, table: int, seed: int):
    """Buckets of one table: sorted keys, tuples, sizes and member ids grouped by bucket."""
    n = vals.shape[0]
    keys = _kernels.tuple_keys(vals, np.full(n, table), seed)
    order = np.argsort(keys, kind="stable")
    skeys = keys[order]
    svals = vals[order]
    new = np.ones(n, dtype=bool)
    new[1:] = skeys[1:] != skeys[:-1]
    starts = np.flatnonzero(new)
    group = np.cumsum(new) - 1
    if not np.array_equal(svals, svals[starts][group]):
        # two tuples share a 64-bit key; order by (key, tuple, id) instead
        order = np.lexsort(vals.T[::-1])
        order = order[np.argsort(keys[order], kind="stable")]
        skeys, svals = keys[order], vals[order]
        new[1:] = (skeys[1:] != skeys[:-1]) | np.any(svals[1:] != svals[:-1], axis=1)
        starts = np.flatnonzero(new)
    sizes = np.diff(np.append(starts, n))
    return skeys[starts], svals[starts], sizes, order.astype(np.int64)


def build_index(data: Dataset, params: IndexParams, workers: int = 1) -> HybridIndex:
    """Hash every point into ``L`` tables and attach sketches to large buckets.

    Tables are independent, so ``workers > 1`` hashes groups of tables on a
    thread pool; the result is identical to a single-threaded build.
    """
    params.family.check_metric(data.metric)
    if params.family.d != data.d:
        raise ConfigError(f"family built for d={params.family.d}, data has d={data.d}")
    L, k, n = params.L, params.k, data.n
    bank = HashBank(params.family, L, k)
    seed = params.family.rng_seed

    chunk = max(1, min(L, 4_000_000 // max(1, n * k)))
    groups = [np.arange(s, min(L, s + chunk)) for s in range(0, L, chunk)]

    def work(tables):
        vals = bank.evaluate(data.data, tables) if n else np.zeros((0, len(tables), k), np.int64)
        codes = bank.encode(vals)
        return [_group_table(np.ascontiguousarray(codes[:, j]), int(t), seed) for j, t in enumerate(tables)]

    if workers > 1 and len(groups) > 1:
        with ThreadPoolExecutor(workers) as pool:
            per_table = [res for chunk_res in pool.map(work, groups) for res in chunk_res]
    else:
        per_table = [res for g in groups for res in work(g)]

    counts = np.array([len(res[0]) for res in per_table], dtype=np.int64)
    table_start = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
    keys = np.concatenate([res[0] for res in per_table]).astype(np.uint64)
    tuples = np.concatenate([res[1] for res in per_table]).reshape(-1, bank.code_width).astype(np.int64)
    sizes = np.concatenate([res[2] for res in per_table]).astype(np.int64)
    ids = np.concatenate([res[3] for res in per_table]).astype(np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)

    has_sketch = sizes >= params.hll_threshold
    sketch_row = np.where(has_sketch, np.cumsum(has_sketch) - 1, -1).astype(np.int64)
    sketches = np.zeros((int(has_sketch.sum()), params.sketch.m), dtype=np.uint8)
    pos, rank = position_rank_array(np.arange(n), params.sketch)
    _kernels.build_sketches(offsets, ids, sketch_row, pos, rank, sketches)
    return HybridIndex(params, data, table_start, keys, tuples, offsets, ids, sketch_row, sketches)


def lookup(index: HybridIndex, table_i: int, q) -> Bucket:
    return index.lookup(table_i, q)


def _header_bytes(index: HybridIndex, kind: str, d: int, metric: Metric) -> bytes:
    p = index.params
    return _HEADER.pack(MAGIC, _METRIC_CODES[metric], _FAMILY_CODES[p.family.kind], _KIND_CODES[kind],
                        p.r, p.delta, p.L, p.k, d, index.n, p.family.w, p.family.rng_seed,
                        p.sketch.m, p.sketch.hash_seed, p.hll_threshold)


def save_index(index: HybridIndex, path) -> None:
    """Write the index in the ``HLSH1`` little-endian format (points are not stored)."""
    if index.data is None:
        raise InputError("index has no dataset attached")
    header = _header_bytes(index, index.data.kind, index.data.d, index.data.metric)
    body = _kernels.serialize_tables(index.table_start, index.keys, index.tuples, index.offsets,
                                     index.ids, index.sketch_row, index.sketches,
                                     index.params.sketch.m, np.uint64(index.params.sketch.hash_seed))
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        fh.write(header)
        fh.write(body.tobytes())
    os.replace(tmp, path)


def load_index(path, data: Dataset | None = None) -> HybridIndex:
    """Read an index written by :func:`save_index`.

    Pass the indexed ``data`` to run searches; without it only bucket
    lookups and candidate estimation are available.
    """
    with open(path, "rb") as fh:
        buf = np.frombuffer(fh.read(), dtype=np.uint8)
    if buf.size < len(MAGIC) or bytes(buf[:len(MAGIC)]) != MAGIC:
        raise FormatError(f"{path}: not an index file (bad magic)")
    if buf.size < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    (_, metric_c, family_c, kind_c, r, delta, L, k, d, n, w, fseed,
     m, sseed, threshold) = _HEADER.unpack_from(buf)
    try:
        metric = {v: key for key, v in _METRIC_CODES.items()}[metric_c]
        family_kind = {v: key for key, v in _FAMILY_CODES.items()}[family_c]
        kind = {v: key for key, v in _KIND_CODES.items()}[kind_c]
        params = IndexParams(r=r, k=k, family=FamilySpec(family_kind, d, w, fseed), L=L, delta=delta,
                             sketch=SketchConfig(m, sseed), hll_threshold=threshold)
    except (KeyError, ConfigError) as exc:
        raise FormatError(f"{path}: invalid header ({exc})") from None
    if params.family.metric is not metric:
        raise FormatError(f"{path}: family {family_kind.value} does not match metric {metric.value}")
    if data is not None:
        if (data.n, data.d, data.metric, data.kind) != (n, d, metric, kind):
            raise ConfigError(f"{path}: index built for n={n}, d={d}, {metric.value}/{kind} data; "
                              f"got n={data.n}, d={data.d}, {data.metric.value}/{data.kind}")
    width = n_words(k) if family_kind.binary else k
    status, arrays = _kernels.parse_tables(buf, _HEADER.size, L, width, m, sseed, n)
    if status == 1:
        raise FormatError(f"{path}: truncated bucket records")
    if status:
        raise FormatError(f"{path}: corrupt bucket records")
    table_start, keys, tuples, offsets, ids, sketch_row, sketches, end = arrays
    if end != buf.size:
        raise FormatError(f"{path}: {buf.size - end} trailing bytes")
    return HybridIndex(params, data, table_start, keys, tuples, offsets, ids, sketch_row, sketches, n=n)
