"""Brute-force ground truth, computed independently of the search code paths."""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from hybridlsh.metrics import Dataset, Metric, unpack_bits

__all__ = [
    "brute_force_rnn",
    "brute_force_distances",
    "exact_candidate_stats",
    "recall",
    "GroundTruth",
    "GroundTruthCache",
    "dataset_fingerprint",
]

_CDIST = {Metric.L1: "cityblock", Metric.L2: "euclidean", Metric.COSINE: "cosine"}


def _dense_rows(data: Dataset, X):
    if data.kind == "bits":
        return unpack_bits(X, data.d).astype(bool)
    if data.kind == "sparse":
        return X.toarray()
    return X


def brute_force_distances(data: Dataset, queries) -> np.ndarray:
    """``(n_queries, n)`` distance matrix via :func:`scipy.spatial.distance.cdist`."""
    if isinstance(queries, Dataset):
        Q = _dense_rows(data, queries.data)
    else:
        Q = np.vstack([_dense_rows(data, np.atleast_2d(q) if not hasattr(q, "toarray") else q)
                       for q in queries])
    X = _dense_rows(data, data.data)
    if data.metric is Metric.HAMMING:
        return np.rint(cdist(Q, X, "hamming") * data.d)
    D = cdist(np.asarray(Q, dtype=np.float64), np.asarray(X, dtype=np.float64), _CDIST[data.metric])
    return np.maximum(D, 0.0)


def brute_force_rnn(data: Dataset, q, r: float):
    """Exact ``(ids, distances)`` of all points within ``r`` of ``q``."""
    if data.n == 0:
        return np.zeros(0, np.int64), np.zeros(0)
    d = brute_force_distances(data, [q])[0]
    ids = np.flatnonzero(d <= r)
    return ids, d[ids]


def exact_candidate_stats(index, q) -> tuple[int, int]:
    """``(collisions, distinct candidates)`` over the query's ``L`` buckets, by sorting their union."""
    members = [index.bucket(int(b)).point_ids for b in index.query_buckets(q)]
    if not members:
        return 0, 0
    union = np.concatenate(members)
    return int(union.size), int(np.unique(union).size)


def recall(reported, truth) -> float:
    """Fraction of true neighbours that were reported (1 when there are none)."""
    truth = np.asarray(truth, dtype=np.int64).ravel()
    if truth.size == 0:
        return 1.0
    reported = np.asarray(reported, dtype=np.int64).ravel()
    return float(np.isin(truth, reported).sum()) / truth.size


def dataset_fingerprint(data: Dataset) -> str:
    h = hashlib.sha256()
    h.update(f"{data.kind}|{data.metric.value}|{data.n}|{data.d}".encode())
    if data.kind == "sparse":
        for arr in (data.data.indptr, data.data.indices, data.data.data):
            h.update(np.ascontiguousarray(arr).tobytes())
    else:
        h.update(np.ascontiguousarray(data.data).tobytes())
    return h.hexdigest()[:32]


@dataclass
class GroundTruth:
    """Exact answer sets for a list of queries at one radius."""

    r: float
    ids: list
    distances: list

    @classmethod
    def compute(cls, data: Dataset, queries, r: float) -> "GroundTruth":
        D = brute_force_distances(data, queries)
        ids = [np.flatnonzero(row <= r) for row in D]
        return cls(r, ids, [row[i] for row, i in zip(D, ids)])

    def output_sizes(self) -> np.ndarray:
        return np.array([len(i) for i in self.ids])


class GroundTruthCache:
    """Ground truth persisted as ``.npz`` files keyed by dataset hash, query set, radius and metric."""

    def __init__(self, directory):
        self.directory = Path(directory)

    def _path(self, data: Dataset, queries: Dataset, r: float) -> Path:
        key = f"{dataset_fingerprint(data)}_{dataset_fingerprint(queries)[:12]}_{r!r}_{data.metric.value}"
        return self.directory / f"gt_{hashlib.sha1(key.encode()).hexdigest()[:24]}.npz"

    def get(self, data: Dataset, queries: Dataset, r: float) -> GroundTruth:
        path = self._path(data, queries, r)
        if path.exists():
            with np.load(path) as z:
                lens = z["lens"]
                splits = np.cumsum(lens)[:-1]
                return GroundTruth(r, np.split(z["ids"], splits), np.split(z["dist"], splits))
        gt = GroundTruth.compute(data, queries, r)
        self.directory.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, lens=gt.output_sizes(),
                 ids=np.concatenate(gt.ids) if gt.ids else np.zeros(0, np.int64),
                 dist=np.concatenate(gt.distances) if gt.distances else np.zeros(0))
        os.replace(tmp, path)
        return gt
