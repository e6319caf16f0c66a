"""Distance functions and the dataset container they operate on.

Three point representations are supported:

* ``dense``  - 1-D ``float64`` arrays (rows of an ``(n, d)`` array)
* ``sparse`` - 1 x d ``scipy.sparse.csr_matrix`` rows with sorted, unique indices
* ``bits``   - fixed-width bit vectors packed LSB-first into ``uint64`` words;
  bit ``i`` lives in word ``i // 64`` at position ``i % 64``

Hamming distance works on bit vectors only; l1, l2 and cosine distance work on
dense or sparse real vectors.  A dataset never mixes representations.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from hybridlsh import _kernels
from hybridlsh.errors import InputError

__all__ = [
    "Metric",
    "Dataset",
    "distance",
    "distances_to",
    "within",
    "n_words",
    "pack_bits",
    "unpack_bits",
]


class Metric(str, enum.Enum):
    HAMMING = "hamming"
    L1 = "l1"
    L2 = "l2"
    COSINE = "cosine"

    @classmethod
    def parse(cls, value) -> "Metric":
        if isinstance(value, Metric):
            return value
        aliases = {"cosine-distance": "cosine", "euclidean": "l2", "manhattan": "l1"}
        try:
            return cls(aliases.get(str(value).lower(), str(value).lower()))
        except ValueError:
            raise InputError(f"unknown metric {value!r}") from None


def n_words(d: int) -> int:
    return (d + 63) // 64


def pack_bits(bits) -> np.ndarray:
    """Pack a ``(n, d)`` (or ``(d,)``) 0/1 array into LSB-first ``uint64`` words."""
    bits = np.asarray(bits, dtype=bool)
    squeeze = bits.ndim == 1
    bits = np.atleast_2d(bits)
    n, d = bits.shape
    padded = np.zeros((n, n_words(d) * 64), dtype=bool)
    padded[:, :d] = bits
    packed = np.packbits(padded, axis=1, bitorder="little").view("<u8").astype(np.uint64)
    return packed[0] if squeeze else packed


def unpack_bits(words, d: int) -> np.ndarray:
    words = np.ascontiguousarray(words, dtype="<u8")
    squeeze = words.ndim == 1
    words = np.atleast_2d(words)
    out = np.unpackbits(words.view(np.uint8), axis=1, bitorder="little")[:, :d]
    return out[0] if squeeze else out


def _kind_of(x) -> str:
    if sp.issparse(x):
        return "sparse"
    if isinstance(x, np.ndarray):
        return "bits" if x.dtype == np.uint64 else "dense"
    raise InputError(f"unsupported point type {type(x).__name__}")


def _check_metric_kind(metric: Metric, kind: str) -> None:
    if (metric is Metric.HAMMING) != (kind == "bits"):
        raise InputError(f"metric {metric.value} is incompatible with {kind} points")


def _as_sparse_row(x) -> sp.csr_matrix:
    row = sp.csr_matrix(x, dtype=np.float64)
    if row.shape[0] != 1:
        raise InputError(f"sparse point must have shape (1, d), got {row.shape}")
    row.sum_duplicates()
    return row


def distance(a, b, metric) -> float:
    """Distance between two points of the same representation.

    Cosine distance is ``1 - cos(a, b)`` on the raw vectors; it is computed as
    half the squared distance between the normalized vectors, which is exactly
    zero for parallel inputs.
    """
    metric = Metric.parse(metric)
    ka, kb = _kind_of(a), _kind_of(b)
    if ka != kb:
        raise InputError(f"representation mismatch: {ka} vs {kb}")
    _check_metric_kind(metric, ka)

    if ka == "bits":
        a = np.asarray(a).ravel()
        b = np.asarray(b).ravel()
        if a.shape != b.shape:
            raise InputError(f"bit vectors of different width: {a.size} vs {b.size} words")
        return float(np.bitwise_count(a ^ b).sum())

    if ka == "sparse":
        a, b = _as_sparse_row(a), _as_sparse_row(b)
        if a.shape != b.shape:
            raise InputError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
        a, b = a.toarray().ravel(), b.toarray().ravel()
    else:
        a = np.asarray(a, dtype=np.float64).ravel()
        b = np.asarray(b, dtype=np.float64).ravel()
        if a.shape != b.shape:
            raise InputError(f"dimension mismatch: {a.size} vs {b.size}")

    if metric is Metric.L1:
        return float(np.abs(a - b).sum())
    if metric is Metric.L2:
        return float(np.sqrt(np.dot(a - b, a - b)))
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise InputError("cosine distance is undefined for a zero vector")
    diff = a / na - b / nb
    return float(min(2.0, 0.5 * np.dot(diff, diff)))


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable point set ``S`` with its distance metric.

    Parameters
    ----------
    data : ndarray or csr_matrix
        ``(n, d)`` float64 array, ``(n, d)`` CSR matrix, or ``(n, ceil(d/64))``
        uint64 words for bit vectors.
    metric : Metric or str
    d : int, optional
        Dimensionality; required for bit vectors whose width is not a
        multiple of 64, otherwise inferred.
    source_ids : ndarray, optional
        Ids of these points in a parent dataset (set by query sampling).
    """

    data: object
    metric: Metric
    d: int = -1
    source_ids: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        metric = Metric.parse(self.metric)
        object.__setattr__(self, "metric", metric)
        data = self.data
        if sp.issparse(data):
            data = sp.csr_matrix(data, dtype=np.float64)
            data.sum_duplicates()
            data.sort_indices()
            kind = "sparse"
            d = data.shape[1]
        else:
            data = np.asarray(data)
            if data.dtype == np.uint64:
                kind = "bits"
                if data.ndim != 2:
                    data = data.reshape(len(data), -1)
                data = np.ascontiguousarray(data)
                d = self.d if self.d >= 0 else data.shape[1] * 64
                if n_words(d) != data.shape[1]:
                    raise InputError(f"{data.shape[1]} words cannot hold {d} bits")
            else:
                kind = "dense"
                if data.ndim != 2:
                    raise InputError(f"dense data must be 2-D, got shape {data.shape}")
                data = np.ascontiguousarray(data, dtype=np.float64)
                d = data.shape[1]
        if self.d >= 0 and self.d != d:
            raise InputError(f"declared d={self.d} but data has d={d}")
        _check_metric_kind(metric, kind)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "_kind", kind)
        if metric is Metric.COSINE and self.n and np.any(self.norms == 0.0):
            raise InputError("cosine distance is undefined for zero vectors in the dataset")

    @property
    def kind(self) -> str:
        return self._kind

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    def __len__(self) -> int:
        return self.n

    def point(self, i: int):
        """Point ``i`` in this dataset's representation."""
        if self._kind == "sparse":
            return self.data[i]
        return self.data[i].copy()

    def subset(self, ids) -> "Dataset":
        ids = np.asarray(ids, dtype=np.int64)
        parent = self.source_ids if self.source_ids is not None else np.arange(self.n)
        return Dataset(self.data[ids], self.metric, self.d, source_ids=parent[ids])

    @cached_property
    def norms(self) -> np.ndarray:
        if self._kind == "sparse":
            return np.sqrt(np.asarray(self.data.multiply(self.data).sum(axis=1)).ravel())
        if self._kind == "dense":
            return np.sqrt(np.einsum("ij,ij->i", self.data, self.data))
        raise AttributeError("bit vectors have no norm")

    @cached_property
    def normalized(self):
        if self._kind == "sparse":
            return sp.csr_matrix(sp.diags(1.0 / self.norms) @ self.data)
        return self.data / self.norms[:, None]

    def check_query(self, q):
        """Validate ``q`` against this dataset and return it in canonical form."""
        kind = _kind_of(q)
        if kind == "sparse" and self._kind == "dense":
            q = q.toarray().ravel()
            kind = "dense"
        if kind != self._kind and not (kind == "dense" and self._kind == "sparse"):
            raise InputError(f"query is {kind} but dataset is {self._kind}")
        if self._kind == "bits":
            q = np.asarray(q).ravel()
            if q.size != self.data.shape[1]:
                raise InputError(f"query has {q.size} words, dataset {self.data.shape[1]}")
            return q
        if self._kind == "sparse":
            q = _as_sparse_row(q) if kind == "sparse" else sp.csr_matrix(
                np.asarray(q, dtype=np.float64).reshape(1, -1))
            if q.shape[1] != self.d:
                raise InputError(f"query has d={q.shape[1]}, dataset d={self.d}")
            return q
        q = np.asarray(q, dtype=np.float64).ravel()
        if q.size != self.d:
            raise InputError(f"query has d={q.size}, dataset d={self.d}")
        return q


_DENSE_CODE = {Metric.L1: 0, Metric.L2: 1, Metric.COSINE: 2}


def distances_to(data: Dataset, q, ids=None) -> np.ndarray:
    """Distances from ``q`` to every point (or to the points ``ids``).

    Dense rows go through one compiled row routine for both the full scan
    and the gathered case, so a point's distance is bit-identical either way.
    """
    q = data.check_query(q)
    metric = data.metric
    if data.kind == "dense":
        X, q = _dense_operands(data, q)
        code = _DENSE_CODE[metric]
        if ids is None:
            return _kernels.dense_dist_all(X, q, code)
        return _kernels.dense_dist_ids(X, q, np.asarray(ids, dtype=np.int64), code)
    X = data.data if ids is None else data.data[ids]
    if data.kind == "bits":
        return np.bitwise_count(X ^ q).sum(axis=1, dtype=np.int64).astype(np.float64)
    if metric is Metric.COSINE:
        qn = _norm(q)
        if qn == 0.0:
            raise InputError("cosine distance is undefined for a zero query")
        Xn = data.normalized if ids is None else data.normalized[ids]
        cos = np.asarray((Xn @ q.T).todense()).ravel() / qn
        return np.clip(1.0 - cos, 0.0, 2.0)
    diff = X - sp.csr_matrix(np.ones((X.shape[0], 1))) @ q
    if metric is Metric.L1:
        return np.asarray(abs(diff).sum(axis=1)).ravel()
    return np.sqrt(np.asarray(diff.multiply(diff).sum(axis=1)).ravel())


def _dense_operands(data: Dataset, q):
    if data.metric is Metric.COSINE:
        qn = _norm(q)
        if qn == 0.0:
            raise InputError("cosine distance is undefined for a zero query")
        return data.normalized, q / qn
    return data.data, q


def within(data: Dataset, q, r: float, ids=None) -> tuple[np.ndarray, np.ndarray]:
    """``(ids, distances)`` of the points (among ``ids``, if given) within ``r`` of ``q``.

    Output follows the input order, so sorted ``ids`` give sorted results.
    Agrees exactly with filtering :func:`distances_to`.
    """
    q = data.check_query(q)
    if data.kind != "dense":
        d = distances_to(data, q, ids)
        pool = np.arange(data.n) if ids is None else np.asarray(ids, dtype=np.int64)
        keep = d <= r
        return pool[keep], d[keep]
    X, qq = _dense_operands(data, q)
    code = _DENSE_CODE[data.metric]
    size = data.n if ids is None else len(ids)
    out_ids = np.empty(size, dtype=np.int64)
    out_d = np.empty(size)
    if ids is None:
        c = _kernels.dense_within_all(X, qq, code, float(r), out_ids, out_d)
    else:
        c = _kernels.dense_within_ids(X, qq, np.asarray(ids, dtype=np.int64), code, float(r), out_ids, out_d)
    return out_ids[:c].copy(), out_d[:c].copy()


def _norm(q) -> float:
    if sp.issparse(q):
        return float(np.sqrt(q.multiply(q).sum()))
    return float(np.linalg.norm(q))
