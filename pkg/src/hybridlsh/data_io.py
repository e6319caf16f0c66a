"""Dataset loaders, writers, synthetic generators and query sampling.

File formats
------------
sparse (libsvm)
    ``label idx:val idx:val ...`` per line, 1-based strictly increasing
    indices.  Labels are discarded.
dense
    Comma-separated reals, one point per line.
bits
    One hexadecimal string per line; bit ``i`` of a point is bit ``i`` of the
    integer the string denotes (so ``8`` has bit 3 set).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from hybridlsh.errors import ConfigError, InputError, ParseError
from hybridlsh.families import simhash_fingerprints
from hybridlsh.metrics import Dataset, Metric, n_words

__all__ = [
    "load_sparse",
    "load_dense",
    "load_bits",
    "write_sparse",
    "write_dense",
    "write_bits",
    "ClusterSpec",
    "SyntheticSpec",
    "generate_synthetic",
    "sample_queries",
    "bimodal_spec",
]


def _lines(path):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if line and not line.startswith("#"):
                yield lineno, line


def load_sparse(path, metric="cosine", d: int | None = None) -> Dataset:
    indptr, indices, values = [0], [], []
    max_idx = -1
    for lineno, line in _lines(path):
        fields = line.split()
        prev = 0
        for tok in fields[1:]:
            try:
                i_str, v_str = tok.split(":", 1)
                i, v = int(i_str), float(v_str)
            except ValueError:
                raise ParseError(path, lineno, f"bad feature {tok!r}") from None
            if i <= prev:
                raise ParseError(path, lineno, f"feature index {i} not strictly increasing (or < 1)")
            prev = i
            indices.append(i - 1)
            values.append(v)
        max_idx = max(max_idx, prev - 1)
        indptr.append(len(indices))
    dim = max_idx + 1 if d is None else d
    if dim <= max_idx:
        raise ParseError(path, 0, f"index {max_idx + 1} exceeds declared d={d}")
    X = sp.csr_matrix((np.array(values, dtype=np.float64), np.array(indices, dtype=np.int64),
                       np.array(indptr, dtype=np.int64)), shape=(len(indptr) - 1, dim))
    return Dataset(X, metric)


def write_sparse(path, data: Dataset, labels=None) -> None:
    X = data.data
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(data.n):
            lo, hi = X.indptr[i], X.indptr[i + 1]
            label = 0 if labels is None else labels[i]
            feats = " ".join(f"{j + 1}:{v!r}" for j, v in zip(X.indices[lo:hi].tolist(), X.data[lo:hi].tolist()))
            fh.write(f"{label} {feats}".rstrip() + "\n")


def load_dense(path, metric="l2") -> Dataset:
    rows = []
    width = None
    for lineno, line in _lines(path):
        try:
            row = [float(tok) for tok in line.split(",")]
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
        if width is None:
            width = len(row)
        elif len(row) != width:
            raise ParseError(path, lineno, f"expected {width} values, got {len(row)}")
        rows.append(row)
    X = np.array(rows, dtype=np.float64) if rows else np.zeros((0, 0))
    return Dataset(X, metric)


def write_dense(path, data: Dataset) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for row in data.data.tolist():
            fh.write(",".join(repr(v) for v in row) + "\n")


def load_bits(path, d: int | None = None) -> Dataset:
    values = []
    width = None
    for lineno, line in _lines(path):
        try:
            values.append(int(line, 16))
        except ValueError:
            raise ParseError(path, lineno, f"not a hex string: {line[:40]!r}") from None
        if width is None:
            width = 4 * len(line)
        elif 4 * len(line) != width:
            raise ParseError(path, lineno, f"expected {width // 4} hex digits, got {len(line)}")
    dim = d if d is not None else (width or 0)
    for lineno, v in enumerate(values, start=1):
        if v.bit_length() > dim:
            raise ParseError(path, lineno, f"value wider than d={dim} bits")
    words = n_words(dim)
    mask = (1 << 64) - 1
    arr = np.array([[(v >> (64 * j)) & mask for j in range(words)] for v in values],
                   dtype=np.uint64).reshape(len(values), words)
    return Dataset(arr, Metric.HAMMING, dim)


def write_bits(path, data: Dataset) -> None:
    digits = (data.d + 3) // 4
    with open(path, "w", encoding="utf-8") as fh:
        for row in data.data.tolist():
            v = sum(int(w) << (64 * j) for j, w in enumerate(row))
            fh.write(f"{v:0{digits}x}\n")


# -- synthetic data ------------------------------------------------------------

@dataclass(frozen=True)
class ClusterSpec:
    """A Gaussian blob: ``size`` points with per-coordinate std ``scale`` around a centre
    drawn uniformly from ``[-spread, spread]^d``."""

    size: int
    scale: float
    spread: float = 1.0


@dataclass(frozen=True)
class SyntheticSpec:
    """Clusters plus uniform background noise in ``[-1, 1]^d``.

    ``metric="hamming"`` turns the real-valued points into ``fingerprint_bits``-bit
    SimHash fingerprints.
    """

    n: int
    d: int
    clusters: tuple = ()
    seed: int = 0
    metric: str = "l2"
    fingerprint_bits: int = 64

    def __post_init__(self):
        object.__setattr__(self, "clusters", tuple(self.clusters))
        if self.n < 0 or self.d < 1:
            raise ConfigError(f"need n >= 0 and d >= 1, got n={self.n}, d={self.d}")
        if any(c.size < 0 or not c.scale > 0 for c in self.clusters):
            raise ConfigError("cluster sizes must be >= 0 and scales > 0")
        if self.background < 0:
            raise ConfigError(f"cluster sizes exceed n={self.n}")

    @property
    def background(self) -> int:
        return self.n - sum(c.size for c in self.clusters)


def generate_synthetic(spec: SyntheticSpec) -> tuple[Dataset, np.ndarray]:
    """Points in shuffled order and their cluster labels (-1 for background)."""
    rng = np.random.default_rng(spec.seed)
    parts, labels = [], []
    for j, c in enumerate(spec.clusters):
        centre = rng.uniform(-c.spread, c.spread, size=spec.d)
        parts.append(centre + c.scale * rng.standard_normal((c.size, spec.d)))
        labels.append(np.full(c.size, j))
    parts.append(rng.uniform(-1.0, 1.0, size=(spec.background, spec.d)))
    labels.append(np.full(spec.background, -1))
    X = np.concatenate(parts)
    y = np.concatenate(labels).astype(np.int64)
    perm = rng.permutation(spec.n)
    X, y = X[perm], y[perm]
    metric = Metric.parse(spec.metric)
    if metric is Metric.HAMMING:
        real = Dataset(X, Metric.L2)
        return simhash_fingerprints(real, spec.fingerprint_bits, seed=spec.seed + 1), y
    return Dataset(X, metric), y


def bimodal_spec(n: int = 100_000, d: int = 32, dense_fraction: float = 0.5, scale: float = 0.05,
                 seed: int = 0, metric: str = "l2") -> SyntheticSpec:
    """One dense cluster holding ``dense_fraction`` of the points plus uniform background."""
    size = int(round(n * dense_fraction))
    return SyntheticSpec(n, d, (ClusterSpec(size, scale, 0.5),), seed=seed, metric=metric)


def sample_queries(data: Dataset, count: int, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Remove ``count`` random points to use as queries; returns ``(queries, reduced)``.

    Both datasets carry ``source_ids`` pointing back into ``data``.
    """
    if count < 0 or (count >= data.n and (count or data.n)):
        raise InputError(f"cannot sample {count} queries from {data.n} points")
    rng = np.random.default_rng(seed)
    chosen = np.sort(rng.choice(data.n, size=count, replace=False))
    keep = np.ones(data.n, dtype=bool)
    keep[chosen] = False
    return data.subset(chosen), data.subset(np.flatnonzero(keep))
