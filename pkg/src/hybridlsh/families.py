"""LSH families, their collision-probability curves and the ``k`` planner.

Four families are provided, one per metric:

============  ===============  ===========================================
kind          metric           atomic hash
============  ===============  ===========================================
bit-sampling  hamming          ``x[i]`` for a random coordinate ``i``
simhash       cosine           ``[a . x > 0]`` for a Gaussian hyperplane
pstable-l1    l1               ``floor((a . x + b) / w)``, Cauchy ``a``
pstable-l2    l2               ``floor((a . x + b) / w)``, Gaussian ``a``
============  ===============  ===========================================

A :class:`HashBank` draws all ``L * k`` atoms of an index at once from one
seeded generator and evaluates them in bulk; :class:`AtomicHash` and
:class:`CompositeHash` are single-function views for standalone use.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import ndtr

from hybridlsh import _kernels
from hybridlsh.errors import ConfigError, InputError
from hybridlsh.metrics import Dataset, Metric, n_words, pack_bits, unpack_bits

__all__ = [
    "FamilyKind",
    "FamilySpec",
    "AtomicHash",
    "CompositeHash",
    "BucketKey",
    "HashBank",
    "atomic_eval",
    "composite_eval",
    "collision_prob",
    "plan_k",
    "recall_bound",
    "family_for_metric",
    "REFERENCE_PRESETS",
    "simhash_planes",
    "simhash_fingerprint",
    "simhash_fingerprints",
]


class FamilyKind(str, enum.Enum):
    BIT_SAMPLING = "bit-sampling"
    SIMHASH = "simhash"
    PSTABLE_L1 = "pstable-l1"
    PSTABLE_L2 = "pstable-l2"

    @property
    def metric(self) -> Metric:
        return _FAMILY_METRIC[self]

    @property
    def pstable(self) -> bool:
        return self in (FamilyKind.PSTABLE_L1, FamilyKind.PSTABLE_L2)

    @property
    def binary(self) -> bool:
        return not self.pstable


_FAMILY_METRIC = {
    FamilyKind.BIT_SAMPLING: Metric.HAMMING,
    FamilyKind.SIMHASH: Metric.COSINE,
    FamilyKind.PSTABLE_L1: Metric.L1,
    FamilyKind.PSTABLE_L2: Metric.L2,
}
_METRIC_FAMILY = {v: k for k, v in _FAMILY_METRIC.items()}

# (k, w / r) used by the reference experiments for the random-projection families
REFERENCE_PRESETS = {
    Metric.L1: (8, 4.0),
    Metric.L2: (7, 2.0),
}
DEFAULT_W_FACTOR = {Metric.L1: 4.0, Metric.L2: 2.0}


@dataclass(frozen=True)
class FamilySpec:
    kind: FamilyKind
    d: int
    w: float = 0.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "kind", FamilyKind(self.kind))
        if self.d < 1:
            raise ConfigError(f"dimensionality must be positive, got {self.d}")
        if self.kind.pstable:
            if not self.w > 0:
                raise ConfigError(f"{self.kind.value} needs a bucket width w > 0")
        elif self.w:
            raise ConfigError(f"{self.kind.value} takes no bucket width")
        if not 0 <= self.rng_seed < 2**64:
            raise ConfigError("rng_seed must fit in 64 bits")

    @property
    def metric(self) -> Metric:
        return self.kind.metric

    def check_metric(self, metric) -> None:
        if Metric.parse(metric) is not self.metric:
            raise ConfigError(f"family {self.kind.value} cannot index {Metric.parse(metric).value} data")


def family_for_metric(metric, d: int, r: float, rng_seed: int = 0, w_factor: float | None = None) -> FamilySpec:
    """The family matching ``metric``; p-stable widths default to the presets (4r for l1, 2r for l2)."""
    metric = Metric.parse(metric)
    kind = _METRIC_FAMILY[metric]
    w = 0.0
    if kind.pstable:
        w = (w_factor if w_factor is not None else DEFAULT_W_FACTOR[metric]) * r
    return FamilySpec(kind, d, w, rng_seed)


# -- collision probabilities -------------------------------------------------

def collision_prob(spec: FamilySpec, r: float) -> float:
    """Probability that one atomic hash collides for two points at distance ``r``."""
    r = float(r)
    kind = spec.kind
    if not r > 0:
        raise InputError(f"radius must be positive, got {r}")
    if kind is FamilyKind.BIT_SAMPLING:
        if r >= spec.d:
            raise InputError(f"hamming radius must be below d={spec.d}")
        return 1.0 - r / spec.d
    if kind is FamilyKind.SIMHASH:
        if r >= 2.0:
            raise InputError("cosine distance radius must be below 2")
        return 1.0 - math.acos(1.0 - r) / math.pi
    t = spec.w / r
    if kind is FamilyKind.PSTABLE_L2:
        return float(1.0 - 2.0 * ndtr(-t) - 2.0 / (math.sqrt(2.0 * math.pi) * t) * (1.0 - math.exp(-t * t / 2.0)))
    return 2.0 / math.pi * math.atan(t) - math.log1p(t * t) / (math.pi * t)


def recall_bound(p1: float, k: int, L: int) -> float:
    """Probability that a point colliding with rate ``p1`` shares a bucket in some table."""
    return 1.0 - (1.0 - p1**k) ** L


def plan_k(delta: float, L: int, p1: float, rounding: str = "floor") -> int:
    """Number of atoms per table for failure probability ``delta`` with ``L`` tables.

    The continuous solution is ``log(1 - delta**(1/L)) / log(p1)``.  With
    ``rounding="floor"`` (default) the result is the largest ``k >= 1`` with
    ``1 - (1 - p1**k)**L >= 1 - delta`` (clamped to 1 when even ``k = 1``
    misses the bound).  ``rounding="ceil"`` rounds the same quantity up, which
    gives one more atom and can fall short of the bound.
    """
    if not 0.0 < delta < 1.0:
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    if not 0.0 < p1 < 1.0:
        raise InputError(f"p1 must lie in (0, 1), got {p1}")
    if L < 1:
        raise InputError(f"L must be >= 1, got {L}")
    x = math.log(-math.expm1(math.log(delta) / L)) / math.log(p1)
    if rounding == "ceil":
        return max(1, math.ceil(x - 1e-9))
    if rounding != "floor":
        raise InputError(f"rounding must be 'floor' or 'ceil', got {rounding!r}")
    k = max(1, math.floor(x + 1e-9))
    while k > 1 and recall_bound(p1, k, L) < 1.0 - delta:
        k -= 1
    return k


# -- hash functions -----------------------------------------------------------

def _draw(spec: FamilySpec, count: int):
    rng = np.random.default_rng(spec.rng_seed)
    kind = spec.kind
    if kind is FamilyKind.BIT_SAMPLING:
        return rng.integers(0, spec.d, size=count), None, None
    if kind is FamilyKind.SIMHASH:
        return None, rng.standard_normal((count, spec.d)), None
    if kind is FamilyKind.PSTABLE_L2:
        a = rng.standard_normal((count, spec.d))
    else:
        a = np.tan(np.pi * (rng.random((count, spec.d)) - 0.5))
    return None, a, rng.random(count) * spec.w


@dataclass(frozen=True, eq=False)
class AtomicHash:
    kind: FamilyKind
    coord: int = -1
    a: np.ndarray | None = None
    b: float = 0.0
    w: float = 0.0

    def __call__(self, x) -> int:
        return atomic_eval(self, x)


@dataclass(frozen=True, eq=False)
class CompositeHash:
    atoms: tuple

    def __post_init__(self):
        if len(self.atoms) < 1:
            raise InputError("a composite hash needs k >= 1 atoms")

    @property
    def k(self) -> int:
        return len(self.atoms)

    def __call__(self, x) -> "BucketKey":
        return composite_eval(self, x)


@dataclass(frozen=True)
class BucketKey:
    """The tuple of atomic values; equality is tuple equality, ``key`` is its 64-bit hash."""

    values: tuple

    @property
    def key(self) -> int:
        return int(_kernels.tuple_keys(np.array([self.values], dtype=np.int64), np.zeros(1, np.int64), 0)[0])


def _dot(a: np.ndarray, x) -> float:
    if sp.issparse(x):
        return float((x @ a).ravel()[0])
    return float(np.dot(a, np.asarray(x, dtype=np.float64).ravel()))


def _get_bit(x, i: int) -> int:
    x = np.asarray(x)
    if x.dtype != np.uint64:
        raise InputError("bit sampling needs a packed uint64 bit vector")
    word = i // 64
    if word >= x.size:
        raise InputError(f"coordinate {i} outside a {x.size * 64}-bit vector")
    return int((int(x.ravel()[word]) >> (i % 64)) & 1)


def atomic_eval(h: AtomicHash, x) -> int:
    if h.kind is FamilyKind.BIT_SAMPLING:
        return _get_bit(x, h.coord)
    if isinstance(x, np.ndarray) and x.dtype == np.uint64:
        raise InputError(f"{h.kind.value} needs a real vector")
    x_dim = x.shape[1] if sp.issparse(x) else np.asarray(x).size
    if x_dim != h.a.size:
        raise InputError(f"point has d={x_dim}, hash expects {h.a.size}")
    proj = _dot(h.a, x)
    if h.kind is FamilyKind.SIMHASH:
        return int(proj > 0.0)
    return math.floor((proj + h.b) / h.w)


def composite_eval(g: CompositeHash, x) -> BucketKey:
    return BucketKey(tuple(atomic_eval(h, x) for h in g.atoms))


class HashBank:
    """All ``L`` composite hashes of an index, drawn from ``spec.rng_seed``.

    Atom ``j`` of table ``t`` is bank atom ``t * k + j``.  Tables store each
    bucket's tuple as a code (see :meth:`encode`), bit-packed for the 0/1
    families so that long SimHash tuples stay small.
    """

    def __init__(self, spec: FamilySpec, L: int, k: int):
        if L < 1 or k < 1:
            raise InputError(f"need L >= 1 and k >= 1, got L={L}, k={k}")
        self.spec, self.L, self.k = spec, L, k
        self.coords, a, self.offsets = _draw(spec, L * k)
        # (d, L*k) layout so that X @ A evaluates every atom
        self.A = None if a is None else np.ascontiguousarray(a.T)
        if self.coords is not None:
            self._word = self.coords // 64
            self._shift = (self.coords % 64).astype(np.uint64)

    def atom(self, index: int) -> AtomicHash:
        kind = self.spec.kind
        if kind is FamilyKind.BIT_SAMPLING:
            return AtomicHash(kind, coord=int(self.coords[index]))
        if kind is FamilyKind.SIMHASH:
            return AtomicHash(kind, a=self.A[:, index].copy())
        return AtomicHash(kind, a=self.A[:, index].copy(), b=float(self.offsets[index]), w=self.spec.w)

    def composite(self, table: int) -> CompositeHash:
        return CompositeHash(tuple(self.atom(table * self.k + j) for j in range(self.k)))

    @property
    def code_width(self) -> int:
        """Words per table code: binary atoms pack 64 to a word, p-stable atoms take one each."""
        return n_words(self.k) if self.spec.kind.binary else self.k

    def encode(self, vals: np.ndarray) -> np.ndarray:
        """Table codes of atomic-value rows: ``(..., k)`` -> ``(..., code_width)`` int64."""
        if not self.spec.kind.binary:
            return np.ascontiguousarray(vals, dtype=np.int64)
        lead = vals.shape[:-1]
        words = pack_bits(vals.reshape(-1, self.k).astype(bool)).view(np.int64)
        return words.reshape(*lead, self.code_width)

    def decode(self, codes: np.ndarray) -> np.ndarray:
        if not self.spec.kind.binary:
            return np.asarray(codes, dtype=np.int64)
        lead = codes.shape[:-1]
        vals = unpack_bits(np.asarray(codes).reshape(-1, self.code_width).view(np.uint64), self.k)
        return vals.astype(np.int64).reshape(*lead, self.k)

    def evaluate(self, X, tables=None) -> np.ndarray:
        """Atomic values of rows ``X`` as int64 ``(n, len(tables), k)``."""
        tables = np.arange(self.L) if tables is None else np.atleast_1d(tables)
        cols = (tables[:, None] * self.k + np.arange(self.k)).ravel()
        if self.spec.kind is FamilyKind.BIT_SAMPLING:
            X = np.atleast_2d(np.asarray(X))
            vals = (X[:, self._word[cols]] >> self._shift[cols]) & np.uint64(1)
            return vals.astype(np.int64).reshape(X.shape[0], len(tables), self.k)
        proj = X @ self.A[:, cols]
        if sp.issparse(proj):
            proj = proj.toarray()
        proj = np.atleast_2d(np.asarray(proj))
        if self.spec.kind is FamilyKind.SIMHASH:
            vals = (proj > 0.0).astype(np.int64)
        else:
            vals = np.floor((proj + self.offsets[cols]) / self.spec.w).astype(np.int64)
        return vals.reshape(proj.shape[0], len(tables), self.k)

    def evaluate_query(self, q) -> np.ndarray:
        """Atomic values of a single point as int64 ``(L, k)``."""
        if self.spec.kind is FamilyKind.BIT_SAMPLING:
            q = np.asarray(q).ravel()
            return ((q[self._word] >> self._shift) & np.uint64(1)).astype(np.int64).reshape(self.L, self.k)
        if sp.issparse(q):
            proj = np.asarray((q @ self.A)).ravel()
        else:
            proj = q @ self.A
        if self.spec.kind is FamilyKind.SIMHASH:
            return (proj > 0.0).astype(np.int64).reshape(self.L, self.k)
        return np.floor((proj + self.offsets) / self.spec.w).astype(np.int64).reshape(self.L, self.k)


# -- SimHash fingerprints ------------------------------------------------------

def simhash_planes(d: int, bits: int = 64, seed: int = 0) -> list[AtomicHash]:
    bank = HashBank(FamilySpec(FamilyKind.SIMHASH, d, rng_seed=seed), 1, bits)
    return [bank.atom(j) for j in range(bits)]


def simhash_fingerprint(x, planes) -> np.ndarray:
    """Packed ``len(planes)``-bit fingerprint; bit ``j`` is ``[a_j . x > 0]`` (so a zero vector maps to all zeros)."""
    bits = np.array([atomic_eval(h, x) for h in planes], dtype=bool)
    return pack_bits(bits)


def simhash_fingerprints(data: Dataset, bits: int = 64, seed: int = 0) -> Dataset:
    """Hamming-space dataset of SimHash fingerprints of a real-valued dataset."""
    if data.kind == "bits":
        raise InputError("fingerprints need real-valued data")
    A = np.stack([h.a for h in simhash_planes(data.d, bits, seed)], axis=1)
    proj = data.data @ A
    words = pack_bits(np.asarray(proj) > 0.0) if data.n else np.zeros((0, n_words(bits)), np.uint64)
    return Dataset(words, Metric.HAMMING, bits, source_ids=data.source_ids)
