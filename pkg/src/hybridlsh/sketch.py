"""Mergeable HyperLogLog sketches over integer point ids.

Every element id is hashed with a seeded 64-bit avalanche hash.  The low
``log2(m)`` bits select a register and the rank is one plus the number of
leading zeros in the remaining ``64 - log2(m)`` bits, so ranks follow a
Geometric(1/2) law.  Sketches merge by register-wise maximum.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

import numpy as np

from hybridlsh.errors import ConfigError, FormatError

__all__ = [
    "SketchConfig",
    "HllSketch",
    "mix64",
    "element_hash",
    "hll_position_rank",
    "position_rank_array",
    "hll_insert",
    "hll_merge",
    "hll_estimate",
    "estimate_from_registers",
    "alpha_m",
]

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
_C1 = 0xBF58476D1CE4E5B9
_C2 = 0x94D049BB133111EB
TWO_32 = float(1 << 32)

_U = np.uint64


def mix64(z: int) -> int:
    """SplitMix64 finalizer on a Python int (wrapping at 64 bits)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _C1) & MASK64
    z = ((z ^ (z >> 27)) * _C2) & MASK64
    return z ^ (z >> 31)


def mix64_array(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> _U(30))) * _U(_C1)
    z = (z ^ (z >> _U(27))) * _U(_C2)
    return z ^ (z >> _U(31))


def element_hash(element_id: int, seed: int) -> int:
    return mix64((seed + (element_id + 1) * GOLDEN) & MASK64)


@dataclass(frozen=True)
class SketchConfig:
    m: int = 128
    hash_seed: int = 0

    def __post_init__(self):
        if self.m < 16 or self.m & (self.m - 1):
            raise ConfigError(f"register count must be a power of two >= 16, got {self.m}")
        if not 0 <= self.hash_seed <= MASK64:
            raise ConfigError("hash_seed must fit in 64 bits")

    @property
    def p(self) -> int:
        return self.m.bit_length() - 1


def hll_position_rank(element_id: int, config: SketchConfig) -> tuple[int, int]:
    """Register index and Geometric(1/2) rank for one element id."""
    h = element_hash(int(element_id), config.hash_seed)
    width = 64 - config.p
    rest = h >> config.p
    return h & (config.m - 1), width - rest.bit_length() + 1


def _bit_length_u64(x: np.ndarray) -> np.ndarray:
    # frexp is exact below 2**53, so split into 32-bit halves
    hi = (x >> _U(32)).astype(np.float64)
    lo = (x & _U(0xFFFFFFFF)).astype(np.float64)
    return np.where(hi > 0, 32 + np.frexp(hi)[1], np.frexp(lo)[1]).astype(np.int64)


def position_rank_array(ids, config: SketchConfig) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized :func:`hll_position_rank` for an array of ids."""
    ids = np.asarray(ids, dtype=np.int64).astype(np.uint64)
    h = mix64_array(_U(config.hash_seed) + (ids + _U(1)) * _U(GOLDEN))
    pos = (h & _U(config.m - 1)).astype(np.int64)
    rank = (64 - config.p) - _bit_length_u64(h >> _U(config.p)) + 1
    return pos, rank.astype(np.uint8)


def alpha_m(m: int) -> float:
    return {16: 0.673, 32: 0.697, 64: 0.709}.get(m, 0.7213 / (1.0 + 1.079 / m))


_POW2_NEG = 2.0 ** -np.arange(66, dtype=np.float64)


def estimate_from_registers(registers: np.ndarray) -> float:
    """Bias-corrected harmonic-mean estimate with small/large range corrections."""
    m = registers.size
    raw = alpha_m(m) * m * m / _POW2_NEG[registers].sum()
    return _corrected(raw, m, int(np.count_nonzero(registers == 0)))


def _corrected(raw: float, m: int, zeros: int) -> float:
    if raw <= 2.5 * m:
        return m * math.log(m / zeros) if zeros else raw
    if TWO_32 / 30.0 < raw < TWO_32:
        return -TWO_32 * math.log(1.0 - raw / TWO_32)
    return raw


@dataclass(eq=False)
class HllSketch:
    """An ``m``-register HyperLogLog sketch.

    >>> s = HllSketch(SketchConfig(m=16, hash_seed=7))
    >>> s.add_many(range(1000)).estimate() > 0
    True
    """

    config: SketchConfig = field(default_factory=SketchConfig)
    registers: np.ndarray = None

    def __post_init__(self):
        if self.registers is None:
            self.registers = np.zeros(self.config.m, dtype=np.uint8)
        else:
            self.registers = np.asarray(self.registers, dtype=np.uint8)
            if self.registers.shape != (self.config.m,):
                raise ConfigError(f"expected {self.config.m} registers, got {self.registers.shape}")
            if self.registers.max(initial=0) > 64:
                raise ConfigError("register values must lie in [0, 64]")

    @property
    def m(self) -> int:
        return self.config.m

    def add(self, element_id: int) -> "HllSketch":
        pos, rank = hll_position_rank(element_id, self.config)
        if rank > self.registers[pos]:
            self.registers[pos] = rank
        return self

    def add_many(self, ids) -> "HllSketch":
        pos, rank = position_rank_array(ids, self.config)
        np.maximum.at(self.registers, pos, rank)
        return self

    def _check_compatible(self, other: "HllSketch") -> None:
        if self.config != other.config:
            raise ConfigError(f"cannot merge sketches with configs {self.config} and {other.config}")

    def update(self, other: "HllSketch") -> "HllSketch":
        """In-place merge."""
        self._check_compatible(other)
        np.maximum(self.registers, other.registers, out=self.registers)
        return self

    def merge(self, other: "HllSketch") -> "HllSketch":
        self._check_compatible(other)
        return HllSketch(self.config, np.maximum(self.registers, other.registers))

    def reset(self) -> None:
        self.registers[:] = 0

    def copy(self) -> "HllSketch":
        return HllSketch(self.config, self.registers.copy())

    def estimate(self) -> float:
        return estimate_from_registers(self.registers)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HllSketch):
            return NotImplemented
        return self.config == other.config and np.array_equal(self.registers, other.registers)

    def to_bytes(self) -> bytes:
        return struct.pack("<IQ", self.m, self.config.hash_seed) + self.registers.tobytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "HllSketch":
        if len(buf) < 12:
            raise FormatError("truncated sketch header")
        m, seed = struct.unpack_from("<IQ", buf)
        if len(buf) != 12 + m:
            raise FormatError(f"sketch payload has {len(buf) - 12} bytes, expected {m}")
        return cls(SketchConfig(m, seed), np.frombuffer(buf, np.uint8, m, 12).copy())


def hll_insert(sketch: HllSketch, element_id: int) -> HllSketch:
    return sketch.add(element_id)


def hll_merge(a: HllSketch, b: HllSketch) -> HllSketch:
    return a.merge(b)


def hll_estimate(sketch: HllSketch) -> float:
    return sketch.estimate()
