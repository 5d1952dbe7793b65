"""Core vocabulary: universe points, populations, datasets, queries, gaps.

Three universes appear in the games and each gets its own point type; queries
are bounded maps from points to [-1, 1].  Population means are always computed
exactly (support enumeration or closed form) — never by sampling — so that all
statistical tolerance lives in the mechanisms and attacks, not the metrics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bits import Bits

__all__ = [
    "Index",
    "Pair",
    "BitString",
    "UniformIndex",
    "UniformPairs",
    "UniformBits",
    "Dataset",
    "Query",
    "TableQuery",
    "MaskedQuery",
    "LiftedTableQuery",
    "MembershipQuery",
    "GapReport",
    "DomainError",
    "sample_dataset",
    "query_mean_sample",
    "query_mean_population",
    "phg_gap",
]


class DomainError(TypeError):
    """A query was evaluated on, or averaged over, the wrong universe."""


# ---------------------------------------------------------------------------
# Universe points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Index:
    """An element of the index universe {0, ..., N-1}."""

    i: int


@dataclass(frozen=True)
class Pair:
    """An element (i, y) of an index-times-bitvector universe."""

    i: int
    y: Bits


@dataclass(frozen=True)
class BitString:
    """An element of {0,1}^d."""

    bits: Bits


# ---------------------------------------------------------------------------
# Populations and datasets
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """An ordered sample of points, all from one universe."""

    points: tuple

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    def __len__(self) -> int:
        return len(self.points)

    def index_array(self) -> np.ndarray:
        """Indices of Index/Pair points as an int64 array (for fast paths)."""
        return np.fromiter((pt.i for pt in self.points), dtype=np.int64, count=len(self.points))


class UniformIndex:
    """Uniform distribution over {0, ..., N-1}."""

    def __init__(self, N: int):
        if N < 1:
            raise ValueError("N must be >= 1")
        self.N = N

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        idx = rng.integers(0, self.N, size=n)
        return Dataset(tuple(Index(int(i)) for i in idx))

    def __repr__(self):
        return f"UniformIndex(N={self.N})"


class UniformPairs:
    """Uniform distribution over an explicit support of N pairs (i, y_i).

    The support is the whole story: the games only ever put mass on the N
    pairs that carry each index's own bit-vector, so the population is
    represented by that list rather than by the full index-times-bits product.
    """

    def __init__(self, pairs: Sequence[Pair]):
        if not pairs:
            raise ValueError("support must be non-empty")
        self.pairs = tuple(pairs)
        self.N = len(self.pairs)

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        # Drawing indices first keeps the index stream identical to the
        # corresponding UniformIndex population under a shared seed.
        idx = rng.integers(0, self.N, size=n)
        return Dataset(tuple(self.pairs[int(i)] for i in idx))

    def __repr__(self):
        return f"UniformPairs(N={self.N}, width={len(self.pairs[0].y)})"


class UniformBits:
    """Uniform distribution over {0,1}^d."""

    def __init__(self, d: int):
        if not 1 <= d <= 62:
            raise ValueError("d must be in [1, 62]")
        self.d = d

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        vals = rng.integers(0, 1 << self.d, size=n, dtype=np.int64)
        return Dataset(tuple(BitString(Bits.from_int(int(v), self.d)) for v in vals))

    def __repr__(self):
        return f"UniformBits(d={self.d})"


def sample_dataset(pop, n: int, rng: np.random.Generator) -> Dataset:
    """n iid draws from ``pop``, in draw order; deterministic given the rng."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return pop.sample(n, rng)


# ---------------------------------------------------------------------------
# Queries
# ---------------------------------------------------------------------------


class Query:
    """A bounded statistical query: points -> [-1, 1].

    Carries a count of point evaluations so tests can check that pipelines
    which are supposed to see only sample values never evaluate the query
    anywhere else.
    """

    def __init__(self):
        self.evaluations = 0

    def _value(self, point) -> float:
        raise NotImplementedError

    def evaluate(self, point) -> float:
        v = self._value(point)
        self.evaluations += 1
        assert -1.0 <= v <= 1.0, f"query value {v} outside [-1, 1]"
        return v

    def evaluate_many(self, points) -> np.ndarray:
        return np.array([self.evaluate(pt) for pt in points], dtype=np.float64)


class TableQuery(Query):
    """A dense table over the index universe {0, ..., N-1}."""

    def __init__(self, values: np.ndarray, validate: bool = True):
        super().__init__()
        values = np.asarray(values, dtype=np.float64)
        if validate:
            if values.ndim != 1 or values.size == 0:
                raise ValueError("table must be a non-empty 1-d array")
            if np.any(values < -1.0) or np.any(values > 1.0):
                raise ValueError("table entries must lie in [-1, 1]")
        self.values = values
        self.N = values.size

    def _value(self, point) -> float:
        if not isinstance(point, Index):
            raise DomainError(f"table query expects Index points, got {type(point).__name__}")
        if not 0 <= point.i < self.N:
            raise DomainError(f"index {point.i} outside [0, {self.N})")
        return float(self.values[point.i])

    def evaluate_at_indices(self, idx: np.ndarray) -> np.ndarray:
        """Bulk evaluation at an index array; counts one evaluation per entry."""
        out = self.values[idx]
        self.evaluations += len(idx)
        return out


class MaskedQuery(Query):
    """A bit-valued table lifted to the pairs universe with per-item masks.

    Value at (i, y) is the bit  y[j] XOR mask_i[j] XOR base[i],  so on the
    support point (i, mask_i) it reduces to base[i] exactly.
    """

    def __init__(self, base_bits: np.ndarray, instance, j: int):
        super().__init__()
        base_bits = np.asarray(base_bits)
        if not np.isin(base_bits, (0, 1)).all():
            raise ValueError("base query must be bit-valued")
        if not 0 <= j < instance.k:
            raise ValueError(f"coordinate {j} outside [0, {instance.k})")
        self.base_bits = base_bits.astype(np.float64)
        self._base_int = base_bits.astype(np.uint8)
        self.instance = instance
        self.j = j

    def _value(self, point) -> float:
        if not isinstance(point, Pair):
            raise DomainError(f"masked query expects Pair points, got {type(point).__name__}")
        inst = self.instance
        if not 0 <= point.i < inst.N:
            raise DomainError(f"index {point.i} outside [0, {inst.N})")
        b = (
            inst.point_bit(point.y, self.j)
            ^ inst.mask_bit(point.i, self.j)
            ^ int(self._base_int[point.i])
        )
        return float(b)


class LiftedTableQuery(Query):
    """A real-valued index table read on the pairs universe, ignoring the bits.

    Because the pair populations put mass only on (i, y_i), projecting onto
    the index coordinate preserves both the sample and the population mean of
    the underlying table exactly.
    """

    def __init__(self, values: np.ndarray):
        super().__init__()
        self._table = TableQuery(values)
        self.values = self._table.values
        self.N = self._table.N

    def _value(self, point) -> float:
        if not isinstance(point, Pair):
            raise DomainError(f"lifted table expects Pair points, got {type(point).__name__}")
        if not 0 <= point.i < self.N:
            raise DomainError(f"index {point.i} outside [0, {self.N})")
        return float(self.values[point.i])


class MembershipQuery(Query):
    """Indicator of a finite set of bit-strings: inside/outside values."""

    def __init__(self, members, inside: float = 1.0, outside: float = -1.0):
        super().__init__()
        if not -1.0 <= inside <= 1.0 or not -1.0 <= outside <= 1.0:
            raise ValueError("inside/outside values must lie in [-1, 1]")
        self.members = frozenset(
            m.bits if isinstance(m, BitString) else m for m in members
        )
        for m in self.members:
            if not isinstance(m, Bits):
                raise TypeError("members must be BitString points or Bits")
        self.inside = float(inside)
        self.outside = float(outside)

    def _value(self, point) -> float:
        if not isinstance(point, BitString):
            raise DomainError(f"membership query expects BitString points, got {type(point).__name__}")
        return self.inside if point.bits in self.members else self.outside


# ---------------------------------------------------------------------------
# Means and gaps
# ---------------------------------------------------------------------------


def query_mean_sample(q: Query, X: Dataset) -> float:
    """Arithmetic mean of q over the sample, evaluating point by point."""
    if len(X) == 0:
        raise ValueError("empty dataset")
    if isinstance(q, TableQuery) and all(isinstance(p, Index) for p in X.points):
        return float(np.mean(q.evaluate_at_indices(X.index_array())))
    return float(np.mean(q.evaluate_many(X.points)))


def query_mean_population(q: Query, pop) -> float:
    """Exact population mean of q under pop (enumeration or closed form)."""
    if isinstance(pop, UniformIndex):
        if isinstance(q, (TableQuery, LiftedTableQuery)):
            if q.N != pop.N:
                raise DomainError(f"table size {q.N} != universe size {pop.N}")
            return float(np.mean(q.values))
        raise DomainError(f"no exact mean for {type(q).__name__} over UniformIndex")
    if isinstance(pop, UniformPairs):
        if isinstance(q, MaskedQuery) and q.instance.population is pop:
            # On the support, every value reduces to the base bit.
            return float(np.mean(q.base_bits))
        if isinstance(q, LiftedTableQuery):
            idx = np.fromiter((p.i for p in pop.pairs), dtype=np.int64, count=pop.N)
            return float(np.mean(q.values[idx]))
        if isinstance(q, (MaskedQuery, MembershipQuery, TableQuery)) or isinstance(q, Query):
            try:
                return float(np.mean([q._value(pt) for pt in pop.pairs]))
            except DomainError:
                raise
        raise DomainError(f"no exact mean for {type(q).__name__} over UniformPairs")
    if isinstance(pop, UniformBits):
        if isinstance(q, MembershipQuery):
            inside_count = sum(1 for m in q.members if len(m) == pop.d)
            if inside_count > (1 << pop.d):
                raise DomainError("member set larger than the universe")
            frac = inside_count / float(1 << pop.d)
            return q.outside + (q.inside - q.outside) * frac
        raise DomainError(f"no exact mean for {type(q).__name__} over UniformBits")
    raise DomainError(f"unsupported population {type(pop).__name__}")


@dataclass(frozen=True)
class GapReport:
    """Sample mean, population mean, and their signed difference."""

    sample_mean: float
    population_mean: float
    gap: float


def phg_gap(q: Query, X: Dataset, pop) -> GapReport:
    """The generalization gap of q: sample mean minus exact population mean."""
    s = query_mean_sample(q, X)
    p = query_mean_population(q, pop)
    return GapReport(sample_mean=s, population_mean=p, gap=s - p)
