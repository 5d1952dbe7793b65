"""Mask liftings: turning the index-universe attack into attacks on pairs.

A lifted universe attaches a bit-vector to every index: truly random per-item
masks, or short seeds stretched by a deterministic expander.  Round queries
XOR the point's vector coordinate with the item's own, so on the population
support they agree with the base query exactly, while off-support evaluations
are one-time-padded noise.
"""

from __future__ import annotations

import hashlib
import math
from typing import Callable, Sequence

import numpy as np

from .bits import Bits
from .core import Dataset, LiftedTableQuery, MaskedQuery, Pair, TableQuery, UniformPairs
from .mechanisms import GeneralMechanism, NaturalMechanism

__all__ = [
    "MaskInstance",
    "PrgInstance",
    "build_masked_instance",
    "build_prg_instance",
    "lift_query",
    "lift_query_prg",
    "lift_final_query",
    "prg_expand",
    "default_seed_length",
    "simulate_natural",
    "NaturalSimulator",
]


def _draw_packed_rows(N: int, width: int, rng: np.random.Generator) -> np.ndarray:
    """N uniform packed bit-rows of the given width, padding bits zeroed."""
    nbytes = (width + 7) // 8
    packed = rng.integers(0, 256, size=(N, nbytes), dtype=np.uint8)
    if width % 8:
        packed[:, -1] &= (0xFF << (8 - width % 8)) & 0xFF
    return packed


def _packed_bit(packed_row: np.ndarray, j: int) -> int:
    return (int(packed_row[j >> 3]) >> (7 - (j & 7))) & 1


class MaskInstance:
    """Per-item uniform masks m_i in {0,1}^k and the pair population they induce."""

    def __init__(self, packed_masks: np.ndarray, k: int):
        if packed_masks.ndim != 2 or packed_masks.shape[1] != (k + 7) // 8:
            raise ValueError("packed mask table has wrong shape")
        self.N = packed_masks.shape[0]
        self.k = k
        self._packed = packed_masks
        self.population = UniformPairs(
            tuple(Pair(i, self.mask_row(i)) for i in range(self.N))
        )

    @classmethod
    def from_rows(cls, rows: Sequence[Bits]) -> "MaskInstance":
        k = len(rows[0])
        if any(len(r) != k for r in rows):
            raise ValueError("all mask rows must have equal length")
        packed = np.frombuffer(b"".join(r.packed for r in rows), dtype=np.uint8)
        return cls(packed.reshape(len(rows), (k + 7) // 8).copy(), k)

    def mask_row(self, i: int) -> Bits:
        return Bits(self._packed[i].tobytes(), self.k)

    def mask_bit(self, i: int, j: int) -> int:
        return _packed_bit(self._packed[i], j)

    def point_bit(self, y: Bits, j: int) -> int:
        """The j-th coordinate a point's bit-vector contributes to a query."""
        return y.bit(j)


def build_masked_instance(N: int, k: int, rng: np.random.Generator) -> MaskInstance:
    """N independent uniform mask rows of length k."""
    if N < 1 or k < 1:
        raise ValueError("N and k must be >= 1")
    return MaskInstance(_draw_packed_rows(N, k, rng), k)


# ---------------------------------------------------------------------------
# Deterministic expander and seed-based instances
# ---------------------------------------------------------------------------

_EXPAND_DOMAIN = b"sqgames.expander.v1:"


def prg_expand(seed: Bits, out_len: int) -> Bits:
    """Expand a seed to ``out_len`` bits with SHAKE-256.

    Deterministic and byte-exact across platforms.  The seed length is part of
    the hash input, so seeds of different widths never collide.
    """
    if len(seed) < 16:
        raise ValueError(f"seed must have at least 16 bits, got {len(seed)}")
    if out_len < 1:
        raise ValueError("out_len must be >= 1")
    h = hashlib.shake_256()
    h.update(_EXPAND_DOMAIN)
    h.update(len(seed).to_bytes(4, "big"))
    h.update(seed.packed)
    buf = bytearray(h.digest((out_len + 7) // 8))
    if out_len % 8:
        buf[-1] &= (0xFF << (8 - out_len % 8)) & 0xFF
    return Bits(bytes(buf), out_len)


def default_seed_length(k: int) -> int:
    """Default seed width for k mask coordinates (whole bytes, minimum 16 bits)."""
    return max(16, math.ceil(k**0.25) * 16)


class PrgInstance:
    """Per-item seeds s_i with expander-derived masks G(s_i) of length k.

    The expander is pluggable; anything deterministic with the right output
    length works, which is also how the ideal-substitution tests replace it
    with true randomness.
    """

    def __init__(
        self,
        packed_seeds: np.ndarray,
        ell: int,
        k: int,
        expander: Callable[[Bits, int], Bits] = prg_expand,
    ):
        self.N = packed_seeds.shape[0]
        self.k = k
        self.ell = ell
        self.expander = expander
        self._packed_seeds = packed_seeds
        rows = []
        for i in range(self.N):
            seed = Bits(packed_seeds[i].tobytes(), ell)
            row = expander(seed, k)
            if len(row) != k:
                raise ValueError("expander returned wrong output length")
            rows.append(row)
        self._packed_rows = np.frombuffer(
            b"".join(r.packed for r in rows), dtype=np.uint8
        ).reshape(self.N, (k + 7) // 8)
        self.population = UniformPairs(
            tuple(Pair(i, self.seed_row(i)) for i in range(self.N))
        )
        self._point_cache: dict[Bits, Bits] = {}

    def seed_row(self, i: int) -> Bits:
        return Bits(self._packed_seeds[i].tobytes(), self.ell)

    def mask_bit(self, i: int, j: int) -> int:
        return _packed_bit(self._packed_rows[i], j)

    def point_bit(self, y: Bits, j: int) -> int:
        expanded = self._point_cache.get(y)
        if expanded is None:
            expanded = self.expander(y, self.k)
            if len(self._point_cache) >= 4096:
                self._point_cache.clear()
            self._point_cache[y] = expanded
        return expanded.bit(j)


def build_prg_instance(
    N: int,
    k: int,
    ell: int | None = None,
    rng: np.random.Generator | None = None,
    expander: Callable[[Bits, int], Bits] = prg_expand,
) -> PrgInstance:
    """N independent uniform seeds of width ell, expanded to k-bit masks."""
    if rng is None:
        raise ValueError("rng is required")
    if N < 1 or k < 1:
        raise ValueError("N and k must be >= 1")
    if ell is None:
        ell = default_seed_length(k)
    if ell < 16:
        raise ValueError("seed length must be >= 16")
    return PrgInstance(_draw_packed_rows(N, ell, rng), ell, k, expander)


# ---------------------------------------------------------------------------
# Query lifting
# ---------------------------------------------------------------------------


def _base_bits(q_hat) -> np.ndarray:
    values = q_hat.values if isinstance(q_hat, TableQuery) else np.asarray(q_hat)
    if not np.isin(values, (0, 1)).all():
        raise ValueError("only bit-valued base queries can be mask-lifted")
    return values


def lift_query(q_hat, inst, j: int) -> MaskedQuery:
    """Lift a bit-valued index table to the pairs universe at coordinate j.

    On the support point carrying item i's own vector the value is exactly
    the base bit; everywhere else it is XOR-padded.
    """
    base = _base_bits(q_hat)
    if base.size != inst.N:
        raise ValueError(f"base query size {base.size} != instance size {inst.N}")
    return MaskedQuery(base, inst, j)


def lift_query_prg(q_hat, inst: PrgInstance, j: int) -> MaskedQuery:
    """Same contract as lift_query, with expander-derived masks."""
    return lift_query(q_hat, inst, j)


def lift_final_query(q_star) -> LiftedTableQuery:
    """Lift a real-valued index table by ignoring the bit coordinate.

    Gap-preserving: the pair populations are supported on one pair per index,
    so both means coincide with the index-universe ones exactly.
    """
    values = q_star.values if isinstance(q_star, TableQuery) else np.asarray(q_star)
    return LiftedTableQuery(values)


# ---------------------------------------------------------------------------
# Natural-game simulation of a general mechanism
# ---------------------------------------------------------------------------


class NaturalSimulator(NaturalMechanism):
    """Adapter running a general mechanism behind a natural-game interface.

    Receives only the base query's values on the index sample, internally
    rebuilds a full lifted query over its own freshly drawn masks (zero base
    off-sample), and delegates to the wrapped general mechanism on the pair
    dataset.  The wrapped mechanism's view matches what it would see in the
    general game.
    """

    def __init__(
        self,
        mech_factory: Callable[[Dataset], GeneralMechanism],
        idx_sample: Sequence[int],
        N: int,
        k: int,
        rng: np.random.Generator,
    ):
        self.inst = build_masked_instance(N, k, rng)
        self.idx_sample = [int(i) for i in idx_sample]
        if any(not 0 <= i < N for i in self.idx_sample):
            raise ValueError("sample index outside universe")
        self.X = Dataset(tuple(Pair(i, self.inst.mask_row(i)) for i in self.idx_sample))
        self.mech = mech_factory(self.X)
        self.rounds_done = 0
        self.k = k

    def answer(self, q_vals):
        if self.rounds_done >= self.k:
            raise RuntimeError(f"all {self.k} mask coordinates used")
        q_vals = np.asarray(q_vals)
        if not np.isin(q_vals, (0, 1)).all():
            raise ValueError("simulated natural game requires bit-valued queries")
        base = np.zeros(self.inst.N)
        base[self.idx_sample] = q_vals
        q = MaskedQuery(base, self.inst, self.rounds_done)
        a = float(self.mech.answer_query(q))
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"wrapped mechanism answered {a} outside [0, 1]")
        self.rounds_done += 1
        return a


def simulate_natural(
    mech_factory: Callable[[Dataset], GeneralMechanism],
    idx_sample: Sequence[int],
    N: int,
    k: int,
    rng: np.random.Generator,
) -> NaturalSimulator:
    """Build the natural-game adapter around a general mechanism."""
    return NaturalSimulator(mech_factory, idx_sample, N, k, rng)
