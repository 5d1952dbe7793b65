"""Composition counterexamples built on prefix-rank padding.

The pad mechanism encodes a block of its own sample as one big integer and
adds, modulo k!, the lexicographic rank of the permutation that sorts its
first k elements.  On a randomly ordered distinct dataset that rank is a
perfect one-time pad, so a single output is uniform and independent of the
data multiset; but anyone who learns the prefix can strip the pad, which is
exactly what the chained attack does stage by stage until the whole dataset
is recovered and a membership query separates sample from population by
almost the maximum possible gap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .bits import Bits
from .core import BitString, Dataset, MembershipQuery

__all__ = [
    "PermRank",
    "PadParams",
    "CompositionSchedule",
    "DecryptRangeError",
    "perm_rank",
    "encode_block",
    "decode_block",
    "prefix_rank_pad",
    "prefix_rank_unpad",
    "reveal_prefix",
    "composition_attack",
    "CompositionAttackResult",
    "prg_prefix_pad",
    "prg_prefix_unpad",
    "prg_pad_seed_length",
    "low_bits_sd",
    "pad_uniformity_report",
    "UniformityReport",
    "uniform_below",
]


class DecryptRangeError(ValueError):
    """Recovered payload out of range: duplicates in the data or a corrupted transcript."""


def _as_bits_list(X) -> list[Bits]:
    if isinstance(X, Dataset):
        pts = X.points
    else:
        pts = X
    out = []
    for p in pts:
        if isinstance(p, BitString):
            out.append(p.bits)
        elif isinstance(p, Bits):
            out.append(p)
        else:
            raise TypeError(f"expected BitString or Bits elements, got {type(p).__name__}")
    return out


def uniform_below(bound: int, rng: np.random.Generator) -> int:
    """Uniform integer in [0, bound), exact for arbitrary-precision bounds."""
    if bound < 1:
        raise ValueError("bound must be >= 1")
    nbits = (bound - 1).bit_length() or 1
    nbytes = (nbits + 7) // 8
    shift = 8 * nbytes - nbits
    while True:
        v = int.from_bytes(rng.bytes(nbytes), "big") >> shift
        if v < bound:
            return v


# ---------------------------------------------------------------------------
# Permutation ranking (Lehmer code, lexicographic)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PermRank:
    """A permutation's lexicographic index among all k! orderings."""

    value: int
    modulus: int

    def __post_init__(self):
        if not 0 <= self.value < self.modulus:
            raise ValueError(f"rank {self.value} outside [0, {self.modulus})")


def perm_rank(prefix: Sequence) -> PermRank:
    """Rank of the index permutation that sorts the prefix.

    Elements are compared as big-endian integers.  With sigma(j) = position of
    the j-th smallest element (1-based), the rank is the lexicographic index
    of the sequence (sigma(1), ..., sigma(k)), via its Lehmer code.
    """
    elems = _as_bits_list(prefix)
    k = len(elems)
    if k < 1:
        raise ValueError("prefix must be non-empty")
    vals = [int(b) for b in elems]
    if len(set(vals)) != k:
        raise ValueError("prefix elements must be distinct")
    sigma = sorted(range(k), key=vals.__getitem__)  # 0-based index sequence
    rank = 0
    fact = math.factorial(k - 1)
    for j in range(k):
        smaller_later = sum(1 for l in range(j + 1, k) if sigma[l] < sigma[j])
        rank += smaller_later * fact
        if j < k - 1:
            fact //= k - 1 - j
    return PermRank(value=rank, modulus=math.factorial(k))


# ---------------------------------------------------------------------------
# Block numbering
# ---------------------------------------------------------------------------


def encode_block(elems: Sequence) -> int:
    """Read t equal-width bit-strings, first element most significant, as one integer."""
    parts = _as_bits_list(elems)
    if not parts:
        raise ValueError("cannot encode an empty block")
    d = len(parts[0])
    if any(len(p) != d for p in parts):
        raise ValueError("all block elements must have equal width")
    return int(Bits.concat(parts))


def decode_block(m: int, t: int, d: int) -> list[Bits]:
    """Exact inverse of encode_block for t elements of d bits."""
    if m < 0 or m >> (d * t):
        raise DecryptRangeError(f"payload {m} does not fit in {t} x {d} bits")
    return Bits.from_int(m, d * t).split(d)


# ---------------------------------------------------------------------------
# The pad mechanism (information-theoretic form)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PadParams:
    """One pad stage: prefix length k, payload length t, element width d."""

    k: int
    t: int
    d: int
    n: int

    def __post_init__(self):
        if min(self.k, self.t, self.d, self.n) < 1:
            raise ValueError("all parameters must be >= 1")
        if self.k + self.t > self.n:
            raise ValueError(f"prefix {self.k} + payload {self.t} exceeds n={self.n}")
        if 1 << (self.d * self.t) > math.factorial(self.k):
            raise ValueError(
                f"payload space 2^{self.d * self.t} exceeds pad space {self.k}!"
            )

    @property
    def modulus(self) -> int:
        return math.factorial(self.k)


def prefix_rank_pad(X, params: PadParams, rng: np.random.Generator) -> int:
    """Pad the payload block with the prefix's permutation rank, modulo k!.

    If the sample is not fully distinct the output is drawn uniformly instead,
    so the mechanism's output stays uniform on {0, ..., k!-1} either way.
    """
    elems = _as_bits_list(X)
    if len(elems) != params.n:
        raise ValueError(f"expected {params.n} elements, got {len(elems)}")
    if any(len(e) != params.d for e in elems):
        raise ValueError(f"all elements must have width {params.d}")
    if len({int(e) for e in elems}) != params.n:
        return uniform_below(params.modulus, rng)
    r = perm_rank(elems[: params.k]).value
    m = encode_block(elems[params.k : params.k + params.t])
    return (m + r) % params.modulus


def prefix_rank_unpad(c: int, known_prefix: Sequence, params: PadParams) -> list[Bits]:
    """Strip the pad with the known prefix and decode the payload block."""
    if not 0 <= c < params.modulus:
        raise ValueError(f"ciphertext {c} outside [0, {params.modulus})")
    prefix = _as_bits_list(known_prefix)
    if len(prefix) != params.k:
        raise ValueError(f"need exactly {params.k} prefix elements")
    r = perm_rank(prefix).value
    m = (c - r) % params.modulus
    return decode_block(m, params.t, params.d)


def reveal_prefix(X, count: int) -> list[Bits]:
    """The trivially generalizing first mechanism: output the first ``count`` elements."""
    elems = _as_bits_list(X)
    if count > len(elems):
        raise ValueError(f"cannot reveal {count} of {len(elems)} elements")
    return elems[:count]


# ---------------------------------------------------------------------------
# Stage schedule
# ---------------------------------------------------------------------------


def _min_prefix_for_width(d: int) -> int:
    k = 1
    while math.factorial(k) < (1 << d):
        k += 1
    return k


@dataclass(frozen=True)
class CompositionSchedule:
    """Pad stages that, chained after a prefix reveal, cover the whole sample.

    The nominal growth rate is t = alpha*k/20 per stage; at desk scale this
    rounds to zero and the pad space k! can be smaller than one element's
    2^d encodings, so the payload is floored at one element, capped so it
    still fits the pad space, and the initial revealed prefix is raised to
    the smallest k with k! >= 2^d.
    """

    n: int
    alpha: float
    d: int
    m1_reveal: int
    stages: tuple[PadParams, ...]

    @classmethod
    def create(cls, n: int, alpha: float, d: int | None = None) -> "CompositionSchedule":
        if n < 2:
            raise ValueError("n must be >= 2")
        if not 0 < alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if d is None:
            d = 5 * math.ceil(math.log2(n))
        k = max(math.ceil(n**alpha), _min_prefix_for_width(d))
        if k >= n:
            raise ValueError(
                f"n={n} too small: a decodable prefix needs {k} of the n elements"
            )
        m1_reveal = k
        stages = []
        while k < n:
            t_cap = (math.factorial(k).bit_length() - 1) // d  # floor(log2(k!)) // d
            t = min(max(1, math.floor(alpha * k / 20)), t_cap, n - k)
            stages.append(PadParams(k=k, t=t, d=d, n=n))
            k += t
        return cls(n=n, alpha=alpha, d=d, m1_reveal=m1_reveal, stages=tuple(stages))


# ---------------------------------------------------------------------------
# The chained attack
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CompositionAttackResult:
    success: bool
    recovered: tuple[Bits, ...] | None
    query: MembershipQuery | None
    failed_stage: int | None


def composition_attack(
    m1_output: Sequence,
    stage_outputs: Sequence[int],
    schedule: CompositionSchedule,
) -> CompositionAttackResult:
    """Decrypt stage by stage and build the separating membership query.

    Any stage whose payload falls out of range means the dataset had
    duplicates (or the transcript is corrupt); the attack then reports
    failure rather than raising.
    """
    revealed = _as_bits_list(m1_output)
    if len(revealed) != schedule.m1_reveal:
        raise ValueError(
            f"first mechanism must reveal {schedule.m1_reveal} elements, got {len(revealed)}"
        )
    if len(stage_outputs) != len(schedule.stages):
        raise ValueError("one output per schedule stage required")
    recovered = list(revealed)
    for idx, (params, c) in enumerate(zip(schedule.stages, stage_outputs)):
        try:
            recovered.extend(prefix_rank_unpad(c, recovered[: params.k], params))
        except (DecryptRangeError, ValueError):
            return CompositionAttackResult(False, None, None, idx)
    query = MembershipQuery(frozenset(recovered), inside=1.0, outside=-1.0)
    return CompositionAttackResult(True, tuple(recovered), query, None)


# ---------------------------------------------------------------------------
# The pad mechanism (expander form): one stage covers the whole suffix
# ---------------------------------------------------------------------------


def prg_pad_seed_length(k: int) -> int:
    """Seed width harvested from the prefix rank: (k/8)*log2(k) bits, min 16.

    The nominal width falls below the expander's 16-bit minimum for small k,
    so it is floored there; decryption only needs encoder and decoder to
    agree on the width.
    """
    return max(16, math.floor(k / 8 * math.log2(k))) if k > 1 else 16


def prg_prefix_pad(X, k: int, ell: int, rng: np.random.Generator, expander) -> Bits:
    """XOR the entire suffix with an expander stream seeded by the prefix rank.

    The seed is the ell least-significant bits of the rank's binary
    representation (uniform rank => near-uniform seed).  Duplicated samples
    fall back to a uniformly random rank.
    """
    if ell < 16:
        raise ValueError("seed length must be >= 16")
    elems = _as_bits_list(X)
    n = len(elems)
    if not 1 <= k < n:
        raise ValueError(f"prefix length {k} must be in [1, {n})")
    d = len(elems[0])
    if any(len(e) != d for e in elems):
        raise ValueError("all elements must have equal width")
    if len({int(e) for e in elems}) == n:
        p = perm_rank(elems[:k]).value
    else:
        p = uniform_below(math.factorial(k), rng)
    seed = Bits.from_int(p & ((1 << ell) - 1), ell)
    stream = expander(seed, d * (n - k))
    return Bits.concat(elems[k:]) ^ stream


def prg_prefix_unpad(c: Bits, known_prefix: Sequence, ell: int, expander) -> list[Bits]:
    """Recompute the seed from the prefix, strip the stream, split into elements."""
    prefix = _as_bits_list(known_prefix)
    d = len(prefix[0])
    p = perm_rank(prefix).value
    seed = Bits.from_int(p & ((1 << ell) - 1), ell)
    stream = expander(seed, len(c))
    return (c ^ stream).split(d)


# ---------------------------------------------------------------------------
# Exact and statistical distribution checks
# ---------------------------------------------------------------------------


def low_bits_sd(N: int, ell: int) -> Fraction:
    """Exact statistical distance of the ell LSBs of U{0..N-1} from uniform."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= ell <= max((N - 1).bit_length(), 1):
        raise ValueError(f"ell={ell} out of range for N={N}")
    buckets = 1 << ell
    q, r = divmod(N, buckets)
    # r residues occur q+1 times, the rest q times.
    heavy = Fraction(q + 1, N) - Fraction(1, buckets)
    light = Fraction(1, buckets) - Fraction(q, N)
    return (r * heavy + (buckets - r) * light) / 2


@dataclass(frozen=True)
class UniformityReport:
    """Chi-square evidence that pad outputs are uniform and data-independent."""

    modulus: int
    trials: int
    counts: tuple
    uniform_pvalues: tuple[float, ...]
    two_sample_pvalue: float | None


def pad_uniformity_report(
    params: PadParams,
    datasets: Sequence,
    trials: int,
    rng: np.random.Generator,
) -> UniformityReport:
    """Run the pad on random re-orderings of fixed datasets and test uniformity.

    Each trial permutes a dataset uniformly before padding, which is the
    setting in which the output is exactly uniform.  With two datasets a
    two-sample homogeneity test checks that the conditional output
    distributions are indistinguishable.
    """
    modulus = params.modulus
    if modulus > 10_000:
        raise ValueError("exhaustive uniformity test needs k! <= 10000 (k <= 7)")
    all_counts = []
    for ds in datasets:
        elems = _as_bits_list(ds)
        counts = np.zeros(modulus, dtype=np.int64)
        for _ in range(trials):
            order = rng.permutation(len(elems))
            shuffled = [elems[i] for i in order]
            counts[prefix_rank_pad(shuffled, params, rng)] += 1
        all_counts.append(counts)
    pvals = tuple(float(stats.chisquare(c).pvalue) for c in all_counts)
    two_sample = None
    if len(all_counts) >= 2:
        table = np.vstack(all_counts[:2])
        two_sample = float(stats.chi2_contingency(table).pvalue)
    return UniformityReport(
        modulus=modulus,
        trials=trials,
        counts=tuple(all_counts),
        uniform_pvalues=pvals,
        two_sample_pvalue=two_sample,
    )
