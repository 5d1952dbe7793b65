"""Answering mechanisms.

Natural mechanisms see only the query's values on their own sample; general
mechanisms hold the sample and may evaluate the query wherever they like.
All answers are clamped to [0, 1], which keeps every mechanism admissible for
the games' bit-valued queries.
"""

from __future__ import annotations

import math

import numpy as np

from .core import Dataset, Query, query_mean_population

__all__ = [
    "empirical_mean",
    "rounded_empirical_mean",
    "gaussian_answer",
    "calibrate_sigma",
    "sample_split_answer",
    "oracle_answer",
    "lift_natural",
    "NaturalMechanism",
    "GeneralMechanism",
    "EmpiricalMeanMechanism",
    "RoundedMeanMechanism",
    "GaussianMechanism",
    "SampleSplitMechanism",
    "UniformAnswerMechanism",
    "OracleMechanism",
    "LiftedNaturalMechanism",
    "ProbingMechanism",
]


def _clamp01(x: float) -> float:
    return min(1.0, max(0.0, x))


# ---------------------------------------------------------------------------
# Plain answer rules
# ---------------------------------------------------------------------------


def empirical_mean(q_vals) -> float:
    """Mean of the sample evaluation vector."""
    q_vals = np.asarray(q_vals, dtype=np.float64)
    if q_vals.size == 0:
        raise ValueError("empty evaluation vector")
    return float(np.mean(q_vals))


def _round_ties_toward_zero(q: float) -> int:
    f = math.floor(q)
    rem = q - f
    if rem > 0.5:
        return f + 1
    if rem < 0.5:
        return f
    return f if q >= 0 else f + 1


def rounded_empirical_mean(q_vals, precision: float) -> float:
    """Empirical mean snapped to the nearest multiple of ``precision``.

    Half-way ties round toward zero, so transcripts are reproducible across
    implementations.
    """
    if precision <= 0:
        raise ValueError("precision must be positive")
    m = empirical_mean(q_vals)
    return _round_ties_toward_zero(m / precision) * precision


def gaussian_answer(q_vals, sigma: float, rng: np.random.Generator) -> float:
    """Empirical mean perturbed by centered Gaussian noise, clamped to [0, 1]."""
    if sigma < 0:
        raise ValueError("sigma must be >= 0")
    return _clamp01(empirical_mean(q_vals) + float(rng.normal(0.0, sigma)))


def calibrate_sigma(eps: float, delta: float, k: int) -> float:
    """Noise scale keeping k independent perturbations below eps/2 w.p. 1-delta.

    A per-query Gaussian tail bound with a union over the k rounds; this is a
    deliberately simple calibration, not a tight composition analysis.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    if not 0 < delta < 1:
        raise ValueError("delta must be in (0, 1)")
    if k < 1:
        raise ValueError("k must be >= 1")
    return eps / (2.0 * math.sqrt(2.0 * math.log(4.0 * k / delta)))


def sample_split_answer(state: "SampleSplitMechanism", q_vals) -> float:
    """Mean of the next unused chunk of the evaluation vector."""
    return state.answer(q_vals)


def oracle_answer(q: Query, pop) -> float:
    """Test control: the exact population mean, clamped to [0, 1]."""
    return _clamp01(query_mean_population(q, pop))


# ---------------------------------------------------------------------------
# Natural mechanisms (vector in, answer out)
# ---------------------------------------------------------------------------


class NaturalMechanism:
    """Base: answers from the evaluation vector alone."""

    wants_full_query = False

    def answer(self, q_vals: np.ndarray) -> float:
        raise NotImplementedError


class EmpiricalMeanMechanism(NaturalMechanism):
    def answer(self, q_vals):
        return _clamp01(empirical_mean(q_vals))


class RoundedMeanMechanism(NaturalMechanism):
    def __init__(self, precision: float):
        if precision <= 0:
            raise ValueError("precision must be positive")
        self.precision = precision

    def answer(self, q_vals):
        return _clamp01(rounded_empirical_mean(q_vals, self.precision))


class GaussianMechanism(NaturalMechanism):
    """Empirical mean plus calibrated Gaussian noise."""

    def __init__(self, sigma: float, rng: np.random.Generator):
        if sigma < 0:
            raise ValueError("sigma must be >= 0")
        self.sigma = sigma
        self.rng = rng

    def answer(self, q_vals):
        return gaussian_answer(q_vals, self.sigma, self.rng)


class SampleSplitMechanism(NaturalMechanism):
    """Classical fresh-chunk baseline: one disjoint block of the sample per query.

    Chunks are contiguous equal blocks; the last block absorbs the remainder.
    """

    def __init__(self, chunks: int):
        if chunks < 1:
            raise ValueError("chunks must be >= 1")
        self.chunks = chunks
        self.next_chunk = 0

    def answer(self, q_vals):
        q_vals = np.asarray(q_vals, dtype=np.float64)
        n = q_vals.size
        if self.chunks > n:
            raise ValueError(f"cannot split {n} values into {self.chunks} chunks")
        if self.next_chunk >= self.chunks:
            raise RuntimeError("sample-splitting chunks exhausted")
        size = n // self.chunks
        start = self.next_chunk * size
        stop = n if self.next_chunk == self.chunks - 1 else start + size
        self.next_chunk += 1
        return _clamp01(float(np.mean(q_vals[start:stop])))

    def chunk_ranges(self, n: int) -> list[tuple[int, int]]:
        size = n // self.chunks
        return [
            (c * size, n if c == self.chunks - 1 else (c + 1) * size)
            for c in range(self.chunks)
        ]


class UniformAnswerMechanism(NaturalMechanism):
    """Ignores the query entirely and answers uniformly at random."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng

    def answer(self, q_vals):
        return float(self.rng.random())


# ---------------------------------------------------------------------------
# General mechanisms (query object in, answer out)
# ---------------------------------------------------------------------------


class GeneralMechanism:
    """Base: holds its sample and may evaluate the query at arbitrary points."""

    def answer_query(self, q: Query) -> float:
        raise NotImplementedError


class OracleMechanism(GeneralMechanism):
    """Control mechanism answering the exact population mean.

    Not realizable by any player (it knows the population); used to check that
    the attack does not flag an answerer with zero population error.
    """

    wants_full_query = True

    def __init__(self, pop):
        self.pop = pop

    def answer_query(self, q):
        return oracle_answer(q, self.pop)


class LiftedNaturalMechanism(GeneralMechanism):
    """A natural mechanism run in the general game.

    Per query, evaluates at exactly the sample points (nothing else) and hands
    the vector to the wrapped mechanism.
    """

    def __init__(self, mech: NaturalMechanism, X: Dataset):
        self.mech = mech
        self.X = X

    def answer_query(self, q):
        vals = q.evaluate_many(self.X.points)
        return self.mech.answer(vals)


def lift_natural(mech: NaturalMechanism, X: Dataset) -> LiftedNaturalMechanism:
    """Wrap a natural mechanism for the general game over a fixed sample."""
    return LiftedNaturalMechanism(mech, X)


class ProbingMechanism(GeneralMechanism):
    """Answers the sample mean but also probes the query off-sample.

    Models an answerer trying to learn the query as a function: each round it
    evaluates the query at ``probes`` fresh points from ``probe_factory`` and
    memorizes the values.  Against masked queries the probes return one-time-
    padded bits, so the memory is useless and the mechanism fares no better
    than the plain empirical mean.
    """

    def __init__(self, X: Dataset, probe_factory, probes: int, rng: np.random.Generator):
        if probes < 0:
            raise ValueError("probes must be >= 0")
        self.X = X
        self.probe_factory = probe_factory
        self.probes = probes
        self.rng = rng
        self.memory: list[list[tuple[object, float]]] = []

    def answer_query(self, q):
        vals = q.evaluate_many(self.X.points)
        seen = []
        for _ in range(self.probes):
            pt = self.probe_factory(self.rng)
            seen.append((pt, q.evaluate(pt)))
        self.memory.append(seen)
        return _clamp01(float(np.mean(vals)))
