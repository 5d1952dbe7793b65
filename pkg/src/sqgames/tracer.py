"""The tracing analyst for the natural-mechanism game.

Each round it draws a bias p uniformly, issues a Bernoulli(p) panel query over
the index universe (zeroed on already-accused items), and correlates the
mechanism's answer with each item's draw.  Items whose accumulated correlation
score crosses the accusation threshold are frozen out of future rounds.  After
k rounds the normalized score table itself is the final query, whose
sample-vs-population gap certifies the generalization violation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import TableQuery

__all__ = [
    "TracerConfig",
    "Tracer",
    "attack_init",
    "next_query",
    "trunc",
    "process_answer",
    "final_query",
    "fingerprinting_lemma_estimate",
]


def trunc(x: float, bound: float) -> float:
    """Nearest point of [-bound, bound] to x."""
    if bound <= 0:
        raise ValueError("bound must be positive")
    if x > bound:
        return bound
    if x < -bound:
        return -bound
    return x


@dataclass(frozen=True)
class TracerConfig:
    """Derived attack parameters.

    The universe is inflated to N = ceil(8n/eps) items and the accusation
    threshold uses a natural logarithm (the tail bound it comes from is
    stated in nats).
    """

    n: int
    eps: float
    k: int
    N: int
    tau: float
    accuse_threshold: float  # tau - 1, kept unrounded

    @classmethod
    def create(cls, n: int, eps: float, k: int) -> "TracerConfig":
        if not 0 < eps < 1:
            raise ValueError("eps must be in (0, 1)")
        if n < 1 or k < 1:
            raise ValueError("n and k must be >= 1")
        N = math.ceil(8 * n / eps)
        base = 9.0 * eps * math.sqrt(2.0 * k * math.log(96.0 / eps))
        return cls(n=n, eps=eps, k=k, N=N, tau=base + 1.0, accuse_threshold=base)


class Tracer:
    """Mutable per-game attack state: one instance per game, single-threaded."""

    def __init__(self, n: int, eps: float, k: int):
        cfg = TracerConfig.create(n, eps, k)
        self.config = cfg
        N = cfg.N
        self.rounds_done = 0
        self.scores = np.zeros(N)
        # 1.0 while an item is unaccused; doubles as the query/score gate.
        self.active = np.ones(N)
        self.bias: float | None = None
        self._round_values: np.ndarray | None = None
        # Running upper bound on max |score| over active items.  Scores move
        # by at most |trunc(a - p)| <= 1 per round, so an exact accusation
        # scan is only needed in rounds where this bound crosses the
        # threshold; in between, no item can possibly have crossed.
        self._score_bound = 0.0
        self._ubuf = np.empty(N)
        self._buf = np.empty(N)

    # -- round protocol ----------------------------------------------------

    def next_query(self, rng: np.random.Generator) -> TableQuery:
        """Draw the round's bias and Bernoulli panel; returns the round query."""
        if self.rounds_done >= self.config.k:
            raise RuntimeError(f"all {self.config.k} rounds already played")
        if self.bias is not None:
            raise RuntimeError("previous round's answer not yet processed")
        p = float(rng.random())
        rng.random(out=self._ubuf)
        values = (self._ubuf < p).astype(np.float64)
        values *= self.active  # accused items always read 0
        self.bias = p
        self._round_values = values
        return TableQuery(values, validate=False)

    def process_answer(self, a: float) -> None:
        """Fold the mechanism's answer into the per-item correlation scores."""
        if self.bias is None:
            raise RuntimeError("no pending query")
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"answer {a} outside [0, 1]")
        p = self.bias
        d = trunc(a - p, 3.0 * self.config.eps)
        # score_i += d * (draw_i - p) for active items only; the round values
        # already carry the active gate, so draw*active == values.
        z = self.scores
        buf = self._buf
        np.multiply(self.active, p, out=buf)
        np.subtract(self._round_values, buf, out=buf)
        buf *= d
        z += buf
        self._score_bound += abs(d)
        thr = self.config.accuse_threshold
        if self._score_bound > thr:
            crossed = np.abs(z) > thr
            self.active[crossed] = 0.0
            live = np.abs(z) * self.active
            self._score_bound = float(live.max()) if live.size else 0.0
        self.bias = None
        self._round_values = None
        self.rounds_done += 1

    def final_query(self) -> TableQuery:
        """The normalized score table; entries lie in [-1, 1] by construction."""
        if self.rounds_done < self.config.k:
            raise RuntimeError(
                f"only {self.rounds_done}/{self.config.k} rounds played"
            )
        if self.bias is not None:
            raise RuntimeError("pending answer")
        return TableQuery(self.scores / self.config.tau)

    # -- inspection --------------------------------------------------------

    def accused_mask(self) -> np.ndarray:
        return self.active == 0.0

    def accused_count(self) -> int:
        return int(np.count_nonzero(self.active == 0.0))


# Operation-style aliases used by the harness and tests.


def attack_init(n: int, eps: float, k: int) -> Tracer:
    """Fresh attack state: empty accusation set, all scores zero."""
    return Tracer(n, eps, k)


def next_query(state: Tracer, rng: np.random.Generator) -> TableQuery:
    return state.next_query(rng)


def process_answer(state: Tracer, a: float) -> None:
    state.process_answer(a)


def final_query(state: Tracer) -> TableQuery:
    return state.final_query()


# ---------------------------------------------------------------------------
# Correlation lower bound, checked by Monte Carlo
# ---------------------------------------------------------------------------


def fingerprinting_lemma_estimate(f, m: int, trials: int, rng: np.random.Generator):
    """Monte-Carlo estimate of the fingerprinting correlation score of f.

    Draws p ~ U[0,1] and x_1..x_m ~ Ber(p), and averages
        (f(x) - p) * sum_i (x_i - p) + |f(x) - mean(x)|
    over ``trials`` repetitions.  For every f: {0,1}^m -> [0,1] the true
    expectation is at least 1/12.  Returns (estimate, standard_error).
    """
    if trials < 1000:
        raise ValueError("need at least 1000 trials for a meaningful estimate")
    if m < 1:
        raise ValueError("m must be >= 1")
    samples = np.empty(trials)
    for t in range(trials):
        p = float(rng.random())
        x = (rng.random(m) < p).astype(np.float64)
        fx = float(f(x))
        assert 0.0 <= fx <= 1.0, f"f must map into [0, 1], got {fx}"
        samples[t] = (fx - p) * float(np.sum(x) - m * p) + abs(fx - float(np.mean(x)))
    est = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(trials))
    return est, se
