"""Game loops, trial orchestration, sweeps, and machine-readable output.

Everything an experiment produces is a pure function of its configuration,
including the master seed: per-trial seeds are hash-derived, so trials can run
in any order (or in a process pool) without changing a byte of the output.
Wall-clock times are recorded for convenience but excluded from every
determinism guarantee.
"""

from __future__ import annotations

import dataclasses
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import composition, lifting, mechanisms, tracer
from .bits import Bits
from .core import (
    Dataset,
    MembershipQuery,
    Pair,
    UniformBits,
    UniformIndex,
    phg_gap,
    query_mean_population,
    sample_dataset,
)
from .seeding import child_rng, child_seed

__all__ = [
    "GameConfig",
    "GameResult",
    "TrialAggregate",
    "ConfigError",
    "GAME_KINDS",
    "CSV_COLUMNS",
    "run_natural_game",
    "run_lifted_game",
    "run_composition_demo",
    "run_trials",
    "run_sweep",
    "run_lemma_verification",
    "run_sd_verification",
    "aggregate_results",
    "write_csv",
    "LEMMA_FUNCTIONS",
]


class ConfigError(ValueError):
    """Invalid experiment configuration."""


GAME_KINDS = (
    "attack-natural",
    "attack-lifted",
    "attack-prg",
    "compose-it",
    "compose-prg",
    "verify-lemma",
    "verify-sd",
)

NATURAL_MECHANISMS = ("empirical", "rounded", "gaussian", "splitter", "uniform", "oracle")
GENERAL_MECHANISMS = NATURAL_MECHANISMS + ("probing",)

CSV_COLUMNS = (
    "game,n,eps,k,N,mechanism,trials,success_rate,mean_final_gap,"
    "p90_final_gap,mean_max_pop_err,mean_accused_out,seed"
)


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GameConfig:
    """One experiment: a game kind, its parameters, and the trial plan."""

    game: str = "attack-natural"
    n: int = 32
    eps: float = 0.25
    k: int = 1000
    mechanism: str = "empirical"
    trials: int = 1
    master_seed: int = 0
    out: str | None = None
    threads: int = 1
    verbose: bool = False
    record_rounds: bool = False
    # mechanism parameters
    sigma: float | None = None
    delta: float = 0.05
    precision: float | None = None
    chunks: int | None = None
    probes: int = 2
    ell: int | None = None
    # composition parameters
    alpha: float = 0.5
    # sweep grids (explicit lists; no float ranges)
    n_list: tuple[int, ...] | None = None
    k_list: tuple[int, ...] | None = None

    @classmethod
    def from_dict(cls, data: dict, base: "GameConfig | None" = None) -> "GameConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dataclasses.asdict(base) if base is not None else {}
        merged.update(data)
        for key in ("n_list", "k_list"):
            if merged.get(key) is not None:
                merged[key] = tuple(int(v) for v in merged[key])
        return cls(**merged)

    def validate(self) -> None:
        if self.game not in GAME_KINDS:
            raise ConfigError(f"unknown game {self.game!r}; expected one of {GAME_KINDS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.threads < 1:
            raise ConfigError("threads must be >= 1")
        if self.game.startswith("attack"):
            if self.n < 1 or self.k < 1:
                raise ConfigError("n and k must be >= 1")
            if not 0 < self.eps < 1:
                raise ConfigError("eps must be in (0, 1)")
            pool = NATURAL_MECHANISMS if self.game == "attack-natural" else GENERAL_MECHANISMS
            if self.mechanism not in pool:
                raise ConfigError(
                    f"mechanism {self.mechanism!r} not valid for {self.game}; "
                    f"choose from {pool}"
                )
            if self.mechanism == "splitter":
                chunks = self.chunks if self.chunks is not None else min(self.k, self.n)
                if chunks > self.n:
                    raise ConfigError("splitter chunks cannot exceed n")
                if self.k > chunks:
                    raise ConfigError(
                        f"splitter with {chunks} chunks cannot answer k={self.k} queries"
                    )
            if self.mechanism == "rounded" and self.precision is not None and self.precision <= 0:
                raise ConfigError("precision must be positive")
            if self.ell is not None and self.ell < 16:
                raise ConfigError("ell must be >= 16")
        if self.game.startswith("compose"):
            if not 0 < self.alpha < 1:
                raise ConfigError("alpha must be in (0, 1)")
            if self.n < 8:
                raise ConfigError("composition demos need n >= 8")
            if self.game == "compose-it":
                try:
                    composition.CompositionSchedule.create(self.n, self.alpha)
                except ValueError as e:
                    raise ConfigError(str(e)) from e


# ---------------------------------------------------------------------------
# Results
# ---------------------------------------------------------------------------


@dataclass
class GameResult:
    """Transcript summary and metrics for one game."""

    trial_index: int
    seed: int
    final_gap: float
    final_sample_mean: float
    final_population_mean: float
    max_pop_err: float
    max_samp_err: float
    accusations_in_sample: int
    accusations_out_sample: int
    accuracy_violated: bool
    phg_violated: bool
    wall_time: float
    rounds: np.ndarray | None = None  # (k, 4): bias, answer, pop_err, samp_err
    extra: dict = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return self.accuracy_violated or self.phg_violated


@dataclass
class TrialAggregate:
    """Per-trial results plus the statistics frozen into the CSV schema."""

    config: GameConfig
    universe_size: int
    results: list[GameResult]
    success_rate: float
    phg_rate: float
    accuracy_rate: float
    mean_final_gap: float
    p90_final_gap: float
    mean_max_pop_err: float
    mean_accused_out: float

    def csv_row(self) -> str:
        c = self.config
        cells = [
            c.game,
            str(c.n),
            repr(float(c.eps)),
            str(c.k),
            str(self.universe_size),
            c.mechanism,
            str(c.trials),
            repr(self.success_rate),
            repr(self.mean_final_gap),
            repr(self.p90_final_gap),
            repr(self.mean_max_pop_err),
            repr(self.mean_accused_out),
            str(c.master_seed),
        ]
        return ",".join(cells)


def aggregate_results(cfg: GameConfig, results: list[GameResult]) -> TrialAggregate:
    """Order-independent aggregation: results are sorted by trial index first."""
    results = sorted(results, key=lambda r: r.trial_index)
    gaps = np.array([r.final_gap for r in results])
    agg = TrialAggregate(
        config=cfg,
        universe_size=_universe_size(cfg),
        results=results,
        success_rate=sum(r.success for r in results) / len(results),
        phg_rate=sum(r.phg_violated for r in results) / len(results),
        accuracy_rate=sum(r.accuracy_violated for r in results) / len(results),
        mean_final_gap=float(np.mean(gaps)),
        p90_final_gap=float(np.percentile(gaps, 90)),
        mean_max_pop_err=float(np.mean([r.max_pop_err for r in results])),
        mean_accused_out=float(np.mean([r.accusations_out_sample for r in results])),
    )
    return agg


def _universe_size(cfg: GameConfig) -> int:
    if cfg.game.startswith("attack"):
        return math.ceil(8 * cfg.n / cfg.eps)
    if cfg.game.startswith("compose"):
        return 1 << (5 * math.ceil(math.log2(cfg.n)))
    return 0


# ---------------------------------------------------------------------------
# Mechanism construction
# ---------------------------------------------------------------------------


def _default_precision(cfg: GameConfig) -> float:
    return cfg.precision if cfg.precision is not None else 1.0 / (cfg.n * cfg.n)


def build_natural_mechanism(cfg: GameConfig, rng: np.random.Generator, pop=None):
    tag = cfg.mechanism
    if tag == "empirical":
        return mechanisms.EmpiricalMeanMechanism()
    if tag == "rounded":
        return mechanisms.RoundedMeanMechanism(_default_precision(cfg))
    if tag == "gaussian":
        sigma = cfg.sigma
        if sigma is None:
            sigma = mechanisms.calibrate_sigma(cfg.eps, cfg.delta, cfg.k)
        return mechanisms.GaussianMechanism(sigma, rng)
    if tag == "splitter":
        return mechanisms.SampleSplitMechanism(cfg.chunks if cfg.chunks is not None else min(cfg.k, cfg.n))
    if tag == "uniform":
        return mechanisms.UniformAnswerMechanism(rng)
    if tag == "oracle":
        return mechanisms.OracleMechanism(pop)
    raise ConfigError(f"unknown natural mechanism {tag!r}")


def build_general_mechanism(cfg: GameConfig, X: Dataset, inst, rng, pop):
    tag = cfg.mechanism
    if tag == "oracle":
        return mechanisms.OracleMechanism(pop)
    if tag == "probing":
        width = inst.ell if isinstance(inst, lifting.PrgInstance) else inst.k

        def factory(prng):
            return Pair(int(prng.integers(0, inst.N)), Bits.random(width, prng))

        return mechanisms.ProbingMechanism(X, factory, cfg.probes, rng)
    return mechanisms.lift_natural(build_natural_mechanism(cfg, rng, pop=pop), X)


# ---------------------------------------------------------------------------
# Game runners
# ---------------------------------------------------------------------------


def run_natural_game(cfg: GameConfig, seed: int, trial_index: int = 0, mech=None) -> GameResult:
    """The natural-mechanism game: the answerer sees only per-sample values."""
    rng_attack = child_rng(seed, "attack")
    rng_data = child_rng(seed, "data")
    rng_mech = child_rng(seed, "mech")
    t0 = time.perf_counter()
    state = tracer.attack_init(cfg.n, cfg.eps, cfg.k)
    pop = UniformIndex(state.config.N)
    X = sample_dataset(pop, cfg.n, rng_data)
    x_idx = X.index_array()
    if mech is None:
        mech = build_natural_mechanism(cfg, rng_mech, pop=pop)
    record = cfg.record_rounds or cfg.verbose
    rounds = np.empty((cfg.k, 4)) if record else None
    eps = cfg.eps
    max_pop_err = 0.0
    max_samp_err = 0.0
    for j in range(cfg.k):
        q = state.next_query(rng_attack)
        q_vals = q.evaluate_at_indices(x_idx)
        if getattr(mech, "wants_full_query", False):
            a = float(mech.answer_query(q))
        else:
            a = float(mech.answer(q_vals))
        assert 0.0 <= a <= 1.0, f"mechanism answer {a} outside [0, 1]"
        pop_mean = query_mean_population(q, pop)
        samp_mean = float(np.mean(q_vals))
        pop_err = abs(a - pop_mean)
        samp_err = abs(a - samp_mean)
        if pop_err > max_pop_err:
            max_pop_err = pop_err
        if samp_err > max_samp_err:
            max_samp_err = samp_err
        if record:
            rounds[j] = (state.bias, a, pop_err, samp_err)
        state.process_answer(a)
    q_star = state.final_query()
    gap = phg_gap(q_star, X, pop)
    accused = state.accused_mask()
    in_sample = np.unique(x_idx)
    acc_in = int(np.count_nonzero(accused[in_sample]))
    acc_total = int(np.count_nonzero(accused))
    return GameResult(
        trial_index=trial_index,
        seed=seed,
        final_gap=gap.gap,
        final_sample_mean=gap.sample_mean,
        final_population_mean=gap.population_mean,
        max_pop_err=max_pop_err,
        max_samp_err=max_samp_err,
        accusations_in_sample=acc_in,
        accusations_out_sample=acc_total - acc_in,
        accuracy_violated=max_pop_err > eps,
        phg_violated=gap.gap > eps,
        wall_time=time.perf_counter() - t0,
        rounds=rounds,
    )


def run_lifted_game(
    cfg: GameConfig,
    seed: int,
    trial_index: int = 0,
    mech=None,
    instance=None,
) -> GameResult:
    """The general game over a masked (or expander-masked) pairs universe.

    Shares the analyst/data/mechanism streams with run_natural_game, so a
    lifted natural mechanism under the same seed reproduces the natural game's
    transcript exactly; masks come from their own stream.
    """
    rng_attack = child_rng(seed, "attack")
    rng_data = child_rng(seed, "data")
    rng_mech = child_rng(seed, "mech")
    rng_mask = child_rng(seed, "mask")
    t0 = time.perf_counter()
    state = tracer.attack_init(cfg.n, cfg.eps, cfg.k)
    N = state.config.N
    if instance is None:
        if cfg.game == "attack-prg":
            ell = cfg.ell if cfg.ell is not None else lifting.default_seed_length(cfg.k)
            instance = lifting.build_prg_instance(N, cfg.k, ell, rng_mask)
        else:
            instance = lifting.build_masked_instance(N, cfg.k, rng_mask)
    pop = instance.population
    X = sample_dataset(pop, cfg.n, rng_data)
    if mech is None:
        mech = build_general_mechanism(cfg, X, instance, rng_mech, pop)
    record = cfg.record_rounds or cfg.verbose
    rounds = np.empty((cfg.k, 4)) if record else None
    eps = cfg.eps
    max_pop_err = 0.0
    max_samp_err = 0.0
    for j in range(cfg.k):
        q_hat = state.next_query(rng_attack)
        q = lifting.lift_query(q_hat, instance, j)
        a = float(mech.answer_query(q))
        assert 0.0 <= a <= 1.0, f"mechanism answer {a} outside [0, 1]"
        pop_mean = query_mean_population(q, pop)
        samp_mean = float(np.mean(q.evaluate_many(X.points)))
        pop_err = abs(a - pop_mean)
        samp_err = abs(a - samp_mean)
        max_pop_err = max(max_pop_err, pop_err)
        max_samp_err = max(max_samp_err, samp_err)
        if record:
            rounds[j] = (state.bias, a, pop_err, samp_err)
        state.process_answer(a)
    q_star = lifting.lift_final_query(state.final_query())
    gap = phg_gap(q_star, X, pop)
    accused = state.accused_mask()
    in_sample = np.unique(X.index_array())
    acc_in = int(np.count_nonzero(accused[in_sample]))
    acc_total = int(np.count_nonzero(accused))
    return GameResult(
        trial_index=trial_index,
        seed=seed,
        final_gap=gap.gap,
        final_sample_mean=gap.sample_mean,
        final_population_mean=gap.population_mean,
        max_pop_err=max_pop_err,
        max_samp_err=max_samp_err,
        accusations_in_sample=acc_in,
        accusations_out_sample=acc_total - acc_in,
        accuracy_violated=max_pop_err > eps,
        phg_violated=gap.gap > eps,
        wall_time=time.perf_counter() - t0,
        rounds=rounds,
    )


def run_composition_demo(cfg: GameConfig, seed: int, trial_index: int = 0) -> GameResult:
    """Sample, run the prefix reveal plus pad mechanism(s), attack, and score.

    A duplicate-element sample makes the attack report failure; that outcome
    is counted in the result, not raised.
    """
    rng_data = child_rng(seed, "data")
    rng_mech = child_rng(seed, "mech")
    t0 = time.perf_counter()
    d = 5 * math.ceil(math.log2(cfg.n))
    pop = UniformBits(d)
    X = sample_dataset(pop, cfg.n, rng_data)
    elems = [p.bits for p in X.points]
    distinct = len({int(e) for e in elems}) == cfg.n
    extra: dict = {"d": d, "distinct": distinct, "variant": cfg.game}
    if cfg.game == "compose-it":
        schedule = composition.CompositionSchedule.create(cfg.n, cfg.alpha)
        m1 = composition.reveal_prefix(X, schedule.m1_reveal)
        outputs = [
            composition.prefix_rank_pad(elems, params, rng_mech)
            for params in schedule.stages
        ]
        attack = composition.composition_attack(m1, outputs, schedule)
        extra["stages"] = len(schedule.stages)
        extra["m1_reveal"] = schedule.m1_reveal
        recovered = list(attack.recovered) if attack.success else None
        query = attack.query
    else:
        k_prefix = math.ceil(cfg.n**cfg.alpha)
        ell = cfg.ell if cfg.ell is not None else composition.prg_pad_seed_length(k_prefix)
        m1 = composition.reveal_prefix(X, k_prefix)
        c = composition.prg_prefix_pad(elems, k_prefix, ell, rng_mech, lifting.prg_expand)
        extra["stages"] = 1
        extra["m1_reveal"] = k_prefix
        try:
            suffix = composition.prg_prefix_unpad(c, m1, ell, lifting.prg_expand)
            recovered = list(m1) + suffix
            query = MembershipQuery(frozenset(recovered))
        except ValueError:
            recovered, query = None, None
    reconstruction_exact = recovered is not None and recovered == elems
    extra["reconstruction_exact"] = reconstruction_exact
    if query is not None:
        gap = phg_gap(query, X, pop)
        final_gap, s_mean, p_mean = gap.gap, gap.sample_mean, gap.population_mean
    else:
        final_gap = s_mean = p_mean = float("nan")
    phg_violated = bool(query is not None and final_gap > cfg.eps)
    return GameResult(
        trial_index=trial_index,
        seed=seed,
        final_gap=final_gap,
        final_sample_mean=s_mean,
        final_population_mean=p_mean,
        max_pop_err=0.0,
        max_samp_err=0.0,
        accusations_in_sample=0,
        accusations_out_sample=0,
        accuracy_violated=False,
        phg_violated=phg_violated,
        wall_time=time.perf_counter() - t0,
        extra=extra,
    )


_RUNNERS = {
    "attack-natural": run_natural_game,
    "attack-lifted": run_lifted_game,
    "attack-prg": run_lifted_game,
    "compose-it": run_composition_demo,
    "compose-prg": run_composition_demo,
}


def _run_one_trial(cfg: GameConfig, trial_index: int) -> GameResult:
    seed = child_seed(cfg.master_seed, "trial", trial_index)
    return _RUNNERS[cfg.game](cfg, seed, trial_index=trial_index)


def _trial_worker(args) -> GameResult:
    cfg_dict, trial_index = args
    return _run_one_trial(GameConfig(**cfg_dict), trial_index)


def run_trials(cfg: GameConfig, write: bool = True) -> TrialAggregate:
    """Run cfg.trials independent games and aggregate; optionally emit files."""
    cfg.validate()
    if cfg.game not in _RUNNERS:
        raise ConfigError(f"{cfg.game} is not a trial-based game")
    if cfg.out is not None and write:
        _check_writable(cfg.out)
    if cfg.threads > 1 and cfg.trials > 1:
        cfg_dict = dataclasses.asdict(cfg)
        with ProcessPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(
                pool.map(_trial_worker, [(cfg_dict, t) for t in range(cfg.trials)])
            )
    else:
        results = [_run_one_trial(cfg, t) for t in range(cfg.trials)]
    agg = aggregate_results(cfg, results)
    if cfg.out is not None and write:
        write_csv([agg], cfg.out)
        if cfg.verbose:
            _write_json(agg, cfg.out + ".json")
    return agg


def run_sweep(cfg: GameConfig, write: bool = True) -> list[TrialAggregate]:
    """Grid over explicit (n, k) lists; one aggregate row per cell."""
    if not cfg.n_list or not cfg.k_list:
        raise ConfigError("sweep needs explicit n_list and k_list")
    if cfg.out is not None and write:
        _check_writable(cfg.out)
    rows = []
    for n in cfg.n_list:
        for k in cfg.k_list:
            cell = replace(
                cfg,
                n=n,
                k=k,
                out=None,
                n_list=None,
                k_list=None,
                master_seed=child_seed(cfg.master_seed, "cell", n, k),
            )
            rows.append(run_trials(cell, write=False))
    if cfg.out is not None and write:
        write_csv(rows, cfg.out)
    return rows


# ---------------------------------------------------------------------------
# Verifiers
# ---------------------------------------------------------------------------


def _f_mean(x):
    return float(np.mean(x))


def _f_half(x):
    return 0.5


def _f_median(x):
    return float(np.median(x))


def _make_noisy_mean(rng: np.random.Generator):
    def f(x):
        return min(1.0, max(0.0, float(np.mean(x)) + float(rng.normal(0.0, 0.1))))

    return f


LEMMA_FUNCTIONS = ("mean", "half", "median", "noisy-mean")


def run_lemma_verification(
    trials: int = 100_000,
    m_values: tuple[int, ...] = (1, 10, 100),
    master_seed: int = 0,
    functions: tuple[str, ...] = LEMMA_FUNCTIONS,
) -> list[dict]:
    """Estimate the fingerprinting correlation score for a grid of answerers.

    Returns one row per (function, m) with the estimate, standard error, and
    whether the estimate clears the 1/12 bound minus three standard errors.
    """
    rows = []
    for name in functions:
        for m in m_values:
            rng = child_rng(master_seed, "lemma", name, m)
            if name == "mean":
                f = _f_mean
            elif name == "half":
                f = _f_half
            elif name == "median":
                f = _f_median
            elif name == "noisy-mean":
                f = _make_noisy_mean(child_rng(master_seed, "lemma-noise", name, m))
            else:
                raise ConfigError(f"unknown lemma function {name!r}")
            est, se = tracer.fingerprinting_lemma_estimate(f, m, trials, rng)
            rows.append(
                {
                    "function": name,
                    "m": m,
                    "trials": trials,
                    "estimate": est,
                    "stderr": se,
                    "bound": 1.0 / 12.0,
                    "ok": est >= 1.0 / 12.0 - 3.0 * se,
                }
            )
    return rows


def run_sd_verification(max_n: int = 1 << 16) -> dict:
    """Exhaustively check the low-bits statistical distance bound up to max_n.

    For each N, the checked seed width is floor(log2(N)/2); comparisons are in
    exact rational arithmetic (SD^2 <= 1/N).
    """
    from fractions import Fraction

    violations = []
    worst = Fraction(0)
    worst_n = 1
    for N in range(1, max_n + 1):
        ell = (N.bit_length() - 1) // 2
        sd = composition.low_bits_sd(N, ell)
        if sd * sd > Fraction(1, N):
            violations.append(N)
        ratio_sq = sd * sd * N
        if ratio_sq > worst:
            worst = ratio_sq
            worst_n = N
    return {
        "max_n": max_n,
        "checked": max_n,
        "violations": violations,
        "worst_ratio": math.sqrt(float(worst)),
        "worst_n": worst_n,
    }


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _check_writable(path: str) -> None:
    try:
        with open(path, "a", encoding="utf-8"):
            pass
    except OSError as e:
        raise ConfigError(f"output path {path!r} not writable: {e}") from e


def write_csv(aggregates: list[TrialAggregate], path: str) -> None:
    lines = [CSV_COLUMNS] + [a.csv_row() for a in aggregates]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _result_json(r: GameResult) -> dict:
    out = {
        "trial_index": r.trial_index,
        "seed": r.seed,
        "final_gap": r.final_gap,
        "final_sample_mean": r.final_sample_mean,
        "final_population_mean": r.final_population_mean,
        "max_pop_err": r.max_pop_err,
        "max_samp_err": r.max_samp_err,
        "accusations_in_sample": r.accusations_in_sample,
        "accusations_out_sample": r.accusations_out_sample,
        "accuracy_violated": r.accuracy_violated,
        "phg_violated": r.phg_violated,
        "wall_time": r.wall_time,
        "extra": r.extra,
    }
    if r.rounds is not None:
        out["rounds"] = [
            {"bias": b, "answer": a, "pop_err": pe, "samp_err": se}
            for b, a, pe, se in r.rounds.tolist()
        ]
    return out


def _write_json(agg: TrialAggregate, path: str) -> None:
    doc = {
        "config": dataclasses.asdict(agg.config),
        "universe_size": agg.universe_size,
        "success_rate": agg.success_rate,
        "phg_rate": agg.phg_rate,
        "accuracy_rate": agg.accuracy_rate,
        "mean_final_gap": agg.mean_final_gap,
        "p90_final_gap": agg.p90_final_gap,
        "mean_max_pop_err": agg.mean_max_pop_err,
        "mean_accused_out": agg.mean_accused_out,
        "trials": [_result_json(r) for r in agg.results],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
