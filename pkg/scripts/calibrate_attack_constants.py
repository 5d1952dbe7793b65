#!/usr/bin/env python3
"""Calibrate the frozen constants used by the attack-score distribution tests.

Two quantities are measured across mechanisms and trials:

  * innocent ratio   |sum of off-sample scores| / (eps * sqrt(N*k))
  * guilty ratio     (sum of all scores) / k, for trials whose answers kept
                     every round's population error within eps

The test suite freezes an upper constant C for the first and a lower constant
c for the second, with wide margins over what this script reports.

Run:  python scripts/calibrate_attack_constants.py [trials-per-mech]
"""

import sys

import numpy as np

from sqgames.harness import GameConfig, build_natural_mechanism
from sqgames.core import UniformIndex, query_mean_population, sample_dataset
from sqgames.seeding import child_rng, child_seed
from sqgames.tracer import attack_init

N_SAMPLE = 16
N_SAMPLE_ACCURATE = 100  # large enough that mean-based answerers stay accurate
EPS = 0.25
ROUNDS = 2000
MECHS = ("empirical", "rounded", "gaussian", "uniform", "oracle")
ACCURATE_MECHS = ("empirical", "rounded", "gaussian", "oracle")


def play(mechanism: str, seed: int, n: int = N_SAMPLE):
    cfg = GameConfig(game="attack-natural", n=n, eps=EPS, k=ROUNDS, mechanism=mechanism)
    state = attack_init(cfg.n, cfg.eps, cfg.k)
    pop = UniformIndex(state.config.N)
    X = sample_dataset(pop, cfg.n, child_rng(seed, "data"))
    x_idx = X.index_array()
    rng_attack = child_rng(seed, "attack")
    mech = build_natural_mechanism(cfg, child_rng(seed, "mech"), pop=pop)
    max_pop_err = 0.0
    for _ in range(cfg.k):
        q = state.next_query(rng_attack)
        q_vals = q.evaluate_at_indices(x_idx)
        if getattr(mech, "wants_full_query", False):
            a = mech.answer_query(q)
        else:
            a = mech.answer(q_vals)
        max_pop_err = max(max_pop_err, abs(a - query_mean_population(q, pop)))
        state.process_answer(a)
    in_sample = np.zeros(state.config.N, dtype=bool)
    in_sample[x_idx] = True
    z = state.scores
    out_sum = float(np.sum(z[~in_sample]))
    total = float(np.sum(z))
    denom = EPS * np.sqrt(state.config.N * cfg.k)
    return abs(out_sum) / denom, total / cfg.k, max_pop_err


def main() -> int:
    trials = int(sys.argv[1]) if len(sys.argv) > 1 else 40
    print(f"off-sample score sums at n={N_SAMPLE} eps={EPS} k={ROUNDS}, {trials} trials/mech")
    worst_innocent = 0.0
    for mech in MECHS:
        inn = [
            play(mech, child_seed(0xCA11B, mech, t))[0] for t in range(trials)
        ]
        print(
            f"  {mech:<10} innocent ratio: p95={np.percentile(inn, 95):.3f} max={max(inn):.3f}"
        )
        worst_innocent = max(worst_innocent, max(inn))
    print(f"\ntotal score sums at n={N_SAMPLE_ACCURATE} (accurate answerers only)")
    worst_guilty = float("inf")
    for mech in ACCURATE_MECHS:
        guilt, accurate = [], 0
        for t in range(trials):
            _, per_round, max_err = play(mech, child_seed(0x6011, mech, t), n=N_SAMPLE_ACCURATE)
            if max_err <= EPS:
                guilt.append(per_round)
                accurate += 1
        g_lo = min(guilt) if guilt else float("nan")
        print(
            f"  {mech:<10} guilty per-round score: min={g_lo:.4f} "
            f"(accurate trials: {accurate}/{trials})"
        )
        if guilt:
            worst_guilty = min(worst_guilty, g_lo)
    print(f"\nobserved: max innocent ratio {worst_innocent:.3f}; "
          f"min accurate guilty per-round score {worst_guilty:.4f}")
    print("suggested frozen constants: C >= %.1f, c <= %.3f" %
          (2.0 * worst_innocent, worst_guilty / 2.0))
    return 0


if __name__ == "__main__":
    sys.exit(main())
