"""Command-line entry point.

Exit codes: 0 on success, 1 on usage/configuration errors, 2 on runtime
failures.  Game parameters come from an optional JSON config file (flat keys
matching the GameConfig fields; unknown keys are rejected) and can be
overridden by flags.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from .harness import (
    CSV_COLUMNS,
    GAME_KINDS,
    GENERAL_MECHANISMS,
    NATURAL_MECHANISMS,
    ConfigError,
    GameConfig,
    run_lemma_verification,
    run_sd_verification,
    run_sweep,
    run_trials,
)

__all__ = ["main"]


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (flat keys)")
    p.add_argument("--seed", type=int, dest="master_seed", help="master seed")
    p.add_argument("--trials", type=int, help="number of independent trials")
    p.add_argument("--out", help="output CSV path")
    p.add_argument("--threads", type=int, help="worker processes for trials")
    p.add_argument("--verbose", action="store_true", default=None,
                   help="also write per-round JSON next to the CSV")


def _add_attack_flags(p: argparse.ArgumentParser, pool) -> None:
    p.add_argument("--n", type=int, help="sample size")
    p.add_argument("--eps", type=float, help="target accuracy")
    p.add_argument("--k", type=int, help="number of rounds")
    p.add_argument("--mechanism", choices=pool, help="answering mechanism")


def _build_parser() -> _Parser:
    parser = _Parser(prog="sqgames", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    for game in ("attack-natural", "attack-lifted", "attack-prg"):
        p = sub.add_parser(game, help=f"run the {game} game")
        _add_common(p)
        pool = NATURAL_MECHANISMS if game == "attack-natural" else GENERAL_MECHANISMS
        _add_attack_flags(p, pool)
        if game == "attack-prg":
            p.add_argument("--ell", type=int, help="expander seed length in bits")

    for game in ("compose-it", "compose-prg"):
        p = sub.add_parser(game, help=f"run the {game} composition demo")
        _add_common(p)
        p.add_argument("--n", type=int, help="sample size")
        p.add_argument("--alpha", type=float, help="prefix exponent in (0,1)")
        p.add_argument("--eps", type=float, help="gap threshold for the violation flag")

    p = sub.add_parser("verify-lemma", help="Monte-Carlo check of the correlation bound")
    _add_common(p)

    p = sub.add_parser("verify-sd", help="exhaustive low-bits statistical distance check")
    _add_common(p)
    p.add_argument("--max-n", type=int, default=1 << 16, dest="max_n")

    p = sub.add_parser("sweep", help="grid of (n, k) cells, one CSV row per cell")
    _add_common(p)
    p.add_argument("--game", choices=[g for g in GAME_KINDS if g.startswith("attack")],
                   help="game kind to sweep (default attack-natural)")
    p.add_argument("--mechanism", choices=GENERAL_MECHANISMS)
    p.add_argument("--eps", type=float)

    return parser


_FLAG_KEYS = (
    "master_seed", "trials", "out", "threads", "verbose", "n", "eps", "k",
    "mechanism", "ell", "alpha", "game", "max_n",
)

_GAME_DEFAULTS = {
    "verify-lemma": {"trials": 100_000},
    "compose-it": {"trials": 1, "n": 32},
    "compose-prg": {"trials": 1, "n": 32},
}


def _load_config(cfg_path: str | None) -> dict:
    if cfg_path is None:
        return {}
    try:
        with open(cfg_path, encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {cfg_path!r}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {cfg_path!r} is not valid JSON: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a flat JSON object")
    return data


def _merge_config(args: argparse.Namespace) -> GameConfig:
    layers: dict = {}
    if args.command != "sweep":
        layers["game"] = args.command
    layers.update(_GAME_DEFAULTS.get(args.command, {}))
    layers.update(_load_config(getattr(args, "config", None)))
    for key in _FLAG_KEYS:
        val = getattr(args, key, None)
        if val is not None and key != "max_n":
            layers[key] = val
    cfg = GameConfig.from_dict(layers)
    if args.command not in ("verify-lemma", "verify-sd"):
        cfg.validate()
    return cfg


def _print_aggregates(rows) -> None:
    print(CSV_COLUMNS)
    for agg in rows:
        print(agg.csv_row())


def _run(args: argparse.Namespace) -> int:
    cfg = _merge_config(args)
    if args.command == "verify-lemma":
        rows = run_lemma_verification(trials=cfg.trials, master_seed=cfg.master_seed)
        print(f"{'function':<12}{'m':>6}{'estimate':>12}{'stderr':>10}  bound-ok")
        for r in rows:
            print(
                f"{r['function']:<12}{r['m']:>6}{r['estimate']:>12.5f}"
                f"{r['stderr']:>10.5f}  {'yes' if r['ok'] else 'NO'}"
            )
        if cfg.out:
            with open(cfg.out, "w", encoding="utf-8") as fh:
                json.dump(rows, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return 0 if all(r["ok"] for r in rows) else 2
    if args.command == "verify-sd":
        report = run_sd_verification(max_n=args.max_n)
        print(
            f"checked N=1..{report['max_n']}: {len(report['violations'])} violations; "
            f"worst SD*sqrt(N) = {report['worst_ratio']:.6f} at N={report['worst_n']}"
        )
        if cfg.out:
            with open(cfg.out, "w", encoding="utf-8") as fh:
                json.dump(report, fh, indent=2, sort_keys=True)
                fh.write("\n")
        return 0 if not report["violations"] else 2
    if args.command == "sweep":
        rows = run_sweep(cfg)
        _print_aggregates(rows)
        return 0
    agg = run_trials(cfg)
    _print_aggregates([agg])
    return 0


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _run(args)
    except (_UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(main())
