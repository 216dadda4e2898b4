"""Command line: ``fedce run``, ``fedce report`` and ``fedce game solve``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .bench.config import ConfigError, load_config
from .bench.report import MissingResults, emit_report
from .bench.runner import run_experiment
from .cgt import (
    GameFileError,
    McLeastCoreParams,
    PermutationSampler,
    PlayerCountExceeded,
    core_membership,
    least_core,
    least_core_monte_carlo,
    nucleolus,
    read_game,
    shapley_exact,
    shapley_monte_carlo,
)

GAME_METHODS = ("shapley", "shapley-mc", "least-core", "least-core-mc", "nucleolus", "core-check")


def _floats(text: str) -> list[float]:
    return [float(s) for s in text.split(",") if s.strip()]


def solve_game(args) -> dict:
    game = read_game(args.game_file).normalized()
    out: dict = {"n": game.n, "method": args.method}
    if args.method == "shapley":
        out["payoff"] = shapley_exact(game).tolist()
    elif args.method == "shapley-mc":
        out["payoff"] = shapley_monte_carlo(game, PermutationSampler(game.n, args.seed), args.iterations).tolist()
    elif args.method == "least-core":
        sol = least_core(game)
        out.update(payoff=sol.payoff.tolist(), epsilon_star=sol.epsilon_star, core_nonempty=sol.core_nonempty)
    elif args.method == "least-core-mc":
        params = McLeastCoreParams(args.e, args.delta, args.Delta, args.tau, args.samples)
        sol = least_core_monte_carlo(game, params, args.seed)
        out.update(
            payoff=sol.payoff.tolist(),
            epsilon_star=sol.epsilon_star,
            sampled_coalitions=int(sol.coalitions.size),
            violation_fraction=sol.violation_fraction,
        )
    elif args.method == "nucleolus":
        out["payoff"] = nucleolus(game).tolist()
    else:
        if args.payoff is None:
            raise ValueError("core-check needs --payoff")
        chk = core_membership(game, np.array(_floats(args.payoff)), args.epsilon)
        out.update(
            member=chk.member,
            efficient=chk.efficient,
            worst_coalition=None if chk.worst is None else list(chk.worst),
            worst_deficit=chk.worst_deficit,
        )
    return out


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fedce", description="Contribution evaluation for federated learning.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a benchmark from a config file")
    run.add_argument("--config", required=True)
    run.add_argument("--report", action="store_true", help="also write the report")

    rep = sub.add_parser("report", help="summarize a results directory")
    rep.add_argument("--results", required=True)
    rep.add_argument("--out", default=None)

    game = sub.add_parser("game", help="solution concepts on a game file")
    gsub = game.add_subparsers(dest="game_command", required=True)
    solve = gsub.add_parser("solve")
    solve.add_argument("--game-file", required=True)
    solve.add_argument("--method", choices=GAME_METHODS, default="shapley")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--iterations", type=int, default=10_000)
    solve.add_argument("--e", type=float, default=0.05)
    solve.add_argument("--delta", type=float, default=0.1)
    solve.add_argument("--Delta", type=float, default=0.05)
    solve.add_argument("--tau", type=float, default=1.0)
    solve.add_argument("--samples", type=int, default=None, help="override the sample bound")
    solve.add_argument("--payoff", help="comma-separated payoff for core-check")
    solve.add_argument("--epsilon", type=float, default=0.0)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "run":
            root = run_experiment(load_config(args.config))
            print(root)
            if args.report:
                print(emit_report(root) / "summary.txt")
        elif args.command == "report":
            out = emit_report(args.results, args.out)
            sys.stdout.write((out / "summary.txt").read_text(encoding="utf-8"))
        else:
            print(json.dumps(solve_game(args)))
    except (ConfigError, GameFileError, MissingResults, PlayerCountExceeded, ValueError, OSError) as exc:
        print(f"fedce: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
