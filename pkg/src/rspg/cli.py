"""Command-line entry point ``rspg``.

Exit codes: 0 success, 2 configuration or argument error, 3 numerical failure.
"""

import argparse
import sys

import numpy as np

from .config import SCENARIOS, load_config, resolve_config
from .exceptions import ConfigError, ConvergenceError, InvalidArgumentError, MonotonicityError
from .experiments import run_scenario
from .game import load_game, make_game, save_game
from .risk import RiskMeasure, distortion_eigenvalue
from .solve import Schedule, SolverConfig, run_joint, run_solver

EXIT_CONFIG = 2
EXIT_NUMERIC = 3

_ALGS = {"eg": "EG", "md": "MD", "tteg": "TTEG", "ttmd": "TTMD", "fp": "DeterministicFP", "joint": "JointEG"}


def _build_parser():
    p = argparse.ArgumentParser(prog="rspg", description="Risk-sensitive preference game solvers and experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a configured scenario")
    run.add_argument("config", help="flat 'dotted.key = value' config file")
    run.add_argument("--scenario", choices=SCENARIOS)
    run.add_argument("--jobs", type=int, default=1, help="worker processes (default 1)")
    run.add_argument("--output", help="output directory (overrides output_dir)")
    run.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config key")

    solve = sub.add_parser("solve", help="ad-hoc solver run on one game")
    src = solve.add_mutually_exclusive_group()
    src.add_argument("--game", help="game file with '# rspg-game' header")
    src.add_argument("--n", type=int, default=20, help="Bradley-Terry game size when --game is absent")
    solve.add_argument("--game-seed", type=int, default=0)
    solve.add_argument("--risk", default="entropic:6.0", help="expectation | entropic:LAM | cvar:ALPHA")
    solve.add_argument("--beta", type=float, default=0.6)
    solve.add_argument("--alg", default="tteg", choices=sorted(_ALGS))
    solve.add_argument("--eta", type=float, default=0.04)
    solve.add_argument("--gamma", type=float, default=0.5)
    solve.add_argument("--m", type=int, default=15)
    solve.add_argument("--T", type=int, default=4000)
    solve.add_argument("--oracle", choices=("plugin", "exact"), default="plugin")
    solve.add_argument("--polyak", choices=("off", "on", "window"), default="window")
    solve.add_argument("--seed", type=int, default=0)
    solve.add_argument("--trajectory", help="write the trajectory CSV here")

    mk = sub.add_parser("make-game", help="write a Bradley-Terry game file")
    mk.add_argument("--n", type=int, default=20)
    mk.add_argument("--seed", type=int, default=0)
    mk.add_argument("--reward-std", type=float, default=1.0)
    mk.add_argument("--out", required=True)
    return p


def _overrides(pairs):
    out = {}
    for item in pairs:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _cmd_run(args):
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    cfg = resolve_config(load_config(args.config), scenario=args.scenario, overrides=_overrides(args.set))
    if args.output:
        cfg["output_dir"] = args.output
    out = run_scenario(cfg, cfg["output_dir"], jobs=args.jobs)
    print(f"{cfg['scenario']}: wrote results to {out}")
    return 0


def _cmd_solve(args):
    game = load_game(args.game) if args.game else make_game("bradley_terry", args.n, args.game_seed)
    risk = RiskMeasure.parse(args.risk)
    alg = _ALGS[args.alg]
    if alg == "JointEG":
        cfg = SolverConfig(algorithm=alg, beta=args.beta, eta=Schedule.constant(args.eta), T=args.T, oracle="exact")
        p1, p2 = run_joint(cfg, game, risk, risk)
        print("pi_1 = " + " ".join(f"{x:.10g}" for x in p1.pi))
        print("pi_2 = " + " ".join(f"{x:.10g}" for x in p2.pi))
        return 0
    cfg = SolverConfig(
        algorithm=alg,
        beta=args.beta,
        eta=Schedule.constant(args.eta),
        gamma=Schedule.constant(args.gamma),
        m=args.m,
        T=args.T,
        oracle=args.oracle,
        polyak=args.polyak,
        floor_window=min(500, max(args.T, 1)),
        polyak_window=min(500, max(args.T, 1)),
        track_every=0,
        seed=args.seed,
    )
    rec = run_solver(cfg, game, risk, check_admissible=alg != "DeterministicFP")
    diag = distortion_eigenvalue(game, risk, beta=args.beta)
    if args.trajectory:
        rec.to_csv(args.trajectory)
    pi = np.exp(rec.polyak_final - rec.polyak_final.max())
    pi /= pi.sum()
    print(f"algorithm   {rec.algorithm}")
    print(f"risk        {risk}")
    print(f"regime      {diag.regime} (lambda_bar={diag.lambda_bar:.6g}, mu_R={diag.mu_R:.6g})")
    print(f"floor       {rec.floor:.17g}")
    if len(rec):
        print(f"residual_sq {rec.residual_sq[-1]:.6g}")
    print("pi          " + " ".join(f"{x:.6g}" for x in pi))
    return 0


def _cmd_make_game(args):
    save_game(make_game("bradley_terry", args.n, args.seed, args.reward_std), args.out)
    print(f"wrote {args.out}")
    return 0


def main(argv=None):
    args = _build_parser().parse_args(argv)
    handler = {"run": _cmd_run, "solve": _cmd_solve, "make-game": _cmd_make_game}[args.command]
    try:
        return handler(args)
    except (ConfigError, InvalidArgumentError, NotImplementedError, OSError) as exc:
        print(f"rspg: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, MonotonicityError, FloatingPointError) as exc:
        print(f"rspg: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
