"""Canned reproduction scenarios driven by a resolved config mapping.

Every random stream derives from ``SeedSequence([master_seed, crc32(scenario),
*cell])`` so adding cells never perturbs existing ones. CSV outputs are
byte-deterministic; wall-clock data goes to ``manifest.json`` only.
"""

import csv
import json
import math
import os
import platform
import time
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import dump_config
from .diagnose import (
    REGIME_HEADER,
    STABILITY_HEADER,
    fit_floor_scaling,
    regime_table,
    render_regime_table,
    verify_stability,
    write_rows,
)
from .game import load_game, make_game
from .offline import OFFLINE_HEADER, rate_sweep
from .risk import DIAGNOSTICS_HEADER, RiskMeasure
from .solve import Schedule, SolverConfig, check_step_sizes, run_solver, solve_deterministic

__all__ = ["run_scenario", "cell_seed", "build_game", "build_risk", "build_solver_config", "SUMMARY_HEADER"]

SUMMARY_HEADER = ("algorithm", "risk", "param", "m", "seed", "floor", "floor_window", "T")


def cell_seed(master_seed, scenario, *cell):
    return np.random.SeedSequence([int(master_seed), zlib.crc32(scenario.encode()), *map(int, cell)])


def build_game(cfg):
    if cfg["game.file"]:
        return load_game(cfg["game.file"])
    return make_game(cfg["game.kind"], cfg["game.n"], cfg["game.seed"], cfg["game.reward_std"])


def build_risk(cfg):
    kind = cfg["risk.kind"]
    return RiskMeasure(kind, None if kind == "expectation" else cfg["risk.param"])


def _schedule(cfg, name):
    kind = cfg[f"solver.{name}.kind"]
    return Schedule(kind, cfg[f"solver.{name}.base"], cfg[f"solver.{name}.exponent"] if kind == "polynomial" else 0.0)


def build_solver_config(cfg, algorithm=None, m=None, seed=0):
    algorithm = algorithm or cfg["solver.algorithm"]
    oracle = cfg["solver.oracle"]
    if algorithm.endswith("-exact"):
        algorithm, oracle = algorithm[: -len("-exact")], "exact"
    return SolverConfig(
        algorithm=algorithm,
        beta=cfg["solver.beta"],
        eta=_schedule(cfg, "eta"),
        gamma=_schedule(cfg, "gamma"),
        m=cfg["solver.m"] if m is None else m,
        T=cfg["solver.T"],
        oracle=oracle,
        polyak=cfg["solver.polyak"],
        polyak_window=cfg["solver.polyak_window"],
        floor_window=cfg["solver.floor_window"],
        track_every=cfg["solver.track_every"] if algorithm.startswith("TT") else 0,
        track_reps=cfg["solver.track_reps"],
        seed=seed,
    )


def _run_cell(args):
    solver_cfg, game, risk, star = args
    return run_solver(solver_cfg, game, risk, theta_star=star)


def _map(fn, items, jobs):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(x) for x in items]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    return str(v)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r[h]) for h in header])


def _summary_row(rec, seed_index):
    row = rec.summary()
    row["seed"] = seed_index
    row["m"] = "" if row["m"] is None else row["m"]
    return row


def _admissibility(cfg, game, risk, algorithms, out):
    if not cfg["solver.check_admissible"]:
        return
    lines = []
    for alg in algorithms:
        sc = build_solver_config(cfg, alg)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            adm = check_step_sizes(sc, game, risk)
        lines.append(f"{alg}: eta={adm.eta:.6g} eta_max={adm.eta_max:.6g} L_G={adm.L_G:.6g} "
                     f"mu_tilde={adm.mu_tilde:.6g} ok={adm.ok} {adm.message}".rstrip())
        if not adm.ok:
            warnings.warn(f"{alg}: {adm.message}", RuntimeWarning, stacklevel=3)
    with open(os.path.join(out, "admissibility.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _solver_runs(cfg, out, jobs, algorithms, m_values):
    game, risk = build_game(cfg), build_risk(cfg)
    star = solve_deterministic(game, risk, cfg["solver.beta"], tol=1e-12)
    _admissibility(cfg, game, risk, algorithms, out)
    cells, keys = [], []
    for alg in algorithms:
        for m in m_values:
            for s in range(cfg["sweep.seeds"]):
                # the algorithm is not part of the stream key so that all
                # algorithms see the same random stream for a given seed
                seed = cell_seed(cfg["master_seed"], cfg["scenario"], m, s)
                cells.append((build_solver_config(cfg, alg, m, seed), game, risk, star))
                keys.append((alg, m, s))
    return keys, _map(_run_cell, cells, jobs)


def scenario_trajectory(cfg, out, jobs=1):
    algorithms = cfg["sweep.algorithms"]
    keys, records = _solver_runs(cfg, out, jobs, algorithms, [cfg["solver.m"]])
    files, summary = [], []
    for (alg, m, s), rec in zip(keys, records):
        name = f"trajectory_{alg}_seed{s:03d}.csv"
        rec.to_csv(os.path.join(out, name))
        files.append(name)
        summary.append(_summary_row(rec, s))
    _write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, summary)
    # per-iteration median/std bands across seeds
    bands = []
    for alg in algorithms:
        recs = [r for (a, _, _), r in zip(keys, records) if a == alg]
        stack = {f: np.vstack([getattr(r, f) for r in recs]) for f in ("dist_sq", "residual_sq", "polyak_dist_sq", "tracking_err_sq")}
        for i, t in enumerate(recs[0].t):
            row = {"algorithm": alg, "t": int(t)}
            for f, arr in stack.items():
                col = arr[:, i]
                ok = col[~np.isnan(col)]
                row[f"{f}_median"] = float(np.median(ok)) if ok.size else float("nan")
                row[f"{f}_std"] = float(np.std(ok)) if ok.size else float("nan")
            bands.append(row)
    band_header = ("algorithm", "t") + tuple(
        f"{f}_{s}" for f in ("dist_sq", "residual_sq", "polyak_dist_sq", "tracking_err_sq") for s in ("median", "std")
    )
    _write_csv(os.path.join(out, "trajectory_bands.csv"), band_header, bands)
    return files + ["summary.csv", "trajectory_bands.csv"]


def scenario_floor_sweep(cfg, out, jobs=1):
    algorithms = cfg["sweep.algorithms"]
    m_values = cfg["sweep.m_values"]
    keys, records = _solver_runs(cfg, out, jobs, algorithms, m_values)
    summary = [_summary_row(rec, s) for (_, _, s), rec in zip(keys, records)]
    _write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, summary)
    fits, medians = [], []
    for alg in algorithms:
        rows = [r for r in summary if r["algorithm"] == alg]
        for m in m_values:
            vals = [r["floor"] for r in rows if r["m"] == m]
            medians.append({"algorithm": alg, "m": m, "median_floor": float(np.median(vals)), "seeds": len(vals)})
        if len(m_values) >= 4 and cfg["sweep.seeds"] >= 3:
            fit = fit_floor_scaling(rows)
            fits.append({"algorithm": alg, "slope": fit.slope, "intercept": fit.intercept,
                         "r_squared": fit.r_squared, "n_points": len(fit.points)})
    _write_csv(os.path.join(out, "floor_medians.csv"), ("algorithm", "m", "median_floor", "seeds"), medians)
    files = ["summary.csv", "floor_medians.csv"]
    if fits:
        _write_csv(os.path.join(out, "fits.csv"), ("algorithm", "slope", "intercept", "r_squared", "n_points"), fits)
        files.append("fits.csv")
    return files


def scenario_offline_rate(cfg, out, jobs=1):
    game, risk = build_game(cfg), build_risk(cfg)
    sweep = rate_sweep(game, risk, cfg["solver.beta"], cfg["sweep.n_values"], cfg["sweep.seeds"],
                       master_seed=(cfg["master_seed"], zlib.crc32(b"offline_rate")), jobs=jobs)
    _write_csv(os.path.join(out, "offline_sweep.csv"), OFFLINE_HEADER, sweep.rows)
    fit_row = {"slope": sweep.fit.slope, "intercept": sweep.fit.intercept, "r_squared": sweep.fit.r_squared,
               "skip_rate": sweep.skip_rate, "offset_kl": sweep.offset_kl}
    _write_csv(os.path.join(out, "offline_fit.csv"), tuple(fit_row), [fit_row])
    return ["offline_sweep.csv", "offline_fit.csv"]


def scenario_stability(cfg, out, jobs=1):
    game, risk = build_game(cfg), build_risk(cfg)
    reports = verify_stability(game, risk, cfg["solver.beta"], cfg["stability.epsilon"], cfg["stability.trials"],
                               rng=cell_seed(cfg["master_seed"], "stability"))
    write_rows(reports, os.path.join(out, "stability.csv"), STABILITY_HEADER)
    done = [r for r in reports if not r.skipped]
    row = {"trials": len(reports), "skipped": len(reports) - len(done), "violations": sum(r.violated for r in done)}
    _write_csv(os.path.join(out, "stability_summary.csv"), tuple(row), [row])
    return ["stability.csv", "stability_summary.csv"]


def scenario_regimes(cfg, out, jobs=1):
    game = build_game(cfg)
    risks = [RiskMeasure.parse(r) for r in cfg["regimes.risks"]]
    rows = regime_table(game, risks, cfg["regimes.betas"], cfg["regimes.grid_points"], cfg["regimes.restarts"], cfg["regimes.seed"])
    write_rows(rows, os.path.join(out, "regimes.csv"), REGIME_HEADER)
    write_rows(rows, os.path.join(out, "diagnostics.csv"), DIAGNOSTICS_HEADER)
    with open(os.path.join(out, "regimes.txt"), "w") as fh:
        fh.write(render_regime_table(rows))
    return ["regimes.csv", "diagnostics.csv", "regimes.txt"]


def scenario_adhoc(cfg, out, jobs=1):
    game, risk = build_game(cfg), build_risk(cfg)
    alg = cfg["solver.algorithm"]
    if alg in ("DeterministicFP", "JointEG"):
        rec = run_solver(build_solver_config(cfg, "DeterministicFP"), game, risk)
        keys, records = [(alg, None, 0)], [rec]
    else:
        keys, records = _solver_runs(cfg, out, jobs, [alg], [cfg["solver.m"]])
    files = []
    for (a, _, s), rec in zip(keys, records):
        name = f"trajectory_{a}_seed{s:03d}.csv"
        rec.to_csv(os.path.join(out, name))
        files.append(name)
    _write_csv(os.path.join(out, "summary.csv"), SUMMARY_HEADER, [_summary_row(r, s) for (_, _, s), r in zip(keys, records)])
    return files + ["summary.csv"]


_RUNNERS = {
    "trajectory": scenario_trajectory,
    "floor_sweep_small": scenario_floor_sweep,
    "floor_sweep_large": scenario_floor_sweep,
    "offline_rate": scenario_offline_rate,
    "stability": scenario_stability,
    "regimes": scenario_regimes,
    "adhoc": scenario_adhoc,
}


def run_scenario(cfg, output_dir=None, jobs=1):
    """Run the scenario named in ``cfg`` and write its outputs.

    Returns the output directory. ``config.resolved`` echoes the resolved
    config; ``manifest.json`` holds timestamps and the file list.
    """
    out = output_dir or cfg["output_dir"]
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "config.resolved"), "w") as fh:
        fh.write(dump_config(cfg))
    started = time.time()
    files = _RUNNERS[cfg["scenario"]](cfg, out, jobs)
    manifest = {
        "scenario": cfg["scenario"],
        "version": __version__,
        "started": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(started)),
        "elapsed_seconds": round(time.time() - started, 3),
        "jobs": jobs,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "files": ["config.resolved", *files],
    }
    with open(os.path.join(out, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return out
