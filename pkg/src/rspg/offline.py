"""Offline sample-complexity experiment for the entropic empirical operator.

A dataset holds ``n`` comparisons ``(y, y', z)`` with ``(y, y') ~ pi_bar x pi_bar``
and ``z ~ Bernoulli(P[y, y'])``. The empirical operator replaces
``exp(-lam P[y, y''])`` by the per-pair mean ``g_hat(y, y'')`` of
``exp(-lam z)``; its infinite-data limit is ``1 - P + P exp(-lam)``.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .diagnose import ScalingFit, fit_loglog
from .exceptions import ConvergenceError, CoverageError, InvalidArgumentError, MonotonicityError
from .game import kl_divergence
from .risk import ENTROPIC, fd_jacobian, distortion_eigenvalue
from .solve import solve_deterministic
from .validation import check_count, check_simplex

__all__ = [
    "OfflineDataset",
    "EmpiricalOperator",
    "RateSweep",
    "draw_dataset",
    "empirical_operator",
    "empirical_equilibrium",
    "population_limit_equilibrium",
    "rate_sweep",
    "OFFLINE_HEADER",
]


@dataclass(frozen=True, eq=False)
class OfflineDataset:
    """``n`` comparisons with per-ordered-pair counts and outcome sums."""

    n: int
    pairs: np.ndarray
    outcomes: np.ndarray
    counts: np.ndarray
    wins: np.ndarray

    @property
    def n_min(self):
        return int(self.counts.min())

    @property
    def n_responses(self):
        return self.counts.shape[0]

    def permuted(self, perm):
        inv = np.argsort(perm)
        return OfflineDataset(self.n, inv[self.pairs], self.outcomes, self.counts[np.ix_(perm, perm)], self.wins[np.ix_(perm, perm)])


def draw_dataset(game, n, sampler="uniform", rng=None):
    """Draw ``n`` iid comparisons; only the uniform pair sampler is supported."""
    n = check_count(n, "n")
    if sampler != "uniform":
        raise NotImplementedError(f"pair sampler {sampler!r} is not supported")
    rng = np.random.default_rng(rng)
    k = game.n
    pairs = rng.integers(0, k, size=(n, 2))
    z = (rng.random(n) < game.P[pairs[:, 0], pairs[:, 1]]).astype(np.int8)
    flat = pairs[:, 0] * k + pairs[:, 1]
    counts = np.bincount(flat, minlength=k * k).reshape(k, k)
    wins = np.bincount(flat, weights=z, minlength=k * k).reshape(k, k)
    return OfflineDataset(n, pairs, z, counts, wins)


class EmpiricalOperator:
    """Entropic operator ``(P_hat mu)_y = -(1/lam) log sum_y'' mu(y'') g_hat(y, y'')``.

    Exposes the same call/jacobian interface as :class:`rspg.risk.RiskOperator`
    so the deterministic solver and the lambda-bar search accept it directly.
    """

    def __init__(self, g_hat, risk, counts=None):
        if risk.kind != ENTROPIC:
            raise InvalidArgumentError("the empirical operator is implemented for entropic risk only")
        self.g_hat = np.asarray(g_hat, dtype=float)
        self.risk = risk
        self.n = self.g_hat.shape[0]
        self.counts = counts
        self.coverage_ok = counts is None or bool(np.all(counts > 0))

    @classmethod
    def from_dataset(cls, dataset, risk):
        lam = risk.param
        c = dataset.counts
        # each pair holds k wins out of c: mean of exp(-lam z) is 1 - (1 - e^-lam) k/c
        with np.errstate(invalid="ignore", divide="ignore"):
            frac = np.where(c > 0, dataset.wins / np.maximum(c, 1), np.nan)
        return cls(1.0 - (1.0 - math.exp(-lam)) * frac, risk, c)

    @classmethod
    def population_limit(cls, game, risk):
        lam = risk.param
        return cls(1.0 - game.P + game.P * math.exp(-lam), risk)

    def _check(self, mu):
        if self.coverage_ok:
            return
        need = np.flatnonzero(mu > 0)
        bad = np.argwhere(self.counts[:, need] == 0)
        if bad.size:
            y, j = bad[0]
            raise CoverageError(f"pair ({y}, {need[j]}) was never observed", (int(y), int(need[j])))

    def __call__(self, mu):
        self._check(mu)
        s = np.nan_to_num(self.g_hat) @ mu
        return -np.log(s) / self.risk.param

    def jacobian(self, mu, h=1e-6):
        self._check(mu)
        G = np.nan_to_num(self.g_hat)
        return -(G / (G @ mu)[:, None]) / self.risk.param

    def fd_jacobian(self, mu, h=1e-6):
        return fd_jacobian(self, mu, h)


def empirical_operator(dataset, risk, mu):
    """Evaluate the empirical risk-adjusted operator at ``mu``.

    Raises
    ------
    CoverageError
        If a pair needed by ``supp(mu)`` was never observed.
    """
    mu = check_simplex(mu, n=dataset.n_responses, name="mu")
    return EmpiricalOperator.from_dataset(dataset, risk)(mu)


class _GameShim:
    # solve_deterministic only needs n from the game when an operator is supplied
    def __init__(self, n):
        self.n = n


def _solve(op, beta, theta_ref, tol, check_monotone):
    if check_monotone:
        diag = distortion_eigenvalue(None, op.risk, op=op)
        if beta - 2 * diag.lambda_bar <= 0:
            raise MonotonicityError(f"empirical operator not strongly monotone (lambda_bar = {diag.lambda_bar:.4g})")
    return solve_deterministic(_GameShim(op.n), op.risk, beta, theta_ref, tol=tol, op=op)


def empirical_equilibrium(dataset, risk, beta, theta_ref=None, tol=1e-12, check_monotone=True):
    """Damped fixed-point equilibrium of the empirical operator.

    Raises CoverageError, MonotonicityError or ConvergenceError; callers in a
    sweep record these as skipped trials.
    """
    op = EmpiricalOperator.from_dataset(dataset, risk)
    if not op.coverage_ok:
        bad = np.argwhere(dataset.counts == 0)[0]
        raise CoverageError(f"pair ({bad[0]}, {bad[1]}) was never observed", tuple(int(b) for b in bad))
    return _solve(op, beta, theta_ref, tol, check_monotone)


def population_limit_equilibrium(game, risk, beta, theta_ref=None, tol=1e-12):
    """Equilibrium of the infinite-data limit ``g = 1 - P + P e^{-lam}``."""
    return _solve(EmpiricalOperator.population_limit(game, risk), beta, theta_ref, tol, False)


OFFLINE_HEADER = ("n", "seed", "kl", "n_min", "skipped")


@dataclass(frozen=True, eq=False)
class RateSweep:
    """Fitted KL rate plus per-(n, seed) rows and the model offset."""

    fit: ScalingFit
    rows: list
    medians: dict
    skip_rate: float
    offset_kl: float


def _cell(args):
    game, risk, beta, theta_ref, n, seed_seq, target = args
    rng = np.random.default_rng(seed_seq)
    data = draw_dataset(game, n, rng=rng)
    try:
        pol = empirical_equilibrium(data, risk, beta, theta_ref)
    except (CoverageError, MonotonicityError, ConvergenceError) as exc:
        return float("nan"), data.n_min, type(exc).__name__
    return kl_divergence(target, pol.pi), data.n_min, ""


def rate_sweep(game, risk, beta, n_grid, seeds=20, master_seed=0, theta_ref=None, jobs=1):
    """Median KL between the population-limit and empirical equilibria versus ``n``.

    Each ``(n, seed)`` cell draws its own dataset from
    ``SeedSequence([*master_seed, n, seed])`` (``master_seed`` may be an int
    or a sequence of ints). Returns a :class:`RateSweep`
    whose ``offset_kl`` is ``KL(pi*_R || pi_limit)``, the gap between the
    matrix-defined equilibrium and the procedure's infinite-data limit.
    """
    n_grid = [check_count(n, "n") for n in n_grid]
    if len(n_grid) < 4:
        raise InvalidArgumentError("n_grid needs at least 4 points")
    seeds = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    target = population_limit_equilibrium(game, risk, beta, theta_ref).pi
    prefix = [int(master_seed)] if np.ndim(master_seed) == 0 else [int(v) for v in master_seed]
    cells = [
        (game, risk, beta, theta_ref, n, np.random.SeedSequence([*prefix, n, s]), target)
        for n in n_grid
        for s in seeds
    ]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            results = list(pool.map(_cell, cells))
    else:
        results = [_cell(c) for c in cells]
    rows, per_n = [], {n: [] for n in n_grid}
    for (_, _, _, _, n, _, _), s, (kl, n_min, skipped) in zip(cells, seeds * len(n_grid), results):
        rows.append({"n": n, "seed": s, "kl": kl, "n_min": n_min, "skipped": skipped})
        if not skipped:
            per_n[n].append(kl)
    empty = [n for n, v in per_n.items() if not v]
    if empty:
        raise ConvergenceError(f"every seed was skipped at n = {empty}")
    medians = {n: float(np.median(v)) for n, v in per_n.items()}
    fit = fit_loglog(list(medians), list(medians.values()))
    skip_rate = sum(bool(r["skipped"]) for r in rows) / len(rows)
    try:
        star = solve_deterministic(game, risk, beta, theta_ref, tol=1e-12)
        offset = kl_divergence(star.pi, target)
    except ConvergenceError:
        offset = float("nan")
    return RateSweep(fit, rows, medians, skip_rate, offset)
