"""Post-run analysis: log-log scaling fits, stability-bound verification,
regime tables and the tracking-error sanity envelope."""

import csv
import math
from collections import defaultdict
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import softmax
from scipy.stats import linregress

from .estimate import PluginOracle, _mc_bias
from .exceptions import ConvergenceError, InvalidArgumentError
from .game import PreferenceGame, gauge_fix, kl_divergence
from .risk import CVAR, ENTROPIC, RiskOperator, distortion_eigenvalue, gap_delta_star, spread
from .solve import solve_deterministic

__all__ = [
    "ScalingFit",
    "StabilityReport",
    "fit_loglog",
    "fit_floor_scaling",
    "perturb_game",
    "verify_stability",
    "regime_table",
    "render_regime_table",
    "tracking_envelope",
    "write_rows",
    "STABILITY_HEADER",
    "REGIME_HEADER",
]


@dataclass(frozen=True, eq=False)
class ScalingFit:
    """OLS fit of ``log y = intercept + slope * log x``."""

    slope: float
    intercept: float
    r_squared: float
    points: np.ndarray


def fit_loglog(x, y):
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise InvalidArgumentError("need at least two matched points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise InvalidArgumentError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    if np.ptp(ly) == 0:
        return ScalingFit(0.0, float(ly[0]), 1.0, np.column_stack([lx, ly]))
    res = linregress(lx, ly)
    return ScalingFit(float(res.slope), float(res.intercept), float(min(res.rvalue**2, 1.0)), np.column_stack([lx, ly]))


def fit_floor_scaling(rows, min_points=4, min_seeds=3, key="m", value="floor"):
    """Fit the slope of median ``value`` against ``key`` on log-log axes.

    ``rows`` are summary dicts (or RunRecord summaries); the median is taken
    across seeds for each distinct ``key``.
    """
    groups = defaultdict(list)
    for r in rows:
        groups[r[key]].append(r[value])
    if len(groups) < min_points:
        raise InvalidArgumentError(f"need >= {min_points} distinct {key} values, got {len(groups)}")
    if any(len(v) < min_seeds for v in groups.values()):
        raise InvalidArgumentError(f"need >= {min_seeds} seeds per {key}")
    xs = sorted(groups)
    return fit_loglog(xs, [np.median(groups[x]) for x in xs])


@dataclass(frozen=True)
class StabilityReport:
    theta_dist: float
    operator_dist: float
    bound: float
    kl: float
    kl_bound: float
    operator_dist_inf: float = float("nan")
    sharp_rhs: float = float("nan")
    mu: float = float("nan")
    mu_prime: float = float("nan")
    skipped: str = ""

    @property
    def violated(self):
        if self.skipped:
            return False
        return self.theta_dist > self.bound or self.kl > self.kl_bound


STABILITY_HEADER = tuple(StabilityReport.__dataclass_fields__)


def perturb_game(game, eps, rng):
    """``P' = P + eps (S - S^T)/2`` clipped to [0, 1] and re-symmetrized."""
    n = game.n
    S = rng.uniform(-1.0, 1.0, size=(n, n))
    Pp = np.clip(game.P + eps * (S - S.T) / 2, 0.0, 1.0)
    Pp = 0.5 * (Pp + 1.0 - Pp.T)
    return PreferenceGame(Pp, kind=f"{game.kind}+perturbed", seed=game.seed)


def _fixed_point_theta(op, beta, theta_ref, pol):
    # representative theta = theta_ref + P_R pi / beta (no gauge freedom left)
    return theta_ref + op(pol.pi) / beta


def verify_stability(game, risk, beta, perturbation_scale, trials, rng=None, theta_ref=None, probes=512, deflate=0.9):
    """Check the equilibrium stability inequalities on random perturbations.

    For each trial, both equilibria are solved deterministically and
    ``||theta* - theta'*|| <= ||(P_R - P'_R) pi_theta'*|| / mu_min`` and
    ``KL(pi* || pi'*) <= ||P_R - P'_R||_inf^2 / mu_min^2`` are evaluated,
    with ``mu_min = deflate * min(mu_R, mu'_R)``. Operator distances are
    maxima over ``probes`` random simplex points plus both equilibria.
    Trials whose perturbed game is not strongly monotone are skipped.
    """
    rng = np.random.default_rng(rng)
    n = game.n
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    op = RiskOperator(game, risk)
    mu = beta - 2 * distortion_eigenvalue(game, risk, op=op).lambda_bar
    if mu <= 0:
        raise InvalidArgumentError(f"base game is not strongly monotone (mu_R = {mu:.4g})")
    star = solve_deterministic(game, risk, beta, theta_ref, tol=1e-13, op=op)
    th = _fixed_point_theta(op, beta, theta_ref, star)
    reports = []
    for _ in range(trials):
        gp = game if perturbation_scale == 0 else perturb_game(game, perturbation_scale, rng)
        probe_pts = rng.dirichlet(np.ones(n), size=probes)
        opp = RiskOperator(gp, risk)
        mu_p = beta - 2 * distortion_eigenvalue(gp, risk, op=opp).lambda_bar
        if mu_p <= 0:
            reports.append(_skipped("perturbed game not strongly monotone", mu, mu_p))
            continue
        try:
            star_p = solve_deterministic(gp, risk, beta, theta_ref, tol=1e-13, op=opp)
        except ConvergenceError:
            reports.append(_skipped("perturbed solve did not converge", mu, mu_p))
            continue
        th_p = _fixed_point_theta(opp, beta, theta_ref, star_p)
        pts = np.vstack([probe_pts, star.pi, star_p.pi])
        diffs = np.array([op(p) - opp(p) for p in pts])
        op_dist = float(np.linalg.norm(diffs, axis=1).max())
        op_inf = float(np.abs(diffs).max())
        sharp = float(np.linalg.norm(op(star_p.pi) - opp(star_p.pi)))
        mu_min = deflate * min(mu, mu_p)
        reports.append(
            StabilityReport(
                theta_dist=float(np.linalg.norm(th - th_p)),
                operator_dist=op_dist,
                bound=sharp / mu_min,
                kl=kl_divergence(star.pi, star_p.pi),
                kl_bound=op_inf**2 / mu_min**2,
                operator_dist_inf=op_inf,
                sharp_rhs=sharp,
                mu=mu,
                mu_prime=mu_p,
            )
        )
    return reports


def _skipped(tag, mu, mu_p):
    nan = float("nan")
    return StabilityReport(nan, nan, nan, nan, nan, mu=mu, mu_prime=mu_p, skipped=tag)


REGIME_HEADER = ("kind", "param", "beta", "lambda_bar", "mu_R", "regime", "prediction", "relative_error")


def regime_table(game, risk_grid, beta_grid, grid_points=256, restarts=4, seed=0):
    """Regime classification over risk and ``beta`` grids.

    Entropic rows carry the small-tau prediction ``tau spread(A)^2 / 4`` and
    its relative error; CVaR rows carry the bound ``Delta*(A)^2 (1-alpha)/alpha``.
    Both are evaluated at the lambda-bar-achieving policy (spread over its
    support).
    """
    if not risk_grid or not beta_grid:
        raise InvalidArgumentError("risk and beta grids must be nonempty")
    rows = []
    for risk in risk_grid:
        diag = distortion_eigenvalue(game, risk, grid_points=grid_points, restarts=restarts, seed=seed)
        pred, rel = float("nan"), float("nan")
        if risk.kind == ENTROPIC:
            pred = risk.param * spread(game, diag.argmax_pi) ** 2 / 4
            rel = abs(diag.lambda_bar - pred) / abs(diag.lambda_bar) if diag.lambda_bar else float("inf")
        elif risk.kind == CVAR:
            pred = gap_delta_star(game, diag.argmax_pi) ** 2 * (1 - risk.param) / risk.param
        for beta in beta_grid:
            d = diag.with_beta(beta)
            rows.append(
                {
                    "kind": risk.kind,
                    "param": risk.param_or_nan,
                    "beta": float(beta),
                    "lambda_bar": d.lambda_bar,
                    "mu_R": d.mu_R,
                    "regime": d.regime,
                    "prediction": pred,
                    "relative_error": rel,
                }
            )
    return rows


def _cell(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else format(v, ".6g")
    return str(v)


def render_regime_table(rows, columns=REGIME_HEADER):
    """Aligned plain-text rendering of :func:`regime_table` rows."""
    cells = [list(columns)] + [[_cell(r[c]) for c in columns] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(columns))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(row, widths)) for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"


def write_rows(rows, path, header):
    """CSV writer shared by the reports: floats at 17 significant digits."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            r = asdict(r) if hasattr(r, "__dataclass_fields__") else r
            w.writerow([_csv(r[h]) for h in header])


def _csv(v):
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return "" if math.isnan(v) else format(float(v), ".17g")
    return str(v)


def tracking_envelope(game, risk, beta, theta, m, eta, gamma, precond, rng, reps=20_000, theta_ref=None, probes=8, h=1e-4):
    """Constant-step steady-state tracking error ``V_inf`` with measured inputs.

    ``V_inf = 2 C1 eta^2/gamma^2 + 2 C2 R_m^2 + 2 C3 gamma V_b`` with
    ``C1 = 63 L_b^2 sigma_max^2 G^2``, ``C2 = 6``, ``C3 = 2``. ``R_m`` is the
    measured residual bias of the delta-method estimator, ``V_b`` its
    variance, ``L_b`` a finite-difference Lipschitz estimate of ``b_m`` and
    ``G`` the largest observed oracle norm.
    """
    n = game.n
    theta = np.asarray(theta, dtype=float)
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    oracle = PluginOracle(game, risk, beta, theta_ref, m)
    op = oracle.operator

    def b_m(th):
        pi = softmax(th)
        return -_mc_bias(oracle, pi, op(pi), reps, np.random.default_rng(12345), 10_000)[0]

    b0 = b_m(theta)
    samples = [oracle.sample(theta, rng) for _ in range(2000)]
    xi = np.array([oracle.bias_estimate(s).xi_hat for s in samples])
    R_m = float(np.linalg.norm(xi.mean(axis=0) - b0))
    V_b = float(((xi - xi.mean(axis=0)) ** 2).sum(axis=1).mean())
    G = float(max(np.linalg.norm(s.f_hat) for s in samples))
    L_b = 0.0
    for _ in range(probes):
        d = gauge_fix(rng.normal(size=n))
        d /= np.linalg.norm(d)
        L_b = max(L_b, float(np.linalg.norm(b_m(theta + h * d) - b0) / h))
    C1 = 63 * L_b**2 * precond.sigma_max**2 * G**2
    V_inf = 2 * C1 * eta**2 / gamma**2 + 2 * 6 * R_m**2 + 2 * 2 * gamma * V_b
    return {"V_inf": V_inf, "R_m": R_m, "V_b": V_b, "L_b": L_b, "G": G, "C1": C1}
