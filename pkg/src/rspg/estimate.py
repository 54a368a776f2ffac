"""Monte-Carlo plug-in oracles for the risk-adjusted operator.

Every oracle draws ``m`` opponent responses ``Y''_i ~ pi_theta`` once and
reuses them for all ``n`` components. Bias targets are stored at the
``F`` level: ``b_m = E[F_hat] - F_R = P_R - E[P_hat]``.
"""

import csv
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy.special import softmax
from scipy.stats import multinomial

from .exceptions import InvalidArgumentError
from .risk import CVAR, ENTROPIC, EXPECTATION, RiskOperator, _cvar_sorted
from .validation import check_count, check_logits, check_positive

__all__ = [
    "OracleSample",
    "OracleConstants",
    "BiasEstimate",
    "BiasOracle",
    "PluginOracle",
    "plugin_oracle",
    "oracle_constants",
    "cvar_ru_estimator",
    "cvar_ru_value",
    "cvar_ru_batch",
    "delta_method_bias",
    "bias_bruteforce",
    "bias_sweep",
    "write_bias_sweep",
    "sample_indices",
    "BIAS_SWEEP_HEADER",
]


@dataclass(frozen=True, eq=False)
class OracleSample:
    """One sampled oracle call: ``f_hat = beta (theta - theta_ref) - p_hat``."""

    f_hat: np.ndarray
    p_hat: np.ndarray
    m: int
    opponent_draws: np.ndarray
    convention: str = "plugin"


@dataclass(frozen=True)
class OracleConstants:
    B_m: float
    V_m: float
    B_tilde: float
    V_tilde: float


@dataclass(frozen=True, eq=False)
class BiasEstimate:
    """F-level bias sample ``xi_hat`` with its residual-order tag."""

    xi_hat: np.ndarray
    residual_order: str = "DeltaMethod"


def sample_indices(pi, size, rng):
    """Draw indices from the probability vector ``pi`` (inverse CDF)."""
    cdf = np.cumsum(pi)
    idx = np.searchsorted(cdf, rng.random(size) * cdf[-1], side="right")
    return np.minimum(idx, len(pi) - 1)


class PluginOracle:
    """Reusable plug-in oracle with per-game precomputation.

    Parameters
    ----------
    game : PreferenceGame
    risk : RiskMeasure
    beta : float
    theta_ref : array
    m : int
        Opponent batch size.
    """

    def __init__(self, game, risk, beta, theta_ref, m):
        self.game = game
        self.risk = risk
        self.beta = check_positive(beta, "beta")
        self.theta_ref = np.asarray(theta_ref, dtype=float)
        self.m = check_count(m, "m")
        self.operator = RiskOperator(game, risk)
        P = game.P
        if risk.kind == ENTROPIC:
            self._row_min = P.min(axis=1)
            self._E = np.exp(-risk.param * (P - self._row_min[:, None]))

    def draw(self, pi, rng, reps=None):
        shape = self.m if reps is None else (reps, self.m)
        return sample_indices(pi, shape, rng)

    def p_hat(self, draws):
        """Plug-in estimate from index draws of shape ``(m,)`` or ``(reps, m)``.

        Returns shape ``(n,)`` or ``(reps, n)``.
        """
        risk, P = self.risk, self.game.P
        X = P[:, draws]  # (n, m) or (n, reps, m)
        if risk.kind == EXPECTATION:
            out = X.mean(axis=-1)
        elif risk.kind == ENTROPIC:
            q = self._E[:, draws].mean(axis=-1)
            rm = self._row_min if draws.ndim == 1 else self._row_min[:, None]
            out = rm - np.log(q) / risk.param
        else:
            Xs = np.sort(X, axis=-1)
            w = np.full(Xs.shape[-1], 1.0 / Xs.shape[-1])
            out = _cvar_sorted(Xs, w, risk.param)
        return out if draws.ndim == 1 else out.T

    def sample(self, theta, rng):
        theta = np.asarray(theta, dtype=float)
        draws = self.draw(softmax(theta), rng)
        p = self.p_hat(draws)
        f = self.beta * (theta - self.theta_ref) - p
        return OracleSample(f, p, self.m, draws)

    __call__ = sample

    def exact(self, theta):
        """Deterministic ``F_R(theta)``."""
        theta = np.asarray(theta, dtype=float)
        return self.beta * (theta - self.theta_ref) - self.operator(softmax(theta))

    def bias_estimate(self, sample):
        """Delta-method F-level bias from the draws already in ``sample``."""
        if self.risk.kind == EXPECTATION:
            return BiasEstimate(np.zeros(self.game.n), "ExactZero")
        if self.risk.kind != ENTROPIC:
            raise InvalidArgumentError("delta-method bias is only defined for entropic risk")
        m = sample.opponent_draws.shape[0]
        if m < 2:
            raise InvalidArgumentError("delta-method bias needs m >= 2")
        g = self._E[:, sample.opponent_draws]
        q = g.mean(axis=1)
        var = g.var(axis=1, ddof=1)
        return BiasEstimate(-var / (2 * m * self.risk.param * q**2), "DeltaMethod")


def plugin_oracle(game, risk, beta, theta, theta_ref, m, rng):
    """Single plug-in oracle call; see :class:`PluginOracle`."""
    if int(m) != m or m < 1:
        raise InvalidArgumentError("m must be a positive integer")
    theta = check_logits(theta)
    return PluginOracle(game, risk, beta, theta_ref, m).sample(theta, rng)


def delta_method_bias(game, risk, theta, m, rng_samples):
    """F-level delta-method bias ``xi_y = -Var_hat(g_y) / (2 m lam q_hat_y^2)``.

    ``g_{y,i} = exp(-lam P[y, Y''_i])`` is recomputed from the draws of
    ``rng_samples`` (no new randomness). ``theta`` is accepted for interface
    symmetry; the estimate only depends on the draws.
    """
    if rng_samples.convention.startswith("cvar_ru"):
        return BiasEstimate(np.zeros(game.n), "ExactZero")
    if risk.kind != ENTROPIC:
        raise InvalidArgumentError("delta_method_bias requires entropic risk")
    if m < 2:
        raise InvalidArgumentError("delta-method bias needs m >= 2")
    g = np.exp(-risk.param * game.P[:, rng_samples.opponent_draws])
    q = g.mean(axis=1)
    var = g.var(axis=1, ddof=1)
    return BiasEstimate(-var / (2 * m * risk.param * q**2), "DeltaMethod")


def oracle_constants(risk, beta, m, n, sigma_max):
    """Leading-order bias/variance bounds of the sampled oracle."""
    check_count(m, "m")
    beta = check_positive(beta, "beta")
    if risk.kind == ENTROPIC:
        lam = risk.param
        core = (1 - math.exp(-lam)) ** 2 * math.exp(2 * lam)
        c_b = core / (8 * lam)
        c_z = core / (4 * lam**2)
        B = math.sqrt(n) * c_b / (beta * m)
        V = n * c_z / (beta**2 * m)
    elif risk.kind == CVAR:
        B = 0.0
        V = n / (4 * beta**2 * (1 - risk.param) ** 2 * m)
    else:
        B = 0.0
        V = n / (4 * beta**2 * m)
    return OracleConstants(B, V, math.sqrt(sigma_max) * B, sigma_max * V)


def _upper_var(x, w, alpha):
    # smallest x with P(X <= x) >= alpha
    order = np.argsort(x, kind="stable")
    cum = np.cumsum(w[order])
    k = min(int(np.searchsorted(cum, alpha - 1e-15)), len(x) - 1)
    return float(x[order][k])


def cvar_ru_value(x, w, alpha):
    """Population upper-tail RU value ``min_nu {nu + E[(X - nu)_+] / (1 - alpha)}``.

    Returns ``(value, nu_star)``.
    """
    x, w = np.asarray(x, dtype=float), np.asarray(w, dtype=float)
    nu = _upper_var(x, w, alpha)
    return nu + float(w @ np.maximum(x - nu, 0.0)) / (1 - alpha), nu


def _cvar_ru_values(P, pi, draws, alpha, nu):
    # draws: (..., m); returns (..., n)
    X = np.moveaxis(P[:, draws], 0, -2)  # (..., n, m)
    m = draws.shape[-1]
    if nu == "FixedAtVaR":
        nus = np.array([_upper_var(row, pi, alpha) for row in P])
    elif nu == "JointlyOptimized":
        nus = np.sort(X, axis=-1)[..., max(math.ceil(alpha * m) - 1, 0)]
    else:
        raise InvalidArgumentError(f"unknown threshold policy {nu!r}")
    return nus + np.maximum(X - nus[..., None], 0.0).mean(axis=-1) / (1 - alpha)


def cvar_ru_estimator(game, alpha, theta, m, rng, nu="FixedAtVaR", beta=None, theta_ref=None):
    """Upper-tail Rockafellar-Uryasev CVaR estimator, per component.

    ``C_hat_m(nu) = nu + mean((X_i - nu)_+) / (1 - alpha)`` with
    ``X_i = P[y, Y''_i]``. ``FixedAtVaR`` uses the exact population
    alpha-quantile (unbiased); ``JointlyOptimized`` plugs in the empirical
    alpha-quantile. ``f_hat`` is only meaningful when ``beta`` is given.
    """
    if not 0 < alpha < 1:
        raise InvalidArgumentError("alpha must lie in (0, 1)")
    m = check_count(m, "m")
    theta = check_logits(theta)
    pi = softmax(theta)
    draws = sample_indices(pi, m, rng)
    p = _cvar_ru_values(game.P, pi, draws, alpha, nu)
    if beta is None:
        f = np.full(game.n, np.nan)
    else:
        ref = np.zeros(game.n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
        f = beta * (theta - ref) - p
    return OracleSample(f, p, m, draws, convention=f"cvar_ru_upper:{nu}")


def cvar_ru_batch(game, alpha, theta, m, reps, rng, nu="FixedAtVaR"):
    """``reps`` independent CVaR-RU estimates, shape ``(reps, n)``.

    Also returns the population upper-tail values per component.
    """
    pi = softmax(check_logits(theta))
    vals = _cvar_ru_values(game.P, pi, sample_indices(pi, (reps, m), rng), alpha, nu)
    target = np.array([cvar_ru_value(row, pi, alpha)[0] for row in game.P])
    return vals, target


@dataclass(frozen=True, eq=False)
class BiasOracle:
    """Ground-truth P-level bias ``E[p_hat] - P_R pi`` and variance of ``p_hat``."""

    bias: np.ndarray
    bias_se: np.ndarray
    var: np.ndarray
    exact: bool
    reps: int = 0
    extra: dict = field(default_factory=dict)


def _compositions(m, n):
    # all count vectors of length n summing to m (stars and bars)
    for bars in combinations(range(m + n - 1), n - 1):
        prev, out = -1, []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(m + n - 2 - prev)
        yield out


def bias_bruteforce(game, risk, theta, m, rng=None, reps=10**6, max_enumeration=200_000, chunk=20_000):
    """Brute-force bias/variance oracle for the plug-in estimator.

    Exact enumeration over multinomial count vectors when there are at most
    ``max_enumeration`` of them; otherwise ``reps`` Monte-Carlo replications
    with standard errors.
    """
    theta = check_logits(theta)
    pi = softmax(theta)
    n = game.n
    oracle = PluginOracle(game, risk, 1.0, np.zeros(n), m)
    target = oracle.operator(pi)
    if math.comb(m + n - 1, n - 1) <= max_enumeration:
        K = np.array(list(_compositions(m, n)), dtype=float)
        prob = multinomial.pmf(K, m, pi)
        vals = np.array([oracle.operator(k / m) for k in K])
        mean = prob @ vals
        var = prob @ (vals - mean) ** 2
        return BiasOracle(mean - target, np.zeros(n), var, True, len(K))
    if rng is None:
        raise InvalidArgumentError("Monte-Carlo bias oracle needs an rng")
    mean, se, var = _mc_bias(oracle, pi, target, reps, rng, chunk)
    return BiasOracle(mean, se, var, False, reps)


def _mc_bias(oracle, pi, target, reps, rng, chunk):
    """Monte-Carlo mean/SE of ``p_hat - target`` and variance of ``p_hat``.

    For entropic risk the mean uses the zero-mean control variate
    ``h'(q)(q_hat - q)``, which removes the O(1/sqrt(m)) noise without
    changing the expectation.
    """
    n, risk = oracle.game.n, oracle.risk
    entropic = risk.kind == ENTROPIC
    if entropic:
        lam = risk.param
        q_pop = oracle._E @ pi
    s1, s2, v1, v2, done = np.zeros(n), np.zeros(n), np.zeros(n), np.zeros(n), 0
    while done < reps:
        r = min(chunk, reps - done)
        draws = oracle.draw(pi, rng, r)
        if entropic:
            # shifted exponentials: the control variate is scale-free
            q_hat = oracle._E[:, draws].mean(axis=-1).T
            raw = oracle._row_min - np.log(q_hat) / lam - target
            d = raw + (q_hat - q_pop) / (lam * q_pop)
        else:
            raw = oracle.p_hat(draws) - target
            d = raw
        s1 += d.sum(axis=0)
        s2 += (d**2).sum(axis=0)
        v1 += raw.sum(axis=0)
        v2 += (raw**2).sum(axis=0)
        done += r
    mean = s1 / reps
    se = np.sqrt(np.maximum(s2 / reps - mean**2, 0.0) / (reps - 1))
    raw_mean = v1 / reps
    var = np.maximum(v2 - reps * raw_mean**2, 0.0) / (reps - 1)
    return mean, se, var


def _entropic_moments(game, risk, pi):
    g = np.exp(-risk.param * game.P)
    q = g @ pi
    sigma2 = (g**2) @ pi - q**2
    return q, np.maximum(sigma2, 0.0)


def bias_sweep(game, risk, theta, m_grid, reps, rng, chunk=10_000):
    """Monte-Carlo bias and variance of the plug-in oracle over a grid of ``m``.

    Returns a list of row dicts matching :data:`BIAS_SWEEP_HEADER`.
    """
    theta = check_logits(theta)
    pi = softmax(theta)
    n = game.n
    rows = []
    if risk.kind == ENTROPIC:
        q, sigma2 = _entropic_moments(game, risk, pi)
        lam = risk.param
    for m in m_grid:
        oracle = PluginOracle(game, risk, 1.0, np.zeros(n), m)
        mean, se, var = _mc_bias(oracle, pi, oracle.operator(pi), reps, rng, chunk)
        if risk.kind == ENTROPIC:
            bias_pred = sigma2 / (2 * m * lam * q**2)
            var_pred = sigma2 / (m * lam**2 * q**2)
        elif risk.kind == EXPECTATION:
            bias_pred = np.zeros(n)
            var_pred = (game.P**2 @ pi - (game.P @ pi) ** 2) / m
        else:
            bias_pred = np.full(n, np.nan)
            var_pred = np.full(n, np.nan)
        for y in range(n):
            rows.append(
                {
                    "risk": risk.kind,
                    "param": risk.param_or_nan,
                    "m": int(m),
                    "component": y,
                    "bias_mc": mean[y],
                    "bias_se": se[y],
                    "bias_predicted": bias_pred[y],
                    "var_mc": var[y],
                    "var_predicted": var_pred[y],
                }
            )
    return rows


BIAS_SWEEP_HEADER = ("risk", "param", "m", "component", "bias_mc", "bias_se", "bias_predicted", "var_mc", "var_predicted")


def write_bias_sweep(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=BIAS_SWEEP_HEADER, lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
