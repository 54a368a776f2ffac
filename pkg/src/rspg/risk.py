"""Convex risk measures on finite distributions and the risk-adjusted
preference operator built from them.

Conventions
-----------
* Entropic risk is pessimistic: ``Ent_lam(Z) = -(1/lam) log E[exp(-lam Z)]``.
* CVaR is the *lower*-tail mean at level ``alpha``; ``CVaR_alpha(Z)`` equals
  ``sup_eta {eta - E[(eta - Z)_+] / alpha}``. The upper-tail
  Rockafellar-Uryasev form lives in :mod:`rspg.estimate`.
"""

import functools
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax

from .exceptions import DomainError, InvalidArgumentError
from .game import gauge_fix
from .validation import check_simplex

__all__ = [
    "RiskMeasure",
    "RiskOperator",
    "RiskOperatorOutput",
    "DistortionDiagnostics",
    "risk_eval_exact",
    "risk_adjusted_operator",
    "single_player_operator",
    "risk_jacobian",
    "fd_jacobian",
    "distortion_eigenvalue",
    "classify_regime",
    "joint_pseudogradient",
    "tangent_basis",
    "project_tangent",
    "spread",
    "gap_delta_star",
    "DIAGNOSTICS_HEADER",
]

EXPECTATION = "expectation"
ENTROPIC = "entropic"
CVAR = "cvar"
_KINDS = (EXPECTATION, ENTROPIC, CVAR)


@dataclass(frozen=True)
class RiskMeasure:
    """Tagged risk measure: expectation, entropic(lam) or lower-tail CVaR(alpha)."""

    kind: str = EXPECTATION
    param: float | None = None

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in _KINDS:
            raise InvalidArgumentError(f"unknown risk kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        if kind == ENTROPIC:
            if self.param is None or not self.param > 0:
                raise InvalidArgumentError("entropic risk needs lam > 0")
        elif kind == CVAR:
            if self.param is None or not 0 < self.param < 1:
                raise InvalidArgumentError("CVaR needs alpha in (0, 1)")
        if self.param is not None:
            object.__setattr__(self, "param", float(self.param))

    @classmethod
    def expectation(cls):
        return cls(EXPECTATION)

    @classmethod
    def entropic(cls, lam):
        return cls(ENTROPIC, lam)

    @classmethod
    def cvar(cls, alpha):
        return cls(CVAR, alpha)

    @classmethod
    def parse(cls, text):
        """Parse ``"expectation"``, ``"entropic:6"`` or ``"cvar:0.25"``."""
        kind, _, param = text.strip().partition(":")
        return cls(kind, float(param) if param else None)

    def __str__(self):
        return self.kind if self.param is None else f"{self.kind}:{self.param:g}"

    @property
    def param_or_nan(self):
        return float("nan") if self.param is None else self.param


def _risk_rows(risk, Z, w):
    """Risk of each row of ``Z`` under common weights ``w`` (no validation)."""
    if risk.kind == EXPECTATION:
        return Z @ w
    if risk.kind == ENTROPIC:
        lam = risk.param
        return -logsumexp(-lam * Z, b=np.broadcast_to(w, Z.shape), axis=-1) / lam
    order = np.argsort(Z, axis=-1, kind="stable")
    return _cvar_sorted(np.take_along_axis(Z, order, axis=-1), w[order], risk.param)


def _cvar_sorted(Zs, ws, alpha):
    # lower-tail mean: fill mass alpha from the smallest outcome upward,
    # taking a fractional share of the boundary atom
    cum = np.cumsum(ws, axis=-1)
    take = np.clip(alpha - (cum - ws), 0.0, ws)
    return (take * Zs).sum(axis=-1) / alpha


def risk_eval_exact(risk, outcomes, weights):
    """Exact value of ``risk`` for the finite distribution ``sum_i w_i delta_{z_i}``."""
    z = np.asarray(outcomes, dtype=float)
    if z.ndim != 1 or not np.all(np.isfinite(z)):
        raise InvalidArgumentError("outcomes must be a finite 1-d vector")
    w = check_simplex(weights, n=z.shape[0])
    return float(_risk_rows(risk, z[None, :], np.clip(w, 0.0, None))[0])


@dataclass(frozen=True)
class RiskOperatorOutput:
    values: np.ndarray
    player: str


class RiskOperator:
    """Risk-adjusted operator ``(P_R mu)_y = R[P(y, Y'')], Y'' ~ mu``.

    Precomputes per-row data (exponentials for entropic, sort orders for CVaR)
    so repeated evaluations inside solver loops cost O(n^2).
    """

    def __init__(self, game, risk, matrix=None):
        self.game = game
        self.risk = risk
        M = game.P if matrix is None else np.asarray(matrix, dtype=float)
        self.matrix = M
        self.n = M.shape[0]
        if risk.kind == ENTROPIC:
            lam = risk.param
            self._row_min = M.min(axis=1)
            self._E = np.exp(-lam * (M - self._row_min[:, None]))
        elif risk.kind == CVAR:
            self._order = np.argsort(M, axis=1, kind="stable")
            self._sorted = np.take_along_axis(M, self._order, axis=1)

    def __call__(self, mu):
        kind = self.risk.kind
        if kind == EXPECTATION:
            return self.matrix @ mu
        if kind == ENTROPIC:
            s = self._E @ mu
            return self._row_min - np.log(s) / self.risk.param
        return _cvar_sorted(self._sorted, mu[self._order], self.risk.param)

    def jacobian(self, mu, h=1e-6):
        kind = self.risk.kind
        if kind == EXPECTATION:
            return self.matrix.copy()
        if kind == ENTROPIC:
            if np.any(mu <= 0):
                raise DomainError("Jacobian needs a strictly positive mu")
            return -(self._E / (self._E @ mu)[:, None]) / self.risk.param
        return fd_jacobian(self, mu, h)


@functools.lru_cache(maxsize=64)
def _basis(n):
    # orthonormal basis of 1^perp via QR of the centering matrix
    C = np.eye(n) - 1.0 / n
    Q, _ = np.linalg.qr(C[:, : n - 1])
    Q.setflags(write=False)
    return Q


def tangent_basis(n):
    """``n x (n-1)`` orthonormal basis of the zero-sum subspace."""
    return _basis(int(n))


def project_tangent(v):
    return gauge_fix(v)


def fd_jacobian(op, mu, h=1e-6):
    """Central finite-difference Jacobian of ``op`` along the simplex tangent.

    Columns are probed along an orthonormal basis ``Q`` of ``1^perp`` and the
    result is ``(dP Q) Q^T``, which is exact on tangent directions.
    """
    mu = np.asarray(mu, dtype=float)
    if np.any(mu <= 0):
        raise DomainError("Jacobian needs a strictly positive mu")
    Q = tangent_basis(mu.shape[0])
    h = min(h, 0.25 * mu.min() / np.abs(Q).max())
    cols = np.empty((mu.shape[0], Q.shape[1]))
    for k in range(Q.shape[1]):
        q = Q[:, k]
        cols[:, k] = (op(mu + h * q) - op(mu - h * q)) / (2 * h)
    return cols @ Q.T


def risk_adjusted_operator(game, risk, mu, player="one"):
    """Evaluate ``P^1_R mu`` (player one) or ``P^2_R mu`` (player two).

    Player two's entry ``a`` is ``R(-P[Y', a])`` with ``Y' ~ mu``.
    """
    mu = check_simplex(mu, n=game.n, name="mu")
    mu = np.clip(mu, 0.0, None)
    if player in ("one", 1, "PlayerOne"):
        return RiskOperatorOutput(_risk_rows(risk, game.P, mu), "one")
    if player in ("two", 2, "PlayerTwo"):
        return RiskOperatorOutput(_risk_rows(risk, -game.P.T, mu), "two")
    raise InvalidArgumentError(f"unknown player {player!r}")


def single_player_operator(game, risk, beta, theta, theta_ref, op=None):
    """Residual ``F_R(theta) = beta (theta - theta_ref) - P_R pi_theta``."""
    theta = np.asarray(theta, dtype=float)
    op = RiskOperator(game, risk) if op is None else op
    return beta * (theta - np.asarray(theta_ref, dtype=float)) - op(softmax(theta))


def risk_jacobian(game, risk, mu, h=1e-6):
    """``J_R(mu) = d(P_R mu)/d mu``; analytic for entropic/expectation, FD for CVaR."""
    mu = check_simplex(mu, n=game.n, name="mu", strict=True)
    return RiskOperator(game, risk).jacobian(mu, h)


def classify_regime(lambda_bar, beta, tol=1e-12):
    # lambda_bar is a search estimate; treat |lambda_bar| <= tol as exactly zero
    if lambda_bar <= tol:
        return "RiskAligned"
    if lambda_bar <= beta / 2:
        return "Moderate"
    return "Aggressive"


@dataclass(frozen=True)
class DistortionDiagnostics:
    """Search estimate of the worst-case risk-distortion eigenvalue.

    ``lambda_bar`` is a lower bound on the supremum over the simplex.
    ``mu_R`` and ``regime`` are only filled when ``beta`` was supplied.
    """

    lambda_bar: float
    argmax_pi: np.ndarray
    beta: float | None = None
    mu_R: float | None = None
    regime: str | None = None
    n_candidates: int = 0

    def with_beta(self, beta):
        return DistortionDiagnostics(
            self.lambda_bar,
            self.argmax_pi,
            beta,
            beta - 2 * self.lambda_bar,
            classify_regime(self.lambda_bar, beta),
            self.n_candidates,
        )


def _sym_tangent_max_eig(J):
    Q = tangent_basis(J.shape[0])
    M = 0.5 * (J + J.T)
    return float(np.linalg.eigvalsh(Q.T @ M @ Q)[-1])


def _search_lambda_bar(jac, n, grid_points, restarts, seed, refine_steps=25):
    rng = np.random.default_rng(seed)
    uniform = np.full(n, 1.0 / n)
    cands = [uniform]
    cands.extend(rng.dirichlet(np.ones(n), size=grid_points))
    for i in range(n):
        v = np.full(n, 0.1 / n)
        v[i] += 0.9
        cands.append(v)
    vals = np.array([_sym_tangent_max_eig(jac(c)) for c in cands])

    best_idx = np.argsort(vals)[::-1][: max(restarts, 0)]
    top = int(vals.argmax())
    best_val, best_pi = float(vals[top]), cands[top]
    for idx in best_idx:
        pi, val = cands[idx], vals[idx]
        scale = 0.5
        for _ in range(refine_steps):
            trial = pi * np.exp(scale * rng.normal(size=n))
            trial = np.clip(trial / trial.sum(), 1e-12, None)
            trial /= trial.sum()
            tv = _sym_tangent_max_eig(jac(trial))
            if tv > val:
                pi, val = trial, tv
            else:
                scale *= 0.8
        if val > best_val:
            best_val, best_pi = float(val), pi
    return best_val, best_pi, len(cands) + len(best_idx) * refine_steps


def distortion_eigenvalue(game, risk, beta=None, grid_points=256, restarts=4, seed=0, op=None):
    """Estimate ``lambda_bar_R = sup_pi max_{xi in 1^perp, |xi|=1} xi^T sym(J_R(pi)) xi``.

    Candidates are the barycenter, ``grid_points`` Dirichlet(1) draws and
    smoothed vertices; the best ``restarts`` candidates are refined by a
    seeded multiplicative random search. The result is an estimate (a lower
    bound on the true supremum), not a certificate.
    """
    if grid_points < 1 or restarts < 0:
        raise InvalidArgumentError("search parameters must be positive")
    op = RiskOperator(game, risk) if op is None else op
    lam, pi, count = _search_lambda_bar(op.jacobian, op.n, grid_points, restarts, seed)
    diag = DistortionDiagnostics(lam, pi, n_candidates=count)
    return diag if beta is None else diag.with_beta(beta)


def spread(game, pi):
    """``max_y (A pi)_y - min_y (A pi)_y``."""
    z = game.A @ pi
    return float(z.max() - z.min())


def gap_delta_star(game, pi=None, atol=0.0):
    """``max_y`` spread of row ``y`` of ``A`` over ``supp(pi)`` (all of Y by default)."""
    A = game.A
    if pi is not None:
        A = A[:, np.asarray(pi) > atol]
    return float((A.max(axis=1) - A.min(axis=1)).max())


def joint_pseudogradient(game, risk1, risk2, beta, theta1, theta2, theta_ref):
    """Stacked two-player pseudogradient.

    ``block1 = theta1 - theta_ref - P^1_{R1} pi_{theta2} / beta`` and
    ``block2 = theta2 - theta_ref - P^2_{R2} pi_{theta1} / beta``.
    """
    theta_ref = np.asarray(theta_ref, dtype=float)
    pi1, pi2 = softmax(np.asarray(theta1, float)), softmax(np.asarray(theta2, float))
    g1 = theta1 - theta_ref - _risk_rows(risk1, game.P, pi2) / beta
    g2 = theta2 - theta_ref - _risk_rows(risk2, -game.P.T, pi1) / beta
    return g1, g2


DIAGNOSTICS_HEADER = ("kind", "param", "beta", "lambda_bar", "mu_R", "regime")


def diagnostics_row(risk, diag):
    return {
        "kind": risk.kind,
        "param": risk.param_or_nan,
        "beta": diag.beta,
        "lambda_bar": diag.lambda_bar,
        "mu_R": diag.mu_R,
        "regime": diag.regime,
    }
