"""scikit-learn style wrappers around the functional API.

Each estimator takes a preference matrix (or comparison data) in ``fit`` and
exposes fitted attributes with a trailing underscore.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgumentError
from .game import PreferenceGame
from .offline import EmpiricalOperator, OfflineDataset, _solve
from .risk import RiskMeasure, RiskOperator, distortion_eigenvalue
from .solve import Schedule, SolverConfig, run_solver, solve_deterministic

__all__ = ["RiskAdjustedQRE", "StochasticRQRESolver", "OfflineRQRE", "RiskAdjustedOperator"]


def _risk(risk):
    if isinstance(risk, RiskMeasure):
        return risk
    if isinstance(risk, str):
        return RiskMeasure.parse(risk)
    raise InvalidArgumentError(f"cannot interpret risk {risk!r}")


def _game(X):
    if isinstance(X, PreferenceGame):
        return X
    return PreferenceGame(check_array(X, ensure_min_samples=2, ensure_min_features=2))


def _theta_ref(theta_ref, n):
    return np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)


class RiskAdjustedQRE(BaseEstimator):
    """Risk-adjusted quantal response equilibrium of a preference game.

    Parameters
    ----------
    risk : str or RiskMeasure, default="entropic:6"
    beta : float, default=0.6
        KL-regularization strength.
    theta_ref : array-like or None
        Reference logits (zeros when None).
    tol, max_iter
        Passed to the damped fixed-point solver.

    Attributes
    ----------
    theta_, pi_ : ndarray
        Gauge-fixed equilibrium logits and policy.
    lambda_bar_, mu_R_, regime_
        Risk-distortion diagnostics of the fitted game.
    """

    def __init__(self, risk="entropic:6", beta=0.6, theta_ref=None, tol=1e-12, max_iter=100_000):
        self.risk = risk
        self.beta = beta
        self.theta_ref = theta_ref
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, X, y=None):
        game = _game(X)
        risk = _risk(self.risk)
        op = RiskOperator(game, risk)
        ref = _theta_ref(self.theta_ref, game.n)
        pol = solve_deterministic(game, risk, self.beta, ref, tol=self.tol, max_iter=self.max_iter, op=op)
        diag = distortion_eigenvalue(game, risk, beta=self.beta, op=op)
        self.theta_, self.pi_ = pol.theta, pol.pi
        r = self.beta * (pol.theta - ref) - op(pol.pi)
        self.residual_ = float(np.linalg.norm(r - r.mean()))
        self.lambda_bar_, self.mu_R_, self.regime_ = diag.lambda_bar, diag.mu_R, diag.regime
        self.n_features_in_ = game.n
        return self

    def predict_proba(self, X=None):
        """Equilibrium policy (independent of ``X``)."""
        check_is_fitted(self, "pi_")
        return self.pi_.copy()


class StochasticRQRESolver(BaseEstimator):
    """Stochastic EG / MD / TT-EG / TT-MD solver with a sampled oracle.

    Attributes
    ----------
    record_ : RunRecord
    theta_, pi_ : ndarray
        Final Polyak-averaged logits and their softmax.
    floor_ : float
    """

    def __init__(
        self,
        algorithm="TTEG",
        risk="entropic:6",
        beta=0.6,
        eta=0.04,
        gamma=0.5,
        m=15,
        T=4000,
        polyak="window",
        polyak_window=500,
        oracle="plugin",
        track_every=0,
        random_state=0,
    ):
        self.algorithm = algorithm
        self.risk = risk
        self.beta = beta
        self.eta = eta
        self.gamma = gamma
        self.m = m
        self.T = T
        self.polyak = polyak
        self.polyak_window = polyak_window
        self.oracle = oracle
        self.track_every = track_every
        self.random_state = random_state

    def fit(self, X, y=None):
        game = _game(X)
        cfg = SolverConfig(
            algorithm=self.algorithm,
            beta=self.beta,
            eta=Schedule.constant(self.eta),
            gamma=Schedule.constant(self.gamma),
            m=self.m,
            T=self.T,
            oracle=self.oracle,
            polyak=self.polyak,
            polyak_window=self.polyak_window,
            floor_window=min(500, max(self.T, 1)),
            track_every=self.track_every,
            seed=self.random_state,
        )
        self.record_ = run_solver(cfg, game, _risk(self.risk))
        self.theta_ = self.record_.polyak_final - self.record_.polyak_final.mean()
        self.pi_ = np.exp(self.theta_ - self.theta_.max())
        self.pi_ /= self.pi_.sum()
        self.floor_ = self.record_.floor
        self.n_features_in_ = game.n
        return self

    def predict_proba(self, X=None):
        check_is_fitted(self, "pi_")
        return self.pi_.copy()


class OfflineRQRE(BaseEstimator):
    """Empirical risk-adjusted equilibrium from pairwise comparisons.

    ``fit(X, y)`` takes ``X`` of shape ``(k, 2)`` with response indices
    ``(y, y')`` and binary outcomes ``y`` (1 when the first response wins).
    """

    def __init__(self, risk="entropic:1", beta=1.0, n_responses=None, theta_ref=None, tol=1e-12, check_monotone=True):
        self.risk = risk
        self.beta = beta
        self.n_responses = n_responses
        self.theta_ref = theta_ref
        self.tol = tol
        self.check_monotone = check_monotone

    def fit(self, X, y):
        pairs = check_array(X, dtype=np.int64)
        if pairs.shape[1] != 2:
            raise InvalidArgumentError("X must have two columns of response indices")
        z = np.asarray(y)
        if z.shape != (pairs.shape[0],) or not np.isin(z, (0, 1)).all():
            raise InvalidArgumentError("y must be a 0/1 vector matching X")
        k = int(pairs.max()) + 1 if self.n_responses is None else int(self.n_responses)
        flat = pairs[:, 0] * k + pairs[:, 1]
        counts = np.bincount(flat, minlength=k * k).reshape(k, k)
        wins = np.bincount(flat, weights=z, minlength=k * k).reshape(k, k)
        self.dataset_ = OfflineDataset(len(z), pairs, z.astype(np.int8), counts, wins)
        risk = _risk(self.risk)
        self.operator_ = EmpiricalOperator.from_dataset(self.dataset_, risk)
        pol = _solve(self.operator_, self.beta, _theta_ref(self.theta_ref, k), self.tol, self.check_monotone)
        self.theta_, self.pi_ = pol.theta, pol.pi
        self.n_features_in_ = 2
        return self

    def predict_proba(self, X):
        """Empirical win rate of ``X[:, 0]`` over ``X[:, 1]`` (NaN if unobserved)."""
        check_is_fitted(self, "dataset_")
        pairs = check_array(X, dtype=np.int64)
        c = self.dataset_.counts[pairs[:, 0], pairs[:, 1]]
        w = self.dataset_.wins[pairs[:, 0], pairs[:, 1]]
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(c > 0, w / np.maximum(c, 1), np.nan)


class RiskAdjustedOperator(TransformerMixin, BaseEstimator):
    """Map opponent mixtures ``mu`` (rows of ``X``) to ``P_R mu``.

    ``fit`` takes the preference matrix; ``transform`` the mixtures.
    """

    def __init__(self, risk="entropic:6", player="one"):
        self.risk = risk
        self.player = player

    def fit(self, X, y=None):
        self.game_ = _game(X)
        risk = _risk(self.risk)
        if self.player == "one":
            self.operator_ = RiskOperator(self.game_, risk)
        elif self.player == "two":
            self.operator_ = RiskOperator(self.game_, risk, matrix=-self.game_.P.T)
        else:
            raise InvalidArgumentError(f"unknown player {self.player!r}")
        self.n_features_in_ = self.game_.n
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        M = check_array(X)
        if M.shape[1] != self.n_features_in_:
            raise InvalidArgumentError(f"expected {self.n_features_in_} columns, got {M.shape[1]}")
        if np.any(M < -1e-9) or np.any(np.abs(M.sum(axis=1) - 1) > 1e-9):
            raise InvalidArgumentError("rows of X must be probability vectors")
        return np.array([self.operator_(np.clip(row, 0.0, None)) for row in M])
