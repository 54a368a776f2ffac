"""Equilibrium solvers: damped fixed point, stochastic extragradient and
mirror descent with biased oracles, two-timescale bias tracking (TT-EG,
TT-MD) and deterministic joint two-player extragradient.

Iterates live on the slice ``theta_ref + 1^perp`` and are projected onto a
``Sigma^+`` ball after every step.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import softmax

from .estimate import PluginOracle, _mc_bias
from .exceptions import ConvergenceError, InvalidArgumentError
from .game import Policy, ProjectionBall, gauge_fix, make_preconditioner
from .risk import (
    ENTROPIC,
    RiskOperator,
    distortion_eigenvalue,
    joint_pseudogradient,
)
from .validation import check_count, check_positive

__all__ = [
    "ALGORITHMS",
    "Schedule",
    "SolverConfig",
    "StepState",
    "RunRecord",
    "Admissibility",
    "GapEstimate",
    "solve_deterministic",
    "step_eg",
    "step_md",
    "run_solver",
    "run_tt",
    "run_joint",
    "gap_vi_estimate",
    "estimate_lipschitz",
    "check_step_sizes",
    "finite_horizon_schedules",
    "TRAJECTORY_HEADER",
]

ALGORITHMS = ("DeterministicFP", "EG", "MD", "TTEG", "TTMD", "JointEG")


@dataclass(frozen=True)
class Schedule:
    """Step-size schedule ``base * t^(-exponent)`` (``t >= 1``)."""

    kind: str = "constant"
    base: float = 0.04
    exponent: float = 0.0

    def __post_init__(self):
        kind = self.kind.lower()
        if kind not in ("constant", "polynomial"):
            raise InvalidArgumentError(f"unknown schedule kind {self.kind!r}")
        object.__setattr__(self, "kind", kind)
        check_positive(self.base, "schedule base")
        if kind == "constant":
            object.__setattr__(self, "exponent", 0.0)
        elif not 0 < self.exponent <= 1:
            raise InvalidArgumentError("polynomial schedule needs exponent in (0, 1]")

    @classmethod
    def constant(cls, value):
        return cls("constant", value)

    @classmethod
    def polynomial(cls, base, exponent):
        return cls("polynomial", base, exponent)

    def __call__(self, t):
        return self.base if self.kind == "constant" else self.base * t ** (-self.exponent)


def finite_horizon_schedules(T, c_eta=1.0, c_gamma=1.0, delta=0.0):
    """Constant horizon-tuned steps ``eta = c_eta T^(-1+delta)``, ``gamma = c_gamma T^(-2(1-delta)/3)``."""
    T = check_count(T, "T")
    if not 0 <= delta < 1:
        raise InvalidArgumentError("delta must lie in [0, 1)")
    eta = c_eta * T ** (-1 + delta)
    gamma = min(1.0, c_gamma * T ** (-2 * (1 - delta) / 3))
    return Schedule.constant(eta), Schedule.constant(gamma)


@dataclass(frozen=True)
class SolverConfig:
    """Configuration for one solver run.

    ``oracle="exact"`` replaces the sampled oracle with the exact operator.
    ``polyak`` is ``"off"`` (last iterate), ``"on"`` (running mean of all
    iterates) or ``"window"`` (mean of the last ``polyak_window`` iterates).
    """

    algorithm: str = "EG"
    beta: float = 0.6
    eta: Schedule = field(default_factory=lambda: Schedule.constant(0.04))
    gamma: Schedule = field(default_factory=lambda: Schedule.constant(0.5))
    m: int = 15
    T: int = 4000
    oracle: str = "plugin"
    polyak: str = "window"
    polyak_window: int = 500
    floor_window: int = 500
    track_every: int = 100
    track_reps: int = 10_000
    tol: float = 1e-10
    seed: object = 0
    theta0: np.ndarray | None = None
    radius_slack: float = 0.0
    store_theta: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise InvalidArgumentError(f"unknown algorithm {self.algorithm!r}")
        check_positive(self.beta, "beta")
        check_count(self.T, "T", minimum=0)
        if self.oracle not in ("plugin", "exact"):
            raise InvalidArgumentError("oracle must be 'plugin' or 'exact'")
        if self.oracle == "plugin":
            check_count(self.m, "m")
        if self.polyak not in ("off", "on", "window"):
            raise InvalidArgumentError("polyak must be 'off', 'on' or 'window'")
        check_count(self.polyak_window, "polyak_window")
        check_count(self.floor_window, "floor_window")
        check_count(self.track_every, "track_every", minimum=0)

    @property
    def label(self):
        return self.algorithm if self.oracle == "plugin" else f"{self.algorithm}-exact"

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class StepState:
    """Iterate after a step; ``half`` is the extrapolation point for EG."""

    theta: np.ndarray
    half: np.ndarray | None = None
    sample: object = None


def _grad(oracle_out, xi):
    g = oracle_out.f_hat if hasattr(oracle_out, "f_hat") else np.asarray(oracle_out, dtype=float)
    return g if xi is None else g - xi


def step_md(state, oracle, eta_t, precond, ball, xi=None):
    """One preconditioned projected mirror-descent step ``Pi(theta - eta Sigma (F_hat - xi))``."""
    theta = state.theta if isinstance(state, StepState) else np.asarray(state, dtype=float)
    new = ball.project(theta - eta_t * precond.apply(_grad(oracle, xi)))
    return StepState(new, None, oracle)


def step_eg(state, oracle1, oracle2, eta_t, precond, ball, xi=None):
    """One stochastic extragradient step.

    ``oracle1`` is the sample at the current iterate. ``oracle2`` is either a
    sample already taken at the half point or a callable ``theta -> sample``
    that is evaluated at the freshly computed half point.
    """
    theta = state.theta if isinstance(state, StepState) else np.asarray(state, dtype=float)
    half = ball.project(theta - eta_t * precond.apply(_grad(oracle1, xi)))
    s2 = oracle2(half) if callable(oracle2) else oracle2
    new = ball.project(theta - eta_t * precond.apply(_grad(s2, xi)))
    return StepState(new, half, s2)


def _residual(op, beta, theta, theta_ref):
    r = beta * (theta - theta_ref) - op(softmax(theta))
    return r - r.mean()


def solve_deterministic(game, risk, beta, theta_ref=None, tol=1e-12, max_iter=100_000, theta0=None, op=None):
    """Damped fixed-point iteration for ``theta = theta_ref + P_R pi_theta / beta``.

    Uses damping ``s = min(1, beta/(beta+1))`` and gauge-fixes every iterate
    relative to ``theta_ref``. Stops once ``||Pi_1perp F_R(theta)|| < tol``.

    Raises
    ------
    ConvergenceError
        If ``max_iter`` is reached; carries the last residual norm.
    """
    beta = check_positive(beta, "beta")
    check_positive(tol, "tol")
    n = game.n
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    op = RiskOperator(game, risk) if op is None else op
    s = min(1.0, beta / (beta + 1.0))
    shift = theta_ref.mean()
    theta = theta_ref.copy() if theta0 is None else np.asarray(theta0, dtype=float).copy()
    theta = gauge_fix(theta) + shift
    res = np.inf
    for it in range(max_iter + 1):
        res = float(np.linalg.norm(_residual(op, beta, theta, theta_ref)))
        if res < tol:
            return Policy(theta=gauge_fix(theta), pi=softmax(theta))
        if it == max_iter:
            break
        target = theta_ref + op(softmax(theta)) / beta
        theta = (1 - s) * theta + s * target
        theta = gauge_fix(theta) + shift
    raise ConvergenceError(f"fixed point not reached in {max_iter} iterations (residual {res:.3e})", res, max_iter)


@dataclass(frozen=True)
class Admissibility:
    """Step-size admissibility check; ``ok`` is False when the bound is violated."""

    eta: float
    eta_max: float
    L_G: float
    mu_tilde: float
    lambda_bar: float
    ok: bool
    message: str = ""


def estimate_lipschitz(op, n, probes=200, seed=0):
    """Largest ``||P_R mu - P_R nu|| / ||mu - nu||`` over random simplex pairs."""
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(probes):
        mu, nu = rng.dirichlet(np.ones(n), size=2)
        d = np.linalg.norm(mu - nu)
        if d > 0:
            best = max(best, float(np.linalg.norm(op(mu) - op(nu)) / d))
    return best


def check_step_sizes(config, game, risk, precond=None, lambda_bar=None, warn=True):
    """Compare ``eta`` against the strongly-monotone admissibility bounds.

    EG needs ``eta <= min(1/(4 mu~), 1/(sqrt(6) L_G))`` and MD needs
    ``eta <= min(1/(2 mu~), 1/(2 L_G))`` with ``mu~ = mu_R sigma_min`` and
    ``L_G = 1.5 sigma_max (beta + L_R)``. Violations only warn.
    """
    precond = make_preconditioner(game.n) if precond is None else precond
    op = RiskOperator(game, risk)
    if lambda_bar is None:
        lambda_bar = distortion_eigenvalue(game, risk, op=op).lambda_bar
    L_R = estimate_lipschitz(op, game.n)
    L_G = 1.5 * precond.sigma_max * (config.beta + L_R)
    mu_tilde = (config.beta - 2 * lambda_bar) * precond.sigma_min
    eta = config.eta(1)
    if config.algorithm in ("MD", "TTMD"):
        eta_max = 1 / (2 * L_G)
        if mu_tilde > 0:
            eta_max = min(eta_max, 1 / (2 * mu_tilde))
    else:
        eta_max = 1 / (math.sqrt(6) * L_G)
        if mu_tilde > 0:
            eta_max = min(eta_max, 1 / (4 * mu_tilde))
    msgs = []
    if mu_tilde <= 0:
        msgs.append(f"mu_R = {config.beta - 2 * lambda_bar:.4g} <= 0: strong-monotonicity guarantees do not apply")
    if eta > eta_max:
        msgs.append(f"eta = {eta:.4g} exceeds admissible {eta_max:.4g}")
    result = Admissibility(eta, eta_max, L_G, mu_tilde, lambda_bar, not msgs, "; ".join(msgs))
    if warn and msgs:
        warnings.warn(result.message, RuntimeWarning, stacklevel=2)
    return result


TRAJECTORY_HEADER = ("t", "dist_sq", "residual_sq", "polyak_dist_sq", "tracking_err_sq")


def _fmt(x):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else format(x, ".17g")


@dataclass(eq=False)
class RunRecord:
    """Logged trajectory of one run plus its terminal summary."""

    algorithm: str
    risk: object
    m: int | None
    seed: object
    T: int
    t: np.ndarray
    dist_sq: np.ndarray
    residual_sq: np.ndarray
    polyak_dist_sq: np.ndarray
    tracking_err_sq: np.ndarray
    theta_final: np.ndarray
    polyak_final: np.ndarray
    floor: float
    floor_window: int
    initial_dist_sq: float = float("nan")
    thetas: np.ndarray | None = None
    admissibility: Admissibility | None = None

    def __len__(self):
        return len(self.t)

    def rows(self):
        for i in range(len(self.t)):
            yield (int(self.t[i]), self.dist_sq[i], self.residual_sq[i], self.polyak_dist_sq[i], self.tracking_err_sq[i])

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRAJECTORY_HEADER)
            for t, *vals in self.rows():
                w.writerow([t, *map(_fmt, map(float, vals))])

    def summary(self):
        return {
            "algorithm": self.algorithm,
            "risk": self.risk.kind,
            "param": self.risk.param_or_nan,
            "m": self.m,
            "seed": self.seed,
            "floor": self.floor,
            "floor_window": self.floor_window,
            "T": self.T,
        }


def _log_mask(T, dense_limit=5000, tail=500):
    t = np.arange(1, T + 1)
    if T <= dense_limit:
        return np.ones(T, dtype=bool)
    stride = math.ceil(T / dense_limit)
    return (t % stride == 0) | (t > T - tail)


def _ground_truth(game, risk, beta, theta_ref, op):
    try:
        return solve_deterministic(game, risk, beta, theta_ref, tol=1e-12, op=op)
    except ConvergenceError:
        return None


def run_solver(config, game, risk, theta_ref=None, theta_star=None, precond=None, check_admissible=False):
    """Run one stochastic (or exact-oracle) solver and log its trajectory.

    ``dist_sq`` is ``||theta_t - theta*||^2`` in the ``Sigma^+`` metric,
    ``polyak_dist_sq`` the Euclidean squared distance of the (windowed)
    Polyak average on ``1^perp`` and ``residual_sq`` is
    ``||Pi_1perp F_R(theta_t)||^2``. The floor is the mean of the last
    ``floor_window`` logged ``polyak_dist_sq`` values.

    ``theta_star`` defaults to :func:`solve_deterministic` at ``tol=1e-12``;
    pass ``False`` to skip ground truth.
    """
    if config.algorithm == "DeterministicFP":
        return _run_fixed_point(config, game, risk, theta_ref, theta_star)
    if config.algorithm == "JointEG":
        raise InvalidArgumentError("use run_joint for JointEG")
    n = game.n
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    precond = make_preconditioner(n) if precond is None else precond
    op = RiskOperator(game, risk)
    if theta_star is None:
        theta_star = _ground_truth(game, risk, config.beta, theta_ref, op)
    star = None if theta_star is False or theta_star is None else theta_star.theta
    adm = check_step_sizes(config, game, risk, precond) if check_admissible else None

    ss_main, ss_track = _child_streams(config.seed)
    rng, track_rng = np.random.default_rng(ss_main), np.random.default_rng(ss_track)

    theta0 = theta_ref if config.theta0 is None else np.asarray(config.theta0, dtype=float)
    ball = ProjectionBall.for_game(theta_ref, config.beta, precond, theta0)
    if config.radius_slack:
        ball = ProjectionBall(ball.center, ball.radius + config.radius_slack, precond)
    theta = ball.project(theta0)

    exact = config.oracle == "exact"
    tt = config.algorithm in ("TTEG", "TTMD")
    extragradient = config.algorithm in ("EG", "TTEG")
    # the tracker target is identically zero for expectation and CVaR
    tt_bias = tt and risk.kind == ENTROPIC and not exact
    oracle = None if exact else PluginOracle(game, risk, config.beta, theta_ref, config.m)

    def sample(x):
        if exact:
            return config.beta * (x - theta_ref) - op(softmax(x))
        return oracle.sample(x, rng)

    T = config.T
    mask = _log_mask(T)
    k = int(mask.sum())
    out_t = np.zeros(k, dtype=np.int64)
    out_d, out_r, out_p, out_e = (np.full(k, np.nan) for _ in range(4))
    thetas = np.zeros((k, n)) if config.store_theta else None

    def dist_sigma(x):
        return precond.sq_norm_pinv(gauge_fix(x - star))

    def dist_euclid(x):
        d = gauge_fix(x - star)
        return float(d @ d)

    initial = float("nan") if star is None else dist_euclid(theta)
    xi = np.zeros(n)
    avg = theta.copy()
    window = np.zeros((config.polyak_window, n))
    wsum = np.zeros(n)
    row = 0
    for t in range(1, T + 1):
        eta = config.eta(t)
        if extragradient:
            s1 = sample(theta)
            state = step_eg(theta, s1, sample, eta, precond, ball, xi if tt else None)
        else:
            state = step_md(theta, sample(theta), eta, precond, ball, xi if tt else None)
        theta = state.theta
        if tt_bias:
            b = oracle.bias_estimate(state.sample).xi_hat
            g = config.gamma(t)
            xi = (1 - g) * xi + g * b

        if config.polyak == "on":
            avg = avg + (theta - avg) / t
        elif config.polyak == "window":
            slot = (t - 1) % config.polyak_window
            wsum += theta - window[slot]
            window[slot] = theta
            avg = wsum / min(t, config.polyak_window)
        else:
            avg = theta

        if not mask[t - 1]:
            continue
        out_t[row] = t
        r = _residual(op, config.beta, theta, theta_ref)
        out_r[row] = float(r @ r)
        if star is not None:
            out_d[row] = dist_sigma(theta)
            out_p[row] = dist_euclid(avg)
        if tt and config.track_every and t % config.track_every == 0:
            out_e[row] = _tracking_error(oracle, op, theta, xi, config, track_rng)
        if thetas is not None:
            thetas[row] = theta
        row += 1

    if T == 0:
        floor = initial
    elif star is None:
        floor = float("nan")
    else:
        floor = float(np.mean(out_p[-config.floor_window :]))
    return RunRecord(
        algorithm=config.label,
        risk=risk,
        m=None if exact else config.m,
        seed=config.seed,
        T=T,
        t=out_t,
        dist_sq=out_d,
        residual_sq=out_r,
        polyak_dist_sq=out_p,
        tracking_err_sq=out_e,
        theta_final=theta,
        polyak_final=avg,
        floor=floor,
        floor_window=config.floor_window,
        initial_dist_sq=initial,
        thetas=thetas,
        admissibility=adm,
    )


def _child_streams(seed):
    # derived without spawn() so reusing a config never shifts the streams
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=(*ss.spawn_key, k)) for k in (0, 1)]


def _tracking_error(oracle, op, theta, xi, config, rng):
    if oracle is None:
        return float(xi @ xi)
    pi = softmax(theta)
    bias_p, _, _ = _mc_bias(oracle, pi, op(pi), config.track_reps, rng, 10_000)
    d = xi + bias_p  # F-level target is -bias_p
    return float(d @ d)


def run_tt(config, game, risk, theta_ref=None, theta_star=None, **kw):
    """Two-timescale extragradient / mirror descent with bias tracking.

    The leader steps on ``F_hat - xi``; the tracker follows
    ``xi <- (1 - gamma) xi + gamma b_hat`` using only the correction-step
    batch. For CVaR and expectation the tracker target is zero.
    """
    if config.algorithm not in ("TTEG", "TTMD"):
        raise InvalidArgumentError(f"run_tt needs TTEG or TTMD, got {config.algorithm}")
    return run_solver(config, game, risk, theta_ref, theta_star, **kw)


def _run_fixed_point(config, game, risk, theta_ref, theta_star):
    n = game.n
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    op = RiskOperator(game, risk)
    pol = solve_deterministic(game, risk, config.beta, theta_ref, tol=config.tol, max_iter=max(config.T, 1), op=op)
    r = _residual(op, config.beta, pol.theta, theta_ref)
    star = theta_star.theta if isinstance(theta_star, Policy) else pol.theta
    d = gauge_fix(pol.theta - star)
    nan = np.array([np.nan])
    return RunRecord(
        "DeterministicFP", risk, None, config.seed, config.T,
        np.array([config.T]), np.array([make_preconditioner(n).sq_norm_pinv(d)]), np.array([float(r @ r)]),
        np.array([float(d @ d)]), nan, pol.theta, pol.theta, float(d @ d), 1,
    )


def run_joint(config, game, risk1, risk2, theta_ref=None, max_iter=None):
    """Deterministic extragradient on the stacked two-player pseudogradient.

    Each player's block is preconditioned and projected onto its own ball.
    Returns ``(Policy_1, Policy_2)``.

    Raises
    ------
    ConvergenceError
        If the joint residual is not below ``config.tol`` within ``T`` steps.
    """
    n = game.n
    theta_ref = np.zeros(n) if theta_ref is None else np.asarray(theta_ref, dtype=float)
    precond = make_preconditioner(n)
    # the pseudogradient is F / beta, so scale the radius-defining beta accordingly
    ball = ProjectionBall.for_game(theta_ref, config.beta, precond)
    beta = config.beta
    T = config.T if max_iter is None else max_iter

    def G(t1, t2):
        return joint_pseudogradient(game, risk1, risk2, beta, t1, t2, theta_ref)

    def res(g1, g2):
        return math.hypot(np.linalg.norm(gauge_fix(g1)), np.linalg.norm(gauge_fix(g2)))

    t1, t2 = ball.project(theta_ref), ball.project(theta_ref)
    r = np.inf
    for t in range(1, T + 1):
        g1, g2 = G(t1, t2)
        r = res(g1, g2)
        if r < config.tol:
            break
        eta = config.eta(t)
        h1 = ball.project(t1 - eta * precond.apply(g1))
        h2 = ball.project(t2 - eta * precond.apply(g2))
        g1, g2 = G(h1, h2)
        t1 = ball.project(t1 - eta * precond.apply(g1))
        t2 = ball.project(t2 - eta * precond.apply(g2))
    else:
        g1, g2 = G(t1, t2)
        r = res(g1, g2)
        if r >= config.tol:
            raise ConvergenceError(f"joint extragradient did not converge (residual {r:.3e})", r, T)
    return Policy(gauge_fix(t1), softmax(t1)), Policy(gauge_fix(t2), softmax(t2))


@dataclass(frozen=True, eq=False)
class GapEstimate:
    """Lower bound on the VI gap plus the projected-residual surrogate."""

    value: float
    residual: float
    candidates: np.ndarray
    values: np.ndarray


def gap_vi_estimate(game, risk, beta, z, ball, samples=64, rng=None, theta_star=None, ascent_steps=20):
    """Sampled lower bound on ``sup_{u in D} <F_R(u), z - u>``.

    Candidates: the ball center, ``theta_star`` (if given), ``samples``
    boundary points along random ``1^perp`` directions and 64 random interior
    points, followed by ``ascent_steps`` projected gradient-ascent steps from
    the best candidate.
    """
    rng = np.random.default_rng(rng)
    n = game.n
    op = RiskOperator(game, risk)
    z = z.theta if isinstance(z, Policy) else np.asarray(z, dtype=float)
    center, R, pre = ball.center, ball.radius, ball.precond
    z = ball.project(z)

    def F(u):
        return beta * (u - center) - op(softmax(u))

    def phi(u):
        return float(gauge_fix(F(u)) @ gauge_fix(z - u))

    def direction():
        d = gauge_fix(rng.normal(size=n))
        return d / pre.norm_pinv(d)

    cands = [center.copy()]
    if theta_star is not None:
        ts = theta_star.theta if isinstance(theta_star, Policy) else np.asarray(theta_star, dtype=float)
        cands.append(ball.project(ts))
    cands += [center + R * direction() for _ in range(samples)]
    cands += [center + R * rng.random() ** (1 / (n - 1)) * direction() for _ in range(64)]
    vals = np.array([phi(u) for u in cands])
    best = int(vals.argmax())
    u, val = cands[best], vals[best]

    step = 0.1 * R
    for _ in range(ascent_steps):
        pi = softmax(u)
        JF = beta * np.eye(n) - op.jacobian(np.clip(pi, 1e-300, None)) @ (np.diag(pi) - np.outer(pi, pi))
        grad = gauge_fix(JF.T @ gauge_fix(z - u) - F(u))
        norm = pre.norm_pinv(grad)
        if norm == 0:
            break
        trial = ball.project(u + step * grad / norm)
        tv = phi(trial)
        if tv > val:
            u, val = trial, tv
        else:
            step *= 0.5
    r = gauge_fix(F(z))
    return GapEstimate(max(float(val), float(vals.max())), float(np.linalg.norm(r)), np.array(cands), vals)
