"""Finite constant-sum preference games, softmax policies and the
response-pair preconditioner geometry used by every solver.

Logit vectors live on the slice ``theta_ref + W`` with ``W = 1^perp``; norms
between iterates are always taken after removing the gauge direction ``1``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, softmax as _softmax

from .exceptions import DomainError, InvalidArgumentError
from .validation import check_logits, check_preference_matrix

__all__ = [
    "PreferenceGame",
    "Policy",
    "Preconditioner",
    "ProjectionBall",
    "make_bradley_terry",
    "make_game",
    "softmax_policy",
    "gauge_fix",
    "kl_divergence",
    "make_preconditioner",
    "equilibrium_radius",
    "project_onto_ball",
    "save_game",
    "load_game",
]


def gauge_fix(theta):
    """Zero-sum representative of ``theta + c*1``."""
    theta = np.asarray(theta, dtype=float)
    return theta - theta.mean()


@dataclass(frozen=True, eq=False)
class PreferenceGame:
    """Constant-sum pairwise preference game on ``n`` responses.

    ``P[i, j]`` is the probability that response ``i`` is preferred to ``j``.
    """

    P: np.ndarray
    kind: str = "custom"
    seed: int | None = None
    rewards: np.ndarray | None = None
    A: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        P = check_preference_matrix(self.P).copy()
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        A = 0.5 * (P - P.T)
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    @property
    def n(self):
        return self.P.shape[0]

    def permuted(self, perm):
        perm = np.asarray(perm)
        return PreferenceGame(self.P[np.ix_(perm, perm)], kind=self.kind, seed=self.seed)


def _constant_sum_from_upper(P):
    # rebuild the lower triangle as 1 - upper so P + P^T = 1 holds to rounding
    n = P.shape[0]
    iu = np.triu_indices(n, k=1)
    Q = np.full((n, n), 0.5)
    Q[iu] = P[iu]
    Q[(iu[1], iu[0])] = 1.0 - P[iu]
    return Q


def make_bradley_terry(n, seed=None, reward_std=1.0, rewards=None):
    """Bradley-Terry game with latent rewards ``r_i ~ N(0, reward_std^2)``.

    ``P[i, j] = logistic(r_i - r_j)``. Pass ``rewards`` to fix them directly.
    """
    if rewards is None:
        if int(n) != n or n < 2:
            raise InvalidArgumentError(f"n must be an integer >= 2, got {n!r}")
        if reward_std < 0:
            raise InvalidArgumentError("reward_std must be nonnegative")
        rng = np.random.default_rng(seed)
        rewards = rng.normal(0.0, reward_std, size=int(n))
    else:
        rewards = np.asarray(rewards, dtype=float)
        if rewards.ndim != 1 or rewards.size < 2:
            raise InvalidArgumentError("need at least two rewards")
        n = rewards.size
    P = _constant_sum_from_upper(expit(rewards[:, None] - rewards[None, :]))
    return PreferenceGame(P, kind="bradley_terry", seed=seed, rewards=rewards)


def make_game(kind="bradley_terry", n=20, seed=0, reward_std=1.0):
    if kind == "bradley_terry":
        return make_bradley_terry(n, seed=seed, reward_std=reward_std)
    if kind == "uniform":
        return PreferenceGame(np.full((n, n), 0.5), kind="uniform", seed=seed)
    raise InvalidArgumentError(f"unknown game kind {kind!r}")


@dataclass(frozen=True, eq=False)
class Policy:
    """Softmax policy: gauge-fixed logits ``theta`` and probabilities ``pi``."""

    theta: np.ndarray
    pi: np.ndarray

    @property
    def n(self):
        return self.pi.shape[0]


def softmax_policy(theta):
    theta = check_logits(theta)
    return Policy(theta=gauge_fix(theta), pi=_softmax(theta))


def _as_probs(p):
    return p.pi if isinstance(p, Policy) else np.asarray(p, dtype=float)


def kl_divergence(p, q):
    """``KL(p || q)`` for policies or probability vectors."""
    p, q = _as_probs(p), _as_probs(q)
    if p.shape != q.shape:
        raise InvalidArgumentError("distributions have different supports")
    if np.any(q <= 0):
        raise DomainError("KL(p || q) undefined: q has a zero entry")
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


@dataclass(frozen=True, eq=False)
class Preconditioner:
    """Response-pair preconditioner ``Sigma(rho)`` and its pseudoinverse."""

    sigma: np.ndarray
    sigma_pinv: np.ndarray
    sigma_min: float
    sigma_max: float
    rho: str = "uniform"

    @property
    def n(self):
        return self.sigma.shape[0]

    def apply(self, v):
        return self.sigma @ v

    def sq_norm_pinv(self, v):
        """``||v||^2`` in the ``Sigma^+`` metric."""
        return float(v @ self.sigma_pinv @ v)

    def norm_pinv(self, v):
        return np.sqrt(max(self.sq_norm_pinv(v), 0.0))


def _pinv_eigh(S, rcond=1e-10):
    w, V = np.linalg.eigh(S)
    cutoff = rcond * w.max()
    keep = w > cutoff
    inv = np.where(keep, 1.0 / np.where(keep, w, 1.0), 0.0)
    return (V * inv) @ V.T, w[keep]


def make_preconditioner(n, rho="uniform"):
    """``Sigma = E[(1_y - 1_y')(1_y - 1_y')^T]`` for uniform distinct pairs.

    Closed form ``(2/(n-1)) (I - 11^T/n)``; the pseudoinverse comes from a
    symmetric eigendecomposition with cutoff ``1e-10 * sigma_max``.
    """
    if rho != "uniform":
        raise NotImplementedError(f"pair distribution {rho!r} is not supported")
    if int(n) != n or n < 2:
        raise InvalidArgumentError("n must be an integer >= 2")
    n = int(n)
    centering = np.eye(n) - np.ones((n, n)) / n
    sigma = (2.0 / (n - 1)) * centering
    sigma_pinv, nonzero = _pinv_eigh(sigma)
    sigma.setflags(write=False)
    sigma_pinv.setflags(write=False)
    return Preconditioner(sigma, sigma_pinv, float(nonzero.min()), float(nonzero.max()), rho)


def equilibrium_radius(n, beta, sigma_min, r0=0.0):
    """Radius ``sqrt(n)/(beta sqrt(sigma_min)) + r0`` that contains the equilibrium."""
    return float(np.sqrt(n) / (beta * np.sqrt(sigma_min)) + r0)


@dataclass(frozen=True, eq=False)
class ProjectionBall:
    """``D = {theta in center + 1^perp : ||theta - center||_{Sigma^+} <= radius}``."""

    center: np.ndarray
    radius: float
    precond: Preconditioner

    @property
    def omega(self):
        return self.radius

    @classmethod
    def for_game(cls, theta_ref, beta, precond, theta0=None):
        theta_ref = np.asarray(theta_ref, dtype=float)
        r0 = 0.0 if theta0 is None else precond.norm_pinv(gauge_fix(theta0 - theta_ref))
        radius = equilibrium_radius(precond.n, beta, precond.sigma_min, r0)
        return cls(theta_ref.copy(), radius, precond)

    def project(self, theta):
        return project_onto_ball(theta, self)

    def contains(self, theta, atol=1e-9):
        d = gauge_fix(theta - self.center)
        return self.precond.norm_pinv(d) <= self.radius + atol


def project_onto_ball(theta, ball):
    """Radial projection onto ``ball`` in the ``Sigma^+`` metric.

    The component along ``1`` is taken from ``ball.center`` so the result
    always lies on the slice ``center + 1^perp``.
    """
    d = gauge_fix(np.asarray(theta, dtype=float) - ball.center)
    dist = ball.precond.norm_pinv(d)
    if dist > ball.radius:
        d = d * (ball.radius / dist)
    return ball.center + d


def save_game(game, path):
    n = game.n
    seed = "none" if game.seed is None else game.seed
    with open(path, "w") as fh:
        fh.write(f"# rspg-game n={n} kind={game.kind} seed={seed}\n")
        for row in game.P:
            fh.write(" ".join(repr(float(x)) for x in row) + "\n")


def load_game(path):
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# rspg-game"):
            raise InvalidArgumentError(f"{path}: missing '# rspg-game' header")
        meta = dict(tok.split("=", 1) for tok in header.split()[2:] if "=" in tok)
        rows = [list(map(float, line.split())) for line in fh if line.strip()]
    P = np.array(rows, dtype=float)
    if "n" in meta and int(meta["n"]) != P.shape[0]:
        raise InvalidArgumentError(f"{path}: header says n={meta['n']} but found {P.shape[0]} rows")
    seed = meta.get("seed", "none")
    return PreferenceGame(P, kind=meta.get("kind", "custom"), seed=None if seed == "none" else int(seed))
