"""Input validation helpers shared by the functional API and the estimators."""

import numpy as np

from .exceptions import DomainError, InvalidArgumentError

SIMPLEX_ATOL = 1e-9


def check_logits(theta, name="theta"):
    theta = np.asarray(theta, dtype=float)
    if theta.ndim != 1 or theta.size == 0:
        raise InvalidArgumentError(f"{name} must be a non-empty 1-d vector")
    if not np.all(np.isfinite(theta)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    return theta


def check_simplex(w, n=None, name="weights", atol=SIMPLEX_ATOL, strict=False):
    """Return ``w`` as a float array after checking it is a probability vector.

    With ``strict=True`` every entry must be positive (raises
    :class:`DomainError` otherwise).
    """
    w = np.asarray(w, dtype=float)
    if w.ndim != 1:
        raise InvalidArgumentError(f"{name} must be 1-d")
    if n is not None and w.shape[0] != n:
        raise InvalidArgumentError(f"{name} has length {w.shape[0]}, expected {n}")
    if not np.all(np.isfinite(w)):
        raise InvalidArgumentError(f"{name} has non-finite entries")
    if np.any(w < -atol) or abs(w.sum() - 1.0) > atol:
        raise InvalidArgumentError(f"{name} is not on the probability simplex (sum={w.sum():.12g})")
    if strict and np.any(w <= 0):
        raise DomainError(f"{name} must be strictly positive")
    return w


def check_preference_matrix(P, atol=1e-12):
    """Validate a constant-sum pairwise preference matrix.

    Checks shape, the [0, 1] range and ``P + P.T == 1`` entrywise.
    """
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise InvalidArgumentError("preference matrix must be square")
    if P.shape[0] < 2:
        raise InvalidArgumentError("need at least two responses")
    if not np.all(np.isfinite(P)):
        raise InvalidArgumentError("preference matrix has non-finite entries")
    if P.min() < -atol or P.max() > 1 + atol:
        raise InvalidArgumentError("preference probabilities must lie in [0, 1]")
    gap = np.abs(P + P.T - 1.0).max()
    if gap > atol:
        raise InvalidArgumentError(f"P + P^T != 11^T (max deviation {gap:.3g})")
    return P


def check_positive(value, name):
    if not np.isfinite(value) or value <= 0:
        raise InvalidArgumentError(f"{name} must be positive, got {value!r}")
    return float(value)


def check_count(value, name, minimum=1):
    if int(value) != value or value < minimum:
        raise InvalidArgumentError(f"{name} must be an integer >= {minimum}, got {value!r}")
    return int(value)
