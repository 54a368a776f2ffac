import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rspg.exceptions import DomainError, InvalidArgumentError
from rspg.game import make_bradley_terry, make_game
from rspg.risk import (
    RiskMeasure,
    RiskOperator,
    classify_regime,
    distortion_eigenvalue,
    fd_jacobian,
    gap_delta_star,
    joint_pseudogradient,
    risk_adjusted_operator,
    risk_eval_exact,
    risk_jacobian,
    spread,
    tangent_basis,
)

from .conftest import ALL_RISKS

unit = st.floats(0, 1, allow_nan=False)


def _weights(draw_raw):
    w = np.asarray(draw_raw) + 1e-3
    return w / w.sum()


@st.composite
def distributions(draw, size=st.integers(1, 8)):
    k = draw(size)
    z = draw(arrays(float, k, elements=st.floats(-5, 5, allow_nan=False)))
    w = _weights(draw(arrays(float, k, elements=unit)))
    return z, w


risks = st.sampled_from(ALL_RISKS)


def test_parse_and_str():
    r = RiskMeasure.parse("entropic:6")
    assert r == RiskMeasure.entropic(6.0) and str(r) == "entropic:6"
    assert RiskMeasure.parse("expectation").param is None
    assert RiskMeasure.parse("CVaR:0.25") == RiskMeasure.cvar(0.25)
    with pytest.raises(InvalidArgumentError):
        RiskMeasure.cvar(1.0)
    with pytest.raises(InvalidArgumentError):
        RiskMeasure.entropic(0.0)
    with pytest.raises(InvalidArgumentError):
        RiskMeasure.parse("variance:1")


def test_entropic_frozen_values():
    # frozen 30-digit mpmath evaluation of -(1/lam) log E exp(-lam Z)
    r2 = RiskMeasure.entropic(2.0)
    assert risk_eval_exact(r2, [0.0, 1.0], [0.5, 0.5]) == pytest.approx(0.28310958475848640649, abs=1e-15)
    r5 = RiskMeasure.entropic(5.0)
    assert risk_eval_exact(r5, [0.0, 1.0], [0.7, 0.3]) == pytest.approx(0.070758282747950529173, abs=1e-15)


def test_cvar_hand_computed():
    # lower 25%: mass 0.1 at 0.1 plus 0.15 of the atom at 0.4
    r = RiskMeasure.cvar(0.25)
    assert risk_eval_exact(r, [1.0, 0.4, 0.1, 0.7], [0.4, 0.2, 0.1, 0.3]) == pytest.approx(0.28, abs=1e-15)


def test_cvar_example_bernoulli():
    r = RiskMeasure.cvar(0.25)
    assert risk_eval_exact(r, [0.0, 1.0], [0.5, 0.5]) == 0.0
    assert risk_eval_exact(r, [0.0, -1.0], [0.5, 0.5]) == -1.0


@given(distributions(), st.floats(-10, 10), risks)
def test_translation_invariance(dist, c, risk):
    z, w = dist
    assert abs(risk_eval_exact(risk, z + c, w) - risk_eval_exact(risk, z, w) - c) < 1e-10


@given(distributions(), arrays(float, 8, elements=unit), risks)
def test_monotone_nondecreasing(dist, bump, risk):
    z, w = dist
    assert risk_eval_exact(risk, z + bump[: z.size], w) >= risk_eval_exact(risk, z, w) - 1e-12


@given(distributions(), risks)
def test_pessimism_bounds(dist, risk):
    z, w = dist
    v = risk_eval_exact(risk, z, w)
    support = z[w > 0]
    assert support.min() - 1e-9 <= v <= float(z @ w) + 1e-9


@given(distributions(), st.sampled_from([0.1, 0.25, 0.5, 0.9]))
def test_cvar_matches_dual_form(dist, alpha):
    # independent oracle: max_t { t - E[(t - Z)_+] / alpha }, attained at an atom
    z, w = dist
    oracle = max(t - w @ np.maximum(t - z, 0) / alpha for t in z)
    assert risk_eval_exact(RiskMeasure.cvar(alpha), z, w) == pytest.approx(oracle, abs=1e-10)


def test_risk_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        risk_eval_exact(RiskMeasure.expectation(), [0.0, 1.0], [0.6, 0.6])
    with pytest.raises(InvalidArgumentError):
        risk_eval_exact(RiskMeasure.expectation(), [0.0, np.nan], [0.5, 0.5])


@pytest.mark.parametrize("risk", ALL_RISKS, ids=str)
def test_operator_matches_rowwise_oracle(risk, rng):
    g = make_bradley_terry(7, seed=11)
    op = RiskOperator(g, risk)
    for _ in range(5):
        mu = rng.dirichlet(np.ones(7))
        oracle = [risk_eval_exact(risk, g.P[y], mu) for y in range(7)]
        np.testing.assert_allclose(op(mu), oracle, atol=1e-12)
        np.testing.assert_allclose(risk_adjusted_operator(g, risk, mu).values, oracle, atol=1e-12)


@pytest.mark.parametrize("risk", ALL_RISKS, ids=str)
def test_constant_sum_identity(risk, rng):
    g = make_bradley_terry(6, seed=5)
    mu = rng.dirichlet(np.ones(6))
    p1 = risk_adjusted_operator(g, risk, mu, "one").values
    p2 = risk_adjusted_operator(g, risk, mu, "two").values
    np.testing.assert_allclose(p1 - 1.0 - p2, 0.0, atol=1e-12)


def test_entropic_jacobian_vs_finite_differences(rng):
    g = make_bradley_terry(6, seed=1)
    op = RiskOperator(g, RiskMeasure.entropic(3.0))
    Q = tangent_basis(6)
    mu = rng.dirichlet(np.ones(6))
    J = op.jacobian(mu)
    np.testing.assert_allclose(J @ Q, fd_jacobian(op, mu) @ Q, rtol=1e-6, atol=1e-9)


def test_cvar_fd_jacobian_matches_closed_form():
    # no ties at the threshold: J[y, y'] = (P[y, y'] - VaR_y) / alpha below VaR_y
    g = make_bradley_terry(5, seed=7)
    alpha = 0.3
    mu = np.array([0.12, 0.31, 0.07, 0.26, 0.24])
    closed = np.zeros((5, 5))
    for y in range(5):
        order = np.argsort(g.P[y])
        cum = np.cumsum(mu[order])
        k = int(np.searchsorted(cum, alpha))
        var = g.P[y, order[k]]
        below = order[:k]
        closed[y, below] = (g.P[y, below] - var) / alpha
    Q = tangent_basis(5)
    np.testing.assert_allclose(risk_jacobian(g, RiskMeasure.cvar(alpha), mu) @ Q, closed @ Q, atol=1e-8)


def test_jacobian_requires_interior_point():
    g = make_bradley_terry(3, seed=0)
    with pytest.raises(DomainError):
        RiskOperator(g, RiskMeasure.entropic(1.0)).jacobian(np.array([1.0, 0.0, 0.0]))


def test_tangent_basis_is_orthonormal():
    Q = tangent_basis(9)
    np.testing.assert_allclose(Q.T @ Q, np.eye(8), atol=1e-13)
    np.testing.assert_allclose(Q.sum(axis=0), 0.0, atol=1e-13)


@pytest.mark.parametrize("seed", range(3))
def test_expectation_is_risk_aligned(seed):
    g = make_bradley_terry(8, seed=seed)
    d = distortion_eigenvalue(g, RiskMeasure.expectation(), beta=0.6, grid_points=32)
    assert abs(d.lambda_bar) < 1e-12
    assert d.regime == "RiskAligned" and d.mu_R == pytest.approx(0.6)


def test_lambda_bar_is_positive_for_entropic(h5_game):
    d = distortion_eigenvalue(h5_game, RiskMeasure.entropic(1.0), grid_points=32, restarts=1)
    assert d.lambda_bar > 0
    assert d.argmax_pi.sum() == pytest.approx(1.0)


def test_classify_regime_boundaries():
    assert classify_regime(0.0, 1.0) == "RiskAligned"
    assert classify_regime(0.5, 1.0) == "Moderate"
    assert classify_regime(0.5000001, 1.0) == "Aggressive"


def test_spread_and_gap_oracles():
    g = make_bradley_terry(4, seed=2)
    pi = np.array([0.1, 0.2, 0.3, 0.4])
    z = [sum(g.A[y, j] * pi[j] for j in range(4)) for y in range(4)]
    assert spread(g, pi) == pytest.approx(max(z) - min(z), abs=1e-15)
    assert gap_delta_star(g) == pytest.approx(max(max(r) - min(r) for r in g.A.tolist()), abs=1e-15)
    sub = gap_delta_star(g, np.array([0.5, 0.5, 0.0, 0.0]))
    assert sub == pytest.approx(max(abs(g.A[y, 0] - g.A[y, 1]) for y in range(4)), abs=1e-15)
    assert spread(make_game("uniform", 4), pi) == 0.0


def test_joint_pseudogradient_vanishes_at_symmetric_equilibrium():
    # uniform game: theta1 = 0.5/beta and theta2 = -0.5/beta solve both blocks
    g = make_game("uniform", 3)
    r = RiskMeasure.entropic(2.0)
    th = np.full(3, 0.5 / 0.8)
    g1, g2 = joint_pseudogradient(g, r, r, 0.8, th, th - 1.25, np.zeros(3))
    np.testing.assert_allclose(g1, 0.0, atol=1e-14)
    np.testing.assert_allclose(g2, 0.0, atol=1e-14)


@given(st.integers(2, 8), st.integers(0, 10**6))
def test_operator_range(n, seed):
    g = make_bradley_terry(n, seed=seed)
    mu = np.random.default_rng(seed).dirichlet(np.ones(n))
    for risk in ALL_RISKS:
        v = RiskOperator(g, risk)(mu)
        assume(np.all(np.isfinite(v)))
        assert np.all(v >= -1e-12) and np.all(v <= 1 + 1e-12)
