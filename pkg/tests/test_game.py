import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from rspg.exceptions import DomainError, InvalidArgumentError
from rspg.game import (
    PreferenceGame,
    ProjectionBall,
    equilibrium_radius,
    gauge_fix,
    kl_divergence,
    load_game,
    make_bradley_terry,
    make_game,
    make_preconditioner,
    save_game,
    softmax_policy,
)

finite = st.floats(-20, 20, allow_nan=False)


def test_bradley_terry_matches_logistic_oracle():
    g = make_bradley_terry(5, seed=1)
    r = g.rewards
    oracle = np.array([[1 / (1 + np.exp(-(a - b))) for b in r] for a in r])
    np.testing.assert_allclose(g.P, oracle, atol=1e-15)


@pytest.mark.parametrize("n,seed", [(2, 0), (7, 1), (20, 0)])
def test_constant_sum_and_diagonal(n, seed):
    g = make_bradley_terry(n, seed=seed)
    np.testing.assert_allclose(g.P + g.P.T, 1.0, atol=1e-15)
    np.testing.assert_array_equal(np.diag(g.P), 0.5)
    np.testing.assert_allclose(g.A, -g.A.T, atol=0)


def test_bradley_terry_is_seeded():
    np.testing.assert_array_equal(make_bradley_terry(8, seed=4).P, make_bradley_terry(8, seed=4).P)
    assert not np.array_equal(make_bradley_terry(8, seed=4).P, make_bradley_terry(8, seed=5).P)


def test_uniform_game_is_all_half():
    np.testing.assert_array_equal(make_game("uniform", 4).P, 0.5)


def test_invalid_games_rejected():
    with pytest.raises(InvalidArgumentError):
        PreferenceGame(np.array([[0.5, 0.7], [0.7, 0.5]]))
    with pytest.raises(InvalidArgumentError):
        PreferenceGame(np.array([[0.5, 1.2], [-0.2, 0.5]]))
    with pytest.raises(InvalidArgumentError):
        make_game("tournament", 4)
    with pytest.raises(InvalidArgumentError):
        make_bradley_terry(1)


def test_game_matrix_is_read_only():
    g = make_bradley_terry(3, seed=0)
    with pytest.raises(ValueError):
        g.P[0, 1] = 0.0


def test_permutation_relabels_consistently():
    g = make_bradley_terry(5, seed=2)
    perm = np.array([3, 0, 4, 1, 2])
    gp = g.permuted(perm)
    assert gp.P[0, 1] == g.P[3, 0]


@given(arrays(float, 6, elements=finite), finite)
def test_softmax_policy_is_gauge_invariant(theta, c):
    a, b = softmax_policy(theta), softmax_policy(theta + c)
    np.testing.assert_allclose(a.pi, b.pi, atol=1e-12)
    np.testing.assert_allclose(a.pi.sum(), 1.0)
    assert abs(a.theta.sum()) < 1e-9


def test_kl_divergence_oracle():
    p, q = np.array([0.2, 0.3, 0.5]), np.array([0.4, 0.4, 0.2])
    oracle = sum(pi * np.log(pi / qi) for pi, qi in zip(p, q))
    assert kl_divergence(p, q) == pytest.approx(oracle, abs=1e-15)
    assert kl_divergence(p, p) == 0.0
    with pytest.raises(DomainError):
        kl_divergence(p, np.array([0.5, 0.5, 0.0]))


@pytest.mark.parametrize("n", [2, 5, 20])
def test_preconditioner_closed_form(n):
    pc = make_preconditioner(n)
    # direct pair average over ordered distinct pairs
    S = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                d = np.zeros(n)
                d[i], d[j] = 1, -1
                S += np.outer(d, d)
    S /= n * (n - 1)
    np.testing.assert_allclose(pc.sigma, S, atol=1e-14)
    assert pc.sigma_min == pytest.approx(2 / (n - 1))
    assert pc.sigma_max == pytest.approx(2 / (n - 1))
    v = gauge_fix(np.arange(n, dtype=float))
    np.testing.assert_allclose(pc.sigma @ pc.sigma_pinv @ v, v, atol=1e-12)


def test_equilibrium_radius_formula():
    assert equilibrium_radius(20, 0.6, 2 / 19) == pytest.approx(np.sqrt(20) / (0.6 * np.sqrt(2 / 19)))


@given(arrays(float, 5, elements=st.floats(-1e3, 1e3)), arrays(float, 5, elements=finite))
def test_projection_feasible_and_on_slice(theta, ref):
    pc = make_preconditioner(5)
    ball = ProjectionBall.for_game(ref, 0.6, pc)
    out = ball.project(theta)
    assert ball.contains(out)
    assert out.mean() == pytest.approx(ref.mean(), abs=1e-9)
    # interior points stay put (up to the gauge)
    inner = ball.project(ref + 1e-3 * gauge_fix(theta))
    np.testing.assert_allclose(ball.project(inner), inner, atol=1e-12)


def test_game_file_round_trip(tmp_path):
    g = make_bradley_terry(6, seed=9)
    save_game(g, tmp_path / "g.txt")
    h = load_game(tmp_path / "g.txt")
    np.testing.assert_array_equal(g.P, h.P)
    assert h.seed == 9 and h.kind == "bradley_terry"


def test_game_file_rejects_bad_header(tmp_path):
    (tmp_path / "bad.txt").write_text("0.5 0.5\n0.5 0.5\n")
    with pytest.raises(InvalidArgumentError):
        load_game(tmp_path / "bad.txt")
