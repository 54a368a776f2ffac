import math

import numpy as np
import pytest

from rspg.exceptions import CoverageError, InvalidArgumentError
from rspg.game import make_bradley_terry
from rspg.offline import (
    OFFLINE_HEADER,
    EmpiricalOperator,
    draw_dataset,
    empirical_equilibrium,
    empirical_operator,
    population_limit_equilibrium,
    rate_sweep,
)
from rspg.risk import RiskMeasure, RiskOperator, tangent_basis
from rspg.solve import solve_deterministic

ENT = RiskMeasure.entropic(1.0)


@pytest.fixture(scope="module")
def game():
    return make_bradley_terry(4, seed=0)


def test_dataset_counts(game):
    d = draw_dataset(game, 500, rng=0)
    assert d.counts.sum() == 500 and d.n_responses == 4
    assert np.all(d.wins <= d.counts)
    assert d.wins.sum() == d.outcomes.sum()
    e = draw_dataset(game, 500, rng=0)
    np.testing.assert_array_equal(d.pairs, e.pairs)
    with pytest.raises(NotImplementedError):
        draw_dataset(game, 10, sampler="active")


def test_empirical_g_hat_oracle(game):
    d = draw_dataset(game, 400, rng=1)
    op = EmpiricalOperator.from_dataset(d, ENT)
    for y in range(4):
        for j in range(4):
            sel = (d.pairs[:, 0] == y) & (d.pairs[:, 1] == j)
            assert op.g_hat[y, j] == pytest.approx(np.mean(np.exp(-d.outcomes[sel].astype(float))), abs=1e-14)


def test_population_limit_operator(game):
    lim = EmpiricalOperator.population_limit(game, ENT)
    mu = np.array([0.1, 0.2, 0.3, 0.4])
    expected = [-math.log(sum(mu[j] * (1 - game.P[y, j] + game.P[y, j] * math.exp(-1)) for j in range(4))) for y in range(4)]
    np.testing.assert_allclose(lim(mu), expected, atol=1e-14)
    # Bernoulli averaging is more pessimistic than the deterministic matrix values
    assert np.all(lim(mu) <= RiskOperator(game, ENT)(mu) + 1e-15)


def test_empirical_operator_converges_to_limit(game):
    d = draw_dataset(game, 400_000, rng=2)
    mu = np.full(4, 0.25)
    np.testing.assert_allclose(empirical_operator(d, ENT, mu), EmpiricalOperator.population_limit(game, ENT)(mu), atol=5e-3)


def test_jacobian_matches_fd(game):
    op = EmpiricalOperator.from_dataset(draw_dataset(game, 2000, rng=3), ENT)
    mu = np.array([0.3, 0.2, 0.1, 0.4])
    Q = tangent_basis(4)
    np.testing.assert_allclose(op.jacobian(mu) @ Q, op.fd_jacobian(mu) @ Q, rtol=1e-6, atol=1e-9)


def test_coverage_error():
    g = make_bradley_terry(6, seed=0)
    d = draw_dataset(g, 20, rng=0)
    assert d.n_min == 0
    with pytest.raises(CoverageError) as exc:
        empirical_equilibrium(d, ENT, 1.0)
    assert exc.value.pair is not None
    with pytest.raises(CoverageError):
        empirical_operator(d, ENT, np.full(6, 1 / 6))


def test_only_entropic_supported(game):
    with pytest.raises(InvalidArgumentError):
        EmpiricalOperator.from_dataset(draw_dataset(game, 100, rng=0), RiskMeasure.cvar(0.5))


def test_equilibrium_is_permutation_equivariant(game):
    d = draw_dataset(game, 5000, rng=4)
    perm = np.array([2, 0, 3, 1])
    a = empirical_equilibrium(d, ENT, 1.0)
    b = empirical_equilibrium(d.permuted(perm), ENT, 1.0)
    np.testing.assert_allclose(b.pi, a.pi[perm], atol=1e-12)


def test_limit_equilibrium_differs_from_matrix_equilibrium(game):
    lim = population_limit_equilibrium(game, ENT, 1.0)
    star = solve_deterministic(game, ENT, 1.0)
    assert np.abs(lim.pi - star.pi).max() > 1e-4


def test_rate_sweep_is_deterministic(game):
    a = rate_sweep(game, ENT, 1.0, [500, 1000, 2000, 4000], seeds=3, master_seed=7)
    b = rate_sweep(game, ENT, 1.0, [500, 1000, 2000, 4000], seeds=3, master_seed=7)
    assert a.rows == b.rows and a.fit.slope == b.fit.slope
    assert set(a.rows[0]) == set(OFFLINE_HEADER)
    assert a.fit.slope < 0 and a.offset_kl > 0
    with pytest.raises(InvalidArgumentError):
        rate_sweep(game, ENT, 1.0, [100, 200, 400], seeds=1)
