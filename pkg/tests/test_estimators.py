import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from rspg.estimators import OfflineRQRE, RiskAdjustedOperator, RiskAdjustedQRE, StochasticRQRESolver
from rspg.exceptions import InvalidArgumentError
from rspg.game import make_bradley_terry
from rspg.offline import draw_dataset, empirical_equilibrium
from rspg.risk import RiskMeasure, RiskOperator
from rspg.solve import solve_deterministic


@pytest.fixture(scope="module")
def game():
    return make_bradley_terry(5, seed=2)


def test_qre_matches_functional_solver(game):
    est = RiskAdjustedQRE(risk="entropic:2", beta=1.0).fit(game.P)
    ref = solve_deterministic(game, RiskMeasure.entropic(2.0), 1.0)
    np.testing.assert_allclose(est.predict_proba(), ref.pi, atol=1e-12)
    assert est.residual_ < 1e-12 and est.regime_ in ("Moderate", "Aggressive")
    assert est.mu_R_ == pytest.approx(1.0 - 2 * est.lambda_bar_)


def test_qre_params_and_clone():
    est = RiskAdjustedQRE(risk="cvar:0.25", beta=2.0)
    assert clone(est).get_params()["risk"] == "cvar:0.25"
    with pytest.raises(NotFittedError):
        est.predict_proba()


def test_qre_rejects_bad_matrix():
    with pytest.raises(ValueError):
        RiskAdjustedQRE().fit(np.array([[0.5, 0.9], [0.9, 0.5]]))


def test_stochastic_solver_fit(game):
    est = StochasticRQRESolver(algorithm="TTEG", risk="entropic:2", beta=1.0, m=10, T=300, random_state=1).fit(game)
    assert est.predict_proba().sum() == pytest.approx(1.0)
    assert est.floor_ == pytest.approx(est.record_.floor) and est.floor_ < 0.05


def test_offline_estimator_matches_functional(game):
    d = draw_dataset(game, 3000, rng=0)
    est = OfflineRQRE(risk="entropic:1", beta=1.0, n_responses=5).fit(d.pairs, d.outcomes)
    ref = empirical_equilibrium(d, RiskMeasure.entropic(1.0), 1.0)
    np.testing.assert_allclose(est.pi_, ref.pi, atol=1e-12)
    rates = est.predict_proba(np.array([[0, 1], [3, 3]]))
    sel = (d.pairs[:, 0] == 0) & (d.pairs[:, 1] == 1)
    assert rates[0] == pytest.approx(d.outcomes[sel].mean())
    with pytest.raises(InvalidArgumentError):
        OfflineRQRE().fit(d.pairs, d.outcomes[:-1])


def test_operator_transformer(game):
    mus = np.random.default_rng(0).dirichlet(np.ones(5), size=3)
    t = RiskAdjustedOperator(risk="entropic:2").fit(game.P)
    op = RiskOperator(game, RiskMeasure.entropic(2.0))
    np.testing.assert_allclose(t.transform(mus), [op(m) for m in mus], atol=1e-14)
    two = RiskAdjustedOperator(risk="entropic:2", player="two").fit(game.P).transform(mus)
    np.testing.assert_allclose(t.transform(mus) - 1.0 - two, 0.0, atol=1e-12)
    with pytest.raises(InvalidArgumentError):
        t.transform(np.ones((1, 5)))
    with pytest.raises(InvalidArgumentError):
        RiskAdjustedOperator(player="three").fit(game.P)
