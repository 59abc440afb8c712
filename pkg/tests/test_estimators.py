import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from hedgegame import ConvergenceRateEstimator, HedgeLearner, make_game


def test_learner_params_and_clone():
    est = HedgeLearner(gamma=0.2, n_steps=50, random_state=3)
    params = est.get_params()
    assert params["gamma"] == 0.2 and params["n_steps"] == 50
    c = clone(est)
    assert c.get_params() == params and not hasattr(c, "strategies_")
    est.set_params(schedule="power_law", beta=0.6)
    assert est.beta == 0.6


def test_learner_fit_predict_score(pd):
    est = HedgeLearner(gamma=0.1, n_steps=500).fit(pd)
    assert est.predict() == (1, 1)
    assert est.equilibrium_ == (1, 1) and est.n_players_ == 2
    assert -1e-15 < est.score(pd) <= 0
    assert len(est.trajectory_) == 500


def test_learner_noisy_cold_start_is_deterministic(pd):
    kw = dict(schedule="power_law", gamma=0.5, beta=0.6, feedback="noisy", init="cold", n_steps=2000)
    a = HedgeLearner(random_state=4, **kw).fit(pd)
    b = HedgeLearner(random_state=4, **kw).fit(pd)
    np.testing.assert_array_equal(a.scores_[0], b.scores_[0])
    assert a.predict() == (1, 1)


def test_learner_errors(pd, pennies):
    with pytest.raises(NotFittedError):
        HedgeLearner().predict()
    with pytest.raises(ValueError):
        HedgeLearner().fit(pennies)
    with pytest.raises(ValueError):
        HedgeLearner(init="warm").fit(pd)
    with pytest.raises(TypeError):
        HedgeLearner().fit(np.zeros((2, 2, 2)))
    # an explicit score profile needs no equilibrium
    est = HedgeLearner(init=[np.zeros(2), np.zeros(2)], n_steps=10).fit(pennies)
    with pytest.raises(ValueError):
        est.score(pennies)


def test_rate_estimator(pd):
    traj = HedgeLearner(gamma=0.1, n_steps=500).fit(pd).trajectory_
    est = ConvergenceRateEstimator(abscissa="t", window=(50, 400)).fit(traj)
    assert est.slope_ == pytest.approx(-0.1, rel=0.1)
    assert est.window_ == (50, 400) and not est.truncated_
    d = est.predict([100.0, 200.0])
    assert d[1] / d[0] == pytest.approx(np.exp(100 * est.slope_))
    assert est.score(traj) == pytest.approx(-est.residual_rms_, rel=1e-9)
    with pytest.raises(NotFittedError):
        ConvergenceRateEstimator().predict([1.0])


def test_rate_estimator_needs_equilibrium():
    g = make_game("matching_pennies")
    traj = HedgeLearner(init="cold", n_steps=20).fit(g).trajectory_
    with pytest.raises(ValueError):
        ConvergenceRateEstimator().fit(traj)
