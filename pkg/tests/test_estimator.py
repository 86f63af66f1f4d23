import numpy as np
import pytest
from sklearn.base import clone

from mlbcd.estimator import PINNRegressor
from mlbcd.exceptions import GeometryError

SMALL = dict(problem="test3", architecture="SL1", width=6, depth=2, initial_full_epochs=30, n_interior=200,
             n_boundary=40, n_test=50, batch_interior=50, batch_boundary=10, lr0=1e-2)


def test_params_and_clone():
    est = PINNRegressor(**SMALL)
    assert est.get_params()["width"] == 6
    other = clone(est)
    assert other.get_params() == est.get_params() and other is not est


def test_fit_predict_score():
    est = PINNRegressor(**SMALL).fit()
    assert len(est.trace_) == 30
    assert est.trace_.records[-1].loss < est.trace_.records[0].loss
    r = np.linspace(0.3, 0.7, 20)
    X = np.stack([r, np.zeros_like(r)], 1)
    pred = est.predict(X)
    assert pred.shape == (20,) and np.all(np.isfinite(pred))
    assert np.isfinite(est.score(X, est.exact(X)))


def test_fit_with_points():
    rng = np.random.default_rng(0)
    r = rng.uniform(0.3, 0.7, 100)
    t = rng.uniform(0, 2 * np.pi, 100)
    X = np.stack([r * np.cos(t), r * np.sin(t)], 1)
    est = PINNRegressor(**{**SMALL, "initial_full_epochs": 2}).fit(X)
    assert est.n_features_in_ == 2
    with pytest.raises(GeometryError):
        PINNRegressor(**SMALL).fit(np.array([[0.0, 0.0]]))


def test_predict_before_fit():
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        PINNRegressor().predict([[0.5, 0.0]])


def test_deterministic():
    a = PINNRegressor(**{**SMALL, "initial_full_epochs": 5}).fit()
    b = PINNRegressor(**{**SMALL, "initial_full_epochs": 5}).fit()
    assert np.array_equal(a.params_, b.params_)
