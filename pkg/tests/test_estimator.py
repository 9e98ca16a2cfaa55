import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from umvf.estimator import FaultStateEstimator
from umvf.filtering import run_filter
from umvf.simulator import DisturbanceSpec, FaultSignalSpec, simulate

from conftest import flight_matrices, make_flight_model


def fitted_estimator_and_data(horizon=60):
    model, init = make_flight_model()
    truth = simulate(
        model,
        horizon=horizon,
        seed=11,
        fault_spec=FaultSignalSpec.build([[(4.0, 20)], [(-2.0, 30)]]),
        disturbance_spec=DisturbanceSpec.parametric(-0.5, 0.5),
        u=10.0,
    )
    X = np.array([r.y for r in truth])
    est = FaultStateEstimator(
        u=10.0, x0_hat=np.zeros(3), P0=0.01 * np.eye(3), **flight_matrices()
    )
    return est.fit(X), X, model, init


def test_get_params_round_trips_through_clone():
    est = FaultStateEstimator(u=10.0, mode="covariance", **flight_matrices())
    params = est.get_params()
    assert params["mode"] == "covariance"
    assert params["path"] == "auto"
    twin = clone(est)
    np.testing.assert_array_equal(twin.A, est.A)
    assert twin.mode == "covariance"


def test_transform_matches_run_filter():
    est, X, model, init = fitted_estimator_and_data()
    out = est.transform(X)
    assert out.shape == (60, 5)
    run = run_filter(model, init, X, u=10.0)
    for k, rec in enumerate(run.records):
        np.testing.assert_array_equal(out[k, :3], rec.x_post)
        np.testing.assert_array_equal(out[k, 3:], rec.f_hat)


def test_transform_handles_other_horizons():
    est, X, model, init = fitted_estimator_and_data()
    out = est.transform(X[:25])
    run = run_filter(model, init, X[:25], u=10.0)
    np.testing.assert_allclose(out[:, :3], [r.x_post for r in run.records], atol=1e-12)


def test_predict_returns_fault_columns():
    est, X, _, _ = fitted_estimator_and_data()
    faults = est.predict(X)
    assert faults.shape == (60, 2)
    np.testing.assert_array_equal(faults, est.transform(X)[:, 3:])
    # the visible fault channel is locked on by the end of the run
    assert faults[-1, 1] == pytest.approx(-2.0, abs=0.5)


def test_unfitted_estimator_raises():
    est = FaultStateEstimator(**flight_matrices())
    with pytest.raises(NotFittedError):
        est.transform(np.zeros((5, 3)))


def test_default_prior_is_identity():
    mats = flight_matrices()
    est = FaultStateEstimator(**mats)
    X = np.zeros((5, 3))
    est.fit(X)
    np.testing.assert_array_equal(est.init_.x0_hat, np.zeros(3))
    np.testing.assert_array_equal(est.init_.P0, np.eye(3))
