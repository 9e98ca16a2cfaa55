"""Scikit-learn style front end.

Thin estimator wrapper over the filter: matrices are hyperparameters,
`fit` validates them and precomputes the (measurement-independent) gain
schedule for the training horizon, `transform` maps a measurement sequence
to stacked state/fault estimates, and `predict` returns just the fault
estimates.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .filtering import gain_schedule, run_filter, run_with_schedule
from .model import InitialCondition, SystemModel, validate_scenario


class FaultStateEstimator(BaseEstimator, TransformerMixin):
    """Joint state/fault estimator decoupled from unknown disturbances.

    Parameters are the system matrices (see `umvf.model.SystemModel`), the
    filter prior, an optional known-input signal `u` (constant vector or
    per-step rows), and the numerics mode/path switches.

    After `fit(X)` (X the (T, m) measurement array), `transform(X)` returns
    the (T, n + p) array [state estimates | fault estimates] and
    `predict(X)` the (T, p) fault estimates alone.
    """

    def __init__(
        self,
        A=None,
        B=None,
        C=None,
        F_x=None,
        F_y=None,
        G=None,
        Q=None,
        R=None,
        S=None,
        x0_hat=None,
        P0=None,
        u=None,
        mode="sqrt",
        path="auto",
    ):
        self.A = A
        self.B = B
        self.C = C
        self.F_x = F_x
        self.F_y = F_y
        self.G = G
        self.Q = Q
        self.R = R
        self.S = S
        self.x0_hat = x0_hat
        self.P0 = P0
        self.u = u
        self.mode = mode
        self.path = path

    def _build(self):
        model = SystemModel.constant(
            self.A, self.B, self.C, self.F_x, self.F_y, self.G, self.Q, self.R, self.S
        )
        n = model.dims.n
        x0 = np.zeros(n) if self.x0_hat is None else self.x0_hat
        P0 = np.eye(n) if self.P0 is None else self.P0
        return model, InitialCondition.build(x0, P0)

    def fit(self, X, y=None):
        X = check_array(X)
        model, init = self._build()
        validate_scenario(model, init)
        self.model_ = model
        self.init_ = init
        self.n_features_in_ = X.shape[1]
        self.schedule_ = gain_schedule(
            model, init, horizon=X.shape[0], mode=self.mode, path=self.path
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "model_")
        X = check_array(X)
        if X.shape[0] == len(self.schedule_.steps):
            x_hat, f_hat = run_with_schedule(self.schedule_, X, u=self.u)
        else:
            run = run_filter(
                self.model_, self.init_, X, u=self.u, mode=self.mode, path=self.path
            )
            x_hat = np.array([r.x_post for r in run.records])
            f_hat = np.array([r.f_hat for r in run.records]).reshape(X.shape[0], -1)
        return np.hstack([x_hat, f_hat])

    def predict(self, X):
        return self.transform(X)[:, self.model_.dims.n :]
