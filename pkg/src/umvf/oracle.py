"""Independent reference computations for cross-verification.

These deliberately take a different numerical route from the filter:
explicit whitening plus ordinary least squares instead of normal-equation
solves, a dense stacked KKT solve instead of the closed-form gain, and a
textbook covariance-form Kalman recursion for the no-fault/no-disturbance
reduction.  They exist so tests can compare two implementations that share
no code path.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import NotPositiveDefinite, SingularKkt


@dataclass(frozen=True)
class WlsSolution:
    """Joint weighted-least-squares estimate of (fault, disturbance)."""

    f_hat: np.ndarray
    d_hat: np.ndarray
    joint_cov: np.ndarray


def whitened_ls_fault(y_tilde, E, H, p=None):
    """Solve the innovation regression by explicit whitening + ordinary LS.

    Minimizes || L^-1 (y_tilde - E z) || with L L^T = H, splits z into
    (f_hat, d_hat) after `p` fault rows (default: all rows are fault), and
    returns the joint covariance pinv(E^T H^-1 E).
    """
    E = np.asarray(E, dtype=float)
    H = np.asarray(H, dtype=float)
    y_tilde = np.asarray(y_tilde, dtype=float).reshape(-1)
    if p is None:
        p = E.shape[1]
    try:
        L = np.linalg.cholesky(0.5 * (H + H.T))
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(f"H is not positive definite: {exc}") from exc
    Ew = np.linalg.solve(L, E) if E.size else E
    yw = np.linalg.solve(L, y_tilde)
    z, *_ = np.linalg.lstsq(Ew, yw, rcond=None)
    joint_cov = np.linalg.pinv(Ew.T @ Ew)
    return WlsSolution(f_hat=z[:p], d_hat=z[p:], joint_cov=joint_cov)


def kkt_state_gain(H, E, C_Pbar, Gamma):
    """State gain from the stacked stationarity/constraint linear system.

    Solves  [[H, -E], [E^T, 0]] [M21^T; Lambda^T] = [C_Pbar; Gamma^T]
    with a dense general solver and returns M21.

    Raises
    ------
    SingularKkt
        If the stacked matrix is singular (rank-deficient E territory).
    """
    H = np.asarray(H, dtype=float)
    E = np.asarray(E, dtype=float)
    C_Pbar = np.asarray(C_Pbar, dtype=float)
    Gamma = np.asarray(Gamma, dtype=float)
    m = H.shape[0]
    c = E.shape[1]
    kkt = np.zeros((m + c, m + c))
    kkt[:m, :m] = H
    kkt[:m, m:] = -E
    kkt[m:, :m] = E.T
    rhs = np.vstack([C_Pbar, Gamma.T])
    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularKkt(f"stacked gain system is singular: {exc}") from exc
    if not np.isfinite(sol).all():
        raise SingularKkt("stacked gain system produced non-finite solution")
    return sol[:m].T


def kalman_reference(A, B, C, Q, R, x0_hat, P0, measurements, u=None):
    """Textbook covariance-form Kalman filter (the p = q = 0 reduction).

    Returns (x_post, P_post, x_prior, P_prior) arrays over the run.
    """
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    ys = np.atleast_2d(np.asarray(measurements, dtype=float))
    horizon, n = ys.shape[0], A.shape[0]
    B = np.zeros((n, 0)) if B is None else np.asarray(B, dtype=float).reshape(n, -1)
    us = np.zeros((horizon, B.shape[1])) if u is None else np.atleast_2d(np.asarray(u, dtype=float))
    if us.shape == (1, B.shape[1]) and horizon > 1:
        us = np.tile(us, (horizon, 1))
    x = np.asarray(x0_hat, dtype=float).reshape(-1)
    P = np.asarray(P0, dtype=float)
    x_post = np.empty((horizon, n))
    P_post = np.empty((horizon, n, n))
    x_prior = np.empty((horizon, n))
    P_prior = np.empty((horizon, n, n))
    for k in range(horizon):
        x_prior[k] = x
        P_prior[k] = P
        S_inn = C @ P @ C.T + R
        try:
            np.linalg.cholesky(0.5 * (S_inn + S_inn.T))
        except np.linalg.LinAlgError as exc:
            raise NotPositiveDefinite(f"innovation covariance not PD: {exc}") from exc
        K = P @ C.T @ np.linalg.inv(S_inn)
        x = x + K @ (ys[k] - C @ x)
        P = (np.eye(n) - K @ C) @ P
        x_post[k] = x
        P_post[k] = P
        x = A @ x + B @ us[k]
        P = A @ P @ A.T + Q
    return x_post, P_post, x_prior, P_prior
