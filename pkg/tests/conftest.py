"""Shared model builders for the test suite."""

import numpy as np
import pytest

from umvf.config import flight_config_path, load_config
from umvf.exceptions import UmvfError
from umvf.filtering import run_filter
from umvf.model import InitialCondition, SystemModel
from umvf.numerics import numerical_rank


def flight_matrices():
    """Matrices of the bundled longitudinal flight-control scenario."""
    A = np.array(
        [
            [0.9944, 0.1203, -0.4302],
            [0.0017, 0.9902, -0.0747],
            [0.0, 0.8187, 0.0],
        ]
    )
    B = np.array([[0.4252], [-0.0082], [0.1813]])
    C = np.eye(3)
    F_x = np.hstack([B, np.zeros((3, 1))])
    F_y = np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]])
    G = np.array([[0.0], [1.0], [0.0]])
    Q = np.diag([0.01, 0.01, 1e-4])
    R = 0.01 * np.eye(3)
    return dict(A=A, B=B, C=C, F_x=F_x, F_y=F_y, G=G, Q=Q, R=R)


def make_flight_model():
    model = SystemModel.constant(**flight_matrices())
    init = InitialCondition.build(np.zeros(3), 0.01 * np.eye(3))
    return model, init


@pytest.fixture
def flight_model():
    return make_flight_model()


@pytest.fixture(scope="session")
def flight_config():
    return load_config(flight_config_path())


def random_spd(rng, n, scale=1.0):
    w = rng.normal(size=(n, n + 2))
    return scale * (w @ w.T) / n + 0.05 * scale * np.eye(n)


def random_fullrank_model(rng, p_min=1, q_min=0, m_slack=0):
    """Random consistent model: plain-path rank conditions hold with margin
    and the filtering problem is well posed (bounded covariance recursion).

    m_slack forces m > p + q by at least that many rows (needed when a
    nontrivial feasible-perturbation space is required).
    """
    while True:
        p = int(rng.integers(p_min, 3))
        q = int(rng.integers(q_min, 3))
        m = int(rng.integers(max(p + q + m_slack, 2), 7))
        if m > 6 or m < p + q + m_slack:
            continue
        n = int(rng.integers(2, 7))
        r = int(rng.integers(0, 3))
        A = rng.normal(size=(n, n))
        A *= 0.85 / max(np.abs(np.linalg.eigvals(A)).max(), 1e-6)
        B = rng.normal(size=(n, r))
        C = rng.normal(size=(m, n))
        F_x = rng.normal(size=(n, p))
        F_y = rng.normal(size=(m, p))
        G = rng.normal(size=(n, q))
        Q = random_spd(rng, n, 0.05)
        R = random_spd(rng, m, 0.02)
        if numerical_rank(F_y) < p:
            continue
        E = np.hstack([F_y, C @ G])
        if numerical_rank(E) < p + q:
            continue
        # rank with margin: barely-consistent regressors make the gains
        # meaningless numerically
        scaled = E / np.maximum(np.linalg.norm(E, axis=0), 1e-300)
        if np.linalg.svd(scaled, compute_uv=False)[-1] < 0.1:
            continue
        model = SystemModel.constant(A, B, C, F_x, F_y, G, Q, R)
        init = InitialCondition.build(rng.normal(size=n), random_spd(rng, n, 0.1))
        # drop estimation problems whose error variance diverges (not every
        # rank-consistent model is strongly detectable); the covariance
        # recursion is measurement-independent, so zero data suffices
        try:
            probe = run_filter(model, init, np.zeros((40, m)))
        except UmvfError:
            continue
        if max(rec.trace_Px for rec in probe.records) > 100.0:
            continue
        return model, init
