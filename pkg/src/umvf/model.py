"""System, noise, and scenario data model.

The estimation problem is posed on a linear stochastic discrete-time system

    x_{k+1} = A_k x_k + B_k u_k + F^x_k f_k + G_k d_k + w_k
    y_k     = C_k x_k + F^y_k f_k + v_k

with known input u, additive fault f (to be estimated), unknown disturbance
d (to be rejected), and jointly Gaussian noise (w, v) whose covariance is
[[R, S^T], [S, Q]] with R positive definite.  This module holds the matrix
bundle, performs the correlated-noise factorization, and validates every
standing assumption before a filter run.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .exceptions import (
    DimensionMismatch,
    JointCovarianceIndefinite,
    ValidationError,
)
from .numerics import (
    as_matrix,
    cholesky_lower,
    numerical_rank,
    psd_sqrt,
    symmetrize,
)
import scipy.linalg


@dataclass(frozen=True)
class SystemDims:
    """Problem sizes: state n, measurement m, known input r, fault p, disturbance q."""

    n: int
    m: int
    r: int
    p: int
    q: int

    def __post_init__(self):
        for name in ("n", "m", "r", "p", "q"):
            value = getattr(self, name)
            if int(value) != value or value < 0:
                raise DimensionMismatch(f"dimension {name} must be a nonnegative integer")
        if self.n < 1 or self.m < 1:
            raise DimensionMismatch("state and measurement sizes must be at least 1")


@dataclass(frozen=True)
class MatrixBundle:
    """All system and noise matrices evaluated at one step."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F_x: np.ndarray
    F_y: np.ndarray
    G: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    S: np.ndarray


_SHAPES = {
    "A": ("n", "n"),
    "B": ("n", "r"),
    "C": ("m", "n"),
    "F_x": ("n", "p"),
    "F_y": ("m", "p"),
    "G": ("n", "q"),
    "Q": ("n", "n"),
    "R": ("m", "m"),
    "S": ("n", "m"),
}


def _check_bundle(bundle, dims, k):
    for name, (rows, cols) in _SHAPES.items():
        want = (getattr(dims, rows), getattr(dims, cols))
        got = getattr(bundle, name).shape
        if got != want:
            raise DimensionMismatch(
                f"matrix {name} at step {k}: expected shape {want}, got {got}"
            )


@dataclass(frozen=True)
class SystemModel:
    """Immutable system description: sizes plus a per-step matrix provider.

    Constant models (the common case) are built with `SystemModel.constant`;
    time-varying models supply `provider(k) -> MatrixBundle`.
    """

    dims: SystemDims
    provider: Callable[[int], MatrixBundle]

    @classmethod
    def constant(cls, A, B, C, F_x, F_y, G, Q, R, S=None, dims=None):
        A = as_matrix(A, "A")
        B = np.asarray(B, dtype=float).reshape(A.shape[0], -1)
        C = as_matrix(C, "C")
        F_x = np.asarray(F_x, dtype=float).reshape(A.shape[0], -1)
        F_y = np.asarray(F_y, dtype=float).reshape(C.shape[0], -1)
        G = np.asarray(G, dtype=float).reshape(A.shape[0], -1)
        Q = as_matrix(Q, "Q")
        R = as_matrix(R, "R")
        if S is None:
            S = np.zeros((A.shape[0], C.shape[0]))
        S = as_matrix(S, "S")
        if dims is None:
            dims = SystemDims(
                n=A.shape[0], m=C.shape[0], r=B.shape[1], p=F_x.shape[1], q=G.shape[1]
            )
        bundle = MatrixBundle(A=A, B=B, C=C, F_x=F_x, F_y=F_y, G=G, Q=Q, R=R, S=S)
        _check_bundle(bundle, dims, 0)
        return cls(dims=dims, provider=lambda k: bundle)


def matrices_at(model, k):
    """Evaluate the model's matrix bundle at step k, shape-checked."""
    if k < 0:
        raise ValueError("step index must be nonnegative")
    bundle = model.provider(k)
    _check_bundle(bundle, model.dims, k)
    return bundle


@dataclass(frozen=True)
class NoiseFactors:
    """Square-root parametrization of the joint (v, w) noise.

    v = R_half @ e_v and w = X @ e_v + Qx_half @ e_w with (e_v, e_w) unit
    normal, so that cov(v) = R, cov(w, v) = S, cov(w) = Q.
    """

    R_half: np.ndarray
    X: np.ndarray
    Qx_half: np.ndarray

    @classmethod
    def zero(cls, n, m):
        return cls(
            R_half=np.zeros((m, m)), X=np.zeros((n, m)), Qx_half=np.zeros((n, n))
        )


def factor_noise(Q, R, S=None):
    """Factor the joint noise covariance [[R, S^T], [S, Q]].

    Returns NoiseFactors with X = S R^{-T/2} and Qx_half a PSD square root of
    Q_x = Q - S R^{-1} S^T (small negative eigenvalues clipped).

    Raises
    ------
    NotPositiveDefinite
        If R fails its Cholesky factorization.
    JointCovarianceIndefinite
        If Q_x has an eigenvalue below -1e-9 * trace(Q_x).
    """
    Q = symmetrize(as_matrix(Q, "Q"))
    R = as_matrix(R, "R")
    n, m = Q.shape[0], R.shape[0]
    if S is None:
        S = np.zeros((n, m))
    S = as_matrix(S, "S")
    R_half = cholesky_lower(R)
    # X R_half^T = S  =>  R_half X^T = S^T
    X = scipy.linalg.solve_triangular(R_half, S.T, lower=True).T
    Qx = symmetrize(Q - X @ X.T)
    Qx_half, min_eig = psd_sqrt(Qx)
    if min_eig < -max(1e-9 * abs(np.trace(Qx)), 1e-12):
        raise JointCovarianceIndefinite(
            f"joint noise covariance is indefinite: Q - S R^-1 S^T has eigenvalue {min_eig}"
        )
    return NoiseFactors(R_half=R_half, X=X, Qx_half=Qx_half)


@dataclass(frozen=True)
class InitialCondition:
    """Filter prior at k=0: mean x0_hat and covariance P0."""

    x0_hat: np.ndarray
    P0: np.ndarray

    @classmethod
    def build(cls, x0_hat, P0):
        x0_hat = np.asarray(x0_hat, dtype=float).reshape(-1)
        P0 = symmetrize(as_matrix(P0, "P0"))
        return cls(x0_hat=x0_hat, P0=P0)


@dataclass
class ReportEntry:
    name: str
    ok: bool
    detail: str


@dataclass
class ValidationReport:
    """validate_scenario output: advisory entries plus the selected filter path."""

    entries: list = field(default_factory=list)
    path: str = "full-rank"

    def add(self, name, ok, detail):
        self.entries.append(ReportEntry(name=name, ok=ok, detail=detail))

    @property
    def ok(self):
        return all(entry.ok for entry in self.entries)

    def __str__(self):
        lines = [
            f"[{'ok' if entry.ok else 'warn'}] {entry.name}: {entry.detail}"
            for entry in self.entries
        ]
        lines.append(f"selected path: {self.path}")
        return "\n".join(lines)


def select_path(F_y, C, G, p, q):
    """Choose the filter path from the rank of the feedthrough blocks.

    The plain path needs the stacked block [F_y | C G] to have full column
    rank p+q; otherwise the extended (projector-based) path is required.
    """
    if numerical_rank(F_y) < p:
        return "extended"
    if numerical_rank(np.hstack([F_y, C @ G])) < p + q:
        return "extended"
    return "full-rank"


def validate_scenario(model, init):
    """Check every standing assumption; raise on hard failures, report the rest.

    Hard failures (raised): inconsistent dimensions, R not positive
    definite, m < p + q.  Everything else (joint-noise PSD, observability,
    rank-based path selection) is advisory and lands in the report.
    """
    dims = model.dims
    bundle = matrices_at(model, 0)  # raises DimensionMismatch on bad shapes
    if dims.m < dims.p + dims.q:
        raise ValidationError(
            f"m ≥ p+q violated: m={dims.m}, p={dims.p}, q={dims.q}"
        )
    x0 = np.asarray(init.x0_hat, dtype=float).reshape(-1)
    if x0.shape != (dims.n,):
        raise DimensionMismatch(f"x0_hat: expected shape ({dims.n},), got {x0.shape}")
    P0 = as_matrix(init.P0, "P0")
    if P0.shape != (dims.n, dims.n):
        raise DimensionMismatch(
            f"P0: expected shape ({dims.n}, {dims.n}), got {P0.shape}"
        )
    cholesky_lower(bundle.R)  # raises NotPositiveDefinite

    report = ValidationReport()
    report.add("dimensions", True, f"n={dims.n} m={dims.m} r={dims.r} p={dims.p} q={dims.q}")
    report.add("R positive definite", True, "Cholesky factorization succeeded")
    report.add("m >= p+q", True, f"{dims.m} >= {dims.p + dims.q}")

    try:
        factor_noise(bundle.Q, bundle.R, bundle.S)
        report.add("joint noise covariance PSD", True, "factorization succeeded")
    except JointCovarianceIndefinite as exc:
        report.add("joint noise covariance PSD", False, str(exc))

    p0_min = float(np.linalg.eigvalsh(symmetrize(P0))[0]) if dims.n else 0.0
    report.add(
        "P0 positive semidefinite",
        p0_min >= -1e-9 * max(abs(np.trace(P0)), 1.0),
        f"smallest eigenvalue {p0_min:.3g}",
    )

    rank_fy = numerical_rank(bundle.F_y)
    stacked = np.hstack([bundle.F_y, bundle.C @ bundle.G])
    rank_e = numerical_rank(stacked)
    report.path = select_path(bundle.F_y, bundle.C, bundle.G, dims.p, dims.q)
    report.add("rank(F_y)", rank_fy == dims.p, f"{rank_fy} of p={dims.p}")
    report.add(
        "rank([F_y | C G])", rank_e == dims.p + dims.q, f"{rank_e} of p+q={dims.p + dims.q}"
    )

    obs_blocks = []
    power = np.eye(dims.n)
    for _ in range(dims.n):
        obs_blocks.append(bundle.C @ power)
        power = power @ bundle.A
    obs_rank = numerical_rank(np.vstack(obs_blocks))
    report.add("(C, A) observable", obs_rank == dims.n, f"observability rank {obs_rank} of {dims.n}")
    return report
