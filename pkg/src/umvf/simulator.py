"""Ground-truth trajectory generation.

Simulates the system with correlated process/measurement noise, step-shaped
fault signals, and either an explicit disturbance sequence or the
parametric-perturbation disturbance (designated rows of A and B scaled by
fixed factors, folded into d_k through a standard-basis G column).
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .exceptions import DimensionMismatch, LengthMismatch, ValidationError
from .model import NoiseFactors, factor_noise, matrices_at


@dataclass(frozen=True)
class FaultSignalSpec:
    """Per-channel sums of weighted unit steps: value(k) = sum a * 1[k >= onset]."""

    # channels[i] is a list of (amplitude, onset) pairs for fault channel i
    channels: tuple

    @classmethod
    def build(cls, channels):
        clean = []
        for terms in channels:
            checked = []
            for amplitude, onset in terms:
                amplitude = float(amplitude)
                onset = int(onset)
                if not np.isfinite(amplitude):
                    raise ValidationError("fault amplitude must be finite")
                if onset < 0:
                    raise ValidationError("fault onset must be >= 0")
                checked.append((amplitude, onset))
            clean.append(tuple(checked))
        return cls(channels=tuple(clean))

    @classmethod
    def zero(cls, p):
        return cls(channels=tuple(() for _ in range(p)))


def fault_signal_at(spec, k):
    """Evaluate the fault vector at step k."""
    return np.array(
        [
            sum(amplitude for amplitude, onset in terms if k >= onset)
            for terms in spec.channels
        ],
        dtype=float,
    )


@dataclass(frozen=True)
class DisturbanceSpec:
    """Unknown-disturbance generator: an explicit sequence or a parametric row perturbation.

    Parametric mode realizes d_k = scale_A * (A[row] @ x_k) + scale_B * (B[row] @ u_k),
    the row being the one selected by the (standard basis column) G.
    """

    mode: str  # "sequence" | "parametric"
    values: Optional[np.ndarray] = None  # (horizon, q) for sequence mode
    scale_A: float = 0.0
    scale_B: float = 0.0

    @classmethod
    def zero(cls):
        return cls(mode="sequence", values=None)

    @classmethod
    def sequence(cls, values):
        return cls(mode="sequence", values=np.atleast_2d(np.asarray(values, dtype=float)))

    @classmethod
    def parametric(cls, scale_A, scale_B):
        return cls(mode="parametric", scale_A=float(scale_A), scale_B=float(scale_B))


def _parametric_row(G):
    # The perturbation enters through one state equation; G must be a single
    # standard-basis column so d_k is that row's extra term.
    if G.shape[1] != 1:
        raise ValidationError("parametric disturbance requires exactly one disturbance channel")
    col = G[:, 0]
    nonzero = np.flatnonzero(col != 0.0)
    if len(nonzero) != 1 or col[nonzero[0]] != 1.0:
        raise ValidationError(
            "parametric disturbance requires G to be a standard basis column"
        )
    return int(nonzero[0])


@dataclass(frozen=True)
class TruthRecord:
    """One simulated step: state, measurement, fault, disturbance, and noise draws."""

    k: int
    x_true: np.ndarray
    y: np.ndarray
    f_true: np.ndarray
    d_true: np.ndarray
    w: np.ndarray
    v: np.ndarray


def make_rng(seed):
    """Counter-based generator with an explicit 64-bit seed (reproducible across runs)."""
    return np.random.Generator(np.random.Philox(int(seed) & (2**64 - 1)))


def sample_noise_pair(factors, rng):
    """Draw one correlated (w, v) pair from unit normals through the factors."""
    m = factors.R_half.shape[0]
    n = factors.Qx_half.shape[0]
    z = rng.standard_normal(m + n)
    e_v, e_w = z[:m], z[m:]
    v = factors.R_half @ e_v
    w = factors.X @ e_v + factors.Qx_half @ e_w
    return w, v


def resolve_inputs(u, horizon, r):
    """Normalize a known-input description to a (horizon, r) array.

    Accepts None (zeros), a scalar or r-vector (held constant), or a
    per-step array of shape (horizon, r).
    """
    if u is None:
        return np.zeros((horizon, r))
    u = np.asarray(u, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1)
    if u.ndim == 1:
        if u.shape[0] != r:
            raise DimensionMismatch(f"constant input: expected {r} entries, got {u.shape[0]}")
        return np.tile(u, (horizon, 1))
    if u.shape != (horizon, r):
        raise LengthMismatch(
            f"input sequence: expected shape ({horizon}, {r}), got {u.shape}"
        )
    return u


def simulate(
    model,
    horizon,
    seed,
    x0_true=None,
    fault_spec=None,
    disturbance_spec=None,
    u=None,
    factors=None,
):
    """Generate `horizon` TruthRecords, fully determined by (seed, arguments).

    `factors` overrides the noise factorization (tests use zero factors for
    noiseless runs); by default it is derived from the step-0 noise matrices
    and refreshed at each step only for time-varying models.
    """
    if horizon < 1:
        raise ValidationError("horizon must be >= 1")
    dims = model.dims
    if fault_spec is None:
        fault_spec = FaultSignalSpec.zero(dims.p)
    if len(fault_spec.channels) != dims.p:
        raise DimensionMismatch(
            f"fault spec has {len(fault_spec.channels)} channels, expected p={dims.p}"
        )
    if disturbance_spec is None:
        disturbance_spec = DisturbanceSpec.zero()
    if disturbance_spec.mode == "sequence" and disturbance_spec.values is not None:
        if disturbance_spec.values.shape != (horizon, dims.q):
            raise LengthMismatch(
                "disturbance sequence: expected shape "
                f"({horizon}, {dims.q}), got {disturbance_spec.values.shape}"
            )
    inputs = resolve_inputs(u, horizon, dims.r)
    rng = make_rng(seed)

    records = []
    x = (
        np.zeros(dims.n)
        if x0_true is None
        else np.asarray(x0_true, dtype=float).reshape(dims.n)
    )
    step_factors = factors
    last_bundle = None
    for k in range(horizon):
        bundle = matrices_at(model, k)
        if factors is None and bundle is not last_bundle:
            # constant models hand back the same bundle object, so this
            # factors the noise exactly once per run
            step_factors = factor_noise(bundle.Q, bundle.R, bundle.S)
            last_bundle = bundle
        # noise is drawn first and unconditionally so paired runs with the
        # same seed see identical (w, v) regardless of the disturbance spec
        w, v = sample_noise_pair(step_factors, rng)
        f = fault_signal_at(fault_spec, k)
        u_k = inputs[k]
        if disturbance_spec.mode == "parametric":
            row = _parametric_row(bundle.G)
            d = np.array(
                [
                    disturbance_spec.scale_A * float(bundle.A[row] @ x)
                    + disturbance_spec.scale_B * float(bundle.B[row] @ u_k)
                ]
            )
        elif disturbance_spec.values is not None:
            d = disturbance_spec.values[k]
        else:
            d = np.zeros(dims.q)
        y = bundle.C @ x + bundle.F_y @ f + v
        records.append(
            TruthRecord(k=k, x_true=x.copy(), y=y, f_true=f, d_true=d.copy(), w=w, v=v)
        )
        x = bundle.A @ x + bundle.B @ u_k + bundle.F_x @ f + bundle.G @ d + w
    return records
