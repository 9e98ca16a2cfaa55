"""Joint state and fault estimation decoupled from unknown disturbances.

Each step solves a small constrained weighted least-squares problem in the
innovation: the fault (and implicitly the previous disturbance) enters the
innovation through a known regressor block E, and the gains are chosen to
minimize the posterior state covariance subject to linear constraints that
cancel the fault/disturbance terms from the error recursion.  Two paths are
implemented:

* full-rank path — the fault feedthrough F_y has full column rank and
  [F_y | C G] has rank p+q; every fault component is visible in the current
  measurement and the constrained gain exists in closed form.
* extended path — F_y is column-rank-deficient.  The orthogonal projector
  Sigma = I - pinv(F_y) F_y splits the fault into a component visible now
  and a component that only reaches the measurement through the state one
  step later.  The regressor gains an extra block C F_x_prev Sigma_prev and
  all gains go through a Moore-Penrose pseudoinverse.  The reported fault
  estimate combines the currently visible component with the one-step-
  delayed estimate of the hidden component; the state prediction is fed
  only the visible component, whose uncertainty the prior covariance
  bookkeeping accounts for (the hidden component is re-estimated from the
  next measurement instead).

Covariance arithmetic comes in two interchangeable modes: "sqrt" keeps a
factor of the prior covariance, routes every H^{-1} product through
Cholesky triangular solves, and assembles all posterior blocks as Gram
products of one joint factor (positive semidefinite by construction);
"covariance" uses the naive explicit formulas with an SVD pseudoinverse.
Both modes agree to floating-point accuracy on well-conditioned problems;
"sqrt" is the default and survives ill-conditioned noise.
"""

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .exceptions import (
    DimensionMismatch,
    JointCovarianceIndefinite,
    LengthMismatch,
    RankDeficient,
    UmvfError,
)
from .model import matrices_at, select_path
from .numerics import (
    as_matrix,
    cholesky_lower,
    numerical_rank,
    psd_sqrt,
    pseudo_inverse,
    solve_spd,
    symmetrize,
)
from .simulator import resolve_inputs

MODES = ("sqrt", "covariance")
PATHS = ("auto", "full-rank", "extended")

# residuals above this are flagged in the StepRecord instead of raising: the
# pseudoinverse returns a least-squares constraint fit when the constraints
# cannot be met exactly
INCONSISTENT_TOL = 1e-6


@dataclass(frozen=True)
class ConstraintBlocks:
    """Regressor and gain-constraint blocks for one measurement update.

    E (m x c) maps the stacked unknowns into the innovation.  The reported
    fault estimate reconstructs T z, the state gain must reproduce Gamma z
    in the prediction error, and T_feed z is the measurement-visible part
    fed into the state prediction.  On the full-rank path T_feed == T.
    """

    E: np.ndarray
    T: np.ndarray
    Gamma: np.ndarray
    mode: str  # "full-rank" | "extended"
    T_feed: np.ndarray


@dataclass(frozen=True)
class GainPair:
    """Measurement-update gains with the innovation covariance that shaped them."""

    M11: np.ndarray
    M21: np.ndarray
    E_star: np.ndarray
    H: np.ndarray
    M11_feed: np.ndarray


@dataclass(frozen=True)
class FilterState:
    """Value-semantics filter state; update functions return new instances."""

    k: int
    x_prior: np.ndarray
    P_prior: np.ndarray
    P_prior_factor: np.ndarray
    Sigma_prev: np.ndarray
    G_prev: Optional[np.ndarray] = None
    Fx_prev: Optional[np.ndarray] = None
    x_post: Optional[np.ndarray] = None
    f_hat: Optional[np.ndarray] = None
    P_x: Optional[np.ndarray] = None
    P_f: Optional[np.ndarray] = None
    P_xf: Optional[np.ndarray] = None
    f_feed: Optional[np.ndarray] = None
    P_f_feed: Optional[np.ndarray] = None
    P_xf_feed: Optional[np.ndarray] = None
    gains: Optional[GainPair] = None
    blocks: Optional[ConstraintBlocks] = None


@dataclass(frozen=True)
class StepRecord:
    """Per-step log used for CSV output and acceptance checks."""

    k: int
    x_post: np.ndarray
    f_hat: np.ndarray
    trace_Px: float
    trace_Pf: float
    res_M11: float
    res_M21: float
    inconsistent: bool
    diag_hidden_fault: float
    diag_disturbance: float


def _prior_factor(P):
    try:
        return cholesky_lower(P)
    except UmvfError:
        # positive semidefinite but singular priors are legitimate
        return psd_sqrt(P)[0]


def init_state(model, init):
    """Filter state at k=0 from the prior (x0_hat, P0)."""
    dims = model.dims
    x0 = np.asarray(init.x0_hat, dtype=float).reshape(dims.n)
    P0 = symmetrize(as_matrix(init.P0, "P0"))
    return FilterState(
        k=0,
        x_prior=x0,
        P_prior=P0,
        P_prior_factor=_prior_factor(P0),
        Sigma_prev=np.zeros((dims.p, dims.p)),
    )


def compute_sigma(F_y):
    """Projector onto the fault subspace invisible in the current measurement.

    Returns (Sigma, Phi) with Sigma = I - pinv(F_y) F_y (symmetric,
    idempotent) and Phi = I - Sigma its visible-subspace complement.
    """
    F_y = as_matrix(F_y, "F_y")
    p = F_y.shape[1]
    sigma = symmetrize(np.eye(p) - pseudo_inverse(F_y) @ F_y)
    return sigma, np.eye(p) - sigma


def build_constraints(bundle, G_prev, Fx_prev, Sigma_prev, path):
    """Assemble the regressor/constraint blocks for one step.

    `path` is "full-rank" or "extended" (resolve "auto" before calling).  At
    the first step the previous-step blocks do not exist yet and are zero:
    the prior is assumed free of past faults and disturbances.

    Raises
    ------
    RankDeficient
        On the full-rank path when the rank condition fails: rank(F_y) < p
        at the first step, or rank([F_y | C G_prev]) < p+q afterwards.
    """
    C, F_y = bundle.C, bundle.F_y
    m, n = C.shape
    p = F_y.shape[1]
    boot = G_prev is None
    q = bundle.G.shape[1] if boot else G_prev.shape[1]
    G_block = np.zeros((n, q)) if boot else G_prev

    if path == "full-rank":
        E = np.hstack([F_y, C @ G_block])
        if numerical_rank(F_y) < p:
            raise RankDeficient(
                f"full-rank path requires rank(F_y) = p = {p}, got {numerical_rank(F_y)}"
            )
        # zero (or measurement-invisible) disturbance columns are vacuous
        # constraints, so they do not count toward the required rank
        required = p + numerical_rank(C @ G_block)
        if numerical_rank(E) < required:
            raise RankDeficient(
                f"full-rank path requires rank([F_y | C G]) = {required}, "
                f"got {numerical_rank(E)}"
            )
        T = np.hstack([np.eye(p), np.zeros((p, q))])
        Gamma = np.hstack([np.zeros((n, p)), G_block])
        return ConstraintBlocks(E=E, T=T, Gamma=Gamma, mode="full-rank", T_feed=T)

    if path != "extended":
        raise ValueError(f"unknown path {path!r}")
    hidden_prev = np.zeros((n, p)) if boot or Fx_prev is None else Fx_prev @ Sigma_prev
    sigma_prev_block = np.zeros((p, p)) if boot else Sigma_prev
    _, phi = compute_sigma(F_y)
    E = np.hstack([F_y, C @ hidden_prev, C @ G_block])
    T = np.hstack([phi, sigma_prev_block, np.zeros((p, q))])
    T_feed = np.hstack([phi, np.zeros((p, p)), np.zeros((p, q))])
    Gamma = np.hstack([np.zeros((n, p)), hidden_prev, G_block])
    return ConstraintBlocks(E=E, T=T, Gamma=Gamma, mode="extended", T_feed=T_feed)


def innovation_covariance(P_prior, C, R):
    """H = C P_prior C^T + R, symmetrized."""
    return symmetrize(C @ P_prior @ C.T + R)


def _h_inverse_times(H, B, mode):
    if mode == "sqrt":
        return solve_spd(H, B)
    return pseudo_inverse(H) @ B


def fault_gain(blocks, H, mode="sqrt"):
    """Constrained weighted least-squares fault gain.

    E_star = pinv(E^T H^-1 E) E^T H^-1 is the minimum-variance unbiased
    solve for the stacked unknowns; M11 = T E_star reconstructs the
    reported fault combination.  The pseudoinverse covers both paths (it
    reduces to the plain inverse when E has full column rank).
    """
    E = blocks.E
    HiE = _h_inverse_times(H, E, mode)
    gram = symmetrize(E.T @ HiE)
    E_star = pseudo_inverse(gram) @ HiE.T
    return blocks.T @ E_star, E_star


def state_gain(P_prior, C, H, blocks, E_star, mode="sqrt"):
    """Minimum-variance state gain subject to M21 E = Gamma.

    Closed form: M21 = P C^T H^-1 (I - E E_star) + Gamma E_star, the
    constrained minimizer of the posterior state covariance trace.
    """
    m = H.shape[0]
    # P C^T H^-1   ==  (H^-1 C P)^T since H, P are symmetric
    PCtHi = _h_inverse_times(H, C @ P_prior, mode).T
    return PCtHi @ (np.eye(m) - blocks.E @ E_star) + blocks.Gamma @ E_star


def _posterior_covariances(state, bundle, gains, mode):
    """All posterior covariance blocks for both the reported and fed fault errors."""
    n = state.P_prior.shape[0]
    m = bundle.R.shape[0]
    C, R, P = bundle.C, bundle.R, state.P_prior
    M11, M21, M11f = gains.M11, gains.M21, gains.M11_feed
    p = M11.shape[0]
    imc = np.eye(n) - M21 @ C
    if mode == "sqrt":
        # factor of cov([prior error; measurement noise]) is block diagonal;
        # stack the linear maps of the three error vectors and take Grams
        L_P = state.P_prior_factor
        L_R = cholesky_lower(R)
        W = np.block([[imc, -M21], [-M11 @ C, -M11], [-M11f @ C, -M11f]])
        low = np.block(
            [[L_P, np.zeros((n, m))], [np.zeros((m, n)), L_R]]
        )
        J = W @ low
        gram = J @ J.T
        P_x = gram[:n, :n]
        P_xf = gram[:n, n : n + p]
        P_f = gram[n : n + p, n : n + p]
        P_xf_feed = gram[:n, n + p :]
        P_f_feed = gram[n + p :, n + p :]
        return P_x, P_f, P_xf, P_f_feed, P_xf_feed
    MCP = M21 @ C @ P
    P_x = symmetrize(P - MCP - MCP.T + M21 @ gains.H @ M21.T)
    cross = M21 @ R - imc @ P @ C.T
    return (
        P_x,
        symmetrize(M11 @ gains.H @ M11.T),
        cross @ M11.T,
        symmetrize(M11f @ gains.H @ M11f.T),
        cross @ M11f.T,
    )


def measurement_update(state, y, bundle, path="auto", mode="sqrt"):
    """Fault estimate then constrained state estimate from the innovation."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if path == "auto":
        G_sel = state.G_prev if state.G_prev is not None else bundle.G
        path = select_path(bundle.F_y, bundle.C, G_sel, bundle.F_y.shape[1], G_sel.shape[1])
    blocks = build_constraints(bundle, state.G_prev, state.Fx_prev, state.Sigma_prev, path)
    H = innovation_covariance(state.P_prior, bundle.C, bundle.R)
    M11, E_star = fault_gain(blocks, H, mode)
    M11_feed = M11 if blocks.mode == "full-rank" else blocks.T_feed @ E_star
    M21 = state_gain(state.P_prior, bundle.C, H, blocks, E_star, mode)
    gains = GainPair(M11=M11, M21=M21, E_star=E_star, H=H, M11_feed=M11_feed)

    innovation = np.asarray(y, dtype=float).reshape(-1) - bundle.C @ state.x_prior
    f_hat = M11 @ innovation
    f_feed = f_hat if blocks.mode == "full-rank" else M11_feed @ innovation
    x_post = state.x_prior + M21 @ innovation
    P_x, P_f, P_xf, P_f_feed, P_xf_feed = _posterior_covariances(state, bundle, gains, mode)
    sigma, _ = compute_sigma(bundle.F_y)
    return dataclasses.replace(
        state,
        x_post=x_post,
        f_hat=f_hat,
        f_feed=f_feed,
        P_x=P_x,
        P_f=P_f,
        P_xf=P_xf,
        P_f_feed=P_f_feed,
        P_xf_feed=P_xf_feed,
        gains=gains,
        blocks=blocks,
        Sigma_prev=sigma,
    )


def time_update(state, u, bundle, mode="sqrt"):
    """Propagate the posterior (state and fed fault component) one step ahead.

    The prediction error is A x_err + F_x f_err_feed + w, so the prior
    covariance is the joint posterior block pushed through [A | F_x] plus Q.

    Raises
    ------
    JointCovarianceIndefinite
        If the joint posterior block has an eigenvalue below -1e-9 * trace
        (small negative eigenvalues above that are clipped to zero).
    """
    A, B, F_x, Q = bundle.A, bundle.B, bundle.F_x, bundle.Q
    n, p = F_x.shape
    u = np.asarray(u, dtype=float).reshape(-1)
    joint = symmetrize(
        np.block([[state.P_x, state.P_xf_feed], [state.P_xf_feed.T, state.P_f_feed]])
    )
    if joint.size:
        lam, vec = np.linalg.eigh(joint)
        tol = 1e-9 * max(abs(float(np.trace(joint))), 1e-12)
        if lam[0] < -tol:
            raise JointCovarianceIndefinite(
                f"joint posterior covariance has eigenvalue {lam[0]:.3e} "
                f"below -1e-9 * trace"
            )
        if lam[0] < 0.0:
            joint = vec @ np.diag(np.clip(lam, 0.0, None)) @ vec.T
    stacked = np.hstack([A, F_x])
    P_prior = symmetrize(stacked @ joint @ stacked.T + Q)
    x_prior = A @ state.x_post + F_x @ state.f_feed + B @ u
    return dataclasses.replace(
        state,
        k=state.k + 1,
        x_prior=x_prior,
        P_prior=P_prior,
        P_prior_factor=_prior_factor(P_prior),
        G_prev=bundle.G,
        Fx_prev=bundle.F_x,
    )


def _max_abs(a):
    return float(np.abs(a).max()) if a.size else 0.0


def _make_record(state):
    blocks, gains = state.blocks, state.gains
    p = blocks.T.shape[0]
    res_m11 = max(
        _max_abs(gains.M11 @ blocks.E - blocks.T),
        _max_abs(gains.M11_feed @ blocks.E - blocks.T_feed),
    )
    res_m21 = _max_abs(gains.M21 @ blocks.E - blocks.Gamma)
    # the fed gain must be blind to the hidden-fault and disturbance
    # regressor blocks; these are its per-block leakage magnitudes
    feed_res = gains.M11_feed @ blocks.E
    qw = q_width(blocks)
    diag_hidden = (
        _max_abs(feed_res[:, p : blocks.E.shape[1] - qw])
        if blocks.mode == "extended"
        else 0.0
    )
    diag_dist = _max_abs(feed_res[:, blocks.E.shape[1] - qw :])
    return StepRecord(
        k=state.k,
        x_post=state.x_post,
        f_hat=state.f_hat,
        trace_Px=float(np.trace(state.P_x)),
        trace_Pf=float(np.trace(state.P_f)),
        res_M11=res_m11,
        res_M21=res_m21,
        inconsistent=max(res_m11, res_m21) > INCONSISTENT_TOL,
        diag_hidden_fault=diag_hidden,
        diag_disturbance=diag_dist,
    )


def q_width(blocks):
    # number of trailing disturbance columns in E
    p = blocks.T.shape[0]
    return blocks.E.shape[1] - (p if blocks.mode == "full-rank" else 2 * p)


def step(state, y, u, model, path="auto", mode="sqrt"):
    """One full measurement + time update; returns (next state, StepRecord)."""
    k = state.k
    try:
        bundle = matrices_at(model, k)
        updated = measurement_update(state, y, bundle, path=path, mode=mode)
        record = _make_record(updated)
        advanced = time_update(updated, u, bundle, mode=mode)
    except UmvfError as exc:
        raise type(exc)(f"step {k}: {exc}") from exc
    return advanced, record


@dataclass
class FilterRun:
    """run_filter output: per-step records, optional retained states, final state."""

    records: list
    states: Optional[list]
    final: FilterState


def run_filter(model, init, measurements, u=None, mode="sqrt", path="auto", keep_states=False):
    """Run the filter over a measurement sequence.

    `measurements` is (horizon, m); `u` follows the same conventions as the
    simulator (None, constant vector, or per-step rows).  When `keep_states`
    is set, the state after each step is retained (it carries the posterior
    of step k and the prior of k+1, plus the gains and constraint blocks of
    step k).
    """
    ys = np.atleast_2d(np.asarray(measurements, dtype=float))
    horizon = ys.shape[0]
    if ys.shape[1] != model.dims.m:
        raise DimensionMismatch(
            f"measurements: expected {model.dims.m} columns, got {ys.shape[1]}"
        )
    inputs = resolve_inputs(u, horizon, model.dims.r)
    state = init_state(model, init)
    records = []
    states = [] if keep_states else None
    for k in range(horizon):
        state, record = step(state, ys[k], inputs[k], model, path=path, mode=mode)
        records.append(record)
        if keep_states:
            states.append(state)
    return FilterRun(records=records, states=states, final=state)


@dataclass(frozen=True)
class ScheduleStep:
    """Precomputed gains and propagation matrices for one step."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    F_x: np.ndarray
    M11: np.ndarray
    M21: np.ndarray
    M11_feed: np.ndarray


@dataclass(frozen=True)
class GainSchedule:
    """Measurement-independent part of a filter run.

    The gain/covariance recursion never touches the data, so Monte Carlo
    studies compute it once and replay only the mean propagation per run.
    The records carry the (run-invariant) traces and residuals.
    """

    steps: tuple
    records: tuple
    x0_hat: np.ndarray


def gain_schedule(model, init, horizon, mode="sqrt", path="auto"):
    """Precompute per-step gains for `horizon` steps."""
    state = init_state(model, init)
    zero_y = np.zeros(model.dims.m)
    zero_u = np.zeros(model.dims.r)
    steps, records = [], []
    for k in range(horizon):
        bundle = matrices_at(model, k)
        state, record = step(state, zero_y, zero_u, model, path=path, mode=mode)
        steps.append(
            ScheduleStep(
                A=bundle.A,
                B=bundle.B,
                C=bundle.C,
                F_x=bundle.F_x,
                M11=state.gains.M11,
                M21=state.gains.M21,
                M11_feed=state.gains.M11_feed,
            )
        )
        records.append(record)
    return GainSchedule(
        steps=tuple(steps),
        records=tuple(records),
        x0_hat=np.asarray(init.x0_hat, dtype=float).reshape(-1),
    )


def run_with_schedule(schedule, measurements, u=None):
    """Replay precomputed gains over a measurement sequence.

    Returns (x_post, f_hat) arrays of shape (horizon, n) and (horizon, p);
    identical to run_filter on the same data, but only propagates means.
    """
    ys = np.atleast_2d(np.asarray(measurements, dtype=float))
    horizon = len(schedule.steps)
    if ys.shape[0] != horizon:
        raise LengthMismatch(
            f"schedule covers {horizon} steps, got {ys.shape[0]} measurements"
        )
    r = schedule.steps[0].B.shape[1]
    inputs = resolve_inputs(u, horizon, r)
    x = schedule.x0_hat.copy()
    x_posts = np.empty((horizon, schedule.steps[0].A.shape[0]))
    f_hats = np.empty((horizon, schedule.steps[0].M11.shape[0]))
    for k, s in enumerate(schedule.steps):
        innovation = ys[k] - s.C @ x
        f_hats[k] = s.M11 @ innovation
        x_posts[k] = x + s.M21 @ innovation
        x = s.A @ x_posts[k] + s.F_x @ (s.M11_feed @ innovation) + s.B @ inputs[k]
    return x_posts, f_hats
