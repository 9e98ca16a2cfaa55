import numpy as np
import pytest

from umvf.exceptions import RankDeficient
from umvf.filtering import (
    build_constraints,
    compute_sigma,
    fault_gain,
    gain_schedule,
    init_state,
    innovation_covariance,
    measurement_update,
    run_filter,
    run_with_schedule,
    state_gain,
    step,
    time_update,
)
from umvf.model import InitialCondition, NoiseFactors, SystemModel, matrices_at
from umvf.oracle import kalman_reference, kkt_state_gain, whitened_ls_fault
from umvf.simulator import DisturbanceSpec, FaultSignalSpec, simulate

from conftest import make_flight_model, random_fullrank_model, random_spd


FLIGHT_FAULTS = FaultSignalSpec.build([[(4.0, 20), (-4.0, 60)], [(-2.0, 30), (2.0, 70)]])


def flight_measurements(horizon=100, seed=7, disturbance=DisturbanceSpec.parametric(-0.5, 0.5)):
    model, init = make_flight_model()
    truth = simulate(
        model, horizon=horizon, seed=seed,
        fault_spec=FLIGHT_FAULTS, disturbance_spec=disturbance, u=10.0,
    )
    return model, init, truth


# --- projector -------------------------------------------------------------

def test_sigma_full_column_rank_is_zero():
    sigma, phi = compute_sigma(np.array([[1.0, 0.0], [0.0, 2.0], [0.0, 0.0]]))
    np.testing.assert_allclose(sigma, np.zeros((2, 2)), atol=1e-12)
    np.testing.assert_allclose(phi, np.eye(2), atol=1e-12)


def test_sigma_zero_feedthrough_is_identity():
    sigma, phi = compute_sigma(np.zeros((3, 2)))
    np.testing.assert_array_equal(sigma, np.eye(2))
    np.testing.assert_array_equal(phi, np.zeros((2, 2)))


def test_sigma_flight_feedthrough():
    sigma, phi = compute_sigma(np.array([[0.0, 0.0], [0.0, 0.0], [0.0, 1.0]]))
    np.testing.assert_allclose(sigma, np.diag([1.0, 0.0]), atol=1e-12)
    np.testing.assert_allclose(phi, np.diag([0.0, 1.0]), atol=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_sigma_is_symmetric_idempotent(seed):
    rng = np.random.default_rng(seed)
    F_y = rng.normal(size=(4, 3))
    if seed % 2:
        F_y[:, 2] = F_y[:, 0] - F_y[:, 1]  # force rank deficiency
    sigma, phi = compute_sigma(F_y)
    np.testing.assert_allclose(sigma, sigma.T, atol=1e-12)
    np.testing.assert_allclose(sigma @ sigma, sigma, atol=1e-10)
    np.testing.assert_array_equal(sigma + phi, np.eye(3))


# --- constraint assembly ----------------------------------------------------

def test_constraints_first_step_full_rank():
    model, _ = make_flight_model()
    bundle = matrices_at(model, 0)
    F_y = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    boot = SystemModel.constant(
        A=bundle.A, B=bundle.B, C=bundle.C, F_x=bundle.F_x, F_y=F_y,
        G=bundle.G, Q=bundle.Q, R=bundle.R,
    )
    blocks = build_constraints(matrices_at(boot, 0), None, None, np.zeros((2, 2)), "full-rank")
    np.testing.assert_array_equal(blocks.E, np.hstack([F_y, np.zeros((3, 1))]))
    np.testing.assert_array_equal(blocks.T, [[1, 0, 0], [0, 1, 0]])
    np.testing.assert_array_equal(blocks.Gamma, np.zeros((3, 3)))
    np.testing.assert_array_equal(blocks.T_feed, blocks.T)
    assert blocks.mode == "full-rank"


def test_constraints_flight_extended_shape():
    model, init = make_flight_model()
    bundle = matrices_at(model, 0)
    state = init_state(model, init)
    state = measurement_update(state, np.zeros(3), bundle, path="extended")
    state = time_update(state, [10.0], bundle)
    blocks = build_constraints(bundle, state.G_prev, state.Fx_prev, state.Sigma_prev, "extended")
    assert blocks.E.shape == (3, 5)
    # C = I and Sigma_prev = diag(1, 0): the middle block keeps only the
    # hidden (first) fault column of F_x
    np.testing.assert_allclose(blocks.E[:, 2:4], np.column_stack([bundle.F_x[:, 0], np.zeros(3)]), atol=1e-12)
    np.testing.assert_allclose(blocks.E[:, :2], bundle.F_y, atol=1e-12)
    np.testing.assert_allclose(blocks.E[:, 4:], bundle.G, atol=1e-12)
    np.testing.assert_allclose(blocks.T, np.hstack([np.diag([0.0, 1.0]), np.diag([1.0, 0.0]), np.zeros((2, 1))]), atol=1e-12)
    np.testing.assert_allclose(blocks.T_feed, np.hstack([np.diag([0.0, 1.0]), np.zeros((2, 3))]), atol=1e-12)
    np.testing.assert_allclose(blocks.Gamma[:, 2:4], np.column_stack([bundle.F_x[:, 0], np.zeros(3)]), atol=1e-12)


def test_constraints_flight_full_rank_rejected():
    model, init = make_flight_model()
    bundle = matrices_at(model, 0)
    state = init_state(model, init)
    state = measurement_update(state, np.zeros(3), bundle, path="extended")
    state = time_update(state, [10.0], bundle)
    with pytest.raises(RankDeficient):
        build_constraints(bundle, state.G_prev, state.Fx_prev, state.Sigma_prev, "full-rank")


def test_constraints_zero_g_prev_is_fine_on_full_rank_path():
    # a dead disturbance block contributes no constraint, so it cannot make
    # the full-rank path fail
    model, _ = make_flight_model()
    bundle = matrices_at(model, 0)
    F_y = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    boot = matrices_at(
        SystemModel.constant(
            A=bundle.A, B=bundle.B, C=bundle.C, F_x=bundle.F_x, F_y=F_y,
            G=bundle.G, Q=bundle.Q, R=bundle.R,
        ),
        0,
    )
    blocks = build_constraints(boot, np.zeros((3, 1)), bundle.F_x, np.zeros((2, 2)), "full-rank")
    np.testing.assert_array_equal(blocks.Gamma, np.zeros((3, 3)))


# --- gain building blocks ---------------------------------------------------

def test_innovation_covariance_values():
    np.testing.assert_array_equal(
        innovation_covariance(np.zeros((2, 2)), np.eye(3, 2), np.eye(3)), np.eye(3)
    )
    np.testing.assert_allclose(
        innovation_covariance(0.01 * np.eye(3), np.eye(3), 0.01 * np.eye(3)),
        0.02 * np.eye(3),
        atol=1e-15,
    )
    np.testing.assert_allclose(
        innovation_covariance(np.array([[3.0]]), np.array([[2.0]]), np.array([[1.0]])),
        [[13.0]],
    )


def test_fault_gain_scalar():
    from umvf.filtering import ConstraintBlocks

    b = ConstraintBlocks(
        E=np.array([[2.0]]), T=np.array([[1.0]]), Gamma=np.zeros((1, 1)),
        mode="full-rank", T_feed=np.array([[1.0]]),
    )
    M11, E_star = fault_gain(b, np.array([[4.0]]))
    assert M11[0, 0] == pytest.approx(0.5)
    assert E_star[0, 0] == pytest.approx(0.5)


def test_fault_gain_orthonormal_columns():
    from umvf.filtering import ConstraintBlocks

    E = np.linalg.qr(np.random.default_rng(3).normal(size=(5, 3)))[0]
    T = np.hstack([np.eye(2), np.zeros((2, 1))])
    b = ConstraintBlocks(E=E, T=T, Gamma=np.zeros((4, 3)), mode="full-rank", T_feed=T)
    M11, _ = fault_gain(b, np.eye(5))
    np.testing.assert_allclose(M11, E.T[:2], atol=1e-10)


@pytest.mark.parametrize("mode", ["sqrt", "covariance"])
def test_fault_gain_matches_whitened_ls(mode):
    rng = np.random.default_rng(11)
    for trial in range(10):
        model, init = random_fullrank_model(rng)
        bundle = matrices_at(model, 0)
        state = init_state(model, init)
        blocks = build_constraints(bundle, bundle.G, bundle.F_x, state.Sigma_prev, "full-rank")
        H = innovation_covariance(random_spd(rng, model.dims.n), bundle.C, bundle.R)
        M11, E_star = fault_gain(blocks, H, mode)
        y_tilde = rng.normal(size=model.dims.m)
        sol = whitened_ls_fault(y_tilde, blocks.E, H, p=model.dims.p)
        np.testing.assert_allclose(M11 @ y_tilde, sol.f_hat, atol=1e-10)


def test_state_gain_reduces_to_kalman():
    from umvf.filtering import ConstraintBlocks

    rng = np.random.default_rng(4)
    P = random_spd(rng, 3)
    C = rng.normal(size=(2, 3))
    R = random_spd(rng, 2)
    H = innovation_covariance(P, C, R)
    b = ConstraintBlocks(
        E=np.zeros((2, 0)), T=np.zeros((0, 0)), Gamma=np.zeros((3, 0)),
        mode="full-rank", T_feed=np.zeros((0, 0)),
    )
    M21 = state_gain(P, C, H, b, np.zeros((0, 2)))
    np.testing.assert_allclose(M21, P @ C.T @ np.linalg.inv(H), atol=1e-10)


def test_state_gain_scalar_kalman():
    from umvf.filtering import ConstraintBlocks

    b = ConstraintBlocks(
        E=np.zeros((1, 0)), T=np.zeros((0, 0)), Gamma=np.zeros((1, 0)),
        mode="full-rank", T_feed=np.zeros((0, 0)),
    )
    M21 = state_gain(np.array([[1.0]]), np.array([[1.0]]), np.array([[2.0]]), b, np.zeros((0, 1)))
    assert M21[0, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("mode", ["sqrt", "covariance"])
def test_state_gain_matches_kkt_oracle(mode):
    rng = np.random.default_rng(21)
    for trial in range(10):
        model, init = random_fullrank_model(rng)
        bundle = matrices_at(model, 0)
        P = random_spd(rng, model.dims.n)
        blocks = build_constraints(bundle, bundle.G, bundle.F_x, np.zeros((model.dims.p,) * 2), "full-rank")
        H = innovation_covariance(P, bundle.C, bundle.R)
        _, E_star = fault_gain(blocks, H, mode)
        M21 = state_gain(P, bundle.C, H, blocks, E_star, mode)
        oracle = kkt_state_gain(H, blocks.E, bundle.C @ P, blocks.Gamma)
        np.testing.assert_allclose(M21, oracle, atol=1e-10)


# --- single updates ---------------------------------------------------------

def test_measurement_update_zero_innovation_is_noop(flight_model):
    model, init = flight_model
    state = init_state(model, init)
    bundle = matrices_at(model, 0)
    updated = measurement_update(state, bundle.C @ state.x_prior, bundle)
    np.testing.assert_array_equal(updated.x_post, state.x_prior)
    np.testing.assert_array_equal(updated.f_hat, np.zeros(2))


def test_measurement_update_two_route_fault_covariance(flight_model):
    model, init = flight_model
    truth = simulate(model, horizon=10, seed=3, fault_spec=FLIGHT_FAULTS, u=10.0)
    state = init_state(model, init)
    for rec in truth:
        bundle = matrices_at(model, rec.k)
        state = measurement_update(state, rec.y, bundle)
        H = state.gains.H
        E, T = state.blocks.E, state.blocks.T
        gram = E.T @ np.linalg.solve(H, E)
        other_route = T @ np.linalg.pinv((gram + gram.T) / 2) @ T.T
        np.testing.assert_allclose(state.P_f, other_route, atol=1e-10)
        state = time_update(state, [10.0], bundle)


def test_time_update_flight_input_column(flight_model):
    model, init = flight_model
    state = init_state(model, init)
    bundle = matrices_at(model, 0)
    state = measurement_update(state, np.zeros(3), bundle)
    # x_post = 0 and f_feed = 0 here, so the new prior mean is B u alone
    assert np.all(state.x_post == 0.0) and np.all(state.f_feed == 0.0)
    advanced = time_update(state, [10.0], bundle)
    np.testing.assert_allclose(advanced.x_prior, [4.252, -0.082, 1.813], atol=1e-12)
    assert advanced.k == 1


def test_time_update_zero_blocks_gives_q():
    import dataclasses

    model, init = make_flight_model()
    bundle = matrices_at(model, 0)
    state = dataclasses.replace(
        init_state(model, init),
        x_post=np.zeros(3),
        f_feed=np.zeros(2),
        P_x=np.zeros((3, 3)),
        P_xf_feed=np.zeros((3, 2)),
        P_f_feed=np.zeros((2, 2)),
    )
    advanced = time_update(state, [0.0], bundle)
    np.testing.assert_allclose(advanced.P_prior, bundle.Q, atol=1e-12)
    np.testing.assert_array_equal(advanced.x_prior, np.zeros(3))


def test_time_update_without_faults_is_kalman_prediction():
    rng = np.random.default_rng(8)
    A = 0.5 * np.eye(2)
    model = SystemModel.constant(
        A=A, B=np.zeros((2, 1)), C=np.eye(2), F_x=np.zeros((2, 0)),
        F_y=np.zeros((2, 0)), G=np.zeros((2, 0)), Q=0.3 * np.eye(2), R=np.eye(2),
    )
    P0 = random_spd(rng, 2)
    state = init_state(model, InitialCondition.build(np.zeros(2), P0))
    bundle = matrices_at(model, 0)
    state = measurement_update(state, rng.normal(size=2), bundle)
    advanced = time_update(state, [0.0], bundle)
    np.testing.assert_allclose(
        advanced.P_prior, A @ state.P_x @ A.T + bundle.Q, atol=1e-12
    )


# --- whole-run behaviors ----------------------------------------------------

def test_noise_free_run_tracks_truth_exactly(flight_model):
    model, init = flight_model
    records = simulate(
        model, horizon=30, seed=0, u=10.0, factors=NoiseFactors.zero(3, 3)
    )
    run = run_filter(model, init, np.array([r.y for r in records]), u=10.0)
    for truth, rec in zip(records, run.records):
        np.testing.assert_array_equal(rec.x_post, truth.x_true)
        np.testing.assert_array_equal(rec.f_hat, np.zeros(2))


def test_reduction_to_kalman_filter():
    rng = np.random.default_rng(17)
    A = np.array([[0.9, 0.1], [0.0, 0.8]])
    B = np.array([[0.5], [1.0]])
    C = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    Q = random_spd(rng, 2, 0.2)
    R = random_spd(rng, 3, 0.5)
    model = SystemModel.constant(
        A=A, B=B, C=C, F_x=np.zeros((2, 0)), F_y=np.zeros((3, 0)),
        G=np.zeros((2, 0)), Q=Q, R=R,
    )
    P0 = random_spd(rng, 2)
    x0 = rng.normal(size=2)
    init = InitialCondition.build(x0, P0)
    ys = rng.normal(size=(200, 3))
    us = rng.normal(size=(200, 1))
    run = run_filter(model, init, ys, u=us, keep_states=True)
    x_ref, P_ref, _, _ = kalman_reference(A, B, C, Q, R, x0, P0, ys, u=us)
    for k in range(200):
        assert np.max(np.abs(run.records[k].x_post - x_ref[k])) < 1e-12
        assert np.max(np.abs(run.states[k].P_x - P_ref[k])) < 1e-12


def test_disturbance_sequence_does_not_move_errors(flight_model):
    model, init = flight_model
    rng = np.random.default_rng(5)
    seqs = [
        DisturbanceSpec.sequence(np.zeros((60, 1))),
        DisturbanceSpec.sequence(3.0 * rng.standard_normal((60, 1))),
    ]
    errors = []
    for spec in seqs:
        truth = simulate(
            model, horizon=60, seed=77, fault_spec=FLIGHT_FAULTS,
            disturbance_spec=spec, u=10.0,
        )
        run = run_filter(model, init, np.array([r.y for r in truth]), u=10.0)
        errors.append(
            np.array([t.x_true - r.x_post for t, r in zip(truth, run.records)])
        )
    assert np.max(np.abs(errors[0] - errors[1])) < 1e-8


def test_flight_run_invariants(flight_model):
    model, init = flight_model
    _, _, truth = flight_measurements(horizon=80)
    run = run_filter(
        model, init, np.array([r.y for r in truth]), u=10.0, keep_states=True
    )
    for rec, state in zip(run.records, run.states):
        assert rec.res_M11 <= 1e-9
        assert rec.res_M21 <= 1e-9
        assert not rec.inconsistent
        assert rec.diag_hidden_fault <= 1e-9
        assert rec.diag_disturbance <= 1e-9
        for block in (state.P_x, state.P_f, state.P_prior):
            lam = np.linalg.eigvalsh((block + block.T) / 2)
            assert lam[0] >= -1e-9 * max(abs(np.trace(block)), 1e-12)
        joint = np.block([[state.P_x, state.P_xf], [state.P_xf.T, state.P_f]])
        lam = np.linalg.eigvalsh((joint + joint.T) / 2)
        assert lam[0] >= -1e-9 * max(abs(np.trace(joint)), 1e-12)
        sig = state.Sigma_prev
        assert np.max(np.abs(sig @ sig - sig)) < 1e-10


def test_schedule_replay_matches_run_filter(flight_model):
    model, init = flight_model
    _, _, truth = flight_measurements(horizon=60, seed=13)
    ys = np.array([r.y for r in truth])
    run = run_filter(model, init, ys, u=10.0)
    schedule = gain_schedule(model, init, horizon=60)
    x_posts, f_hats = run_with_schedule(schedule, ys, u=10.0)
    for k, rec in enumerate(run.records):
        np.testing.assert_array_equal(x_posts[k], rec.x_post)
        np.testing.assert_array_equal(f_hats[k], rec.f_hat)
    # schedule records carry the same run-invariant diagnostics
    for mine, theirs in zip(schedule.records, run.records):
        assert mine.trace_Px == theirs.trace_Px
        assert mine.res_M21 == theirs.res_M21


def test_undecouplable_disturbance_is_flagged_not_fatal():
    # disturbance enters a state the measurement never sees: the constraint
    # M21 E = Gamma cannot hold, the step must flag it and carry on
    model = SystemModel.constant(
        A=0.5 * np.eye(2), B=np.zeros((2, 1)), C=np.array([[1.0, 0.0], [0.0, 0.0]]),
        F_x=np.zeros((2, 0)), F_y=np.zeros((2, 0)), G=np.array([[0.0], [1.0]]),
        Q=np.eye(2), R=np.eye(2),
    )
    init = InitialCondition.build(np.zeros(2), np.eye(2))
    run = run_filter(model, init, np.zeros((4, 2)))
    assert not run.records[0].inconsistent  # boot step has no G_prev block yet
    assert run.records[1].inconsistent
    assert run.records[1].res_M21 == pytest.approx(1.0)


def test_step_errors_carry_step_index():
    model, init = make_flight_model()
    state = init_state(model, init)
    state, _ = step(state, np.zeros(3), [10.0], model)
    with pytest.raises(RankDeficient, match="step 1"):
        step(state, np.zeros(3), [10.0], model, path="full-rank")
