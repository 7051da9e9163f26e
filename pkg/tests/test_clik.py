import numpy as np
import pytest

from demoqual.clik import (ClikParams, JointTrajectory, clik_step,
                           closest_demonstration, null_projector, sr_inverse,
                           task_error, track_trajectory)
from demoqual.demonstrations import DemoSet, Demonstration
from demoqual.errors import EmptySet, LengthMismatch, SingularSystem
from demoqual.kinematics import Pose, forward_kinematics, jacobian

from conftest import random_configs
from test_demonstrations import _meta, _smooth_demo


def _minjerk(tau):
    return 10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5


def _line_path(chain, delta, T=100, q0=None):
    """Straight-line min-jerk Cartesian path from FK(q0), fixed orientation."""
    pose = forward_kinematics(chain, chain.start_config if q0 is None else q0)
    tau = np.linspace(0, 1, T)
    s = _minjerk(tau)
    cart = np.empty((T, 8))
    cart[:, 0] = tau
    cart[:, 1:4] = pose.position + s[:, None] * np.asarray(delta)
    cart[:, 4:8] = pose.orientation
    return cart


def _hold_policy(chain, T=100, q=None):
    q = chain.start_config if q is None else np.asarray(q)
    tau = np.linspace(0, 1, T)
    joints = np.tile(q, (T, 1))
    states = np.empty((T, 8))
    states[:, 0] = tau
    pose = forward_kinematics(chain, q)
    states[:, 1:4] = pose.position
    states[:, 4:8] = pose.orientation
    return Demonstration(tau, joints, states, _meta())


# --- sr_inverse ---------------------------------------------------------------

def test_sr_inverse_identity_padded():
    J = np.hstack([np.eye(6), np.zeros((6, 1))])
    Ji = sr_inverse(J, 0.0)
    np.testing.assert_allclose(Ji[:6], np.eye(6), atol=1e-12)
    np.testing.assert_allclose(Ji[6], 0.0, atol=1e-12)


def test_sr_inverse_unit_damping_halves():
    J = np.hstack([np.eye(6), np.zeros((6, 1))])
    Ji = sr_inverse(J, 1.0)
    np.testing.assert_allclose(Ji[:6], 0.5 * np.eye(6), atol=1e-12)


def test_sr_inverse_matches_svd_pseudoinverse(chain):
    rng = np.random.default_rng(229)
    for q in random_configs(chain, 20, rng):
        J = jacobian(chain, q)
        np.testing.assert_allclose(sr_inverse(J, 0.0), np.linalg.pinv(J),
                                   atol=1e-10)


def test_sr_inverse_singular_rejected():
    J = np.zeros((6, 7))
    J[0, 0] = 1.0
    with pytest.raises(SingularSystem):
        sr_inverse(J, 0.0)
    # with damping the same system is fine
    sr_inverse(J, 0.1)


def test_sr_inverse_continuous_in_damping(chain):
    rng = np.random.default_rng(233)
    for q in random_configs(chain, 10, rng):
        J = jacobian(chain, q)
        for lam in (0.01, 0.05, 0.5):
            d = sr_inverse(J, lam) - sr_inverse(J, lam + 1e-9)
            assert np.linalg.norm(d) < 1e-6


# --- null projector -----------------------------------------------------------

def test_null_projector_annihilates_jacobian(chain):
    rng = np.random.default_rng(239)
    for q in random_configs(chain, 100, rng):
        J = jacobian(chain, q)
        P = null_projector(J)
        assert np.linalg.norm(J @ P) <= 1e-8


def test_null_projector_idempotent_rank_one(chain):
    rng = np.random.default_rng(241)
    for q in random_configs(chain, 100, rng):
        P = null_projector(jacobian(chain, q))
        np.testing.assert_allclose(P @ P, P, atol=1e-10)
        assert abs(np.trace(P) - 1.0) < 1e-8


# --- closest demonstration ------------------------------------------------

def test_closest_demonstration_rules(chain):
    rng = np.random.default_rng(251)
    demos = [_smooth_demo(chain, rng, target_id=k) for k in range(3)]
    ds = DemoSet(demos)
    assert closest_demonstration(DemoSet([demos[0]]),
                                 demos[1].positions[-1]) is demos[0]
    target = demos[2].positions[-1]
    assert closest_demonstration(ds, target) is demos[2]
    # exact tie -> lowest index
    twin = Demonstration(demos[0].times, demos[0].joints, demos[0].states,
                         _meta(target_id=9))
    tie = DemoSet([demos[0], twin])
    assert closest_demonstration(tie, demos[0].positions[-1] + 0.01) \
        is demos[0]
    with pytest.raises(EmptySet):
        closest_demonstration(DemoSet([]), target)


# --- clik_step ---------------------------------------------------------------

def test_clik_step_zero_at_equilibrium(chain):
    q = chain.start_config
    pose = forward_kinematics(chain, q)
    qdot = clik_step(chain, q, pose, np.zeros(6), q, ClikParams())
    np.testing.assert_allclose(qdot, 0.0, atol=1e-12)


def test_clik_step_matches_matrix_oracle(chain):
    rng = np.random.default_rng(257)
    params = ClikParams()
    for q in random_configs(chain, 10, rng, margin=0.1):
        pose = forward_kinematics(chain, q)
        x_d = Pose(pose.position + rng.uniform(-0.05, 0.05, 3),
                   pose.orientation)
        qdot = clik_step(chain, q, x_d, np.zeros(6), q, params)
        J = jacobian(chain, q)
        e = np.concatenate([x_d.position - pose.position, np.zeros(3)])
        oracle = J.T @ np.linalg.inv(J @ J.T + params.lam ** 2 * np.eye(6)) \
            @ (params.kp @ e)
        np.testing.assert_allclose(qdot, oracle, atol=1e-10)


def test_null_term_invisible_in_task_space(chain):
    rng = np.random.default_rng(263)
    params = ClikParams(null_gain=2.0)
    for q in random_configs(chain, 20, rng, margin=0.1):
        pose = forward_kinematics(chain, q)
        q_ref = q + rng.uniform(-0.5, 0.5, 7)
        qdot_with = clik_step(chain, q, pose, np.zeros(6), q_ref, params)
        J = jacobian(chain, q)
        # e = 0 so the whole command is the null-space term
        assert np.linalg.norm(J @ qdot_with) < 1e-8


# --- track_trajectory -------------------------------------------------------

def test_stationary_tracking_holds_pose(chain):
    T = 50
    cart = _line_path(chain, [0, 0, 0], T=T)
    jt = track_trajectory(chain, chain.start_config, cart,
                          _hold_policy(chain, T))
    assert jt.feasible
    assert jt.final_pos_err < 1e-6
    np.testing.assert_allclose(jt.joints,
                               np.tile(chain.start_config, (T, 1)),
                               atol=1e-9)


def test_straight_reach_converges(chain):
    cart = _line_path(chain, [0.05, -0.1, -0.151])
    jt = track_trajectory(chain, chain.start_config, cart,
                          _hold_policy(chain))
    assert jt.feasible
    assert jt.final_pos_err <= 0.002
    assert jt.final_ori_err <= np.deg2rad(1.0)


def test_unreachable_target_diverges(chain):
    cart = _line_path(chain, [2.0, 0, 0])
    jt = track_trajectory(chain, chain.start_config, cart,
                          _hold_policy(chain))
    assert not jt.feasible
    assert jt.reason == "divergence"


def test_error_decay_from_offset_start(chain):
    """Initial 4 cm offset to a stationary target: error must only shrink."""
    T = 80
    q0 = chain.start_config
    pose = forward_kinematics(chain, q0)
    cart = np.empty((T, 8))
    cart[:, 0] = np.linspace(0, 1, T)
    cart[:, 1:4] = pose.position + np.array([0.03, -0.02, 0.015])
    cart[:, 4:8] = pose.orientation
    jt = track_trajectory(chain, q0, cart, _hold_policy(chain, T))
    errs = [np.linalg.norm(cart[t, 1:4]
                           - forward_kinematics(chain, jt.joints[t]).position)
            for t in range(T)]
    assert errs[0] < 0.05
    assert np.all(np.diff(errs) <= 1e-12)
    assert jt.feasible


def test_tracking_deterministic(chain):
    cart = _line_path(chain, [0.05, -0.1, -0.151])
    a = track_trajectory(chain, chain.start_config, cart, _hold_policy(chain))
    b = track_trajectory(chain, chain.start_config, cart, _hold_policy(chain))
    assert np.array_equal(a.joints, b.joints)
    assert np.array_equal(a.velocities, b.velocities)
    assert a.feasible == b.feasible


def test_limit_graze_retries_with_midrange_blend(chain):
    """A posture reference that parks a joint on its limit is rescued.

    With the wrist pitch zeroed the two wrist rolls are collinear, so
    counter-rotating them is pure self-motion. A reference splitting them
    by -3/+3 rad puts the null-space fixpoint right on q7's upper limit;
    the first attempt grazes it and the midrange-blended retry must pull
    the posture back inside while the tip never moves.
    """
    T = 60
    q0 = np.array([0.0, np.pi / 2, 0.0, -np.pi / 2, 0.0, 0.0, 0.0])
    cart = _line_path(chain, [0, 0, 0], T=T, q0=q0)
    bad = q0.copy()
    bad[4] -= 3.0
    bad[6] += 3.0
    jt = track_trajectory(chain, q0, cart,
                          _hold_policy(chain, T, q=bad),
                          ClikParams(null_gain=4.0))
    assert jt.feasible
    assert jt.retries >= 1
    assert jt.min_margin >= 0.05
    assert jt.final_pos_err < 1e-6
    assert abs(jt.joints[-1, 6]) < 2.0  # settled well inside the limit


def test_impossible_margins_fail_with_limits_reason(chain):
    cart = _line_path(chain, [0.05, -0.1, -0.151])
    params = ClikParams(limit_margin_min=1.5)  # stricter than the start pose
    jt = track_trajectory(chain, chain.start_config, cart,
                          _hold_policy(chain), params)
    assert not jt.feasible
    assert jt.reason == "limits"
    assert jt.retries == params.max_retries


def test_policy_length_mismatch_rejected(chain):
    cart = _line_path(chain, [0.05, 0, 0], T=60)
    with pytest.raises(LengthMismatch):
        track_trajectory(chain, chain.start_config, cart,
                         _hold_policy(chain, 50))


def test_joint_trajectory_csv(chain, tmp_path):
    cart = _line_path(chain, [0.05, -0.1, -0.151])
    jt = track_trajectory(chain, chain.start_config, cart,
                          _hold_policy(chain))
    f = tmp_path / "traj.csv"
    jt.write_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0] == "t,q1,q2,q3,q4,q5,q6,q7,feasible,reason"
    assert len(lines) == 101
    assert lines[1].endswith(",1,")
