import json

import numpy as np
import pytest

from demoqual.errors import FileMissing, SchemaViolation
from demoqual.kinematics import (KinematicChain, forward_kinematics, jacobian,
                                 limit_margin, link_capsules, load_chain,
                                 trajectory_capsules, trajectory_tip_poses)
from demoqual.rotations import quat_conjugate, quat_multiply, quat_to_matrix

from conftest import random_configs


# --- independent oracle: compose elementary homogeneous transforms ---------

def _rz(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[c, -s, 0, 0], [s, c, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1.0]])


def _rx(t):
    c, s = np.cos(t), np.sin(t)
    return np.array([[1, 0, 0, 0], [0, c, -s, 0], [0, s, c, 0], [0, 0, 0, 1.0]])


def _trans(x, y, z):
    T = np.eye(4)
    T[:3, 3] = (x, y, z)
    return T


def fk_oracle(dh, q):
    """Chain Rz(q+theta0) Tz(d) Tx(a) Rx(alpha) one elementary matrix at a time."""
    T = np.eye(4)
    for (a, alpha, d, theta0), qi in zip(dh, q):
        T = T @ _rz(qi + theta0) @ _trans(0, 0, d) @ _trans(a, 0, 0) @ _rx(alpha)
    return T


def joint_origins_oracle(dh, q):
    T = np.eye(4)
    origins = [T[:3, 3].copy()]
    for (a, alpha, d, theta0), qi in zip(dh, q):
        T = T @ _rz(qi + theta0) @ _trans(0, 0, d) @ _trans(a, 0, 0) @ _rx(alpha)
        origins.append(T[:3, 3].copy())
    return np.array(origins)


def degenerate_chain():
    """All link lengths zero: every joint axis passes through the origin."""
    return KinematicChain(
        dh=np.zeros((7, 4)),
        limits=np.tile([-np.pi, np.pi], (7, 1)),
        link_radii=np.full(7, 0.01),
        tip_box=[0.002, 0.002, 0.002],
        start_config=np.zeros(7),
    )


# --- forward kinematics -----------------------------------------------------

def test_fk_matches_transform_composition_oracle(chain):
    rng = np.random.default_rng(7)
    for q in random_configs(chain, 50, rng):
        pose = forward_kinematics(chain, q)
        T = fk_oracle(chain.dh, q)
        np.testing.assert_allclose(pose.position, T[:3, 3], atol=1e-10)
        np.testing.assert_allclose(quat_to_matrix(pose.orientation), T[:3, :3],
                                   atol=1e-10)


def test_fk_degenerate_chain_identity():
    pose = forward_kinematics(degenerate_chain(), np.zeros(7))
    np.testing.assert_allclose(pose.position, 0.0, atol=1e-15)
    np.testing.assert_allclose(pose.orientation, [1, 0, 0, 0], atol=1e-15)


def test_fk_last_joint_full_turn(chain):
    rng = np.random.default_rng(11)
    for q in random_configs(chain, 10, rng):
        q2 = q.copy()
        q2[6] += 2 * np.pi
        a = forward_kinematics(chain, q)
        b = forward_kinematics(chain, q2)
        np.testing.assert_allclose(a.position, b.position, atol=1e-9)
        np.testing.assert_allclose(a.orientation, b.orientation, atol=1e-9)


def test_fk_quaternion_unit_norm(chain):
    rng = np.random.default_rng(3)
    for q in rng.uniform(-np.pi, np.pi, size=(200, 7)):
        pose = forward_kinematics(chain, q)
        assert abs(np.linalg.norm(pose.orientation) - 1.0) < 1e-9


# --- jacobian ----------------------------------------------------------------

def _jacobian_fd_oracle(chain, q, h=1e-6):
    """Central differences of FK: position directly, angular via quaternions."""
    J = np.zeros((6, 7))
    for i in range(7):
        qp, qm = q.copy(), q.copy()
        qp[i] += h
        qm[i] -= h
        pp = forward_kinematics(chain, qp)
        pm = forward_kinematics(chain, qm)
        J[:3, i] = (pp.position - pm.position) / (2 * h)
        ep, em = pp.orientation, pm.orientation
        if np.dot(ep, em) < 0:
            em = -em
        dq = (ep - em) / (2 * h)
        J[3:, i] = 2.0 * quat_multiply(dq, quat_conjugate(ep))[1:]
    return J


def test_jacobian_matches_finite_differences(chain):
    rng = np.random.default_rng(21)
    for q in random_configs(chain, 100, rng):
        J = jacobian(chain, q)
        J_fd = _jacobian_fd_oracle(chain, q)
        np.testing.assert_allclose(J, J_fd, atol=1e-5)


def test_jacobian_zero_reach_chain_has_zero_linear_rows():
    dc = degenerate_chain()
    rng = np.random.default_rng(5)
    for q in rng.uniform(-np.pi, np.pi, size=(20, 7)):
        J = jacobian(dc, q)
        np.testing.assert_allclose(J[:3], 0.0, atol=1e-15)


def test_jacobian_first_column_is_base_z():
    J = jacobian(degenerate_chain(), np.zeros(7))
    np.testing.assert_allclose(J[:, 0], [0, 0, 0, 0, 0, 1], atol=1e-15)


# --- capsules ----------------------------------------------------------------

def test_link_capsules_match_fk_origin_oracle(chain):
    rng = np.random.default_rng(13)
    for q in random_configs(chain, 20, rng):
        caps = link_capsules(chain, q)
        assert len(caps) == 8
        origins = joint_origins_oracle(chain.dh, q)
        for i in range(7):
            np.testing.assert_allclose(caps[i].a, origins[i], atol=1e-10)
            np.testing.assert_allclose(caps[i].b, origins[i + 1], atol=1e-10)
            assert caps[i].radius == chain.link_radii[i]
        # tip capsule: starts at the tool origin, runs along tool z
        T = fk_oracle(chain.dh, q)
        np.testing.assert_allclose(caps[7].a, origins[7], atol=1e-10)
        np.testing.assert_allclose(
            caps[7].b, origins[7] + chain.tip_box[2] * T[:3, 2], atol=1e-10)


def test_zero_length_links_give_point_capsules():
    caps = link_capsules(degenerate_chain(), np.full(7, 0.3))
    for cap in caps[:7]:
        np.testing.assert_allclose(cap.a, cap.b, atol=1e-15)


def test_capsule_endpoints_continuous_in_q(chain):
    rng = np.random.default_rng(17)
    for q in random_configs(chain, 10, rng):
        base = link_capsules(chain, q)
        for i in range(7):
            qp = q.copy()
            qp[i] += 1e-6
            pert = link_capsules(chain, qp)
            for c0, c1 in zip(base, pert):
                assert np.linalg.norm(c1.a - c0.a) < 1e-4
                assert np.linalg.norm(c1.b - c0.b) < 1e-4


def test_trajectory_capsules_match_per_config(chain):
    rng = np.random.default_rng(19)
    Q = random_configs(chain, 15, rng)
    seg_a, seg_b, tip_pos, tip_quat = trajectory_capsules(chain, Q)
    pos2, quat2 = trajectory_tip_poses(chain, Q)
    np.testing.assert_allclose(tip_pos, pos2, atol=1e-12)
    np.testing.assert_allclose(tip_quat, quat2, atol=1e-12)
    for t, q in enumerate(Q):
        for l, cap in enumerate(link_capsules(chain, q)):
            np.testing.assert_allclose(seg_a[t, l], cap.a, atol=1e-12)
            np.testing.assert_allclose(seg_b[t, l], cap.b, atol=1e-12)


# --- limit margins -----------------------------------------------------------

def test_limit_margin_midrange(chain):
    q = chain.limits.mean(axis=1)
    half = (chain.limits[:, 1] - chain.limits[:, 0]) / 2
    np.testing.assert_allclose(limit_margin(chain, q), half, atol=1e-15)


def test_limit_margin_at_and_beyond_bounds(chain):
    q = chain.limits[:, 0].copy()
    np.testing.assert_allclose(limit_margin(chain, q), 0.0, atol=1e-15)
    np.testing.assert_allclose(limit_margin(chain, q - 0.1), -0.1, atol=1e-12)


# --- chain file IO -----------------------------------------------------------

def test_load_chain_missing_file(tmp_path):
    with pytest.raises(FileMissing):
        load_chain(tmp_path / "nope.json")


def test_load_chain_missing_key(tmp_path, chain):
    raw = json.loads(open_chain_json())
    del raw["limits"]
    p = tmp_path / "chain.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(SchemaViolation):
        load_chain(p)


def test_load_chain_wrong_arity(tmp_path):
    raw = json.loads(open_chain_json())
    raw["dh"] = raw["dh"][:6]
    p = tmp_path / "chain.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(SchemaViolation):
        load_chain(p)


def test_load_chain_bad_limits(tmp_path):
    raw = json.loads(open_chain_json())
    raw["limits"][2] = [1.0, -1.0]
    p = tmp_path / "chain.json"
    p.write_text(json.dumps(raw))
    with pytest.raises(SchemaViolation):
        load_chain(p)


def open_chain_json():
    from demoqual import data_path
    return data_path("pr2_right_arm.json").read_text()
