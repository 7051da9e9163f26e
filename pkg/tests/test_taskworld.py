"""Button-box world: target layout, goal-sphere test, collision sweeps."""

import numpy as np
import pytest

from demoqual.errors import FileMissing, SchemaViolation, UnknownFace
from demoqual.kinematics import (Pose, forward_kinematics, link_capsules,
                                 load_chain)
from demoqual.rotations import quat_to_matrix
from demoqual.taskworld import (CollisionReport, TaskWorld, Target,
                                check_collisions, first_goal_contact,
                                goal_reached, load_world, save_world)
from demoqual import data_path


# --- oracles -----------------------------------------------------------------

def _box_surface_points(center, R, half, n=80):
    """Dense samples of an oriented box surface (all six faces)."""
    lin = [np.linspace(-h, h, n) for h in half]
    pts = []
    for axis in range(3):
        u, v = (axis + 1) % 3, (axis + 2) % 3
        uu, vv = np.meshgrid(lin[u], lin[v], indexing="ij")
        for sign in (-1.0, 1.0):
            face = np.empty((n * n, 3))
            face[:, axis] = sign * half[axis]
            face[:, u] = uu.ravel()
            face[:, v] = vv.ravel()
            pts.append(face)
    return center + np.concatenate(pts) @ R.T


def _point_box_distance_oracle(p, center, R, half, n=80):
    """Min distance from p to the box via surface sampling (0 if inside)."""
    local = R.T @ (np.asarray(p) - center)
    if np.all(np.abs(local) <= half):
        return 0.0
    return float(np.min(np.linalg.norm(
        _box_surface_points(center, R, half, n) - p, axis=1)))


def _capsule_box_hit_oracle(a, b, radius, center, R, half, step=1e-3):
    """Capsule-vs-box overlap by 1 mm point samples along the capsule axis."""
    length = np.linalg.norm(b - a)
    n = max(2, int(np.ceil(length / step)) + 1)
    pts = a + np.linspace(0.0, 1.0, n)[:, None] * (b - a)
    local = (pts - center) @ R
    clamped = np.clip(local, -half, half)
    dists = np.linalg.norm(local - clamped, axis=1)
    return float(dists.min()) < radius


def _random_quat(rng):
    q = rng.normal(size=4)
    return q / np.linalg.norm(q)


def _world(center=(0.55, 0.0, 0.35), quat=(1, 0, 0, 0), **kw):
    return TaskWorld(Pose(center, quat), **kw)


# --- target layout -----------------------------------------------------------

def test_demonstrated_targets_layout():
    world = _world()
    for face in ("low", "high"):
        targets = world.demonstrated_targets(face)
        assert len(targets) == 9
        assert [t.target_id for t in targets] == list(range(9))
        assert all(t.kind == "demonstrated" for t in targets)
        assert targets[0].uv == (0.13, 0.13)
        # corners inset 0.02 m from the face edges
        corner_uvs = sorted(t.uv for t in targets[1:5])
        np.testing.assert_allclose(
            corner_uvs, [(0.02, 0.02), (0.02, 0.24),
                         (0.24, 0.02), (0.24, 0.24)], atol=1e-12)
        # each midpoint is the mean of its corner and the center
        for corner, mid in zip(targets[1:5], targets[5:9]):
            np.testing.assert_allclose(
                mid.uv, 0.5 * (np.array(corner.uv) + 0.13), atol=1e-12)
            np.testing.assert_allclose(
                mid.position, 0.5 * (corner.position + targets[0].position),
                atol=1e-12)


def test_targets_lie_on_face_plane():
    rng = np.random.default_rng(7)
    world = _world(center=(0.4, -0.1, 0.3), quat=_random_quat(rng))
    for face in ("low", "high"):
        normal = world.face_normal(face)
        plane_point = world.box_pose.position + normal * (world.edge / 2)
        for t in (world.demonstrated_targets(face)
                  + world.generalization_grid(face)):
            assert abs(np.dot(t.position - plane_point, normal)) < 1e-9


def test_generalization_grid_layout():
    world = _world()
    grid = world.generalization_grid("low")
    assert len(grid) == 49
    assert [t.target_id for t in grid] == list(range(49))
    assert all(t.kind == "grid" for t in grid)
    uv = np.array([t.uv for t in grid])
    # nearest-neighbor spacing is exactly edge/8
    pos = np.array([t.position for t in grid])
    d = np.linalg.norm(pos[:, None] - pos[None, :], axis=2)
    d[np.arange(49), np.arange(49)] = np.inf
    np.testing.assert_allclose(d.min(axis=1), 0.0325, atol=1e-12)
    # interior: at least one spacing away from every face edge
    assert uv.min() >= 0.0325 - 1e-12
    assert uv.max() <= 0.26 - 0.0325 + 1e-12
    # the central grid point coincides with the demonstrated center
    np.testing.assert_allclose(uv[24], [0.13, 0.13], atol=1e-12)


def test_face_frame_geometry():
    rng = np.random.default_rng(3)
    world = _world(quat=_random_quat(rng))
    for face in ("low", "high"):
        n = world.face_normal(face)
        u, v = world.face_axes(face)
        assert abs(np.linalg.norm(n) - 1) < 1e-12
        assert abs(np.dot(n, u)) < 1e-12
        assert abs(np.dot(n, v)) < 1e-12
        center = world.face_point(face, 0.13, 0.13)
        np.testing.assert_allclose(
            center, world.box_pose.position + 0.13 * n, atol=1e-12)


def test_unknown_face_rejected():
    world = _world()
    with pytest.raises(UnknownFace):
        world.demonstrated_targets("side")
    with pytest.raises(UnknownFace):
        world.generalization_grid("top")
    with pytest.raises(UnknownFace):
        world.face_point("left", 0.1, 0.1)


def test_world_validation():
    pose = Pose((0.5, 0, 0.3), (1, 0, 0, 0))
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, edge=0.0)
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, goal_radius=-0.01)
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, corner_inset=0.2)  # >= edge/2
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, face_assignments={"low": "-x", "high": "-x"})
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, face_assignments={"low": "-x", "high": "front"})
    with pytest.raises(SchemaViolation):
        TaskWorld(pose, face_assignments={"low": "-x"})


def test_world_json_round_trip(tmp_path):
    world = _world(center=(0.5, 0.05, 0.3))
    path = tmp_path / "world.json"
    save_world(world, path)
    loaded = load_world(path)
    np.testing.assert_array_equal(loaded.box_pose.position,
                                  world.box_pose.position)
    assert loaded.edge == world.edge
    assert loaded.goal_radius == world.goal_radius
    assert loaded.corner_inset == world.corner_inset
    assert loaded.face_assignments == world.face_assignments


def test_world_load_errors(tmp_path):
    with pytest.raises(FileMissing):
        load_world(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{\"edge\": 0.26}")
    with pytest.raises(SchemaViolation):
        load_world(bad)
    bad.write_text("not json")
    with pytest.raises(SchemaViolation):
        load_world(bad)


def test_default_world_config_loads():
    world = load_world(data_path("world_default.json"))
    assert world.edge == 0.26
    assert world.goal_radius == 0.015
    assert set(world.face_assignments) == {"low", "high"}


# --- goal_reached ------------------------------------------------------------

def test_goal_reached_tip_at_target(chain):
    world = _world()
    target = world.demonstrated_targets("low")[0]
    pose = Pose(target.position, (1, 0, 0, 0))
    assert goal_reached(chain, pose, world, target)


def test_goal_reached_matches_surface_sampling_oracle(chain):
    rng = np.random.default_rng(11)
    world = _world()
    target = world.demonstrated_targets("low")[3]
    half = chain.tip_box / 2.0
    checked = 0
    for _ in range(60):
        pos = target.position + rng.uniform(-0.08, 0.08, 3)
        quat = _random_quat(rng)
        pose = Pose(pos, quat)
        R = quat_to_matrix(quat)
        center = pos + R[:, 2] * half[2]
        oracle = _point_box_distance_oracle(target.position, center, R, half,
                                            n=200)
        # skip draws inside the sampling-resolution band of the threshold
        if abs(oracle - world.goal_radius) < 5e-4:
            continue
        checked += 1
        assert goal_reached(chain, pose, world, target) == \
            (oracle <= world.goal_radius)
    assert checked >= 40


def test_goal_reached_beyond_half_diagonal_false(chain):
    """Tip center one goal radius plus half the tip diagonal plus 1 mm
    away along any tip face normal leaves the sphere untouched."""
    world = _world()
    target = world.demonstrated_targets("low")[0]
    half_diag = float(np.linalg.norm(chain.tip_box)) / 2.0
    offset = world.goal_radius + half_diag + 1e-3
    half = chain.tip_box / 2.0
    for axis in range(3):
        for sign in (-1.0, 1.0):
            R = np.eye(3)
            box_center = target.position + sign * offset * R[:, axis]
            tip_pos = box_center - R[:, 2] * half[2]
            pose = Pose(tip_pos, (1, 0, 0, 0))
            assert not goal_reached(chain, pose, world, target)


def test_goal_reached_boundary_inclusive(chain):
    """Tangency counts: a tip face exactly goal_radius away is a press."""
    target_pos = np.array([0.45, 0.0, 0.35])
    half = chain.tip_box / 2.0
    # tip box +z face center at distance d from the target, axis-aligned
    d = 0.021
    box_center = target_pos - np.array([0.0, 0.0, half[2] + d])
    tip_pos = box_center - np.array([0.0, 0.0, half[2]])
    pose = Pose(tip_pos, (1, 0, 0, 0))
    from demoqual._kernels import point_box_distance
    exact = point_box_distance(target_pos, box_center, np.eye(3), half)
    world = _world(goal_radius=exact)
    target = Target(0, "low", (0.1, 0.1), target_pos, "grid")
    assert goal_reached(chain, pose, world, target)
    target_out = Target(0, "low", (0.1, 0.1),
                        target_pos + np.array([0, 0, 1e-9]), "grid")
    assert not goal_reached(chain, pose, world, target_out)


def test_goal_reached_monotone_along_approach(chain):
    """Once the tip touches the sphere, moving straight at the target
    center keeps touching it."""
    rng = np.random.default_rng(23)
    world = _world()
    target = world.demonstrated_targets("high")[2]
    for _ in range(20):
        quat = _random_quat(rng)
        ray = rng.normal(size=3)
        ray /= np.linalg.norm(ray)
        flags = []
        for lam in np.linspace(0.15, 0.0, 40):
            pose = Pose(target.position + lam * ray, quat)
            flags.append(goal_reached(chain, pose, world, target))
        first = flags.index(True)
        assert all(flags[first:])


# --- collision sweeps --------------------------------------------------------

def test_far_box_is_clear(chain):
    world = _world(center=(1.6, 0.0, 0.3))
    Q = np.tile(chain.start_config, (5, 1))
    report = check_collisions(chain, Q, world)
    assert report.clear
    assert not report.box_hit and not report.self_hit
    assert report.box_index is None and report.self_pair is None


def test_elbow_inside_cube_is_hit(chain):
    # park the box right on the elbow (origin of capsule 3)
    caps = link_capsules(chain, chain.start_config)
    elbow = 0.5 * (caps[2].a + caps[2].b)
    world = _world(center=tuple(elbow))
    Q = np.vstack([chain.start_config + 1.0,  # elsewhere first
                   chain.start_config])
    # sample 0 may or may not hit; sample 1 must
    report = check_collisions(chain, Q[1:], world)
    assert report.box_hit
    assert report.box_index == 0
    assert not report.clear


def test_first_offending_sample_is_minimal(chain):
    caps = link_capsules(chain, chain.start_config)
    elbow = 0.5 * (caps[2].a + caps[2].b)
    world = _world(center=tuple(elbow))
    far = chain.midrange + np.array([0.6, 0.3, 0.5, 0.4, 0.2, 0.1, 0.0])
    Q = np.linspace(far, chain.start_config, 12)
    report = check_collisions(chain, Q, world)
    assert report.box_hit
    hits = [check_collisions(chain, Q[t:t + 1], world).box_hit
            for t in range(12)]
    assert report.box_index == hits.index(True)


def test_box_hit_matches_dense_sampling_oracle(chain):
    """Randomized sweep flags agree with a 1 mm point-sampling oracle."""
    rng = np.random.default_rng(2024)
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    checked = 0
    while checked < 200:
        q = rng.uniform(lo, hi)
        caps = link_capsules(chain, q)
        anchor = caps[rng.integers(0, 8)]
        s = rng.uniform(0.0, 1.0)
        center = anchor.a + s * (anchor.b - anchor.a) + rng.uniform(-0.3, 0.3, 3)
        quat = _random_quat(rng)
        world = _world(center=tuple(center), quat=tuple(quat))
        R = world.box_rotation
        oracle_dists = []
        for cap in caps:
            length = np.linalg.norm(cap.b - cap.a)
            n = max(2, int(np.ceil(length / 1e-3)) + 1)
            pts = cap.a + np.linspace(0, 1, n)[:, None] * (cap.b - cap.a)
            local = (pts - center) @ R
            clamped = np.clip(local, -world.half_extents, world.half_extents)
            oracle_dists.append(
                np.linalg.norm(local - clamped, axis=1).min() - cap.radius)
        margins = np.array(oracle_dists)
        if np.any(np.abs(margins) < 1e-3):
            continue  # too close to the threshold for a 1 mm sampling oracle
        checked += 1
        oracle_hit = bool(np.any(margins < 0))
        report = check_collisions(chain, q[None, :], world)
        assert report.box_hit == oracle_hit
    assert checked == 200


def test_self_collision_flagged_on_folded_arm(chain):
    # fold the elbow fully and roll the wrist so the forearm and the
    # upper arm capsules approach each other
    q = chain.start_config.copy()
    q[3] = chain.limits[3, 0]  # elbow fully bent
    q[1] = chain.limits[1, 1]  # shoulder lift to extreme
    world = _world(center=(1.6, 0.0, 0.3))
    report = check_collisions(chain, q[None, :], world)
    if report.self_hit:
        i, j = report.self_pair
        assert (i, j) in {tuple(p) for p in chain.self_pairs}
        caps = link_capsules(chain, q)
        from demoqual._kernels import _segment_segment_distance
        d = _segment_segment_distance(caps[i].a, caps[i].b,
                                      caps[j].a, caps[j].b)
        assert d < caps[i].radius + caps[j].radius
    report_home = check_collisions(
        chain, chain.start_config[None, :], world)
    assert not report_home.self_hit


def _solve_pose(chain, q0, goal_pos, goal_quat, T=140):
    """CLIK-solve a joint configuration reaching the given tool pose."""
    from demoqual.clik import track_trajectory
    from demoqual.demonstrations import DemoMeta, make_demonstration
    start = forward_kinematics(chain, q0)
    tau = np.linspace(0.0, 1.0, T)
    s = 10 * tau**3 - 15 * tau**4 + 6 * tau**5
    cart = np.empty((T, 8))
    cart[:, 0] = tau
    cart[:, 1:4] = start.position + s[:, None] * (goal_pos - start.position)
    quats = start.orientation + s[:, None] * (np.asarray(goal_quat, float)
                                              - start.orientation)
    cart[:, 4:8] = quats / np.linalg.norm(quats, axis=1, keepdims=True)
    meta = DemoMeta(target_id=0, face_id="low", session=1, trial=1,
                    demonstrator_id="solver")
    policy = make_demonstration(chain, tau, np.tile(q0, (T, 1)), meta)
    jt = track_trajectory(chain, q0, cart, policy)
    assert jt.feasible and jt.final_pos_err < 1e-3
    return jt.joints[-1]


def _quat_wxyz(R):
    # scalar-first quaternion of a rotation matrix (Shepperd), w >= 0
    t = np.trace(R)
    if t > 0:
        w = np.sqrt(1.0 + t) / 2.0
        v = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0],
                      R[1, 0] - R[0, 1]]) / (4.0 * w)
        q = np.array([w, *v])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = np.empty(4)
        q[1 + i] = s / 2.0
        q[1 + j] = (R[j, i] + R[i, j]) / (2.0 * s)
        q[1 + k] = (R[k, i] + R[i, k]) / (2.0 * s)
        q[0] = (R[k, j] - R[j, k]) / (2.0 * s)
    return q if q[0] >= 0 else -q


def _press_quat(tool_z, up=(0.0, 1.0, 0.0)):
    z = np.asarray(tool_z, float)
    z = z / np.linalg.norm(z)
    x = np.cross(up, z)
    x /= np.linalg.norm(x)
    return _quat_wxyz(np.column_stack([x, np.cross(z, x), z]))


def _press_config(chain, world, gap):
    """A configuration pressing the low-face center with the given
    tip-face-to-target gap, approached along the face normal."""
    target = world.demonstrated_targets("low")[0]
    normal = world.face_normal("low")
    quat = _press_quat(-normal)
    flange = target.position + normal * (chain.tip_box[2] + gap)
    q_pre = _solve_pose(chain, chain.start_config, flange + 0.08 * normal,
                        quat)
    return _solve_pose(chain, q_pre, flange, quat, T=60), target


def test_press_contact_exempts_tip_only(chain):
    """A tip reaching the goal sphere passes even though its capsule
    envelope grazes the cube; without a target the graze is a hit."""
    world = load_world(data_path("world_default.json"))
    q, target = _press_config(chain, world, gap=0.005)
    pose = forward_kinematics(chain, q)
    assert goal_reached(chain, pose, world, target)
    with_target = check_collisions(chain, q[None, :], world, target=target)
    without = check_collisions(chain, q[None, :], world)
    assert with_target.clear
    assert without.box_hit
    assert without.box_link == 7  # only the tip envelope touches


def test_samples_after_goal_contact_ignored(chain):
    """Motion after the press is not judged: a blatant post-contact
    penetration is forgiven when the goal was already reached."""
    world = load_world(data_path("world_default.json"))
    q_press, target = _press_config(chain, world, gap=0.005)
    # drive the flange 10 cm into the cube: an unambiguous collision
    normal = world.face_normal("low")
    quat = _press_quat(-normal)
    inside = target.position - normal * 0.10
    q_bad = _solve_pose(chain, q_press, inside, quat)
    Q = np.vstack([q_press, q_bad])
    assert first_goal_contact(chain, Q, world, target) == 0
    assert check_collisions(chain, Q[1:], world).box_hit
    report = check_collisions(chain, Q, world, target=target)
    assert report.clear


def test_collision_report_clear_invariant():
    r = CollisionReport(box_hit=True, box_index=3, box_link=2)
    assert not r.clear
    r = CollisionReport(box_hit=False, self_hit=True, self_index=0,
                        self_pair=(0, 4))
    assert not r.clear
    assert CollisionReport(box_hit=False).clear


def test_empty_trajectory_rejected(chain):
    from demoqual.errors import EmptyDemonstration
    world = _world()
    with pytest.raises(EmptyDemonstration):
        check_collisions(chain, np.empty((0, 7)), world)
