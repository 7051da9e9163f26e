"""Synthetic demonstrator cohorts for the button-press task.

Reference demonstrations are planned per target: a pre-approach point 8 cm
out along the face normal followed by a straight press. The low face is
reached directly; the high face first needs a clear arm configuration on
the far side of the box, found by seeded restarts and connected through a
joint-space wrap whose via configurations are searched until every link
clears the box. Demonstrator skill is modeled by a five-parameter profile
that corrupts the reference paths with smooth Cartesian noise, detour
bumps, and approach-direction jitter, all decaying across trials at the
profile's improvement rate. Generation is deterministic per seed: every
demonstration derives its RNG from (cohort seed, demonstrator, session,
trial, face, target), so parallel and serial runs emit identical files.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import data_path
from .clik import JointTrajectory, track_trajectory
from .demonstrations import (FACES, DemoMeta, DemoSet, load_demoset,
                             make_demonstration, save_demoset)
from .errors import NoFeasiblePlan, SchemaViolation
from .kinematics import forward_kinematics, load_chain
from .rotations import basis_from_z, matrix_to_quat
from .taskworld import check_collisions, goal_reached, load_world

PRESS_GAP = 0.003          # m, tip face to target at full press
PRE_APPROACH = 0.08        # m, stand-off along the face normal
TRANSIT_BULGE = 0.05       # m, outward arc height between stand-off points
APPROACH_SAMPLES = 60      # samples on the final straight press leg

_UP_HINTS = (np.array([0.0, 1.0, 0.0]), np.array([1.0, 0.0, 0.0]),
             np.array([0.0, -1.0, 0.0]))


# ---------------------------------------------------------------------------
# profiles and cohort arithmetic


@dataclass(frozen=True)
class DemonstratorProfile:
    """Skill model: how sloppy the demonstrations are and how fast the
    sloppiness decays over consecutive trials."""

    base_noise: float            # m, std of smooth Cartesian noise
    detour_amp: float            # m, amplitude scale of detour bumps
    approach_consistency: float  # 1 = always approaches dead-on
    improvement_rate: float      # per-trial decay of noise and detours
    collision_proneness: float   # 0 = detours anywhere, 1 = toward the box

    def __post_init__(self):
        if self.base_noise < 0 or self.detour_amp < 0:
            raise SchemaViolation("noise amplitudes must be non-negative")
        for name in ("approach_consistency", "improvement_rate",
                     "collision_proneness"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SchemaViolation(f"{name} must be in [0, 1], got {v}")

    def decay(self, session, trial):
        """Degradation multiplier for a trial, counting across sessions."""
        k = (session - 1) * 3 + (trial - 1)
        return (1.0 - self.improvement_rate) ** k

    def to_dict(self):
        return {"base_noise": self.base_noise,
                "detour_amp": self.detour_amp,
                "approach_consistency": self.approach_consistency,
                "improvement_rate": self.improvement_rate,
                "collision_proneness": self.collision_proneness}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(**{k: float(d[k]) for k in
                          ("base_noise", "detour_amp",
                           "approach_consistency", "improvement_rate",
                           "collision_proneness")})
        except KeyError as exc:
            raise SchemaViolation(f"profile missing key {exc}") from exc


# calibrated so fast-adapters clear the 0.8 task threshold in session 1
# on both faces while slow-adapters start below it and catch up by
# session 2 (see tests/test_synthcohort.py for the calibration checks)
FAST_PROFILE = DemonstratorProfile(
    base_noise=0.004, detour_amp=0.010, approach_consistency=0.97,
    improvement_rate=0.25, collision_proneness=0.2)
SLOW_PROFILE = DemonstratorProfile(
    base_noise=0.018, detour_amp=0.050, approach_consistency=0.75,
    improvement_rate=0.35, collision_proneness=0.6)


@dataclass(frozen=True)
class CohortSpec:
    n_fast: int
    n_slow: int
    sessions: int = 2
    trials_per_face: int = 3
    targets_per_face: int = 9
    seed: int = 0

    def __post_init__(self):
        if self.n_fast < 0 or self.n_slow < 0:
            raise SchemaViolation("cohort counts must be >= 0")
        if min(self.sessions, self.trials_per_face,
               self.targets_per_face) < 1:
            raise SchemaViolation("cohort structure counts must be >= 1")

    @property
    def demos_per_session(self):
        return self.trials_per_face * len(FACES) * self.targets_per_face

    @property
    def demonstrators(self):
        return ([f"fast_{i:02d}" for i in range(self.n_fast)]
                + [f"slow_{i:02d}" for i in range(self.n_slow)])

    def to_dict(self):
        return {"n_fast": self.n_fast, "n_slow": self.n_slow,
                "sessions": self.sessions,
                "trials_per_face": self.trials_per_face,
                "targets_per_face": self.targets_per_face,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(n_fast=int(d["n_fast"]), n_slow=int(d["n_slow"]),
                       sessions=int(d.get("sessions", 2)),
                       trials_per_face=int(d.get("trials_per_face", 3)),
                       targets_per_face=int(d.get("targets_per_face", 9)),
                       seed=int(d.get("seed", 0)))
        except KeyError as exc:
            raise SchemaViolation(f"cohort spec missing key {exc}") from exc


# ---------------------------------------------------------------------------
# reference planning


class ReferencePlan:
    """A planned, collision-clear press: the commanded Cartesian path,
    the posture schedule used by the null-space policy, the tracked joint
    solution, and the segment bounds the path is executed in."""

    __slots__ = ("chain", "cart", "posture", "trajectory", "target",
                 "box_center", "bounds", "approach_start")

    def __init__(self, chain, cart, posture, trajectory, target,
                 box_center, bounds):
        self.chain = chain
        self.cart = cart
        self.posture = posture
        self.trajectory = trajectory
        self.target = target
        self.box_center = np.asarray(box_center, dtype=float)
        self.bounds = tuple(bounds)
        self.approach_start = cart.shape[0] - APPROACH_SAMPLES

    def __len__(self):
        return self.cart.shape[0]


def _minjerk(n):
    tau = np.linspace(0.0, 1.0, n)
    return 10 * tau ** 3 - 15 * tau ** 4 + 6 * tau ** 5


def press_orientation(tool_z, up_hint):
    """Tool orientation pressing along tool_z, rolled against up_hint."""
    return matrix_to_quat(basis_from_z(tool_z, reference=up_hint))


def _cart_path(waypoints, seg_len, bulge=None):
    """Piecewise min-jerk positions with hemisphere-aligned quat blends.

    A bulge vector arcs every segment outward, zero at its endpoints and
    largest mid-segment.
    """
    rows = []
    for (p0, q0), (p1, q1) in zip(waypoints[:-1], waypoints[1:]):
        s = _minjerk(seg_len)[:, None]
        q1 = np.asarray(q1, dtype=float)
        if np.dot(q0, q1) < 0.0:
            q1 = -q1
        pos = np.asarray(p0, dtype=float) + s * (np.asarray(p1, float) - p0)
        if bulge is not None:
            pos = pos + (4.0 * s * (1.0 - s)) * np.asarray(bulge, float)
        quat = np.asarray(q0, dtype=float) + s * (q1 - q0)
        quat /= np.linalg.norm(quat, axis=1, keepdims=True)
        rows.append(np.hstack([pos, quat]))
    path = np.vstack(rows)
    out = np.empty((path.shape[0], 8))
    out[:, 0] = np.linspace(0.0, 1.0, path.shape[0])
    out[:, 1:] = path
    return out


def _fk_trace(chain, jpath):
    """Cartesian (T, 8) record of a joint path."""
    T = jpath.shape[0]
    cart = np.empty((T, 8))
    cart[:, 0] = np.linspace(0.0, 1.0, T)
    prev = None
    for k in range(T):
        pose = forward_kinematics(chain, jpath[k])
        quat = pose.orientation
        if prev is not None and np.dot(prev, quat) < 0.0:
            quat = -quat
        cart[k, 1:4] = pose.position
        cart[k, 4:8] = quat
        prev = quat
    return cart


def _solve(chain, q0, cart, posture, meta=None):
    meta = meta or DemoMeta(target_id=0, face_id="low", session=1, trial=1,
                            demonstrator_id="planner")
    policy = make_demonstration(chain, cart[:, 0], posture, meta)
    return track_trajectory(chain, q0, cart, policy)


def track_segments(chain, q0, cart, posture, bounds):
    """Track a Cartesian path in independent segments.

    Each segment starts from the previous segment's final configuration,
    so a tracking retry in one segment (which re-runs it with blended
    null policy and raised gains) cannot disturb the samples of another.
    Returns one stitched JointTrajectory covering the whole path.
    """
    T = cart.shape[0]
    if bounds[-1] != T:
        raise SchemaViolation("segment bounds must end at the path length")
    legs = []
    q = np.asarray(q0, dtype=float)
    start = 0
    for end in bounds:
        leg_cart = cart[start:end].copy()
        leg_cart[:, 0] = np.linspace(0.0, 1.0, end - start)
        legs.append(_solve(chain, q, leg_cart, posture[start:end]))
        q = legs[-1].joints[-1]
        start = end
    reasons = [leg.reason for leg in legs if leg.reason]
    return JointTrajectory(
        cart[:, 0], np.vstack([leg.joints for leg in legs]),
        np.vstack([leg.velocities for leg in legs]),
        all(leg.feasible for leg in legs),
        reason=reasons[0] if reasons else None,
        retries=sum(leg.retries for leg in legs),
        min_margin=min(leg.min_margin for leg in legs),
        final_pos_err=legs[-1].final_pos_err,
        final_ori_err=legs[-1].final_ori_err)


def _press_flanges(chain, world, target):
    normal = world.face_normal(target.face_id)
    press = target.position + (chain.tip_box[2] + PRESS_GAP) * normal
    pre = press + PRE_APPROACH * normal
    return normal, pre, press


def _box_clearance(chain, world, q, links=range(6)):
    """Min capsule-to-box-surface distance over the arm links (tip and
    wrist excluded: they are close to the face at any press by design)."""
    from .kinematics import trajectory_capsules
    R = world.box_rotation
    center = world.box_pose.position
    seg_a, seg_b, _, _ = trajectory_capsules(chain, q[None, :])
    worst = np.inf
    ts = np.linspace(0.0, 1.0, 80)[:, None]
    for link in links:
        pts = seg_a[0, link] + ts * (seg_b[0, link] - seg_a[0, link])
        d = np.abs((pts - center) @ R) - world.half_extents
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=1)
        inside = np.max(d, axis=1)
        dist = np.where(outside > 0.0, outside, inside)
        worst = min(worst, dist.min() - chain.capsule_radii[link])
    return worst


def _press_branches(chain, world, target, tries=60, seed=0):
    """Joint configurations holding the press pose, best box room first."""
    normal, _, press = _press_flanges(chain, world, target)
    rng = np.random.default_rng(seed)
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    T = 120
    cands = []
    for k in range(tries):
        for hint in _UP_HINTS:
            quat = press_orientation(-normal, hint)
            cart = np.empty((T, 8))
            cart[:, 0] = np.linspace(0.0, 1.0, T)
            cart[:, 1:4] = press
            cart[:, 4:8] = quat
            if k == 0:
                q0 = chain.start_config
            else:
                q0 = lo + rng.uniform(0.15, 0.85, 7) * (hi - lo)
            jt = _solve(chain, q0, cart, np.tile(q0, (T, 1)))
            q = jt.joints[-1]
            pose = forward_kinematics(chain, q)
            if not (jt.feasible
                    and np.linalg.norm(pose.position - press) < 1e-3):
                continue
            report = check_collisions(chain, q[None, :], world,
                                      target=target)
            if not (report.clear and goal_reached(chain, pose, world,
                                                  target)):
                continue
            cands.append((_box_clearance(chain, world, q), hint, q.copy()))
        if len(cands) >= 6 and k >= 8 and \
                max(c[0] for c in cands) >= 0.05:
            break
    cands.sort(key=lambda c: -c[0])
    return cands[:6]


def _joint_sweep(chain, q_start, q_end, world, target, seg=90):
    """Min-jerk joint path q_start -> q_end whose links clear the box.

    Tries the direct sweep, then single via configurations offset on the
    shoulder and elbow joints, then two-via ladders.
    """
    q_start = np.asarray(q_start, dtype=float)
    q_end = np.asarray(q_end, dtype=float)
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]
    s2 = _minjerk(2 * seg)[:, None]
    direct = q_start + s2 * (q_end - q_start)
    if check_collisions(chain, direct, world, target=target).clear:
        return direct
    base = 0.5 * (q_start + q_end)
    sv = _minjerk(seg)[:, None]
    for d1 in (-0.4, -0.8, 0.3, -1.2, 0.6):
        for d0 in (0.0, -0.4, -0.8, 0.4, 0.8):
            for d3 in (0.0, -0.5, 0.4, -1.0):
                via = base + np.array([d0, d1, 0.0, d3, 0.0, 0.0, 0.0])
                via = np.clip(via, lo + 0.05, hi - 0.05)
                jpath = np.vstack([q_start + sv * (via - q_start),
                                   via + sv * (q_end - via)])
                if check_collisions(chain, jpath, world,
                                    target=target).clear:
                    return jpath
    early = q_start + 0.35 * (q_end - q_start)
    late = q_start + 0.70 * (q_end - q_start)
    for d0a, d1a, d0b, d1b in ((-0.6, 0.4, -0.3, 0.2),
                               (-0.9, 0.0, -0.45, 0.0),
                               (0.0, 0.6, 0.0, 0.3),
                               (-0.6, -0.6, -0.3, -0.3),
                               (0.6, 0.3, 0.3, 0.15),
                               (-1.2, 0.4, -0.6, 0.2)):
        for d3a in (0.0, -0.6, 0.5):
            v1 = early + np.array([d0a, d1a, 0.0, d3a, 0.0, 0.0, 0.0])
            v2 = late + np.array([d0b, d1b, 0.0, 0.5 * d3a, 0.0, 0.0, 0.0])
            v1 = np.clip(v1, lo + 0.05, hi - 0.05)
            v2 = np.clip(v2, lo + 0.05, hi - 0.05)
            s3 = _minjerk(seg)[:, None]
            jpath = np.vstack([q_start + s3 * (v1 - q_start),
                               v1 + s3 * (v2 - v1),
                               v2 + s3 * (q_end - v2)])
            if check_collisions(chain, jpath, world, target=target).clear:
                return jpath
    return None


def _finish_plan(chain, world, target, cart, posture, bounds):
    jt = track_segments(chain, chain.start_config, cart, posture, bounds)
    if not jt.feasible:
        raise NoFeasiblePlan(f"tracking failed: {jt.reason}")
    pose = forward_kinematics(chain, jt.joints[-1])
    if not goal_reached(chain, pose, world, target):
        raise NoFeasiblePlan("final sample does not reach the goal")
    report = check_collisions(chain, jt, world, target=target)
    if not report.clear:
        kind = "box" if report.box_hit else "self"
        raise NoFeasiblePlan(f"reference path has a {kind} collision")
    return ReferencePlan(chain, cart, posture, jt, target,
                         world.box_pose.position, bounds)


def _plan_low(chain, world, target):
    normal, pre, press = _press_flanges(chain, world, target)
    start = forward_kinematics(chain, chain.start_config)
    last_error = None
    for hint in _UP_HINTS:
        quat = press_orientation(-normal, hint)
        cart = _cart_path([(start.position, start.orientation),
                           (pre, quat), (press, quat)], APPROACH_SAMPLES)
        posture = np.tile(chain.start_config, (cart.shape[0], 1))
        try:
            return _finish_plan(chain, world, target, cart, posture,
                                (cart.shape[0],))
        except NoFeasiblePlan as exc:
            last_error = exc
    raise last_error


class _WrapGuide:
    """Shared wrap of one face: the joint path from the rest config to
    the pre-approach point of the face center, plus the press branch it
    lands in. All targets of the face reuse this prefix so their paths
    differ only after the wrap, which is what a consistent demonstrator
    does and what frame-based regression interpolates cleanly."""

    __slots__ = ("jpath", "q_pre", "q_press", "pre", "hint", "branches",
                 "pre_quat")

    def __init__(self, jpath, q_pre, q_press, pre, hint, branches,
                 pre_quat):
        self.jpath = jpath
        self.q_pre = q_pre
        self.q_press = q_press
        self.pre = pre
        self.hint = hint
        self.branches = branches
        self.pre_quat = pre_quat


def _regulate(chain, q0, position, quat, posture, T=120, full=False):
    cart = np.empty((T, 8))
    cart[:, 0] = np.linspace(0.0, 1.0, T)
    cart[:, 1:4] = position
    cart[:, 4:8] = quat
    jt = _solve(chain, q0, cart, np.tile(posture, (T, 1)))
    if not jt.feasible:
        return None
    q = jt.joints[-1]
    pose = forward_kinematics(chain, q)
    if np.linalg.norm(pose.position - position) > 1e-3:
        return None
    return jt if full else q


_POSTURE_BIASES = (
    np.zeros(7),
    np.array([0.0, 0.0, 0.0, -0.7, 0.0, 0.0, 0.0]),
    np.array([0.0, -0.5, 0.0, 0.0, 0.0, 0.0, 0.0]),
    np.array([0.0, -0.5, 0.0, -0.7, 0.0, 0.0, 0.0]),
    np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]),
    np.array([-0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]),
)


_CLEARANCE_FLOOR = 0.005
_RESTART_ROOM = 0.015


def _regulate_clear(chain, world, target, q0, position, quat,
                    branches=None):
    """Regulate to a pose and keep the solution whose arm sits farthest
    from the box, as (room, q), or None.

    Starts from the warm seed through several null-space posture biases;
    when every solution hugs the box tighter than the clearance floor,
    restarts from the press branches of the target itself, which can
    land in roomier elbow configurations the warm seed never reaches.
    """
    lo, hi = chain.limits[:, 0], chain.limits[:, 1]

    def attempt(seeds):
        best = None
        for seed in seeds:
            for bias in _POSTURE_BIASES:
                posture = np.clip(chain.midrange + bias, lo + 0.1, hi - 0.1)
                q = _regulate(chain, seed, position, quat, posture)
                if q is None:
                    continue
                if not check_collisions(chain, q[None, :], world,
                                        target=target).clear:
                    continue
                room = _box_clearance(chain, world, q)
                if best is None or room > best[0]:
                    best = (room, q)
        return best

    best = attempt([q0])
    if best is None or best[0] < _RESTART_ROOM:
        if branches is None:
            branches = _press_branches(chain, world, target)
        retry = attempt([q for _, _, q in branches])
        if retry is not None and (best is None or retry[0] > best[0]):
            best = retry
    return best


def _face_coverage(chain, world, face, q_seed, hint, branch_map):
    """Worst limit margin when one branch holds every demonstrated press
    and every pre-approach pose of a face at one tool roll; None if any
    pose is unreachable, colliding, or short of the goal.

    Poses are chained warm so the whole face stays in one contiguous arm
    branch. Pre-approach poses must additionally clear the box by the
    clearance floor - through a branch restart if the chained solution
    is too tight, matching what the per-target planner will do."""
    normal = world.face_normal(face)
    quat = press_orientation(-normal, hint)
    worst = np.inf
    q = q_seed
    for tgt in world.demonstrated_targets(face):
        _, pre, press = _press_flanges(chain, world, tgt)
        jt = _regulate(chain, q, press, quat, chain.midrange, full=True)
        if jt is None:
            return None
        q = jt.joints[-1]
        pose = forward_kinematics(chain, q)
        report = check_collisions(chain, q[None, :], world, target=tgt)
        if not (report.clear and goal_reached(chain, pose, world, tgt)):
            return None
        worst = min(worst, jt.min_margin)
        jt = _regulate(chain, q, pre, quat, chain.midrange, full=True)
        if jt is None:
            return None
        q_pre = jt.joints[-1]
        if not check_collisions(chain, q_pre[None, :], world,
                                target=tgt).clear:
            return None
        if _box_clearance(chain, world, q_pre) < _CLEARANCE_FLOOR:
            found = _regulate_clear(chain, world, tgt, q_pre, pre, quat,
                                    branches=branch_map[tgt.target_id])
            if found is None or found[0] < _CLEARANCE_FLOOR:
                return None
        worst = min(worst, jt.min_margin)
    return worst


def _best_roll(chain, world, face, q_seed, branch_map):
    """Tool roll whose single branch covers the whole face best.

    Scans the roll circle coarsely, then refines around the best angle,
    maximizing the worst limit margin over all demonstrated presses and
    pre-approach poses. Returns (hint, margin) or None.
    """
    u_axis, v_axis = world.face_axes(face)

    def hint_at(deg):
        th = np.radians(deg)
        return np.cos(th) * u_axis + np.sin(th) * v_axis

    best = None
    for deg in range(0, 360, 20):
        worst = _face_coverage(chain, world, face, q_seed, hint_at(deg),
                               branch_map)
        if worst is not None and (best is None or worst > best[1]):
            best = (deg, worst)
    if best is None:
        return None
    for deg in range(best[0] - 16, best[0] + 17, 4):
        if deg % 360 == best[0]:
            continue
        worst = _face_coverage(chain, world, face, q_seed, hint_at(deg),
                               branch_map)
        if worst is not None and worst > best[1]:
            best = (deg % 360, worst)
    return hint_at(best[0]), best[1]


def wrap_guide(chain, world, face):
    """Plan the shared wrap for a high-constraint face.

    Press branches are discovered at the face center; for each, the tool
    roll is tuned until one branch statically covers every demonstrated
    press and pre-approach pose of the face with the best worst-case
    limit margin. The first covering branch with a collision-clear sweep
    from the rest config wins.
    """
    targets = world.demonstrated_targets(face)
    center = targets[0]
    normal, pre, press = _press_flanges(chain, world, center)
    branch_map = {tgt.target_id: _press_branches(chain, world, tgt)
                  for tgt in targets}
    branches = branch_map[center.target_id]
    if not branches:
        raise NoFeasiblePlan("no collision-free press configuration found")
    covering = []
    for _, _, q_seed in branches:
        found = _best_roll(chain, world, face, q_seed, branch_map)
        if found is not None:
            covering.append((found[1], found[0], q_seed))
    if not covering:
        raise NoFeasiblePlan("no press branch covers the whole face")
    covering.sort(key=lambda c: -c[0])
    last_error = NoFeasiblePlan("no wrap around the box found")
    for _, hint, q_seed in covering:
        quat = press_orientation(-normal, hint)
        q_press = _regulate(chain, q_seed, press, quat, chain.midrange)
        if q_press is None:
            continue
        pre_quat = _face_pre_quat(chain, world, face, hint, q_press,
                                  branch_map)
        q_pre = _regulate(chain, q_press, pre, pre_quat, chain.midrange)
        if q_pre is None:
            last_error = NoFeasiblePlan("press branch cannot back out to "
                                        "the pre-approach point")
            continue
        jpath = _joint_sweep(chain, chain.start_config, q_pre, world,
                             center)
        if jpath is None:
            last_error = NoFeasiblePlan("no clear wrap around the box")
            continue
        return _WrapGuide(jpath, q_pre, q_press, pre, hint, branch_map,
                          pre_quat)
    raise last_error


def _face_pre_quat(chain, world, face, hint, q_seed, branch_map):
    """Tool orientation held at every pre-approach point of a face.

    Face-aligned like the press when that leaves the arm room at all
    demonstrated targets; otherwise tilted across the face by the
    smallest angle that does, the way a wrist cocks around a far corner
    before straightening on the final approach. One shared orientation
    keeps the demonstrations of a face consistent with each other."""
    normal = world.face_normal(face)
    targets = world.demonstrated_targets(face)

    def face_room(quat):
        # Plain warm-chained regulation: every pre pose must live in the
        # same contiguous arm branch, or the tilt is useless - restarts
        # into other branches would make the demonstrations disagree on
        # posture and the face-level blend fall apart.
        worst = np.inf
        q = q_seed
        for tgt in targets:
            _, pre, _ = _press_flanges(chain, world, tgt)
            q = _regulate(chain, q, pre, quat, chain.midrange)
            if q is None:
                return None
            if not check_collisions(chain, q[None, :], world,
                                    target=tgt).clear:
                return None
            worst = min(worst, _box_clearance(chain, world, q))
        return worst

    aligned = press_orientation(-normal, hint)
    room = face_room(aligned)
    best = (room, aligned)
    if room is not None and room >= _RESTART_ROOM:
        return aligned
    _, v_axis = world.face_axes(face)
    for direction in (v_axis, -v_axis):
        for deg in (8, 15, 22, 30):
            a = np.radians(deg)
            tool_z = np.sin(a) * direction - np.cos(a) * normal
            quat = press_orientation(tool_z, hint)
            room = face_room(quat)
            if room is None:
                break
            if best[0] is None or room > best[0]:
                best = (room, quat)
            if room >= _RESTART_ROOM:
                return best[1]
    return best[1]


def _plan_high(chain, world, target, guide):
    normal, pre, press = _press_flanges(chain, world, target)
    quat = press_orientation(-normal, guide.hint)
    branches = guide.branches.get(target.target_id)
    found = _regulate_clear(chain, world, target, guide.q_press, press,
                            quat, branches=branches)
    if found is None:
        raise NoFeasiblePlan("press pose unreachable from the wrap branch")
    q_press = found[1]
    found = _regulate_clear(chain, world, target, q_press, pre,
                            guide.pre_quat, branches=branches)
    if found is None:
        raise NoFeasiblePlan("cannot back out to the pre-approach point")
    q_pre = found[1]
    sweep = _fk_trace(chain, guide.jpath)
    transit = _cart_path([(guide.pre, sweep[-1, 4:8]),
                          (pre, guide.pre_quat)], APPROACH_SAMPLES)
    approach = _cart_path([(pre, guide.pre_quat), (press, quat)],
                          APPROACH_SAMPLES)
    cart = np.vstack([sweep, transit, approach])
    cart[:, 0] = np.linspace(0.0, 1.0, cart.shape[0])
    n_sweep = sweep.shape[0]
    posture = np.vstack([
        guide.jpath,
        _early_blend(guide.q_pre, q_pre, APPROACH_SAMPLES),
        np.linspace(q_pre, q_press, APPROACH_SAMPLES)])
    bounds = (n_sweep, n_sweep + APPROACH_SAMPLES, cart.shape[0])
    return _finish_plan(chain, world, target, cart, posture, bounds)


def _early_blend(q_a, q_b, n, frac=0.6):
    """Posture reference that reaches q_b well before the leg ends, so
    the tracked arm settles into the destination posture ahead of the
    tightest part of the motion instead of still lagging through it."""
    head = max(2, int(round(frac * n)))
    return np.vstack([np.linspace(q_a, q_b, head),
                      np.tile(q_b, (n - head, 1))])


def _plan_high_solo(chain, world, target):
    """Independent plan for a target the shared wrap cannot serve: its
    own press branch, tool roll, and sweep from the rest config. The
    resulting demonstration is an outlier relative to the rest of the
    face, the way a demonstrator handles an awkward corner differently.
    """
    normal, pre, press = _press_flanges(chain, world, target)
    branches = _press_branches(chain, world, target)
    last_error = NoFeasiblePlan("no collision-free press configuration "
                                "found")
    for _, hint, q_seed in branches:
        quat = press_orientation(-normal, hint)
        q_press = _regulate(chain, q_seed, press, quat, chain.midrange)
        if q_press is None:
            continue
        q_pre = _regulate(chain, q_press, pre, quat, chain.midrange)
        if q_pre is None or not check_collisions(
                chain, q_pre[None, :], world, target=target).clear:
            last_error = NoFeasiblePlan("press branch cannot back out to "
                                        "the pre-approach point")
            continue
        jpath = _joint_sweep(chain, chain.start_config, q_pre, world,
                             target)
        if jpath is None:
            last_error = NoFeasiblePlan("no clear wrap around the box")
            continue
        sweep = _fk_trace(chain, jpath)
        approach = _cart_path([(pre, quat), (press, quat)],
                              APPROACH_SAMPLES)
        cart = np.vstack([sweep, approach])
        cart[:, 0] = np.linspace(0.0, 1.0, cart.shape[0])
        posture = np.vstack([
            jpath, np.linspace(q_pre, q_press, APPROACH_SAMPLES)])
        try:
            return _finish_plan(chain, world, target, cart, posture,
                                (sweep.shape[0], cart.shape[0]))
        except NoFeasiblePlan as exc:
            last_error = exc
    raise last_error


def plan_reference_path(chain, world, target, guide=None):
    """Deterministic collision-clear press path for one target.

    Low-face targets are approached directly through the pre-approach
    point; high-face targets first wrap around the box along a shared
    joint path to the face center's pre-approach point, then move to the
    target's own. Targets the shared wrap cannot reach cleanly fall back
    to an independent plan. The wrap is planned once per face (pass
    guide to reuse it). Raises NoFeasiblePlan when no tracked path is
    feasible, goal-reaching, and collision-clear.
    """
    if target.face_id == "high":
        guide = guide or wrap_guide(chain, world, target.face_id)
        try:
            return _plan_high(chain, world, target, guide)
        except NoFeasiblePlan:
            return _plan_high_solo(chain, world, target)
    return _plan_low(chain, world, target)


# ---------------------------------------------------------------------------
# corruption


def _smooth_noise(rng, T, columns=3):
    """Unit-std low-pass-filtered white noise, zero at the first sample."""
    white = rng.normal(size=(T + 48, columns))
    win = np.hanning(49)
    win /= win.sum()
    smooth = np.column_stack([np.convolve(white[:, c], win, mode="valid")
                              for c in range(columns)])[:T]
    smooth -= smooth[0]
    std = smooth.std()
    if std > 0:
        smooth /= std
    return smooth


def _rotation_about(axis, angle):
    axis = axis / np.linalg.norm(axis)
    K = np.array([[0.0, -axis[2], axis[1]],
                  [axis[2], 0.0, -axis[0]],
                  [-axis[1], axis[0], 0.0]])
    return np.eye(3) + np.sin(angle) * K + (1.0 - np.cos(angle)) * K @ K


def corrupt_path(reference, profile, session, trial, seed,
                 demonstrator_id="synthetic"):
    """One demonstration: the reference path degraded per the profile.

    Smooth Cartesian noise and detour bumps shrink with the profile's
    improvement rate as trials accumulate; approach-direction jitter
    reflects (1 - approach_consistency) throughout. The corrupted path is
    re-solved by the tracking controller, and the resulting joint motion
    is recorded whether or not tracking stayed feasible - sloppy
    demonstrations are data too.
    """
    chain = reference.chain
    rng = np.random.default_rng(seed)
    decay = profile.decay(session, trial)
    cart = reference.cart.copy()
    T = cart.shape[0]
    phases = cart[:, 0]
    noise_std = profile.base_noise * decay
    if noise_std > 0.0:
        cart[:, 1:4] += noise_std * _smooth_noise(rng, T)
    detour_amp = profile.detour_amp * decay
    if detour_amp > 0.0:
        for _ in range(2):
            center = rng.uniform(0.2, 0.8)
            width = rng.uniform(0.05, 0.15)
            direction = rng.normal(size=3)
            direction /= np.linalg.norm(direction)
            anchor = cart[int(center * (T - 1)), 1:4]
            toward_box = reference.box_center - anchor
            toward_box /= np.linalg.norm(toward_box)
            direction = ((1.0 - profile.collision_proneness) * direction
                         + profile.collision_proneness * toward_box)
            direction /= np.linalg.norm(direction)
            amp = detour_amp * abs(rng.normal())
            bump = np.exp(-0.5 * ((phases - center) / width) ** 2)
            bump[0] = 0.0
            cart[:, 1:4] += amp * bump[:, None] * direction
    wobble = (1.0 - profile.approach_consistency) * 0.5 * rng.normal()
    if wobble != 0.0:
        a0 = reference.approach_start
        axis = rng.normal(size=3)
        R = _rotation_about(axis, wobble)
        rel = cart[a0:, 1:4] - cart[a0, 1:4]
        cart[a0:, 1:4] = cart[a0, 1:4] + rel @ R.T
    jt = track_segments(chain, chain.start_config, cart, reference.posture,
                        reference.bounds)
    meta = DemoMeta(target_id=reference.target.target_id,
                    face_id=reference.target.face_id,
                    session=session, trial=trial,
                    demonstrator_id=demonstrator_id)
    return make_demonstration(chain, phases, jt.joints, meta)


# ---------------------------------------------------------------------------
# cohort generation


class CohortData:
    """Generated demonstrations keyed by (demonstrator, session, trial,
    face), plus the spec and profiles that produced them."""

    def __init__(self, spec, profiles, sets):
        self.spec = spec
        self.profiles = dict(profiles)
        self.sets = dict(sets)

    def __len__(self):
        return sum(len(s) for s in self.sets.values())

    def __getitem__(self, key):
        return self.sets[key]

    def keys(self):
        return sorted(self.sets.keys(),
                      key=lambda k: (k[0], k[1], k[2], k[3]))

    def items(self):
        return [(k, self.sets[k]) for k in self.keys()]

    def save(self, root):
        root = Path(root)
        for (who, session, trial, face), demoset in self.items():
            save_demoset(demoset, root / who / str(session) / str(trial)
                         / face)


def _demo_seed(spec, who_index, session, trial, face, target_id):
    face_index = FACES.index(face)
    return np.random.SeedSequence((spec.seed, who_index, session, trial,
                                   face_index, target_id))


def _jittered(profile, rng):
    """Per-demonstrator individual variation around a base profile."""
    return DemonstratorProfile(
        base_noise=profile.base_noise * rng.uniform(0.8, 1.2),
        detour_amp=profile.detour_amp * rng.uniform(0.8, 1.2),
        approach_consistency=float(np.clip(
            profile.approach_consistency + rng.uniform(-0.02, 0.02),
            0.0, 1.0)),
        improvement_rate=float(np.clip(
            profile.improvement_rate + rng.uniform(-0.05, 0.05), 0.0, 1.0)),
        collision_proneness=profile.collision_proneness)


def default_chain():
    return load_chain(data_path("pr2_right_arm.json"))


def default_world():
    return load_world(data_path("world_default.json"))


def reference_plans(spec, chain, world):
    """One plan per (face, demonstrated target), computed once."""
    plans = {}
    for face in FACES:
        guide = wrap_guide(chain, world, face) if face == "high" else None
        for target in world.demonstrated_targets(face):
            if target.target_id >= spec.targets_per_face:
                continue
            plans[(face, target.target_id)] = plan_reference_path(
                chain, world, target, guide=guide)
    return plans


def generate_cohort(spec, fast_profile=None, slow_profile=None, chain=None,
                    world=None, out_dir=None, plans=None):
    """Synthesize the whole cohort; deterministic in spec.seed.

    Returns CohortData; when out_dir is given the demonstrations are also
    written as one JSON file per target under
    out_dir/<demonstrator>/<session>/<trial>/<face>/.
    """
    fast_profile = fast_profile or FAST_PROFILE
    slow_profile = slow_profile or SLOW_PROFILE
    chain = chain or default_chain()
    world = world or default_world()
    if plans is None:
        plans = reference_plans(spec, chain, world)
    sets = {}
    profiles = {"fast": fast_profile, "slow": slow_profile}
    for who_index, who in enumerate(spec.demonstrators):
        base = fast_profile if who.startswith("fast") else slow_profile
        rng = np.random.default_rng(
            np.random.SeedSequence((spec.seed, 7919, who_index)))
        profile = _jittered(base, rng)
        for session in range(1, spec.sessions + 1):
            for trial in range(1, spec.trials_per_face + 1):
                for face in FACES:
                    demos = []
                    for tid in range(spec.targets_per_face):
                        seed = _demo_seed(spec, who_index, session, trial,
                                          face, tid)
                        demos.append(corrupt_path(
                            plans[(face, tid)], profile, session, trial,
                            seed, demonstrator_id=who))
                    sets[(who, session, trial, face)] = DemoSet(demos)
    data = CohortData(spec, profiles, sets)
    if out_dir is not None:
        data.save(out_dir)
    return data


def load_cohort(chain, root):
    """Read a saved cohort directory back into DemoSets."""
    root = Path(root)
    sets = {}
    for demodir in sorted(root.glob("*/*/*/*")):
        face = demodir.name
        if face not in FACES or not demodir.is_dir():
            continue
        trial = int(demodir.parent.name)
        session = int(demodir.parent.parent.name)
        who = demodir.parent.parent.parent.name
        sets[(who, session, trial, face)] = load_demoset(chain, demodir)
    return sets
