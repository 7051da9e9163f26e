"""7-DoF serial arm model: forward kinematics, Jacobians, limits, capsules.

The arm is described by standard DH rows [a, alpha, d, theta0] loaded from
a JSON file, so any 7-joint chain can be swapped in. Link collision
geometry is one capsule per link (joint origin to next joint origin) plus
a capsule bounding the tool-tip box, which extends forward from the tool
flange along tool z like a fingertip.
"""

import json
from collections import namedtuple
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import FileMissing, SchemaViolation

Capsule = namedtuple("Capsule", ["a", "b", "radius"])

_ZERO_LINK = 1e-12


class Pose:
    """Position (m) and unit wxyz quaternion in the base frame."""

    __slots__ = ("position", "orientation")

    def __init__(self, position, orientation):
        p = np.asarray(position, dtype=float)
        q = np.asarray(orientation, dtype=float)
        if p.shape != (3,) or q.shape != (4,):
            raise ValueError("pose needs a 3-vector and a 4-quaternion")
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n < 1e-9:
            raise ValueError("degenerate quaternion")
        self.position = p
        self.orientation = q / n
        self.position.setflags(write=False)
        self.orientation.setflags(write=False)

    def __repr__(self):
        return f"Pose(position={self.position!r}, orientation={self.orientation!r})"


class KinematicChain:
    """Immutable 7-joint chain with limits and collision capsules."""

    def __init__(self, dh, limits, link_radii, tip_box, start_config,
                 name="chain"):
        dh = np.asarray(dh, dtype=float)
        limits = np.asarray(limits, dtype=float)
        link_radii = np.asarray(link_radii, dtype=float)
        tip_box = np.asarray(tip_box, dtype=float)
        start_config = np.asarray(start_config, dtype=float)
        if dh.shape != (7, 4):
            raise SchemaViolation("dh must be 7 rows of [a, alpha, d, theta0]")
        if limits.shape != (7, 2):
            raise SchemaViolation("limits must be 7 (lower, upper) pairs")
        if np.any(limits[:, 0] >= limits[:, 1]):
            raise SchemaViolation("each joint needs lower < upper")
        if link_radii.shape != (7,) or np.any(link_radii <= 0):
            raise SchemaViolation("link_radii must be 7 positive radii")
        if tip_box.shape != (3,) or np.any(tip_box <= 0):
            raise SchemaViolation("tip_box must be positive [W, L, H]")
        if start_config.shape != (7,):
            raise SchemaViolation("start_config must have 7 joint angles")
        self.name = str(name)
        self.dh = dh
        self.limits = limits
        self.link_radii = link_radii
        self.tip_box = tip_box
        self.start_config = start_config
        # capsule radius bounding the tip box cross-section
        self.tip_radius = float(np.hypot(tip_box[0] / 2.0, tip_box[1] / 2.0))
        self.capsule_radii = np.append(link_radii, self.tip_radius)
        self.midrange = limits.mean(axis=1)
        self.self_pairs = self._self_collision_pairs()
        for arr in (self.dh, self.limits, self.link_radii, self.tip_box,
                    self.start_config, self.capsule_radii, self.midrange,
                    self.self_pairs):
            arr.setflags(write=False)

    @property
    def n_joints(self):
        return 7

    @property
    def n_capsules(self):
        return 8

    def _self_collision_pairs(self):
        """Capsule index pairs eligible for self-collision checks.

        Capsule i spans joint origin i to i+1, so its length is
        sqrt(a_i^2 + d_i^2) regardless of q. Two capsules separated only
        by zero-length capsules share an origin permanently (co-located
        joint cluster) and are structurally adjacent; everything else can
        genuinely fold onto itself and gets checked.
        """
        lengths = np.hypot(self.dh[:, 0], self.dh[:, 2])
        lengths = np.append(lengths, self.tip_box[2])
        pairs = []
        n = lengths.shape[0]
        for i in range(n):
            for j in range(i + 1, n):
                if np.all(lengths[i + 1:j] < _ZERO_LINK):
                    continue
                pairs.append((i, j))
        return np.array(pairs, dtype=np.intp).reshape(-1, 2)


def load_chain(path):
    """Read a chain description JSON; see data/pr2_right_arm.json."""
    path = Path(path)
    if not path.exists():
        raise FileMissing(f"chain file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"chain file is not valid JSON: {exc}") from exc
    for key in ("dh", "limits", "link_radii", "tip_box", "start_config"):
        if key not in raw:
            raise SchemaViolation(f"chain file missing key '{key}'")
    try:
        return KinematicChain(raw["dh"], raw["limits"], raw["link_radii"],
                              raw["tip_box"], raw["start_config"],
                              name=raw.get("name", path.stem))
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(f"malformed chain file: {exc}") from exc


def forward_kinematics(chain, q):
    """Tool-frame pose in the base frame."""
    pos, quat = _kernels.fk_pose(chain.dh, np.asarray(q, dtype=float))
    return Pose(pos, quat)


def jacobian(chain, q):
    """6x7 geometric Jacobian of the tool frame (rows: linear, angular)."""
    return _kernels.jacobian(chain.dh, np.asarray(q, dtype=float))


def limit_margin(chain, q):
    """Per-joint distance to the nearest limit; negative when violated."""
    q = np.asarray(q, dtype=float)
    return np.minimum(q - chain.limits[:, 0], chain.limits[:, 1] - q)


def link_capsules(chain, q):
    """Collision capsules at configuration q: 7 links plus the tip."""
    origins, _, R = _kernels.fk_frames(chain.dh, np.asarray(q, dtype=float))
    caps = [Capsule(origins[i], origins[i + 1], chain.link_radii[i])
            for i in range(7)]
    tip_a = origins[-1]
    tip_b = tip_a + chain.tip_box[2] * R[:, 2]
    caps.append(Capsule(tip_a, tip_b, chain.tip_radius))
    return caps


def trajectory_capsules(chain, Q):
    """Capsule segment endpoints for a whole joint trajectory.

    Returns (seg_a, seg_b), each (T, 8, 3), plus tool positions (T, 3)
    and quaternions (T, 4) so callers get tip poses for free.
    """
    Q = np.asarray(Q, dtype=float)
    origins, tip_pos, tip_quat, tool_z = _kernels.traj_geometry(chain.dh, Q)
    seg_a = np.concatenate([origins[:, :-1], tip_pos[:, None]], axis=1)
    seg_b = np.concatenate([origins[:, 1:],
                            (tip_pos + chain.tip_box[2] * tool_z)[:, None]],
                           axis=1)
    return seg_a, seg_b, tip_pos, tip_quat


def trajectory_tip_poses(chain, Q):
    """Tool positions (T,3) and wxyz quaternions (T,4) along Q."""
    return _kernels.traj_tip_poses(chain.dh, np.asarray(Q, dtype=float))
