"""Button-box environment: cube geometry, targets, reach and collision tests.

The world is a single cube in the robot base frame with two instrumented
faces: a "low" face placed toward the robot and a "high" face on the far
side that the arm has to wrap around. Each face carries 9 demonstrated
button positions (center, four inset corners, four corner-to-center
midpoints) plus a 7x7 interior grid of novel targets used to probe
generalization. A target counts as reached when any point of the oriented
tool-tip box comes within goal_radius of the target center; a reproduction
is clean when no link capsule penetrates the cube (tip presses near the
goal excepted) and no non-adjacent capsule pair self-intersects.
"""

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import _kernels
from .demonstrations import FACES
from .errors import (EmptyDemonstration, FileMissing, SchemaViolation,
                     UnknownFace)
from .kinematics import Pose, trajectory_capsules
from .rotations import quat_to_matrix

CUBE_FACE_KEYS = ("+x", "-x", "+y", "-y", "+z", "-z")

DEFAULT_EDGE = 0.26
DEFAULT_GOAL_RADIUS = 0.015
DEFAULT_CORNER_INSET = 0.02

_AXES = np.eye(3)


def _face_basis(key):
    """Outward normal and in-plane (u, v) axes of a cube face, box frame.

    u and v run along the two remaining coordinate axes in cyclic order,
    so the mapping is fixed by the face key alone.
    """
    axis = "xyz".index(key[1])
    sign = 1.0 if key[0] == "+" else -1.0
    normal = sign * _AXES[axis]
    u_axis = _AXES[(axis + 1) % 3]
    v_axis = _AXES[(axis + 2) % 3]
    return normal, u_axis, v_axis


@dataclass(frozen=True, eq=False)
class Target:
    """One button position: face coordinates plus its base-frame point."""

    target_id: int
    face_id: str
    uv: tuple
    position: np.ndarray
    kind: str

    def __post_init__(self):
        object.__setattr__(self, "uv", (float(self.uv[0]), float(self.uv[1])))
        pos = np.asarray(self.position, dtype=float)
        pos.setflags(write=False)
        object.__setattr__(self, "position", pos)


@dataclass(frozen=True)
class CollisionReport:
    """Outcome of sweeping one joint trajectory against the scene.

    box_index / self_index are the first offending sample indices;
    box_link is the capsule that hit the cube and self_pair the capsule
    pair that folded together. All None when the trajectory is clear.
    """

    box_hit: bool
    box_index: int = None
    box_link: int = None
    self_hit: bool = False
    self_index: int = None
    self_pair: tuple = None

    @property
    def clear(self):
        return not (self.box_hit or self.self_hit)


class TaskWorld:
    """A cube with two instrumented faces, fixed in the base frame."""

    def __init__(self, box_pose, edge=DEFAULT_EDGE,
                 goal_radius=DEFAULT_GOAL_RADIUS,
                 corner_inset=DEFAULT_CORNER_INSET, face_assignments=None):
        if not isinstance(box_pose, Pose):
            raise SchemaViolation("box_pose must be a Pose")
        edge = float(edge)
        goal_radius = float(goal_radius)
        corner_inset = float(corner_inset)
        if edge <= 0:
            raise SchemaViolation("edge must be positive")
        if goal_radius <= 0:
            raise SchemaViolation("goal_radius must be positive")
        if not 0 <= corner_inset < edge / 2:
            raise SchemaViolation("corner_inset must be in [0, edge/2)")
        assignments = dict(face_assignments
                           or {"low": "-x", "high": "+x"})
        if set(assignments) != set(FACES):
            raise SchemaViolation(f"face_assignments needs keys {FACES}")
        for key in assignments.values():
            if key not in CUBE_FACE_KEYS:
                raise SchemaViolation(f"unknown cube face {key!r}")
        if len(set(assignments.values())) != len(assignments):
            raise SchemaViolation("instrumented faces must be distinct")
        self.box_pose = box_pose
        self.edge = edge
        self.goal_radius = goal_radius
        self.corner_inset = corner_inset
        self.face_assignments = assignments
        self.half_extents = np.full(3, edge / 2.0)
        self.box_rotation = quat_to_matrix(box_pose.orientation)
        self.half_extents.setflags(write=False)
        self.box_rotation.setflags(write=False)

    @property
    def grid_spacing(self):
        return self.edge / 8.0

    def _cube_face(self, face_id):
        try:
            return self.face_assignments[face_id]
        except KeyError:
            raise UnknownFace(f"no face named {face_id!r}; have "
                              f"{sorted(self.face_assignments)}") from None

    def face_point(self, face_id, u, v):
        """Base-frame point at face coordinates (u, v) in [0, edge]^2."""
        normal, u_axis, v_axis = _face_basis(self._cube_face(face_id))
        half = self.edge / 2.0
        local = (normal * half + (u - half) * u_axis + (v - half) * v_axis)
        return self.box_pose.position + self.box_rotation @ local

    def face_normal(self, face_id):
        """Outward unit normal of an instrumented face, base frame."""
        normal, _, _ = _face_basis(self._cube_face(face_id))
        return self.box_rotation @ normal

    def face_axes(self, face_id):
        """In-plane (u, v) unit axes of a face, base frame."""
        _, u_axis, v_axis = _face_basis(self._cube_face(face_id))
        return self.box_rotation @ u_axis, self.box_rotation @ v_axis

    def demonstrated_targets(self, face_id):
        """The 9 button positions used for teaching, center first.

        Order: center, the 4 inset corners (lexicographic uv), then the
        midpoint of each corner-center pair in the same corner order.
        """
        self._cube_face(face_id)
        c = self.edge / 2.0
        lo = self.corner_inset
        hi = self.edge - self.corner_inset
        corners = [(lo, lo), (lo, hi), (hi, lo), (hi, hi)]
        uvs = [(c, c)]
        uvs += corners
        uvs += [((u + c) / 2.0, (v + c) / 2.0) for u, v in corners]
        return [Target(i, face_id, uv, self.face_point(face_id, *uv),
                       "demonstrated") for i, uv in enumerate(uvs)]

    def generalization_grid(self, face_id):
        """The 7x7 interior grid of novel targets, row-major in (u, v)."""
        self._cube_face(face_id)
        step = self.grid_spacing
        targets = []
        for i in range(1, 8):
            for j in range(1, 8):
                uv = (i * step, j * step)
                targets.append(Target(len(targets), face_id, uv,
                                      self.face_point(face_id, *uv), "grid"))
        return targets

    def to_dict(self):
        return {
            "box_pose": {
                "position": self.box_pose.position.tolist(),
                "orientation": self.box_pose.orientation.tolist(),
            },
            "edge": self.edge,
            "goal_radius": self.goal_radius,
            "corner_inset": self.corner_inset,
            "face_assignments": dict(self.face_assignments),
        }

    @classmethod
    def from_dict(cls, d):
        try:
            pose = Pose(d["box_pose"]["position"],
                        d["box_pose"]["orientation"])
            return cls(pose, edge=d["edge"], goal_radius=d["goal_radius"],
                       corner_inset=d["corner_inset"],
                       face_assignments=d["face_assignments"])
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaViolation(f"bad world config: {exc}") from exc


def load_world(path):
    path = Path(path)
    if not path.exists():
        raise FileMissing(f"world config not found: {path}")
    with open(path) as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"world config is not JSON: {exc}") from exc
    return TaskWorld.from_dict(payload)


def save_world(world, path):
    with open(path, "w") as f:
        json.dump(world.to_dict(), f, indent=2)
        f.write("\n")


def _tip_box_center(chain, tip_pose):
    """The tool-tip box sits forward of the flange along tool z."""
    R = quat_to_matrix(tip_pose.orientation)
    return tip_pose.position + R[:, 2] * (chain.tip_box[2] / 2.0), R


def goal_reached(chain, tip_pose, world, target):
    """True when the oriented tip box touches the target's goal sphere."""
    center, R = _tip_box_center(chain, tip_pose)
    dist = _kernels.point_box_distance(target.position, center, R,
                                       chain.tip_box / 2.0)
    return dist <= world.goal_radius


def first_goal_contact(chain, joints, world, target):
    """First sample index where the tip touches the goal sphere, -1 if none."""
    Q = np.asarray(getattr(joints, "joints", joints), dtype=float)
    seg_a, seg_b, _, tip_quat = trajectory_capsules(chain, Q)
    centers = 0.5 * (seg_a[:, 7] + seg_b[:, 7])
    return int(_kernels.goal_contact_index(centers, tip_quat,
                                           chain.tip_box / 2.0,
                                           target.position,
                                           world.goal_radius))


def check_collisions(chain, joint_traj, world, target=None):
    """Sweep a joint trajectory against the cube and the arm itself.

    When a target is given, samples after the first goal contact are
    ignored (the press ends the attempt) and tip-box penetrations whose
    closest cube point lies within goal_radius plus the tip diagonal of
    the target are forgiven — pressing a button requires touching the box.
    Without a target every sample is checked and nothing is exempt.
    """
    Q = np.asarray(getattr(joint_traj, "joints", joint_traj), dtype=float)
    if Q.ndim != 2 or Q.shape[0] < 1:
        raise EmptyDemonstration("collision check needs a (T, 7) trajectory")
    seg_a, seg_b, _, tip_quat = trajectory_capsules(chain, Q)
    exempt = np.zeros(chain.n_capsules, dtype=np.uint8)
    exempt_radius = 0.0
    last_idx = -1
    press_point = world.box_pose.position
    if target is not None:
        exempt[7] = 1
        exempt_radius = world.goal_radius + float(np.linalg.norm(chain.tip_box))
        press_point = target.position
        centers = 0.5 * (seg_a[:, 7] + seg_b[:, 7])
        last_idx = int(_kernels.goal_contact_index(
            centers, tip_quat, chain.tip_box / 2.0, target.position,
            world.goal_radius))
    box_idx, box_link, self_idx, self_i, self_j = _kernels.collision_sweep(
        seg_a, seg_b, chain.capsule_radii, exempt, world.box_pose.position,
        world.box_rotation, world.half_extents, press_point, exempt_radius,
        last_idx, chain.self_pairs)
    return CollisionReport(
        box_hit=box_idx >= 0,
        box_index=int(box_idx) if box_idx >= 0 else None,
        box_link=int(box_link) if box_link >= 0 else None,
        self_hit=self_idx >= 0,
        self_index=int(self_idx) if self_idx >= 0 else None,
        self_pair=(int(self_i), int(self_j)) if self_idx >= 0 else None,
    )
