"""Kernel backend selection.

The compiled extension is used when available; otherwise the pure-NumPy
module provides the same functions at the same semantics (slower). Set
DEMOQUAL_BACKEND=numpy to force the fallback, e.g. for parity checks.
Both backends produce results equal to rounding error, so the choice
never affects outcomes, only speed.
"""

import os

from . import _numpy as numpy_backend

_forced = os.environ.get("DEMOQUAL_BACKEND", "").strip().lower()

if _forced == "numpy":
    impl = numpy_backend
    BACKEND = "numpy"
else:
    try:
        from . import _native as impl  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        if _forced == "native":
            raise
        impl = numpy_backend
        BACKEND = "numpy"

fk_pose = impl.fk_pose
fk_frames = impl.fk_frames
jacobian = impl.jacobian
traj_tip_poses = impl.traj_tip_poses
traj_geometry = impl.traj_geometry
clik_track = impl.clik_track
point_box_distance = impl.point_box_distance
segment_box_distance = impl.segment_box_distance
goal_contact_index = impl.goal_contact_index
collision_sweep = impl.collision_sweep
