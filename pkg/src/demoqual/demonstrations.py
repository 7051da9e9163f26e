"""Demonstration records and preprocessing.

A demonstration is a joint-space recording plus its derived task-space
state sequence xi = (t, x, quat) per sample. Sets of demonstrations for
one face are time-aligned by dynamic time warping against the medoid
demonstration and resampled to a fixed length on a normalized phase axis
before any model fitting.
"""

import csv
import json
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import (EmptyDemonstration, EmptySet, FileMissing,
                     NonMonotonicTime, SchemaViolation)

FACES = ("low", "high")

DEFAULT_ALIGNED_LENGTH = 100


@dataclass(frozen=True)
class DemoMeta:
    target_id: int
    face_id: str
    session: int
    trial: int
    demonstrator_id: str

    def __post_init__(self):
        if self.face_id not in FACES:
            raise SchemaViolation(f"face_id must be one of {FACES}, "
                                  f"got {self.face_id!r}")

    def to_dict(self):
        return {"target_id": self.target_id, "face_id": self.face_id,
                "session": self.session, "trial": self.trial,
                "demonstrator_id": self.demonstrator_id}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(target_id=int(d["target_id"]), face_id=d["face_id"],
                       session=int(d["session"]), trial=int(d["trial"]),
                       demonstrator_id=str(d["demonstrator_id"]))
        except KeyError as exc:
            raise SchemaViolation(f"demo meta missing key {exc}") from exc


class Demonstration:
    """One recorded motion: timestamps, joint angles, derived xi states.

    states is (N, 8): column 0 time (or phase after alignment), columns
    1:4 tool position, columns 4:8 unit wxyz quaternion with consecutive
    samples kept on the same quaternion hemisphere.
    """

    def __init__(self, times, joints, states, meta):
        self.times = np.asarray(times, dtype=float)
        self.joints = np.asarray(joints, dtype=float)
        self.states = np.asarray(states, dtype=float)
        self.meta = meta
        n = self.times.shape[0]
        if self.joints.shape != (n, 7) or self.states.shape != (n, 8):
            raise SchemaViolation("demonstration arrays disagree on length")

    def __len__(self):
        return self.times.shape[0]

    @property
    def positions(self):
        return self.states[:, 1:4]

    @property
    def quats(self):
        return self.states[:, 4:8]


def derive_states(chain, times, joints):
    """FK every sample into xi = (t, x, quat) with hemisphere continuity."""
    times = np.asarray(times, dtype=float)
    joints = np.asarray(joints, dtype=float)
    if times.ndim != 1 or joints.shape != (times.shape[0], 7):
        raise SchemaViolation("need times (N,) and joints (N, 7)")
    if times.shape[0] == 0:
        raise EmptyDemonstration("no samples")
    if np.any(np.diff(times) <= 0):
        raise NonMonotonicTime("timestamps must be strictly increasing")
    pos, quat = _kernels.traj_tip_poses(chain.dh, joints)
    quat = _fix_hemisphere(quat)
    states = np.empty((times.shape[0], 8))
    states[:, 0] = times
    states[:, 1:4] = pos
    states[:, 4:8] = quat
    return states


def _fix_hemisphere(quat):
    quat = quat.copy()
    if quat[0, 0] < 0:
        quat[0] = -quat[0]
    for i in range(1, quat.shape[0]):
        if np.dot(quat[i], quat[i - 1]) < 0:
            quat[i] = -quat[i]
    return quat


def make_demonstration(chain, times, joints, meta):
    return Demonstration(times, joints, derive_states(chain, times, joints),
                         meta)


class DemoSet:
    """Demonstrations of one face; aligned_length set once dtw_align ran."""

    def __init__(self, demos, aligned_length=None):
        demos = list(demos)
        if demos:
            face = demos[0].meta.face_id
            if any(d.meta.face_id != face for d in demos):
                raise SchemaViolation("all demos in a set must share face_id")
        if aligned_length is not None:
            if any(len(d) != aligned_length for d in demos):
                raise SchemaViolation("aligned set has a wrong-length demo")
        self.demos = demos
        self.aligned_length = aligned_length

    def __len__(self):
        return len(self.demos)

    def __iter__(self):
        return iter(self.demos)

    def __getitem__(self, i):
        return self.demos[i]

    @property
    def face_id(self):
        if not self.demos:
            raise EmptySet("empty demonstration set")
        return self.demos[0].meta.face_id

    def states_tensor(self):
        """(M, T, 8) stack of aligned states."""
        if self.aligned_length is None:
            raise SchemaViolation("set must be aligned first")
        return np.stack([d.states for d in self.demos])

    def joints_tensor(self):
        if self.aligned_length is None:
            raise SchemaViolation("set must be aligned first")
        return np.stack([d.joints for d in self.demos])


# ---------------------------------------------------------------------------
# alignment


def _dtw_path(xa, xb):
    """DTW on Euclidean position cost. Returns (total_cost, path (P,2)).

    Ties prefer the diagonal step, then advancing the first sequence, so
    identical sequences always map to the exact diagonal.
    """
    n, m = xa.shape[0], xb.shape[0]
    d = np.linalg.norm(xa[:, None, :] - xb[None, :, :], axis=2)
    acc = np.full((n, m), np.inf)
    acc[0, 0] = d[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + d[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + d[i, 0]
        row_prev = acc[i - 1]
        row = acc[i]
        for j in range(1, m):
            row[j] = d[i, j] + min(row_prev[j - 1], row_prev[j], row[j - 1])
    i, j = n - 1, m - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            best = min(acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1])
            if acc[i - 1, j - 1] == best:
                i, j = i - 1, j - 1
            elif acc[i - 1, j] == best:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return float(acc[n - 1, m - 1]), np.array(path, dtype=np.intp)


def _dtw_cost(xa, xb):
    return _dtw_path(xa, xb)[0]


def _collapse_onto_ref(values, path, ref_len):
    """Average demo samples per matched reference index.

    The first and last bins keep the original boundary samples instead of
    bin means, so alignment never moves a demo's endpoints.
    """
    out = np.zeros((ref_len,) + values.shape[1:])
    counts = np.zeros(ref_len)
    np.add.at(out, path[:, 1], values[path[:, 0]])
    np.add.at(counts, path[:, 1], 1.0)
    out /= counts.reshape((-1,) + (1,) * (values.ndim - 1))
    out[0] = values[0]
    out[-1] = values[-1]
    return out


def _uniform_resample(values, target_length):
    n = values.shape[0]
    u = np.linspace(0.0, n - 1.0, target_length)
    k = np.minimum(u.astype(np.intp), n - 2)
    f = (u - k).reshape((-1,) + (1,) * (values.ndim - 1))
    return (1.0 - f) * values[k] + f * values[k + 1]


def dtw_align(demoset, target_length=DEFAULT_ALIGNED_LENGTH):
    """Warp every demo of a set to target_length samples on a phase axis.

    Each demo is DTW-matched (Euclidean cost on position) against the
    medoid demonstration, collapsed onto the medoid's time axis, and
    uniformly resampled; the time channel becomes phase in [0, 1]. Joint
    trajectories are warped identically so they stay in register with the
    states. An already-aligned set at the requested length is a fixpoint
    and is returned unchanged.
    """
    if len(demoset) == 0:
        raise EmptySet("cannot align an empty set")
    if demoset.aligned_length == target_length:
        return demoset
    if any(len(d) < 2 for d in demoset):
        raise EmptyDemonstration("alignment needs at least 2 samples per demo")
    M = len(demoset)
    positions = [d.positions for d in demoset]
    cost = np.zeros((M, M))
    for a in range(M):
        for b in range(a + 1, M):
            cost[a, b] = cost[b, a] = _dtw_cost(positions[a], positions[b])
    medoid = int(np.argmin(cost.sum(axis=1)))
    ref_len = len(demoset[medoid])
    ref = positions[medoid]
    phase = np.linspace(0.0, 1.0, target_length)
    out = []
    for demo in demoset:
        _, path = _dtw_path(demo.positions, ref)
        pos = _uniform_resample(
            _collapse_onto_ref(demo.positions, path, ref_len), target_length)
        quat = _uniform_resample(
            _collapse_onto_ref(demo.quats, path, ref_len), target_length)
        quat /= np.linalg.norm(quat, axis=1, keepdims=True)
        quat = _fix_hemisphere(quat)
        joints = _uniform_resample(
            _collapse_onto_ref(demo.joints, path, ref_len), target_length)
        states = np.empty((target_length, 8))
        states[:, 0] = phase
        states[:, 1:4] = pos
        states[:, 4:8] = quat
        out.append(Demonstration(phase.copy(), joints, states, demo.meta))
    return DemoSet(out, aligned_length=target_length)


# ---------------------------------------------------------------------------
# file IO


def _demo_filename(meta):
    return f"target_{meta.target_id}.json"


def save_demoset(demoset, path):
    """Write one JSON per demo into directory `path` (created if missing)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for demo in demoset:
        payload = {
            "meta": demo.meta.to_dict(),
            "samples": [{"t": float(t), "q": [float(v) for v in q]}
                        for t, q in zip(demo.times, demo.joints)],
        }
        (path / _demo_filename(demo.meta)).write_text(
            json.dumps(payload, indent=1))


def load_demonstration(chain, file):
    file = Path(file)
    if not file.exists():
        raise FileMissing(f"demonstration file not found: {file}")
    try:
        raw = json.loads(file.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaViolation(f"{file}: not valid JSON: {exc}") from exc
    if "meta" not in raw or "samples" not in raw:
        raise SchemaViolation(f"{file}: needs 'meta' and 'samples'")
    meta = DemoMeta.from_dict(raw["meta"])
    samples = raw["samples"]
    if not isinstance(samples, list) or not samples:
        raise SchemaViolation(f"{file}: empty or malformed samples")
    times = np.empty(len(samples))
    joints = np.empty((len(samples), 7))
    for i, s in enumerate(samples):
        if "t" not in s or "q" not in s or len(s["q"]) != 7:
            raise SchemaViolation(f"{file}: sample {i} needs t and 7 joint "
                                  "values")
        times[i] = s["t"]
        joints[i] = s["q"]
    return make_demonstration(chain, times, joints, meta)


def load_demoset(chain, path):
    """Read every target_*.json in a directory, ordered by target id."""
    path = Path(path)
    if not path.is_dir():
        raise FileMissing(f"demonstration directory not found: {path}")
    files = sorted(path.glob("target_*.json"),
                   key=lambda p: int(p.stem.split("_")[1]))
    if not files:
        raise EmptySet(f"no demonstration files in {path}")
    return DemoSet([load_demonstration(chain, f) for f in files])


def export_csv(demoset, path):
    """One t,q1..q7 CSV per demo plus an index.csv of metadata."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    index_rows = []
    for k, demo in enumerate(demoset):
        name = f"demo_{k:03d}.csv"
        with open(path / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"q{i}" for i in range(1, 8)])
            for t, q in zip(demo.times, demo.joints):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in q])
        m = demo.meta
        index_rows.append([name, m.demonstrator_id, m.session, m.trial,
                           m.face_id, m.target_id])
    with open(path / "index.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["file", "demonstrator", "session", "trial", "face",
                    "target_id"])
        w.writerows(index_rows)
