"""Closed-loop inverse kinematics with demonstration-mimicking null space.

qdot = J* (xdot_d + k_p e) + (I - Jdag J) pi(q)

J* is the damped (singularity-robust) least-squares inverse, e stacks the
position error with the axis-angle of the orientation error quaternion,
and pi(q) pulls toward the phase-matched sample of the closest
demonstration. Trackings that graze joint limits are retried with the
null-space policy blended toward joint midranges and its gain doubled.
"""

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .errors import EmptySet, LengthMismatch, SingularSystem
from .kinematics import forward_kinematics, jacobian, limit_margin
from .rotations import quat_error_vector

FINAL_POS_TOL = 0.005  # m


def _default_kp():
    return np.diag(np.full(6, 10.0))


@dataclass
class ClikParams:
    lam: float = 0.05
    kp: np.ndarray = field(default_factory=_default_kp)
    dt: float = 0.02
    null_gain: float = 1.0
    limit_margin_min: float = 0.05
    max_retries: int = 5

    def __post_init__(self):
        self.kp = np.asarray(self.kp, dtype=float)
        if self.kp.shape != (6, 6):
            raise ValueError("k_p must be 6x6")
        if np.abs(self.kp - self.kp.T).max() > 1e-12 or \
                np.linalg.eigvalsh(self.kp).min() <= 0:
            raise ValueError("k_p must be symmetric positive definite")
        if self.dt <= 0 or self.lam < 0:
            raise ValueError("need dt > 0 and lam >= 0")


class JointTrajectory:
    """Tracked joint trajectory plus the feasibility verdict."""

    def __init__(self, phases, joints, velocities, feasible, reason=None,
                 retries=0, min_margin=np.nan, final_pos_err=np.nan,
                 final_ori_err=np.nan):
        self.phases = np.asarray(phases, dtype=float)
        self.joints = np.asarray(joints, dtype=float)
        self.velocities = np.asarray(velocities, dtype=float)
        self.feasible = bool(feasible)
        self.reason = reason
        self.retries = int(retries)
        self.min_margin = float(min_margin)
        self.final_pos_err = float(final_pos_err)
        self.final_ori_err = float(final_ori_err)

    def __len__(self):
        return self.joints.shape[0]

    def write_csv(self, path):
        with open(Path(path), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"q{i}" for i in range(1, 8)]
                       + ["feasible", "reason"])
            for t, q in zip(self.phases, self.joints):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in q]
                           + [int(self.feasible), self.reason or ""])


def sr_inverse(jac, lam):
    """Damped least-squares inverse J^T (J J^T + lam^2 I)^-1."""
    jac = np.asarray(jac, dtype=float)
    JJt = jac @ jac.T
    if lam == 0.0:
        try:
            return jac.T @ np.linalg.inv(JJt)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem("J J^T singular with zero damping") from exc
    return jac.T @ np.linalg.inv(JJt + lam * lam * np.eye(jac.shape[0]))


def null_projector(jac):
    """I - Jdag J, the orthogonal projector onto null(J).

    Uses the exact inverse of J J^T when it exists and falls back to a
    1e-12 ridge otherwise, so the projector is numerically idempotent for
    full-row-rank Jacobians.
    """
    jac = np.asarray(jac, dtype=float)
    JJt = jac @ jac.T
    try:
        pinv_part = np.linalg.solve(JJt, jac)
    except np.linalg.LinAlgError:
        pinv_part = np.linalg.solve(JJt + 1e-12 * np.eye(jac.shape[0]), jac)
    return np.eye(jac.shape[1]) - jac.T @ pinv_part


def closest_demonstration(demoset, target):
    """Demo whose final tool position is nearest the target position."""
    if len(demoset) == 0:
        raise EmptySet("no demonstrations to pick a policy from")
    target_pos = np.asarray(getattr(target, "position", target), dtype=float)
    dists = [np.linalg.norm(d.positions[-1] - target_pos) for d in demoset]
    return demoset[int(np.argmin(dists))]


def task_error(chain, q, x_d):
    """6-vector error: position difference, orientation axis-angle."""
    pose = forward_kinematics(chain, q)
    e = np.empty(6)
    e[:3] = x_d.position - pose.position
    e[3:] = quat_error_vector(x_d.orientation, pose.orientation)
    return e


def clik_step(chain, q, x_d, xdot_d, q_ref, params):
    """One velocity command of the closed-loop IK law."""
    q = np.asarray(q, dtype=float)
    J = jacobian(chain, q)
    e = task_error(chain, q, x_d)
    qdot = sr_inverse(J, params.lam) @ (np.asarray(xdot_d, dtype=float)
                                        + params.kp @ e)
    pi_vec = params.null_gain * (np.asarray(q_ref, dtype=float) - q)
    return qdot + null_projector(J) @ pi_vec


def _feedforward(cart_traj, dt):
    """Per-sample desired twist from finite differences of the path."""
    T = cart_traj.shape[0]
    vel = np.zeros((T, 6))
    pos = cart_traj[:, 1:4]
    quat = cart_traj[:, 4:8]
    vel[:-1, :3] = np.diff(pos, axis=0) / dt
    for t in range(T - 1):
        vel[t, 3:] = quat_error_vector(quat[t + 1], quat[t]) / dt
    return vel


def track_trajectory(chain, q0, cart_traj, policy_demo, params=None):
    """Integrate the IK law along cart_traj (T, 8 state rows).

    policy_demo supplies the index-aligned null-space reference joints;
    trackings whose limit margin dips under limit_margin_min are retried
    with the reference blended 50/50 toward joint midranges and the
    null-space gain doubled, up to max_retries times.
    """
    params = params or ClikParams()
    cart_traj = np.asarray(cart_traj, dtype=float)
    if cart_traj.ndim != 2 or cart_traj.shape[1] != 8 or \
            cart_traj.shape[0] < 2:
        raise LengthMismatch("cart_traj must be (T >= 2, 8)")
    q0 = np.asarray(q0, dtype=float)
    T = cart_traj.shape[0]
    q_ref = np.asarray(policy_demo.joints, dtype=float)
    if q_ref.shape[0] != T:
        raise LengthMismatch(f"policy demo has {q_ref.shape[0]} samples, "
                             f"path has {T}")
    pos_d = np.ascontiguousarray(cart_traj[:, 1:4])
    quat_d = np.ascontiguousarray(cart_traj[:, 4:8])
    vel_d = _feedforward(cart_traj, params.dt)
    blended = 0.5 * q_ref + 0.5 * chain.midrange
    retries = 0
    while True:
        gain = params.null_gain * (2.0 ** retries)
        ref = q_ref if retries == 0 else blended
        Q, Qd, min_margin, pos_err, ori_err = _kernels.clik_track(
            chain.dh, chain.limits, q0, pos_d, quat_d, vel_d, ref,
            params.lam, params.kp, params.dt, gain)
        if min_margin >= params.limit_margin_min or \
                retries >= params.max_retries:
            break
        retries += 1
    feasible = (min_margin >= params.limit_margin_min
                and pos_err <= FINAL_POS_TOL)
    # a blown position tolerance is the primary pathology; limit grazing
    # while stretching after an unreachable target is only a symptom
    reason = None
    if not feasible:
        reason = "divergence" if pos_err > FINAL_POS_TOL else "limits"
    return JointTrajectory(cart_traj[:, 0], Q, Qd, feasible, reason=reason,
                           retries=retries, min_margin=min_margin,
                           final_pos_err=pos_err, final_ori_err=ori_err)
