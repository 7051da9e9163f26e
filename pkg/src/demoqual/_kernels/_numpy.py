"""Pure-NumPy implementations of the hot kernels.

Reference semantics for the compiled backend: forward kinematics,
geometric Jacobians, the closed-loop IK integration loop, and the
capsule/box collision sweep. Math is kept step-for-step identical to
``_native.pyx`` so the two backends agree to rounding error.

DH rows are [a, alpha, d, theta0] (standard convention):
T_i = Rz(q_i + theta0) Tz(d) Tx(a) Rx(alpha).
"""

import numpy as np

NULL_REG = 1e-12


def _dh_transform(a, alpha, d, theta):
    ct, st = np.cos(theta), np.sin(theta)
    ca, sa = np.cos(alpha), np.sin(alpha)
    return np.array([
        [ct, -st * ca, st * sa, a * ct],
        [st, ct * ca, -ct * sa, a * st],
        [0.0, sa, ca, d],
        [0.0, 0.0, 0.0, 1.0],
    ])


def _matrix_to_quat(R):
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s,
                      (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s,
                      0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s,
                      (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def _chain_transforms(dh, q):
    """Cumulative base-to-frame transforms, one per joint."""
    n = dh.shape[0]
    T = np.eye(4)
    out = np.empty((n, 4, 4))
    for i in range(n):
        a, alpha, d, theta0 = dh[i]
        T = T @ _dh_transform(a, alpha, d, q[i] + theta0)
        out[i] = T
    return out


def fk_pose(dh, q):
    """Tool pose: position (3,) and unit quaternion (4,) wxyz."""
    T = _chain_transforms(dh, q)[-1]
    return T[:3, 3].copy(), _matrix_to_quat(T[:3, :3])


def fk_frames(dh, q):
    """Origins (n+1,3) incl. base, joint z axes (n,3), tool rotation (3,3).

    z axis i is the rotation axis of joint i+1 (frame i-1 z in DH terms),
    so z_axes[0] is the base z.
    """
    n = dh.shape[0]
    Ts = _chain_transforms(dh, q)
    origins = np.zeros((n + 1, 3))
    z_axes = np.zeros((n, 3))
    z_axes[0] = [0.0, 0.0, 1.0]
    for i in range(n):
        origins[i + 1] = Ts[i][:3, 3]
        if i + 1 < n:
            z_axes[i + 1] = Ts[i][:3, 2]
    return origins, z_axes, Ts[-1][:3, :3].copy()


def jacobian(dh, q):
    """Geometric Jacobian of the tool frame, rows [linear; angular]."""
    origins, z_axes, _ = fk_frames(dh, q)
    tip = origins[-1]
    n = dh.shape[0]
    J = np.zeros((6, n))
    for i in range(n):
        J[:3, i] = np.cross(z_axes[i], tip - origins[i])
        J[3:, i] = z_axes[i]
    return J


def traj_tip_poses(dh, Q):
    """Tool poses along a joint trajectory: (T,3) positions, (T,4) quats."""
    T = Q.shape[0]
    pos = np.empty((T, 3))
    quat = np.empty((T, 4))
    for t in range(T):
        pos[t], quat[t] = fk_pose(dh, Q[t])
    return pos, quat


def traj_geometry(dh, Q):
    """Joint origins, tool pose and tool z axis per trajectory sample."""
    T = Q.shape[0]
    n = dh.shape[0]
    origins = np.empty((T, n + 1, 3))
    tip_pos = np.empty((T, 3))
    tip_quat = np.empty((T, 4))
    tool_z = np.empty((T, 3))
    for t in range(T):
        o, _, R = fk_frames(dh, Q[t])
        origins[t] = o
        tip_pos[t] = o[-1]
        tip_quat[t] = _matrix_to_quat(R)
        tool_z[t] = R[:, 2]
    return origins, tip_pos, tip_quat, tool_z


def _quat_error(qd, qa):
    """angle*axis of the rotation taking qa onto qd, angle in (-pi, pi]."""
    w = qd[0] * qa[0] + qd[1] * qa[1] + qd[2] * qa[2] + qd[3] * qa[3]
    x = -qd[0] * qa[1] + qd[1] * qa[0] - qd[2] * qa[3] + qd[3] * qa[2]
    y = -qd[0] * qa[2] + qd[1] * qa[3] + qd[2] * qa[0] - qd[3] * qa[1]
    z = -qd[0] * qa[3] - qd[1] * qa[2] + qd[2] * qa[1] + qd[3] * qa[0]
    norm = np.sqrt(x * x + y * y + z * z)
    if norm < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(norm, min(max(w, -1.0), 1.0))
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return angle / norm * np.array([x, y, z])


def clik_track(dh, limits, q0, pos_d, quat_d, vel_d, q_ref, lam, kp, dt,
               null_gain):
    """Integrate the closed-loop IK law along a Cartesian trajectory.

    qdot = J^T (J J^T + lam^2 I)^-1 (v_ff + kp e)
           + (I - Jdag J) null_gain (q_ref - q)

    Returns (Q, Qd, min_margin, final_pos_err, final_ori_err). min_margin
    is the smallest distance to a joint limit seen anywhere on the output.
    """
    T = pos_d.shape[0]
    n = dh.shape[0]
    Q = np.empty((T, n))
    Qd = np.zeros((T, n))
    q = np.array(q0, dtype=float)
    Q[0] = q
    min_margin = np.min(np.minimum(q - limits[:, 0], limits[:, 1] - q))
    I6 = np.eye(6)
    for t in range(T - 1):
        pos, quat = fk_pose(dh, q)
        e = np.empty(6)
        e[:3] = pos_d[t] - pos
        e[3:] = _quat_error(quat_d[t], quat)
        J = jacobian(dh, q)
        JJt = J @ J.T
        task = vel_d[t] + kp @ e
        qdot = J.T @ np.linalg.solve(JJt + lam * lam * I6, task)
        pi_vec = null_gain * (q_ref[t] - q)
        qdot += pi_vec - J.T @ np.linalg.solve(JJt + NULL_REG * I6, J @ pi_vec)
        q = q + dt * qdot
        Qd[t] = qdot
        Q[t + 1] = q
        margin = np.min(np.minimum(q - limits[:, 0], limits[:, 1] - q))
        min_margin = min(min_margin, margin)
    pos, quat = fk_pose(dh, q)
    final_pos_err = float(np.linalg.norm(pos_d[-1] - pos))
    final_ori_err = float(np.linalg.norm(_quat_error(quat_d[-1], quat)))
    return Q, Qd, float(min_margin), final_pos_err, final_ori_err


# ---------------------------------------------------------------------------
# distance queries


def point_box_distance(p, center, R, half):
    """Distance from a point to an oriented box (0 inside)."""
    local = R.T @ (np.asarray(p, dtype=float) - center)
    clamped = np.clip(local, -half, half)
    return float(np.linalg.norm(local - clamped))


def segment_box_distance(a, b, center, R, half):
    """Distance from segment ab to an oriented box, plus the closest box point.

    Distance along the segment to a convex set is convex in the segment
    parameter, so a ternary search converges to the global minimum.
    """
    la = R.T @ (np.asarray(a, dtype=float) - center)
    lb = R.T @ (np.asarray(b, dtype=float) - center)
    lo, hi = 0.0, 1.0
    for _ in range(64):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        p1 = la + m1 * (lb - la)
        p2 = la + m2 * (lb - la)
        d1 = np.linalg.norm(p1 - np.clip(p1, -half, half))
        d2 = np.linalg.norm(p2 - np.clip(p2, -half, half))
        if d1 <= d2:
            hi = m2
        else:
            lo = m1
    s = 0.5 * (lo + hi)
    p = la + s * (lb - la)
    clamped = np.clip(p, -half, half)
    dist = float(np.linalg.norm(p - clamped))
    return dist, center + R @ clamped


def _segment_segment_distance(p1, q1, p2, q2):
    """Closest distance between segments p1q1 and p2q2 (Ericson)."""
    d1 = q1 - p1
    d2 = q2 - p2
    r = p1 - p2
    a = np.dot(d1, d1)
    e = np.dot(d2, d2)
    f = np.dot(d2, r)
    eps = 1e-14
    if a <= eps and e <= eps:
        return float(np.linalg.norm(r))
    if a <= eps:
        s = 0.0
        t = np.clip(f / e, 0.0, 1.0)
    else:
        c = np.dot(d1, r)
        if e <= eps:
            t = 0.0
            s = np.clip(-c / a, 0.0, 1.0)
        else:
            b = np.dot(d1, d2)
            denom = a * e - b * b
            s = np.clip((b * f - c * e) / denom, 0.0, 1.0) if denom > eps else 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = np.clip(-c / a, 0.0, 1.0)
            elif t > 1.0:
                t = 1.0
                s = np.clip((b - c) / a, 0.0, 1.0)
    closest1 = p1 + s * d1
    closest2 = p2 + t * d2
    return float(np.linalg.norm(closest1 - closest2))


def goal_contact_index(tip_pos, tip_quat, tip_half, target, goal_radius):
    """First sample where the oriented tip box touches the goal sphere, -1 if none."""
    T = tip_pos.shape[0]
    for t in range(T):
        w, x, y, z = tip_quat[t]
        R = np.array([
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ])
        if point_box_distance(target, tip_pos[t], R, tip_half) <= goal_radius:
            return t
    return -1


def collision_sweep(seg_a, seg_b, radii, exempt, center, R, half, target,
                    exempt_radius, last_idx, self_pairs):
    """Scan a capsule trajectory for box and self collisions.

    seg_a/seg_b: (T, L, 3) capsule segment endpoints in the base frame.
    Samples with index > last_idx are ignored (last_idx < 0 means all).
    For capsules flagged in ``exempt``, a box penetration is forgiven when
    the closest box point lies within exempt_radius of the target (the
    press region).

    Returns (box_idx, box_link, self_idx, self_i, self_j), -1 for no hit.
    """
    T, L = seg_a.shape[0], seg_a.shape[1]
    stop = T if last_idx < 0 else min(T, last_idx + 1)
    box_idx, box_link = -1, -1
    for t in range(stop):
        for l in range(L):
            dist, closest = segment_box_distance(
                seg_a[t, l], seg_b[t, l], center, R, half)
            if dist < radii[l]:
                if exempt[l] and np.linalg.norm(closest - target) <= exempt_radius:
                    continue
                box_idx, box_link = t, l
                break
        if box_idx >= 0:
            break
    self_idx, self_i, self_j = -1, -1, -1
    for t in range(stop):
        for i, j in self_pairs:
            d = _segment_segment_distance(seg_a[t, i], seg_b[t, i],
                                          seg_a[t, j], seg_b[t, j])
            if d < radii[i] + radii[j]:
                self_idx, self_i, self_j = t, int(i), int(j)
                break
        if self_idx >= 0:
            break
    return box_idx, box_link, self_idx, self_i, self_j
