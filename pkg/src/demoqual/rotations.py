"""Quaternion and rotation-matrix helpers.

Quaternions are (w, x, y, z) throughout, scalar first.
"""

import numpy as np


def quat_multiply(q1, q2):
    """Hamilton product q1 * q2."""
    w1, x1, y1, z1 = q1
    w2, x2, y2, z2 = q2
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_conjugate(q):
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_normalize(q):
    return np.asarray(q, dtype=float) / np.linalg.norm(q)


def quat_rotate(q, v):
    """Rotate vector v by unit quaternion q."""
    qv = np.array([0.0, v[0], v[1], v[2]])
    return quat_multiply(quat_multiply(q, qv), quat_conjugate(q))[1:]


def quat_to_matrix(q):
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def matrix_to_quat(R):
    """Rotation matrix to unit quaternion (w >= 0), Shepperd's method."""
    R = np.asarray(R)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([
            0.25 * s,
            (R[2, 1] - R[1, 2]) / s,
            (R[0, 2] - R[2, 0]) / s,
            (R[1, 0] - R[0, 1]) / s,
        ])
    elif R[0, 0] >= R[1, 1] and R[0, 0] >= R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([
            (R[2, 1] - R[1, 2]) / s,
            0.25 * s,
            (R[0, 1] + R[1, 0]) / s,
            (R[0, 2] + R[2, 0]) / s,
        ])
    elif R[1, 1] >= R[2, 2]:
        s = np.sqrt(1.0 - R[0, 0] + R[1, 1] - R[2, 2]) * 2.0
        q = np.array([
            (R[0, 2] - R[2, 0]) / s,
            (R[0, 1] + R[1, 0]) / s,
            0.25 * s,
            (R[1, 2] + R[2, 1]) / s,
        ])
    else:
        s = np.sqrt(1.0 - R[0, 0] - R[1, 1] + R[2, 2]) * 2.0
        q = np.array([
            (R[1, 0] - R[0, 1]) / s,
            (R[0, 2] + R[2, 0]) / s,
            (R[1, 2] + R[2, 1]) / s,
            0.25 * s,
        ])
    if q[0] < 0.0:
        q = -q
    return q / np.linalg.norm(q)


def quat_error_vector(q_desired, q_actual):
    """Axis-angle rotation error taking q_actual onto q_desired.

    Returns angle * axis with the angle wrapped to (-pi, pi].
    """
    q_err = quat_multiply(q_desired, quat_conjugate(q_actual))
    w = np.clip(q_err[0], -1.0, 1.0)
    vec = q_err[1:]
    norm = np.linalg.norm(vec)
    if norm < 1e-15:
        return np.zeros(3)
    angle = 2.0 * np.arctan2(norm, w)
    if angle > np.pi:
        angle -= 2.0 * np.pi
    return angle * (vec / norm)


def quat_angle_between(q1, q2):
    """Absolute rotation angle between two unit quaternions, radians."""
    return abs(np.linalg.norm(quat_error_vector(q1, q2)))


def quat_slerp(q0, q1, s):
    """Spherical linear interpolation along the shorter arc."""
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    d = float(np.dot(q0, q1))
    if d < 0.0:
        q1 = -q1
        d = -d
    if d > 1.0 - 1e-12:
        return quat_normalize(q0 + s * (q1 - q0))
    theta = np.arccos(np.clip(d, -1.0, 1.0))
    return (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / np.sin(theta)


def quat_left_matrix(q):
    """4x4 matrix L(q) with L(q) @ p == quat_multiply(q, p).

    Orthogonal for unit q, so rotating an orientation state by a frame
    quaternion is a linear (and invertible) map on R^4.
    """
    w, x, y, z = q
    return np.array([
        [w, -x, -y, -z],
        [x, w, -z, y],
        [y, z, w, -x],
        [z, -y, x, w],
    ])


def basis_from_z(z_axis, reference=None):
    """Right-handed rotation matrix whose third column is z_axis.

    The x axis is chosen perpendicular to a reference direction (world z
    unless nearly parallel to z_axis, then world x) so the result is
    deterministic.
    """
    z = np.asarray(z_axis, dtype=float)
    z = z / np.linalg.norm(z)
    if reference is None:
        reference = np.array([0.0, 0.0, 1.0])
        if abs(np.dot(z, reference)) > 0.9:
            reference = np.array([1.0, 0.0, 0.0])
    x = np.cross(reference, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])
