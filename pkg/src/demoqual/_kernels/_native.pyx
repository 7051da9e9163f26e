# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled implementations of the hot kernels.

Mirrors _numpy.py operation for operation; see that module for the
reference semantics. Differences between the two backends are rounding
only (Cholesky here vs. LAPACK LU there, fused arithmetic order).
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport atan2, cos, fabs, hypot, pi, sin, sqrt

cnp.import_array()

cdef enum:
    NJ_MAX = 16

cdef double NULL_REG = 1e-12


# ---------------------------------------------------------------------------
# small dense helpers

cdef inline void _dh_accum(double* R, double* p, double a, double alpha,
                           double d, double theta) nogil:
    """Post-multiply the running base transform (R, p) by one DH step."""
    cdef double ct = cos(theta), st = sin(theta)
    cdef double ca = cos(alpha), sa = sin(alpha)
    cdef double A[9]
    cdef double t[3]
    cdef double Rn[9]
    cdef int i, j
    A[0] = ct; A[1] = -st * ca; A[2] = st * sa
    A[3] = st; A[4] = ct * ca;  A[5] = -ct * sa
    A[6] = 0.0; A[7] = sa;      A[8] = ca
    t[0] = a * ct; t[1] = a * st; t[2] = d
    for i in range(3):
        p[i] = p[i] + R[3 * i] * t[0] + R[3 * i + 1] * t[1] + R[3 * i + 2] * t[2]
    for i in range(3):
        for j in range(3):
            Rn[3 * i + j] = (R[3 * i] * A[j] + R[3 * i + 1] * A[3 + j]
                             + R[3 * i + 2] * A[6 + j])
    for i in range(9):
        R[i] = Rn[i]


cdef inline void _mat_to_quat(double* R, double* q) nogil:
    cdef double tr = R[0] + R[4] + R[8]
    cdef double s, n
    cdef int i
    if tr > 0.0:
        s = sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (R[7] - R[5]) / s
        q[2] = (R[2] - R[6]) / s
        q[3] = (R[3] - R[1]) / s
    elif R[0] >= R[4] and R[0] >= R[8]:
        s = sqrt(1.0 + R[0] - R[4] - R[8]) * 2.0
        q[0] = (R[7] - R[5]) / s
        q[1] = 0.25 * s
        q[2] = (R[1] + R[3]) / s
        q[3] = (R[2] + R[6]) / s
    elif R[4] >= R[8]:
        s = sqrt(1.0 - R[0] + R[4] - R[8]) * 2.0
        q[0] = (R[2] - R[6]) / s
        q[1] = (R[1] + R[3]) / s
        q[2] = 0.25 * s
        q[3] = (R[5] + R[7]) / s
    else:
        s = sqrt(1.0 - R[0] - R[4] + R[8]) * 2.0
        q[0] = (R[3] - R[1]) / s
        q[1] = (R[2] + R[6]) / s
        q[2] = (R[5] + R[7]) / s
        q[3] = 0.25 * s
    if q[0] < 0.0:
        for i in range(4):
            q[i] = -q[i]
    n = sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])
    for i in range(4):
        q[i] = q[i] / n


cdef inline void _quat_to_mat(double* q, double* R) nogil:
    cdef double w = q[0], x = q[1], y = q[2], z = q[3]
    R[0] = 1 - 2 * (y * y + z * z); R[1] = 2 * (x * y - w * z); R[2] = 2 * (x * z + w * y)
    R[3] = 2 * (x * y + w * z); R[4] = 1 - 2 * (x * x + z * z); R[5] = 2 * (y * z - w * x)
    R[6] = 2 * (x * z - w * y); R[7] = 2 * (y * z + w * x); R[8] = 1 - 2 * (x * x + y * y)


cdef inline void _fk_all(const double* dh, int n, const double* q,
                         double* origins, double* zaxes, double* Rtool) nogil:
    """Joint origins ((n+1)*3), joint axes (n*3), tool rotation (9)."""
    cdef double R[9]
    cdef double p[3]
    cdef int i, k
    for i in range(9):
        R[i] = 0.0
    R[0] = R[4] = R[8] = 1.0
    p[0] = p[1] = p[2] = 0.0
    origins[0] = origins[1] = origins[2] = 0.0
    zaxes[0] = 0.0; zaxes[1] = 0.0; zaxes[2] = 1.0
    for i in range(n):
        _dh_accum(R, p, dh[4 * i], dh[4 * i + 1], dh[4 * i + 2],
                  q[i] + dh[4 * i + 3])
        for k in range(3):
            origins[3 * (i + 1) + k] = p[k]
        if i + 1 < n:
            for k in range(3):
                zaxes[3 * (i + 1) + k] = R[3 * k + 2]
    for i in range(9):
        Rtool[i] = R[i]


cdef inline void _jac(int n, const double* origins, const double* zaxes,
                      double* J) nogil:
    """Geometric Jacobian, row-major 6 x n."""
    cdef int i
    cdef double rx, ry, rz
    cdef const double* tip = origins + 3 * n
    for i in range(n):
        rx = tip[0] - origins[3 * i]
        ry = tip[1] - origins[3 * i + 1]
        rz = tip[2] - origins[3 * i + 2]
        J[i] = zaxes[3 * i + 1] * rz - zaxes[3 * i + 2] * ry
        J[n + i] = zaxes[3 * i + 2] * rx - zaxes[3 * i] * rz
        J[2 * n + i] = zaxes[3 * i] * ry - zaxes[3 * i + 1] * rx
        J[3 * n + i] = zaxes[3 * i]
        J[4 * n + i] = zaxes[3 * i + 1]
        J[5 * n + i] = zaxes[3 * i + 2]


cdef inline void _quat_err(const double* qd, const double* qa, double* out) nogil:
    cdef double w = qd[0] * qa[0] + qd[1] * qa[1] + qd[2] * qa[2] + qd[3] * qa[3]
    cdef double x = -qd[0] * qa[1] + qd[1] * qa[0] - qd[2] * qa[3] + qd[3] * qa[2]
    cdef double y = -qd[0] * qa[2] + qd[1] * qa[3] + qd[2] * qa[0] - qd[3] * qa[1]
    cdef double z = -qd[0] * qa[3] - qd[1] * qa[2] + qd[2] * qa[1] + qd[3] * qa[0]
    cdef double norm = sqrt(x * x + y * y + z * z)
    cdef double angle
    if norm < 1e-15:
        out[0] = out[1] = out[2] = 0.0
        return
    if w > 1.0:
        w = 1.0
    elif w < -1.0:
        w = -1.0
    angle = 2.0 * atan2(norm, w)
    if angle > pi:
        angle -= 2.0 * pi
    out[0] = angle / norm * x
    out[1] = angle / norm * y
    out[2] = angle / norm * z


cdef inline int _chol6(double* A) nogil:
    """In-place lower Cholesky of a row-major 6x6 SPD matrix."""
    cdef int i, j, k
    cdef double s
    for i in range(6):
        for j in range(i + 1):
            s = A[6 * i + j]
            for k in range(j):
                s -= A[6 * i + k] * A[6 * j + k]
            if i == j:
                if s <= 0.0:
                    return -1
                A[6 * i + j] = sqrt(s)
            else:
                A[6 * i + j] = s / A[6 * j + j]
    return 0


cdef inline void _chol_solve6(const double* L, const double* b, double* x) nogil:
    cdef int i, k
    cdef double s
    for i in range(6):
        s = b[i]
        for k in range(i):
            s -= L[6 * i + k] * x[k]
        x[i] = s / L[6 * i + i]
    for i in range(5, -1, -1):
        s = x[i]
        for k in range(i + 1, 6):
            s -= L[6 * k + i] * x[k]
        x[i] = s / L[6 * i + i]


# ---------------------------------------------------------------------------
# kinematics entry points

def fk_pose(dh, q):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef int n = dh_.shape[0]
    cdef double origins[(NJ_MAX + 1) * 3]
    cdef double zaxes[NJ_MAX * 3]
    cdef double R[9]
    cdef cnp.ndarray[double, ndim=1] pos = np.empty(3)
    cdef cnp.ndarray[double, ndim=1] quat = np.empty(4)
    _fk_all(&dh_[0, 0], n, &q_[0], origins, zaxes, R)
    pos[0] = origins[3 * n]; pos[1] = origins[3 * n + 1]; pos[2] = origins[3 * n + 2]
    _mat_to_quat(R, &quat[0])
    return pos, quat


def fk_frames(dh, q):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef int n = dh_.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] origins = np.empty((n + 1, 3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] zaxes = np.empty((n, 3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] R = np.empty((3, 3))
    _fk_all(&dh_[0, 0], n, &q_[0], &origins[0, 0], &zaxes[0, 0], &R[0, 0])
    return origins, zaxes, R


def jacobian(dh, q):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] q_ = np.ascontiguousarray(q, dtype=np.float64)
    cdef int n = dh_.shape[0]
    cdef double origins[(NJ_MAX + 1) * 3]
    cdef double zaxes[NJ_MAX * 3]
    cdef double R[9]
    cdef cnp.ndarray[double, ndim=2, mode="c"] J = np.empty((6, n))
    _fk_all(&dh_[0, 0], n, &q_[0], origins, zaxes, R)
    _jac(n, origins, zaxes, &J[0, 0])
    return J


def traj_tip_poses(dh, Q):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Q_ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef int T = Q_.shape[0], n = dh_.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] pos = np.empty((T, 3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] quat = np.empty((T, 4))
    cdef double origins[(NJ_MAX + 1) * 3]
    cdef double zaxes[NJ_MAX * 3]
    cdef double R[9]
    cdef int t
    with nogil:
        for t in range(T):
            _fk_all(&dh_[0, 0], n, &Q_[t, 0], origins, zaxes, R)
            pos[t, 0] = origins[3 * n]
            pos[t, 1] = origins[3 * n + 1]
            pos[t, 2] = origins[3 * n + 2]
            _mat_to_quat(R, &quat[t, 0])
    return pos, quat


def traj_geometry(dh, Q):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Q_ = np.ascontiguousarray(Q, dtype=np.float64)
    cdef int T = Q_.shape[0], n = dh_.shape[0]
    cdef cnp.ndarray[double, ndim=3, mode="c"] origins = np.empty((T, n + 1, 3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] tip_pos = np.empty((T, 3))
    cdef cnp.ndarray[double, ndim=2, mode="c"] tip_quat = np.empty((T, 4))
    cdef cnp.ndarray[double, ndim=2, mode="c"] tool_z = np.empty((T, 3))
    cdef double zaxes[NJ_MAX * 3]
    cdef double R[9]
    cdef int t, k
    with nogil:
        for t in range(T):
            _fk_all(&dh_[0, 0], n, &Q_[t, 0], &origins[t, 0, 0], zaxes, R)
            for k in range(3):
                tip_pos[t, k] = origins[t, n, k]
                tool_z[t, k] = R[3 * k + 2]
            _mat_to_quat(R, &tip_quat[t, 0])
    return origins, tip_pos, tip_quat, tool_z


# ---------------------------------------------------------------------------
# closed-loop IK tracking

def clik_track(dh, limits, q0, pos_d, quat_d, vel_d, q_ref, double lam,
               kp, double dt, double null_gain):
    cdef cnp.ndarray[double, ndim=2, mode="c"] dh_ = np.ascontiguousarray(dh, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] lim_ = np.ascontiguousarray(limits, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] q0_ = np.ascontiguousarray(q0, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] pd_ = np.ascontiguousarray(pos_d, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] qd_ = np.ascontiguousarray(quat_d, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] vd_ = np.ascontiguousarray(vel_d, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] qr_ = np.ascontiguousarray(q_ref, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] kp_ = np.ascontiguousarray(kp, dtype=np.float64)
    cdef int T = pd_.shape[0], n = dh_.shape[0]
    cdef cnp.ndarray[double, ndim=2, mode="c"] Q = np.empty((T, n))
    cdef cnp.ndarray[double, ndim=2, mode="c"] Qd = np.zeros((T, n))
    cdef double q[NJ_MAX]
    cdef double origins[(NJ_MAX + 1) * 3]
    cdef double zaxes[NJ_MAX * 3]
    cdef double R[9]
    cdef double quat[4]
    cdef double J[6 * NJ_MAX]
    cdef double A[36]
    cdef double A0[36]
    cdef double e[6]
    cdef double task[6]
    cdef double y[6]
    cdef double w6[6]
    cdef double pi_vec[NJ_MAX]
    cdef double qdot[NJ_MAX]
    cdef double min_margin = 1e300, margin
    cdef double final_pos_err, final_ori_err
    cdef int t, i, j, k
    cdef double s
    for i in range(n):
        q[i] = q0_[i]
        Q[0, i] = q[i]
        margin = q[i] - lim_[i, 0]
        if lim_[i, 1] - q[i] < margin:
            margin = lim_[i, 1] - q[i]
        if margin < min_margin:
            min_margin = margin
    with nogil:
        for t in range(T - 1):
            _fk_all(&dh_[0, 0], n, q, origins, zaxes, R)
            _jac(n, origins, zaxes, J)
            _mat_to_quat(R, quat)
            for k in range(3):
                e[k] = pd_[t, k] - origins[3 * n + k]
            _quat_err(&qd_[t, 0], quat, e + 3)
            # task = vel_d + kp e ; A = J J^T + lam^2 I ; qdot = J^T A^-1 task
            for i in range(6):
                s = vd_[t, i]
                for j in range(6):
                    s += kp_[i, j] * e[j]
                task[i] = s
            for i in range(6):
                for j in range(6):
                    s = 0.0
                    for k in range(n):
                        s += J[n * i + k] * J[n * j + k]
                    A[6 * i + j] = s
                    A0[6 * i + j] = s
                A[6 * i + i] += lam * lam
                A0[6 * i + i] += NULL_REG
            _chol6(A)
            _chol_solve6(A, task, y)
            for k in range(n):
                s = 0.0
                for i in range(6):
                    s += J[n * i + k] * y[i]
                qdot[k] = s
            # null-space: pi - J^T (J J^T + eps)^-1 J pi
            for k in range(n):
                pi_vec[k] = null_gain * (qr_[t, k] - q[k])
            for i in range(6):
                s = 0.0
                for k in range(n):
                    s += J[n * i + k] * pi_vec[k]
                w6[i] = s
            _chol6(A0)
            _chol_solve6(A0, w6, y)
            for k in range(n):
                s = 0.0
                for i in range(6):
                    s += J[n * i + k] * y[i]
                qdot[k] += pi_vec[k] - s
            for k in range(n):
                Qd[t, k] = qdot[k]
                q[k] = q[k] + dt * qdot[k]
                Q[t + 1, k] = q[k]
                margin = q[k] - lim_[k, 0]
                if lim_[k, 1] - q[k] < margin:
                    margin = lim_[k, 1] - q[k]
                if margin < min_margin:
                    min_margin = margin
        _fk_all(&dh_[0, 0], n, q, origins, zaxes, R)
        _mat_to_quat(R, quat)
        s = 0.0
        for k in range(3):
            s += (pd_[T - 1, k] - origins[3 * n + k]) ** 2
        final_pos_err = sqrt(s)
        _quat_err(&qd_[T - 1, 0], quat, e)
        final_ori_err = sqrt(e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
    return Q, Qd, min_margin, final_pos_err, final_ori_err


# ---------------------------------------------------------------------------
# distance queries

cdef inline double _point_box_local(const double* p, const double* half) nogil:
    cdef double s = 0.0, d
    cdef int k
    for k in range(3):
        d = fabs(p[k]) - half[k]
        if d > 0.0:
            s += d * d
    return sqrt(s)


cdef inline double _seg_box_local(const double* la, const double* lb,
                                  const double* half, double* s_out) nogil:
    """Ternary search; distance along the segment to a box is convex."""
    cdef double lo = 0.0, hi = 1.0, m1, m2, d1, d2
    cdef double p[3]
    cdef int it, k
    for it in range(64):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        for k in range(3):
            p[k] = la[k] + m1 * (lb[k] - la[k])
        d1 = _point_box_local(p, half)
        for k in range(3):
            p[k] = la[k] + m2 * (lb[k] - la[k])
        d2 = _point_box_local(p, half)
        if d1 <= d2:
            hi = m2
        else:
            lo = m1
    s_out[0] = 0.5 * (lo + hi)
    for k in range(3):
        p[k] = la[k] + s_out[0] * (lb[k] - la[k])
    return _point_box_local(p, half)


cdef inline void _to_box_frame(const double* x, const double* center,
                               const double* R, double* out) nogil:
    cdef double d0 = x[0] - center[0], d1 = x[1] - center[1], d2 = x[2] - center[2]
    out[0] = R[0] * d0 + R[3] * d1 + R[6] * d2
    out[1] = R[1] * d0 + R[4] * d1 + R[7] * d2
    out[2] = R[2] * d0 + R[5] * d1 + R[8] * d2


cdef inline double _seg_seg(const double* p1, const double* q1,
                            const double* p2, const double* q2) nogil:
    cdef double d1[3]
    cdef double d2[3]
    cdef double r[3]
    cdef double a = 0.0, e = 0.0, f = 0.0, c = 0.0, b = 0.0, denom
    cdef double s, t, dd, diff
    cdef int k
    for k in range(3):
        d1[k] = q1[k] - p1[k]
        d2[k] = q2[k] - p2[k]
        r[k] = p1[k] - p2[k]
        a += d1[k] * d1[k]
        e += d2[k] * d2[k]
        f += d2[k] * r[k]
    if a <= 1e-14 and e <= 1e-14:
        return sqrt(r[0] * r[0] + r[1] * r[1] + r[2] * r[2])
    if a <= 1e-14:
        s = 0.0
        t = f / e
        t = 0.0 if t < 0.0 else (1.0 if t > 1.0 else t)
    else:
        for k in range(3):
            c += d1[k] * r[k]
        if e <= 1e-14:
            t = 0.0
            s = -c / a
            s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
        else:
            for k in range(3):
                b += d1[k] * d2[k]
            denom = a * e - b * b
            if denom > 1e-14:
                s = (b * f - c * e) / denom
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            else:
                s = 0.0
            t = (b * s + f) / e
            if t < 0.0:
                t = 0.0
                s = -c / a
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
            elif t > 1.0:
                t = 1.0
                s = (b - c) / a
                s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    dd = 0.0
    for k in range(3):
        diff = (p1[k] + s * d1[k]) - (p2[k] + t * d2[k])
        dd += diff * diff
    return sqrt(dd)


cdef inline double _point_seg(const double* la, const double* lb) nogil:
    """Distance from the origin to segment la-lb."""
    cdef double d[3]
    cdef double a = 0.0, c = 0.0, s, dd = 0.0, diff
    cdef int k
    for k in range(3):
        d[k] = lb[k] - la[k]
        a += d[k] * d[k]
        c += d[k] * la[k]
    if a <= 1e-14:
        s = 0.0
    else:
        s = -c / a
        s = 0.0 if s < 0.0 else (1.0 if s > 1.0 else s)
    for k in range(3):
        diff = la[k] + s * d[k]
        dd += diff * diff
    return sqrt(dd)


def point_box_distance(p, center, R, half):
    cdef cnp.ndarray[double, ndim=1, mode="c"] p_ = np.ascontiguousarray(p, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] c_ = np.ascontiguousarray(center, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] R_ = np.ascontiguousarray(R, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h_ = np.ascontiguousarray(half, dtype=np.float64)
    cdef double local[3]
    _to_box_frame(&p_[0], &c_[0], &R_[0, 0], local)
    return _point_box_local(local, &h_[0])


def segment_box_distance(a, b, center, R, half):
    cdef cnp.ndarray[double, ndim=1, mode="c"] a_ = np.ascontiguousarray(a, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] b_ = np.ascontiguousarray(b, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] c_ = np.ascontiguousarray(center, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] R_ = np.ascontiguousarray(R, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h_ = np.ascontiguousarray(half, dtype=np.float64)
    cdef double la[3]
    cdef double lb[3]
    cdef double s, dist
    cdef double p[3]
    cdef int k
    cdef cnp.ndarray[double, ndim=1] closest = np.empty(3)
    _to_box_frame(&a_[0], &c_[0], &R_[0, 0], la)
    _to_box_frame(&b_[0], &c_[0], &R_[0, 0], lb)
    dist = _seg_box_local(la, lb, &h_[0], &s)
    for k in range(3):
        p[k] = la[k] + s * (lb[k] - la[k])
        p[k] = -h_[k] if p[k] < -h_[k] else (h_[k] if p[k] > h_[k] else p[k])
    for k in range(3):
        closest[k] = c_[k] + R_[k, 0] * p[0] + R_[k, 1] * p[1] + R_[k, 2] * p[2]
    return dist, closest


def goal_contact_index(tip_pos, tip_quat, tip_half, target, double goal_radius):
    cdef cnp.ndarray[double, ndim=2, mode="c"] tp_ = np.ascontiguousarray(tip_pos, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] tq_ = np.ascontiguousarray(tip_quat, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h_ = np.ascontiguousarray(tip_half, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] g_ = np.ascontiguousarray(target, dtype=np.float64)
    cdef int T = tp_.shape[0], t
    cdef double R[9]
    cdef double local[3]
    with nogil:
        for t in range(T):
            _quat_to_mat(&tq_[t, 0], R)
            _to_box_frame(&g_[0], &tp_[t, 0], R, local)
            if _point_box_local(local, &h_[0]) <= goal_radius:
                with gil:
                    return t
    return -1


def collision_sweep(seg_a, seg_b, radii, exempt, center, R, half, target,
                    double exempt_radius, int last_idx, self_pairs):
    cdef cnp.ndarray[double, ndim=3, mode="c"] sa_ = np.ascontiguousarray(seg_a, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=3, mode="c"] sb_ = np.ascontiguousarray(seg_b, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] r_ = np.ascontiguousarray(radii, dtype=np.float64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1, mode="c"] ex_ = np.ascontiguousarray(exempt, dtype=np.uint8)
    cdef cnp.ndarray[double, ndim=1, mode="c"] c_ = np.ascontiguousarray(center, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] R_ = np.ascontiguousarray(R, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] h_ = np.ascontiguousarray(half, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] g_ = np.ascontiguousarray(target, dtype=np.float64)
    cdef cnp.ndarray[cnp.intp_t, ndim=2, mode="c"] pairs_ = np.ascontiguousarray(self_pairs, dtype=np.intp)
    cdef int T = sa_.shape[0], L = sa_.shape[1], P = pairs_.shape[0]
    cdef int stop = T if last_idx < 0 else (last_idx + 1 if last_idx + 1 < T else T)
    cdef int box_idx = -1, box_link = -1, self_idx = -1, self_i = -1, self_j = -1
    cdef int t, l, p, k, i, j
    cdef double la[3]
    cdef double lb[3]
    cdef double pt[3]
    cdef double wx, wy, wz
    cdef double s, dist, dx
    cdef double half_diag = sqrt(h_[0] * h_[0] + h_[1] * h_[1] + h_[2] * h_[2])
    with nogil:
        for t in range(stop):
            for l in range(L):
                _to_box_frame(&sa_[t, l, 0], &c_[0], &R_[0, 0], la)
                _to_box_frame(&sb_[t, l, 0], &c_[0], &R_[0, 0], lb)
                # conservative prefilter: segment-to-center distance bound
                if _point_seg(la, lb) - half_diag > r_[l]:
                    continue
                dist = _seg_box_local(la, lb, &h_[0], &s)
                if dist < r_[l]:
                    if ex_[l]:
                        for k in range(3):
                            pt[k] = la[k] + s * (lb[k] - la[k])
                            pt[k] = (-h_[k] if pt[k] < -h_[k]
                                     else (h_[k] if pt[k] > h_[k] else pt[k]))
                        wx = c_[0] + R_[0, 0] * pt[0] + R_[0, 1] * pt[1] + R_[0, 2] * pt[2] - g_[0]
                        wy = c_[1] + R_[1, 0] * pt[0] + R_[1, 1] * pt[1] + R_[1, 2] * pt[2] - g_[1]
                        wz = c_[2] + R_[2, 0] * pt[0] + R_[2, 1] * pt[1] + R_[2, 2] * pt[2] - g_[2]
                        if sqrt(wx * wx + wy * wy + wz * wz) <= exempt_radius:
                            continue
                    box_idx = t
                    box_link = l
                    break
            if box_idx >= 0:
                break
        for t in range(stop):
            for p in range(P):
                i = <int> pairs_[p, 0]
                j = <int> pairs_[p, 1]
                dist = _seg_seg(&sa_[t, i, 0], &sb_[t, i, 0],
                                &sa_[t, j, 0], &sb_[t, j, 0])
                if dist < r_[i] + r_[j]:
                    self_idx = t
                    self_i = i
                    self_j = j
                    break
            if self_idx >= 0:
                break
    return box_idx, box_link, self_idx, self_i, self_j

