"""Task-parameterized Gaussian mixture models over xi = (t, x, quat).

Per-frame Gaussians share one set of responsibilities during EM (every
frame sees the same latent component per point), frames combine through
precision-weighted products of the transformed Gaussians, and Gaussian
mixture regression conditioned on the phase channel produces trajectories.
Quaternions are treated as Euclidean R^4 here: hemisphere continuity is
enforced at ingestion and outputs are renormalized.
"""

import json
from pathlib import Path

import numpy as np

from .errors import DegenerateData, SchemaViolation, SingularCovariance
from .rotations import quat_left_matrix, quat_normalize, quat_to_matrix

MODEL_VERSION = "tpgmm-v1"

DEFAULT_K = 6
DEFAULT_REG = 1e-6

_DIM = 8
_LOG2PI = np.log(2.0 * np.pi)


class TaskFrame:
    """Affine frame acting on xi: A block-diag(1, R3, Q4), b origin."""

    __slots__ = ("A", "b")

    def __init__(self, A, b):
        A = np.asarray(A, dtype=float)
        b = np.asarray(b, dtype=float)
        if A.shape != (_DIM, _DIM) or b.shape != (_DIM,):
            raise SchemaViolation("task frame needs A (8,8) and b (8,)")
        if abs(A[0, 0] - 1.0) > 1e-10 or np.abs(A[0, 1:]).max() > 1e-10 \
                or np.abs(A[1:, 0]).max() > 1e-10:
            raise SchemaViolation("time block of A must be exactly 1")
        if np.abs(A.T @ A - np.eye(_DIM)).max() > 1e-10:
            raise SchemaViolation("A blocks must be orthonormal")
        self.A = A
        self.b = b
        self.A.setflags(write=False)
        self.b.setflags(write=False)

    @classmethod
    def from_pose(cls, position, quat):
        """Frame whose position block rotates by quat and sits at position.

        The quaternion block is the left-multiplication operator of quat,
        so local orientations compose with the frame orientation the same
        way local positions rotate with it.
        """
        quat = quat_normalize(quat)
        A = np.zeros((_DIM, _DIM))
        A[0, 0] = 1.0
        A[1:4, 1:4] = quat_to_matrix(quat)
        A[4:8, 4:8] = quat_left_matrix(quat)
        b = np.zeros(_DIM)
        b[1:4] = np.asarray(position, dtype=float)
        return cls(A, b)

    def project(self, xi):
        """Local coordinates A^-1 (xi - b); works on (8,) or (N, 8)."""
        xi = np.asarray(xi, dtype=float)
        return np.linalg.solve(self.A, (xi - self.b).T).T

    def unproject(self, local):
        local = np.asarray(local, dtype=float)
        return local @ self.A.T + self.b

    def to_dict(self):
        return {"A": self.A.tolist(), "b": self.b.tolist()}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(d["A"], d["b"])
        except KeyError as exc:
            raise SchemaViolation(f"frame missing key {exc}") from exc


class TpgmmModel:
    """Fitted mixture: priors (K,), mu (J,K,8), sigma (J,K,8,8)."""

    def __init__(self, priors, mu, sigma, reg, frames=None):
        self.priors = np.asarray(priors, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)
        self.reg = float(reg)
        self.frames = list(frames) if frames else []
        if abs(self.priors.sum() - 1.0) > 1e-12:
            raise SchemaViolation("priors must sum to 1")
        if self.mu.shape != (self.J, self.K, _DIM) or \
                self.sigma.shape != (self.J, self.K, _DIM, _DIM):
            raise SchemaViolation("model arrays disagree on K/J")

    @property
    def K(self):
        return self.priors.shape[0]

    @property
    def J(self):
        return self.mu.shape[0]


class GlobalGmm:
    """Frame-combined mixture in the base frame."""

    def __init__(self, priors, mu, sigma):
        self.priors = np.asarray(priors, dtype=float)
        self.mu = np.asarray(mu, dtype=float)
        self.sigma = np.asarray(sigma, dtype=float)

    @property
    def K(self):
        return self.priors.shape[0]


def project_to_frame(xi, frame):
    return frame.project(xi)


def project_demoset(demoset, frames_per_demo):
    """Stack an aligned set into per-frame local data (J, M*T, 8).

    frames_per_demo[m] is the list of J TaskFrames of demonstration m;
    each demo is projected into its own frames (task-parameterized data).
    """
    if len(frames_per_demo) != len(demoset):
        raise SchemaViolation("need one frame list per demonstration")
    J = len(frames_per_demo[0])
    per_frame = []
    for j in range(J):
        per_frame.append(np.concatenate(
            [frames_per_demo[m][j].project(demo.states)
             for m, demo in enumerate(demoset)], axis=0))
    return np.stack(per_frame)


# ---------------------------------------------------------------------------
# EM


def _log_gauss(X, mu, sigma):
    """Log density of rows of X under N(mu, sigma)."""
    L = np.linalg.cholesky(sigma)
    diff = (X - mu).T
    y = np.linalg.solve(L, diff)
    quad = np.sum(y * y, axis=0)
    logdet = 2.0 * np.sum(np.log(np.diag(L)))
    return -0.5 * (quad + logdet + X.shape[1] * _LOG2PI)


def _logsumexp(a, axis):
    m = np.max(a, axis=axis, keepdims=True)
    return (m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
            ).squeeze(axis)


def fit_em(local_data, K=DEFAULT_K, reg=DEFAULT_REG, seed=None, max_iter=200,
           tol=1e-6):
    """EM for the task-parameterized mixture on pre-projected data.

    local_data: (J, N, 8), the same N points seen in J frames. The
    E-step responsibility of component k for point n multiplies the
    densities over all frames, which ties every frame's Gaussians to one
    shared latent assignment. Initialization slices the phase axis into K
    equal intervals, so fits are deterministic; `seed` is accepted for
    API symmetry with the synthetic generators but is not used.

    Returns (model, log_likelihoods) with one log-likelihood per
    iteration (of the parameters entering that iteration).
    """
    local_data = np.asarray(local_data, dtype=float)
    if local_data.ndim != 3 or local_data.shape[2] != _DIM:
        raise SchemaViolation("local_data must be (J, N, 8)")
    J, N, _ = local_data.shape
    if K < 1 or reg <= 0:
        raise ValueError("need K >= 1 and reg > 0")
    stacked = local_data.transpose(1, 0, 2).reshape(N, J * _DIM)
    if np.unique(stacked, axis=0).shape[0] < K:
        raise DegenerateData(f"only {np.unique(stacked, axis=0).shape[0]} "
                             f"distinct points for K={K}")

    # init: equal slices of the phase axis (frame 0 time channel)
    t = local_data[0, :, 0]
    lo, hi = t.min(), t.max()
    edges = lo + (hi - lo) * np.arange(1, K) / K
    labels = np.searchsorted(edges, t, side="right")
    priors = np.empty(K)
    mu = np.empty((J, K, _DIM))
    sigma = np.empty((J, K, _DIM, _DIM))
    eye = np.eye(_DIM)
    for k in range(K):
        mask = labels == k
        if not np.any(mask):
            raise DegenerateData(f"phase slice {k} of {K} is empty")
        priors[k] = mask.sum() / N
        for j in range(J):
            pts = local_data[j, mask]
            mu[j, k] = pts.mean(axis=0)
            d = pts - mu[j, k]
            sigma[j, k] = d.T @ d / pts.shape[0] + reg * eye

    log_liks = []
    for _ in range(max_iter):
        # E-step: shared responsibilities across frames, in log space
        log_r = np.tile(np.log(priors), (N, 1))
        for j in range(J):
            for k in range(K):
                log_r[:, k] += _log_gauss(local_data[j], mu[j, k],
                                          sigma[j, k])
        norm = _logsumexp(log_r, axis=1)
        ll = float(norm.sum())
        gamma = np.exp(log_r - norm[:, None])
        if log_liks and ll - log_liks[-1] < tol:
            log_liks.append(ll)
            break
        log_liks.append(ll)
        # M-step
        nk = gamma.sum(axis=0)
        priors = nk / N
        priors = priors / priors.sum()
        for j in range(J):
            X = local_data[j]
            for k in range(K):
                mu[j, k] = gamma[:, k] @ X / nk[k]
                d = X - mu[j, k]
                sigma[j, k] = (d * gamma[:, k, None]).T @ d / nk[k] + reg * eye
    return TpgmmModel(priors, mu, sigma, reg), np.array(log_liks)


# ---------------------------------------------------------------------------
# frame combination and regression


def _inv_spd(S):
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc)) from exc
    Linv = np.linalg.solve(L, np.eye(S.shape[0]))
    return Linv.T @ Linv


def combine_frames(model, frames):
    """Product of the frame-transformed Gaussians, per component."""
    if len(frames) != model.J:
        raise SchemaViolation(f"model expects {model.J} frames, got "
                              f"{len(frames)}")
    K = model.K
    mu_g = np.empty((K, _DIM))
    sigma_g = np.empty((K, _DIM, _DIM))
    for k in range(K):
        lam_sum = np.zeros((_DIM, _DIM))
        lam_mu = np.zeros(_DIM)
        for j, frame in enumerate(frames):
            m = frame.A @ model.mu[j, k] + frame.b
            S = frame.A @ model.sigma[j, k] @ frame.A.T
            lam = _inv_spd(0.5 * (S + S.T))
            lam_sum += lam
            lam_mu += lam @ m
        cov = _inv_spd(0.5 * (lam_sum + lam_sum.T))
        cov = 0.5 * (cov + cov.T)
        mu_g[k] = cov @ lam_mu
        sigma_g[k] = cov
    return GlobalGmm(model.priors.copy(), mu_g, sigma_g)


def gmr_query(gmm, t):
    """Condition the mixture on phase t; returns one xi row (8,)."""
    K = gmm.K
    log_h = np.empty(K)
    cond = np.empty((K, _DIM - 1))
    for k in range(K):
        mt = gmm.mu[k, 0]
        stt = gmm.sigma[k, 0, 0]
        sot = gmm.sigma[k, 1:, 0]
        log_h[k] = (np.log(gmm.priors[k])
                    - 0.5 * ((t - mt) ** 2 / stt + np.log(2 * np.pi * stt)))
        cond[k] = gmm.mu[k, 1:] + sot / stt * (t - mt)
    h = np.exp(log_h - _logsumexp(log_h, axis=0))
    out = h @ cond
    xi = np.empty(_DIM)
    xi[0] = t
    xi[1:] = out
    xi[4:8] = quat_normalize(xi[4:8])
    return xi


def generate_trajectory(model, frames, T):
    """Combine frames once, then GMR at T uniform phases -> (T, 8)."""
    if T < 2:
        raise ValueError("need T >= 2")
    gmm = combine_frames(model, frames)
    phases = np.linspace(0.0, 1.0, T)
    return np.array([gmr_query(gmm, t) for t in phases])


# ---------------------------------------------------------------------------
# serialization


def save_model(model, path):
    payload = {
        "version": MODEL_VERSION,
        "K": model.K,
        "J": model.J,
        "reg": model.reg,
        "priors": model.priors.tolist(),
        "frames": [f.to_dict() for f in model.frames],
        "mu": model.mu.tolist(),
        "sigma": model.sigma.tolist(),
    }
    Path(path).write_text(json.dumps(payload))


def load_model(path):
    path = Path(path)
    if not path.exists():
        raise SchemaViolation(f"model file not found: {path}")
    raw = json.loads(path.read_text())
    if raw.get("version") != MODEL_VERSION:
        raise SchemaViolation(f"unsupported model version "
                              f"{raw.get('version')!r}")
    for key in ("K", "J", "priors", "mu", "sigma"):
        if key not in raw:
            raise SchemaViolation(f"model file missing key '{key}'")
    model = TpgmmModel(raw["priors"], raw["mu"], raw["sigma"],
                       raw.get("reg", DEFAULT_REG),
                       frames=[TaskFrame.from_dict(f)
                               for f in raw.get("frames", [])])
    if model.K != raw["K"] or model.J != raw["J"]:
        raise SchemaViolation("model K/J fields disagree with arrays")
    return model
