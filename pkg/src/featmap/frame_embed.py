"""Embed the field of tangent frames into small ``d' x d'`` frames.

Each frame is flattened and compared to its kNN neighbours by the Frobenius
cosine.  High-dimensional cosine distances become smooth-kNN memberships; the
low-dimensional ones go through the heavy-tailed kernel
``(1 + a * dist**(2b))**-1``.  Embedded frames live on the unit sphere during
optimisation (the cosine ignores scale) and are snapped to the nearest
orthogonal matrix afterwards.
"""

import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp

from .errors import DegenerateFrameError, OptimizationDiverged, ParameterError
from .knn_graph import SimilarityGraph, _calibrate_rows, fuzzy_union, membership

INIT_SCALE = 1e-2
GRAD_CLIP = 4.0
_EPS = 1e-3

TangentSimilarity = SimilarityGraph


@dataclass(frozen=True)
class FrameField:
    """Embedded orthogonal frames plus the singular values they carry."""

    frames: np.ndarray  # (m, d', d')
    singular_values: np.ndarray  # (m, d')

    @property
    def m(self):
        return self.frames.shape[0]

    @property
    def dim(self):
        return self.frames.shape[1]


def _flat_unit(v):
    flat = np.asarray(v, dtype=np.float64).reshape(len(v), -1)
    norms = np.linalg.norm(flat, axis=1)
    if np.any(norms == 0):
        raise DegenerateFrameError(f"frame {int(np.flatnonzero(norms == 0)[0])} has zero norm")
    return flat / norms[:, None]


def tangent_similarities(frames, neighbors):
    """Symmetric memberships from cosine distances between neighbouring frames.

    ``frames`` is an ``(m, n, d)`` array of frames already cut/padded to a
    common width.
    """
    u = _flat_unit(frames)
    nb = neighbors.indices
    cos = np.einsum("id,ikd->ik", u, u[nb])
    cdist = np.abs(1.0 - np.clip(cos, -1.0, 1.0))
    rho, gamma = _calibrate_rows(np.sort(cdist, axis=1), np.log2(neighbors.k))
    w = membership(cdist, rho, gamma)
    m, k = nb.shape
    rows = np.repeat(np.arange(m), k)
    directed = sp.csr_matrix((w.ravel(), (rows, nb.ravel())), shape=(m, m))
    return fuzzy_union(directed)


def init_frames(m, d_prime, seed):
    """Seeded small Gaussian ``d' x d'`` matrices, one per point."""
    if d_prime < 1:
        raise ParameterError(f"d_prime must be >= 1, got {d_prime}")
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, d_prime, d_prime)) * INIT_SCALE


def frame_kl(sim, raw, a, b):
    """KL(P || Q) summed over stored edges, with Q from the embedded cosines."""
    u = _flat_unit(raw)
    rows, cols, p = sim.coo()
    cos = np.clip(np.sum(u[rows] * u[cols], axis=1), -1.0, 1.0)
    dist = 1.0 - cos
    q = 1.0 / (1.0 + a * dist ** (2.0 * b))
    q = np.maximum(q, 1e-300)
    return float(np.sum(p * (np.log(p) - np.log(q))))


@numba.njit(fastmath=False, cache=True)
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(cache=True)
def _renorm(u, i):
    s = 0.0
    for c in range(u.shape[1]):
        s += u[i, c] * u[i, c]
    s = np.sqrt(s)
    if s > 0.0:
        for c in range(u.shape[1]):
            u[i, c] /= s


@numba.njit(cache=True)
def _cos(u, i, j):
    s = 0.0
    for c in range(u.shape[1]):
        s += u[i, c] * u[j, c]
    return min(1.0, max(-1.0, s))


@numba.njit(cache=True)
def _frame_epoch(u, head, tail, eps, next_s, eps_neg, next_neg, n, alpha, a, b, seed):
    np.random.seed(seed)
    m, dim = u.shape
    g = np.empty(dim)
    for e in range(head.shape[0]):
        if next_s[e] > n:
            continue
        i = head[e]
        j = tail[e]
        cos = _cos(u, i, j)
        dist = 1.0 - cos
        if dist > 0.0:
            coeff = 2.0 * a * b * dist ** (2.0 * b - 1.0) / (1.0 + a * dist ** (2.0 * b))
        else:
            coeff = 0.0
        # descent on -log Q: pull u_i toward u_j along the sphere
        for c in range(dim):
            g[c] = _clip(coeff * (u[j, c] - cos * u[i, c]))
        for c in range(dim):
            u[i, c] += alpha * g[c]
        cos_j = _cos(u, j, i)
        for c in range(dim):
            u[j, c] += alpha * _clip(coeff * (u[i, c] - cos_j * u[j, c]))
        _renorm(u, i)
        _renorm(u, j)
        next_s[e] += eps[e]

        n_neg = int((n - next_neg[e]) / eps_neg[e])
        for _ in range(n_neg):
            l = np.random.randint(m)
            if l == i:
                continue
            cos = _cos(u, i, l)
            dist = 1.0 - cos
            coeff = 2.0 * b / ((_EPS + dist) * (1.0 + a * dist ** (2.0 * b)))
            for c in range(dim):
                u[i, c] -= alpha * _clip(coeff * (u[l, c] - cos * u[i, c]))
            _renorm(u, i)
        next_neg[e] += n_neg * eps_neg[e]


def optimize_frames(sim, raw, epochs, a, b, neg_samples=5, seed=0, history=None):
    """Edge-sampling SGD on the frame KL objective.

    ``history``, when a list, receives the full-batch KL before the first
    epoch and after every epoch.
    """
    if epochs < 1:
        raise ParameterError(f"epochs must be >= 1, got {epochs}")
    if a <= 0 or b <= 0:
        raise ParameterError("shape parameters a, b must be positive")
    shape = raw.shape
    u = _flat_unit(raw).copy()
    head, tail, p = sim.coo()
    eps = p.max() / p
    next_s = eps.copy()
    eps_neg = eps / max(neg_samples, 1e-12) if neg_samples > 0 else np.full_like(eps, np.inf)
    next_neg = eps_neg.copy()
    if history is not None:
        history.append(frame_kl(sim, u, a, b))
    for n in range(epochs):
        alpha = 1.0 - n / epochs
        _frame_epoch(u, head, tail, eps, next_s, eps_neg, next_neg, float(n + 1), alpha, a, b, seed + n)
        if not np.all(np.isfinite(u)):
            raise OptimizationDiverged("frame embedding", n, "non-finite frame entries")
        if history is not None:
            history.append(frame_kl(sim, u, a, b))
    return u.reshape(shape)


def _nearest_orthogonal(mats):
    u, s, vt = np.linalg.svd(mats)
    out = u @ vt
    bad = s[:, -1] <= 1e-12 * np.maximum(s[:, 0], 1e-300)
    if bad.any():
        warnings.warn(f"{int(bad.sum())} singular frame(s) replaced by the identity", RuntimeWarning)
        out[bad] = np.eye(mats.shape[1])
    return out


def orthonormalize(raw, singular_values=None):
    """Polar (nearest orthogonal) factor of every raw frame.

    ``singular_values`` is an ``(m, >= d')`` spectrum or a tangent bundle;
    the leading ``d'`` values are carried into the returned field.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise DegenerateFrameError("raw frames contain non-finite values")
    d = raw.shape[1]
    frames = _nearest_orthogonal(raw)
    if singular_values is None:
        sv = np.ones((raw.shape[0], d))
    else:
        s = getattr(singular_values, "singular_values", singular_values)
        sv = retained_spectrum(np.asarray(s, dtype=np.float64), d)
    return FrameField(frames, sv)


def retained_spectrum(s, d, eps=1e-12):
    """Leading ``d`` singular values per row; missing or zero entries become ``eps``."""
    out = np.full((s.shape[0], d), eps)
    w = min(d, s.shape[1])
    out[:, :w] = s[:, :w]
    return np.maximum(out, eps)
