"""Tangent frames from weighted local SVD, feature importance and alignments."""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFrameError, GraphError, ParameterError

DEFAULT_TAU = 0.9
DEFAULT_D_MAX = 8
# relative size below which a singular value counts as zero
_RANK_RTOL = 1e-10


@dataclass(frozen=True)
class TangentFrame:
    """Orthonormal tangent basis at one point.

    ``basis`` holds the leading ``min(dim, d_max)`` right-singular vectors as
    columns; ``singular_values`` keeps the whole local spectrum.
    """

    index: int
    basis: np.ndarray
    singular_values: np.ndarray
    dim: int


@dataclass(frozen=True)
class Alignment:
    i: int
    j: int
    rotation: np.ndarray
    distance: float


@dataclass(frozen=True)
class TangentBundle:
    """Frames of all points stored as stacked arrays.

    ``bases`` has shape ``(m, n, r)`` with ``r = min(d_max, k, n)`` columns
    from each local SVD; ``dims`` are the local intrinsic dimensions.
    """

    bases: np.ndarray
    singular_values: np.ndarray
    dims: np.ndarray
    d_max: int

    def __len__(self):
        return self.bases.shape[0]

    def __getitem__(self, i):
        w = min(int(self.dims[i]), self.bases.shape[2])
        return TangentFrame(i, self.bases[i, :, :w], self.singular_values[i], int(self.dims[i]))

    @property
    def global_dim(self):
        return global_dimension(self.dims, self.d_max)

    def padded(self, d):
        """Bases cut to ``d`` columns; columns past each local dimension are zero."""
        v = self.bases[:, :, :d].copy()
        if v.shape[2] < d:
            v = np.concatenate([v, np.zeros(v.shape[:2] + (d - v.shape[2],))], axis=2)
        keep = np.arange(d)[None, :] < self.dims[:, None]
        v *= keep[:, None, :]
        return v

    def importance(self, d=None):
        """Feature-importance matrix ``(m, n)`` from the padded ``d``-column frames."""
        d = self.global_dim if d is None else d
        return np.sqrt(np.sum(self.padded(d) ** 2, axis=2))


def _fix_signs(v):
    """Flip columns so each column's largest-magnitude entry is nonnegative.

    ``v`` has shape ``(..., n, r)``.
    """
    idx = np.argmax(np.abs(v), axis=-2)
    pick = np.take_along_axis(v, idx[..., None, :], axis=-2)
    signs = np.where(pick < 0, -1.0, 1.0)
    return v * signs


def _local_matrices(x, weights, neighbors, rows):
    """Stacked ``W_i X_i`` for the requested rows, shape ``(len(rows), k, n)``."""
    nb = neighbors.indices[rows]
    diffs = x[nb] - x[rows, None, :]
    rr = np.repeat(rows, nb.shape[1])
    w = np.asarray(weights[rr, nb.ravel()]).reshape(nb.shape)
    root = np.sqrt(w)
    dead = ~np.any(root > 0, axis=1)
    root[dead] = 1.0 / np.sqrt(nb.shape[1])
    return root[:, :, None] * diffs


def estimate_intrinsic_dim(singular_values, tau=DEFAULT_TAU):
    """Smallest d whose leading squared singular values reach ``tau`` of the total."""
    if not 0 < tau <= 1:
        raise ParameterError(f"tau must lie in (0, 1], got {tau}")
    s2 = np.asarray(singular_values, dtype=np.float64) ** 2
    total = s2.sum()
    if total <= 0:
        raise DegenerateFrameError("all singular values are zero")
    frac = np.cumsum(s2) / total
    return int(np.searchsorted(frac, tau - 1e-12) + 1)


def _intrinsic_dims(s, tau):
    s2 = s ** 2
    total = s2.sum(axis=1)
    bad = total <= 0
    if bad.any():
        raise DegenerateFrameError(f"point {int(np.flatnonzero(bad)[0])} has a rank-0 neighbourhood")
    frac = np.cumsum(s2, axis=1) / total[:, None]
    return 1 + np.sum(frac < tau - 1e-12, axis=1)


def local_frame(data, graph, neighbors, i, d_max=DEFAULT_D_MAX, tau=DEFAULT_TAU):
    """Tangent frame of point ``i`` from the SVD of its weighted, centred neighbours."""
    x = np.asarray(data, dtype=np.float64)
    k, n = neighbors.k, x.shape[1]
    if d_max > min(k, n):
        raise ParameterError(f"d_max={d_max} exceeds min(k, n)={min(k, n)}")
    a = _local_matrices(x, graph.weights, neighbors, np.array([i]))[0]
    _, s, vt = np.linalg.svd(a, full_matrices=False)
    if s[0] <= 0:
        raise DegenerateFrameError(f"point {i} has a rank-0 neighbourhood")
    dim = estimate_intrinsic_dim(s, tau)
    v = _fix_signs(vt.T)
    return TangentFrame(i, v[:, :min(dim, d_max)], s, dim)


def estimate_frames(data, graph, neighbors, d_max=DEFAULT_D_MAX, tau=DEFAULT_TAU, batch=1024):
    """All tangent frames at once as a :class:`TangentBundle`."""
    x = np.asarray(data, dtype=np.float64)
    m, n = x.shape
    k = neighbors.k
    r = min(d_max, k, n)
    bases = np.empty((m, n, r))
    svals = np.empty((m, min(k, n)))
    weights = graph.weights.tocsr()
    for start in range(0, m, batch):
        rows = np.arange(start, min(start + batch, m))
        a = _local_matrices(x, weights, neighbors, rows)
        _, s, vt = np.linalg.svd(a, full_matrices=False)
        v = _fix_signs(np.swapaxes(vt, 1, 2)[:, :, :r])
        bases[rows] = v
        svals[rows] = s
    dims = _intrinsic_dims(svals, tau)
    return TangentBundle(bases, svals, dims, d_max)


def global_dimension(dims, d_max=DEFAULT_D_MAX):
    """Shared frame dimension: ``min(d_max, median local dimension)``."""
    return int(max(1, min(d_max, int(np.median(dims)))))


def feature_importance(frame, d=None):
    """Row-wise l2 norms of the first ``d`` basis columns (one value per feature)."""
    v = frame.basis if isinstance(frame, TangentFrame) else np.asarray(frame)
    d = v.shape[1] if d is None else d
    if d > v.shape[1]:
        raise ParameterError(f"d={d} exceeds the frame width {v.shape[1]}")
    return np.sqrt(np.sum(v[:, :d] ** 2, axis=1))


def optimal_alignment(vi, vj):
    """Orthogonal ``d x d`` matrix closest to the cross-Gram ``vi.T @ vj``."""
    vi = np.asarray(vi, dtype=np.float64)
    vj = np.asarray(vj, dtype=np.float64)
    if vi.shape != vj.shape:
        raise ParameterError(f"frame shapes differ: {vi.shape} vs {vj.shape}")
    u, s, wt = np.linalg.svd(vi.T @ vj)
    if s[-1] <= _RANK_RTOL * max(s[0], 1.0):
        warnings.warn("cross-Gram matrix is rank deficient; alignment is not unique", RuntimeWarning)
    return u @ wt


def align_edge(bundle, neighbors, i, j, d=None):
    """:class:`Alignment` for a kNN edge, with the edge length as distance."""
    d = bundle.global_dim if d is None else d
    row = neighbors.indices[i]
    hit = np.flatnonzero(row == j)
    if hit.size:
        dist = neighbors.distances[i, hit[0]]
    else:
        back = np.flatnonzero(neighbors.indices[j] == i)
        if not back.size:
            raise GraphError(f"({i}, {j}) is not a kNN edge")
        dist = neighbors.distances[j, back[0]]
    v = bundle.padded(d)
    return Alignment(i, j, optimal_alignment(v[i], v[j]), float(dist))


def parallel_transport(align, coords):
    """Rotate tangent coordinates by the alignment, then shift by the edge length."""
    x = np.asarray(coords, dtype=np.float64)
    return align.rotation @ x + align.distance


def consistence(vi, vj):
    """Frobenius cosine between two frames."""
    vi = np.asarray(vi, dtype=np.float64)
    vj = np.asarray(vj, dtype=np.float64)
    ni = np.linalg.norm(vi)
    nj = np.linalg.norm(vj)
    if ni == 0 or nj == 0:
        raise DegenerateFrameError("frame with zero Frobenius norm")
    return float(np.clip(np.sum(vi * vj) / (ni * nj), -1.0, 1.0))
