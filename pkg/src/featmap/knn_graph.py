"""Weighted kNN graph: exact neighbours, adaptive bandwidths, fuzzy union.

Directed memberships follow the smooth-kNN convention

    P(j|i) = exp(-(||x_i - x_j|| - dist_i) / gamma_i)

where ``dist_i`` is the distance to the nearest neighbour and ``gamma_i`` is
calibrated so the memberships of each row sum to ``log2(k)``.  The directed
weights are symmetrised with the probabilistic OR ``a + b - a*b``.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import cdist

from .errors import DataError, GraphError, ParameterError

BANDWIDTH_TOL = 1e-5
BANDWIDTH_MAX_ITER = 50
# gamma never drops below this fraction of the mean neighbour distance
MIN_GAMMA_SCALE = 1e-3
_TINY = np.finfo(np.float64).tiny

METRICS = ("euclidean",)


@dataclass(frozen=True)
class NeighborLists:
    """k nearest neighbours of every point, ascending by distance."""

    indices: np.ndarray  # (m, k) int64
    distances: np.ndarray  # (m, k) float64

    @property
    def m(self):
        return self.indices.shape[0]

    @property
    def k(self):
        return self.indices.shape[1]


@dataclass(frozen=True)
class BandwidthParams:
    dist: np.ndarray  # (m,) nearest-neighbour distance
    gamma: np.ndarray  # (m,) length scale, > 0


@dataclass(frozen=True)
class SimilarityGraph:
    """Symmetric fuzzy membership weights on the union of kNN edges."""

    weights: sp.csr_matrix

    @property
    def m(self):
        return self.weights.shape[0]

    @property
    def n_edges(self):
        return self.weights.nnz

    def weight(self, i, j):
        row = self.weights.indices[self.weights.indptr[i]:self.weights.indptr[i + 1]]
        pos = np.flatnonzero(row == j)
        if pos.size == 0:
            raise GraphError(f"({i}, {j}) is not an edge of the graph")
        return float(self.weights.data[self.weights.indptr[i] + pos[0]])

    def has_edge(self, i, j):
        row = self.weights.indices[self.weights.indptr[i]:self.weights.indptr[i + 1]]
        return bool(np.any(row == j))

    def coo(self):
        """Stored entries as ``(rows, cols, values)``, both directions included."""
        c = self.weights.tocoo()
        return c.row.astype(np.int64), c.col.astype(np.int64), c.data.astype(np.float64)


def _check_data(data):
    x = np.asarray(data, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected a 2-D matrix, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        bad = np.argwhere(~np.isfinite(x))[0]
        raise DataError(f"non-finite value at row {bad[0]}, column {bad[1]}")
    return x


def build_knn(data, k, metric="euclidean", chunk_size=512):
    """Exact k nearest neighbours by brute force.

    Ties are broken by lower index and a point never lists itself, even when
    duplicated elsewhere in the data.
    """
    if metric not in METRICS:
        raise ParameterError(f"unsupported metric {metric!r}; choose from {METRICS}")
    x = _check_data(data)
    m = x.shape[0]
    if not 1 <= k < m:
        raise ParameterError(f"k must satisfy 1 <= k < m (k={k}, m={m})")

    indices = np.empty((m, k), dtype=np.int64)
    distances = np.empty((m, k), dtype=np.float64)
    for start in range(0, m, chunk_size):
        stop = min(start + chunk_size, m)
        block = cdist(x[start:stop], x, metric="euclidean")
        rows = np.arange(stop - start)
        block[rows, rows + start] = np.inf
        for r in range(stop - start):
            d = block[r]
            # everything at or below the k-th smallest value, then exact (dist, index) order
            kth = np.partition(d, k - 1)[k - 1]
            cand = np.flatnonzero(d <= kth)
            order = np.lexsort((cand, d[cand]))[:k]
            indices[start + r] = cand[order]
            distances[start + r] = d[cand[order]]
    return NeighborLists(indices, distances)


def _calibrate_rows(dists, target):
    """Vectorised bisection for gamma, one row per point."""
    dists = np.atleast_2d(dists)
    rho = dists[:, 0]
    shifted = dists - rho[:, None]
    n_rows = dists.shape[0]
    lo = np.zeros(n_rows)
    hi = np.full(n_rows, np.inf)
    mid = np.ones(n_rows)
    done = np.zeros(n_rows, dtype=bool)
    for _ in range(BANDWIDTH_MAX_ITER):
        psum = np.exp(-shifted / mid[:, None]).sum(axis=1)
        done |= np.abs(psum - target) < BANDWIDTH_TOL
        active = ~done
        if not active.any():
            break
        over = active & (psum > target)
        under = active & ~over
        hi[over] = mid[over]
        mid[over] = (lo[over] + hi[over]) / 2.0
        lo[under] = mid[under]
        fin = under & np.isfinite(hi)
        mid[fin] = (lo[fin] + hi[fin]) / 2.0
        mid[under & ~np.isfinite(hi)] *= 2.0

    flat = np.all(shifted == 0.0, axis=1)
    mid[flat] = 1.0
    floor = MIN_GAMMA_SCALE * dists.mean(axis=1)
    low = ~flat & (mid < floor)
    mid[low] = floor[low]
    mid = np.where(mid > 0, mid, BANDWIDTH_TOL)
    return rho, mid


def calibrate_bandwidth(distances, k=None):
    """Return ``(dist_i, gamma_i)`` for one sorted neighbour-distance list.

    ``gamma_i`` solves ``sum_j exp(-(d_j - dist_i) / gamma) = log2(k)``.
    When every distance is equal the equation has no finite solution and
    ``gamma_i = 1``.
    """
    d = np.asarray(distances, dtype=np.float64).ravel()
    if d.size == 0:
        raise ParameterError("distance list is empty")
    if np.any(d < 0) or np.any(np.diff(d) < 0):
        raise ParameterError("distances must be nonnegative and nondecreasing")
    k = d.size if k is None else k
    rho, gamma = _calibrate_rows(d[None, :], np.log2(k))
    return float(rho[0]), float(gamma[0])


def calibrate_bandwidths(neighbors):
    rho, gamma = _calibrate_rows(neighbors.distances, np.log2(neighbors.k))
    return BandwidthParams(rho, gamma)


def membership(distances, dist, gamma):
    """Smooth-kNN membership; clamped away from zero so every kNN edge survives."""
    w = np.exp(-(np.asarray(distances) - np.asarray(dist)[..., None]) / np.asarray(gamma)[..., None])
    return np.clip(w, _TINY, 1.0)


def directed_weights(neighbors, bw):
    """Sparse ``m x m`` matrix with ``P(j|i)`` stored at ``(i, j)``."""
    w = membership(neighbors.distances, bw.dist, bw.gamma)
    m, k = neighbors.indices.shape
    rows = np.repeat(np.arange(m), k)
    return sp.csr_matrix((w.ravel(), (rows, neighbors.indices.ravel())), shape=(m, m))


def fuzzy_union(directed):
    """Symmetrise directed memberships with ``a + b - a*b``."""
    a = sp.csr_matrix(directed, dtype=np.float64)
    at = a.T.tocsr()
    p = (a + at - a.multiply(at)).tocsr()
    p.sum_duplicates()
    p.sort_indices()
    return SimilarityGraph(p)


def similarity_graph(data, k, metric="euclidean"):
    """Neighbour lists, bandwidths and the symmetric graph in one call."""
    nbrs = build_knn(data, k, metric)
    bw = calibrate_bandwidths(nbrs)
    return nbrs, bw, fuzzy_union(directed_weights(nbrs, bw))
