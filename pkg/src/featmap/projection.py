"""Anisotropic projection of points along their embedded tangent frames.

The objective is ``CE(P || Q) - lam * Corr(r_o, r_e)``: fuzzy cross-entropy
between the kNN graph and the heavy-tailed low-dimensional kernel, minus the
summed per-direction Pearson correlation between original log radii
(``log sigma**2``) and embedded log radii (the Q-weighted projected second
moment of each neighbourhood along the frame axes).
"""

import logging
import time
import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.optimize import curve_fit
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import eigsh

from . import frame_embed, knn_graph, tangent
from .config import RunConfig
from .errors import OptimizationDiverged, ParameterError

log = logging.getLogger(__name__)

EPS = 1e-12
GRAD_CLIP = 4.0
INIT_SCALE = 10.0
_DENSE_EIG_LIMIT = 3000


@dataclass(frozen=True)
class ShapeParams:
    a: float
    b: float
    min_dist: float
    residual: float = 0.0  # mean squared error of the fit

    def kernel(self, dist):
        return 1.0 / (1.0 + self.a * np.asarray(dist, dtype=np.float64) ** (2.0 * self.b))


@dataclass
class EmbeddingResult:
    embedding: np.ndarray
    frames: frame_embed.FrameField
    importance: np.ndarray
    tangent: tangent.TangentBundle
    diagnostics: dict = field(default_factory=dict)
    labels: np.ndarray | None = None
    feature_names: list | None = None


# ---------------------------------------------------------------- kernel shape

def _target_curve(x, min_dist):
    return np.where(x <= min_dist, 1.0, np.exp(-(x - min_dist)))


def fit_shape_params(min_dist=0.1, n_samples=300):
    """Least-squares fit of ``(1 + a x^{2b})^-1`` to the offset-exponential curve on (0, 3]."""
    if min_dist <= 0:
        raise ParameterError(f"min_dist must be > 0, got {min_dist}")
    x = np.linspace(3.0 / n_samples, 3.0, n_samples)
    y = _target_curve(x, min_dist)

    def curve(xv, a, b):
        return 1.0 / (1.0 + a * xv ** (2.0 * b))

    try:
        (a, b), _ = curve_fit(curve, x, y, p0=(1.0, 1.0), maxfev=10000)
    except RuntimeError as exc:
        raise ParameterError(f"kernel shape fit failed for min_dist={min_dist}: {exc}") from exc
    if not (a > 0 and b > 0):
        raise ParameterError(f"kernel shape fit returned a={a}, b={b}")
    resid = float(np.mean((curve(x, a, b) - y) ** 2))
    return ShapeParams(float(a), float(b), float(min_dist), resid)


# ---------------------------------------------------------------- initialisation

def _spectral_component(adj, d, rng):
    s = adj.shape[0]
    if s <= d + 1:
        return rng.uniform(-INIT_SCALE, INIT_SCALE, (s, d))
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = 1.0 / np.sqrt(np.maximum(deg, EPS))
    lap = sp.identity(s) - sp.diags(inv) @ adj @ sp.diags(inv)
    if s <= _DENSE_EIG_LIMIT:
        _, vecs = scipy.linalg.eigh(lap.toarray(), subset_by_index=[0, d])
    else:
        vals, vecs = eigsh(lap, k=d + 1, which="SM", tol=1e-4, v0=np.ones(s),
                           ncv=max(2 * d + 1, int(np.sqrt(s))), maxiter=5 * s)
        vecs = vecs[:, np.argsort(vals)]
    # back to the random-walk eigenvectors, i.e. solutions of L f = lambda D f
    coords = tangent._fix_signs(inv[:, None] * vecs[:, 1:d + 1])
    return coords


def _component_centres(data, labels, n_comp, d):
    """Centres for each component from a PCA of the data centroids.

    Scaled so that component boxes of half-width ``INIT_SCALE`` never overlap;
    ``None`` when the centroids cannot be separated in ``d`` dimensions.
    """
    cents = np.stack([data[labels == c].mean(axis=0) for c in range(n_comp)])
    cents -= cents.mean(axis=0)
    u, sv, _ = np.linalg.svd(cents, full_matrices=False)
    meta = np.zeros((n_comp, d))
    w = min(d, u.shape[1])
    meta[:, :w] = u[:, :w] * sv[:w]
    meta = tangent._fix_signs(meta)
    gap = np.max(np.abs(meta[:, None, :] - meta[None, :, :]), axis=2)
    np.fill_diagonal(gap, np.inf)
    closest = gap.min()
    if not np.isfinite(closest) or closest <= 1e-9 * max(np.abs(meta).max(), 1e-300):
        return None
    return meta * (2.5 * INIT_SCALE / closest)


def init_embedding(graph, d_prime, seed=0, data=None):
    """Spectral layout per connected component, components offset from each other.

    With ``data`` the component offsets follow the principal axes of the
    component centroids, otherwise a regular grid.  Falls back to seeded
    ``uniform(-10, 10)`` if the eigensolver fails.
    """
    adj = graph.weights.tocsr() if hasattr(graph, "weights") else sp.csr_matrix(graph)
    m = adj.shape[0]
    rng = np.random.default_rng(seed)
    try:
        n_comp, labels = connected_components(adj, directed=False)
        centres = None
        if data is not None and n_comp > 1:
            centres = _component_centres(np.asarray(data, dtype=np.float64), labels, n_comp, d_prime)
        if centres is None:
            side = int(np.ceil(n_comp ** (1.0 / d_prime)))
            cells = np.array(np.unravel_index(np.arange(n_comp), (side,) * d_prime), dtype=np.float64).T
            centres = 3.0 * INIT_SCALE * cells
        y = np.empty((m, d_prime))
        for c in range(n_comp):
            idx = np.flatnonzero(labels == c)
            coords = _spectral_component(adj[idx][:, idx], d_prime, rng)
            span = np.max(np.abs(coords))
            coords = coords * (INIT_SCALE / span) if span > 0 else coords
            y[idx] = coords + centres[c]
        if not np.all(np.isfinite(y)):
            raise np.linalg.LinAlgError("non-finite spectral coordinates")
        y -= y.mean(axis=0)
        y *= INIT_SCALE / np.max(np.abs(y))
        return y
    except (np.linalg.LinAlgError, scipy.sparse.linalg.ArpackError, ValueError) as exc:
        log.warning("spectral initialisation failed (%s); using random layout", exc)
        return np.random.default_rng(seed).uniform(-INIT_SCALE, INIT_SCALE, (m, d_prime))


# ---------------------------------------------------------------- radii

def original_radii(singular_values, d_prime):
    """Centred ``log sigma^2`` for the leading ``d'`` directions, shape ``(m, d')``."""
    s = np.asarray(getattr(singular_values, "singular_values", singular_values), dtype=np.float64)
    if s.shape[1] < d_prime or np.any(s[:, :d_prime] <= EPS):
        warnings.warn("zero or missing singular values clamped before taking logs", RuntimeWarning)
    s = frame_embed.retained_spectrum(s, d_prime, EPS)
    r = np.log(s ** 2)
    return r - r.mean(axis=0)


def _edge_arrays(graph):
    w = graph.weights.tocsr() if hasattr(graph, "weights") else sp.csr_matrix(graph)
    w.sort_indices()
    rows = np.repeat(np.arange(w.shape[0]), np.diff(w.indptr))
    return rows, w.indices.astype(np.int64), w.data.astype(np.float64)


def _radius_cache(y, frames, rows, cols, m, a, b):
    """Kernel row sums ``W`` and radii ``R`` over the stored edges of each point."""
    z = y[cols] - y[rows]
    s = np.sum(z * z, axis=1)
    q = 1.0 / (1.0 + a * s ** b)
    proj = np.einsum("ed,edl->el", z, frames[rows])
    w = np.bincount(rows, weights=q, minlength=m)
    num = np.zeros((m, frames.shape[2]))
    np.add.at(num, rows, q[:, None] * proj ** 2)
    radii = num / np.maximum(w, EPS)[:, None]
    return w, np.maximum(radii, EPS)


def embedded_radii(y, frames, graph, shape):
    """Q-weighted projected second moments ``R_il`` along each frame axis."""
    frames = getattr(frames, "frames", frames)
    rows, cols, _ = _edge_arrays(graph)
    y = np.asarray(y, dtype=np.float64)
    _, radii = _radius_cache(y, frames, rows, cols, y.shape[0], shape.a, shape.b)
    return radii


def density_correlation(r_o, r_e):
    """Sum over directions of Pearson correlations, plus the per-direction values."""
    r_o = np.asarray(r_o, dtype=np.float64)
    r_e = np.asarray(r_e, dtype=np.float64)
    if r_o.shape != r_e.shape or r_o.shape[0] < 3:
        raise ParameterError("radius arrays must share shape (m, d') with m >= 3")
    co = r_o - r_o.mean(axis=0)
    ce = r_e - r_e.mean(axis=0)
    num = np.sum(co * ce, axis=0)
    den = np.sqrt(np.sum(co * co, axis=0) * np.sum(ce * ce, axis=0))
    comps = np.zeros(r_o.shape[1])
    ok = den > 0
    if not ok.all():
        warnings.warn("zero-variance radius direction contributes 0 to the correlation", RuntimeWarning)
    comps[ok] = np.clip(num[ok] / den[ok], -1.0, 1.0)
    return float(comps.sum()), comps


# ---------------------------------------------------------------- analytic gradients

def grad_log_q(z, a, b):
    """d log Q / dz for ``Q = (1 + a |z|^{2b})^-1``."""
    z = np.asarray(z, dtype=np.float64)
    s = z @ z
    return -2.0 * a * b * s ** (b - 1.0) * z / (1.0 + a * s ** b)


def grad_log_one_minus_q(z, a, b):
    """d log(1 - Q) / dz."""
    z = np.asarray(z, dtype=np.float64)
    s = z @ z
    return 2.0 * b * z / (s * (1.0 + a * s ** b))


def grad_log_radius(z, frame, w_sum, radii, a, b):
    """d r_il / dz_ij for every direction l (rows of the result).

    ``w_sum`` is the kernel row sum of point i and ``radii`` its ``R_il``;
    both are the epoch-start cache.
    """
    z = np.asarray(z, dtype=np.float64)
    s = z @ z
    q = 1.0 / (1.0 + a * s ** b)
    dq = -2.0 * a * b * q * q * s ** (b - 1.0) * z
    proj = z @ frame
    out = np.empty((frame.shape[1], z.size))
    for l in range(frame.shape[1]):
        out[l] = (2.0 * q * proj[l] * frame[:, l] + (proj[l] ** 2 - radii[l]) * dq) / (w_sum * radii[l])
    return out


def corr_coefficients(r_o, r_e):
    """d Corr / d r_e per point and direction, ``(m, d')``.

    Zero for directions without variance on either side.
    """
    m = r_o.shape[0]
    mu = r_e.mean(axis=0)
    var_o = np.sum(r_o * r_o, axis=0) / (m - 1)
    ce = r_e - mu
    var_e = np.sum(ce * ce, axis=0) / (m - 1)
    cov = np.sum(r_o * ce, axis=0) / (m - 1)
    coef = np.zeros_like(r_o)
    ok = (var_o > 0) & (var_e > 0)
    coef[:, ok] = (var_o[ok] ** -0.5) * (
        r_o[:, ok] * var_e[ok] ** -0.5 - cov[ok] * var_e[ok] ** -1.5 * ce[:, ok]
    ) / (m - 1)
    return coef


def grad_corr_edge(z, i, j, frames, w_sum, radii, coef, a, b):
    """d Corr / dz_ij through both endpoint radii ``r_i`` and ``r_j``."""
    gi = grad_log_radius(z, frames[i], w_sum[i], radii[i], a, b)
    gj = grad_log_radius(z, frames[j], w_sum[j], radii[j], a, b)
    return coef[i] @ gi + coef[j] @ gj


# ---------------------------------------------------------------- losses

def cross_entropy(y, graph, shape):
    """Fuzzy cross-entropy over the stored edges of the graph."""
    rows, cols, p = _edge_arrays(graph)
    y = np.asarray(y, dtype=np.float64)
    z = y[cols] - y[rows]
    s = np.sum(z * z, axis=1)
    q = np.clip(1.0 / (1.0 + shape.a * s ** shape.b), EPS, 1.0 - EPS)
    return float(-np.sum(p * np.log(q) + (1.0 - p) * np.log(1.0 - q)))


def radius_correlation(y, frames, graph, shape, r_o):
    r_e = np.log(embedded_radii(y, frames, graph, shape))
    return density_correlation(r_o, r_e)


# ---------------------------------------------------------------- SGD kernel

@numba.njit(cache=True)
def _clip(v):
    if v > GRAD_CLIP:
        return GRAD_CLIP
    if v < -GRAD_CLIP:
        return -GRAD_CLIP
    return v


@numba.njit(cache=True)
def _accumulate_radius_grad(out, z, frame, w_sum, radii, coef, s, q, a, b):
    # out += sum_l coef_l * d r_l / dz
    dq_fac = -2.0 * a * b * q * q * s ** (b - 1.0) if s > 0.0 else 0.0
    d = z.shape[0]
    for l in range(frame.shape[1]):
        if coef[l] == 0.0:
            continue
        proj = 0.0
        for c in range(d):
            proj += z[c] * frame[c, l]
        scale = coef[l] / (w_sum * radii[l])
        for c in range(d):
            out[c] += scale * (2.0 * q * proj * frame[c, l] + (proj * proj - radii[l]) * dq_fac * z[c])


@numba.njit(cache=True)
def _projection_epoch(y, head, tail, eps, next_s, eps_neg, next_neg, n, alpha, a, b,
                      edge_rep, dens_weight, frames, w_sum, radii, coef, seed):
    np.random.seed(seed)
    m, d = y.shape
    z = np.empty(d)
    g = np.empty(d)
    dr = np.empty(d)
    for e in range(head.shape[0]):
        if next_s[e] > n:
            continue
        i = head[e]
        j = tail[e]
        s = 0.0
        for c in range(d):
            z[c] = y[j, c] - y[i, c]
            s += z[c] * z[c]
        if s > 0.0:
            coeff = 2.0 * a * b * s ** (b - 1.0) / (1.0 + a * s ** b)
            # the pair's own (1 - P) log(1 - Q) term, reweighted by 1/P for the sampling rate
            coeff -= edge_rep[e] * 2.0 * b / ((0.001 + s) * (1.0 + a * s ** b))
        else:
            coeff = 0.0
        # negative gradient of the pair's cross-entropy w.r.t. y_i
        for c in range(d):
            g[c] = coeff * z[c]
        if dens_weight[e] > 0.0:
            q = 1.0 / (1.0 + a * s ** b)
            dr[:] = 0.0
            _accumulate_radius_grad(dr, z, frames[i], w_sum[i], radii[i], coef[i], s, q, a, b)
            _accumulate_radius_grad(dr, z, frames[j], w_sum[j], radii[j], coef[j], s, q, a, b)
            for c in range(d):
                g[c] -= dens_weight[e] * dr[c]
        for c in range(d):
            step = alpha * _clip(g[c])
            y[i, c] += step
            y[j, c] -= step
        next_s[e] += eps[e]

        n_neg = int((n - next_neg[e]) / eps_neg[e])
        for _ in range(n_neg):
            l = np.random.randint(m)
            if l == i:
                continue
            s = 0.0
            for c in range(d):
                z[c] = y[l, c] - y[i, c]
                s += z[c] * z[c]
            if s > 0.0:
                coeff = 2.0 * b / ((0.001 + s) * (1.0 + a * s ** b))
                for c in range(d):
                    y[i, c] -= alpha * _clip(coeff * z[c])
            else:
                for c in range(d):
                    y[i, c] += alpha * GRAD_CLIP
        next_neg[e] += n_neg * eps_neg[e]


@dataclass
class ProjectionState:
    """Everything the point optimiser needs, refreshed at every epoch start."""

    y: np.ndarray
    frames: np.ndarray
    r_o: np.ndarray
    rows: np.ndarray
    cols: np.ndarray
    p: np.ndarray
    shape: ShapeParams
    lam: float
    neg_samples: int
    n_epochs: int
    seed: int = 0

    def __post_init__(self):
        self.eps = self.p.max() / self.p
        self.next_s = self.eps.copy()
        if self.neg_samples > 0:
            self.eps_neg = self.eps / self.neg_samples
        else:
            self.eps_neg = np.full_like(self.eps, np.inf)
        self.next_neg = self.eps_neg.copy()
        self.edge_rep = (1.0 - self.p) / self.p
        m = self.y.shape[0]
        z_total = self.p.sum()
        # edge drawn with probability P/Z; Z/P undoes the sampling bias and
        # keeps the correlation gradient on the scale of the CE gradient
        if self.lam > 0:
            self.dens_weight = self.lam * z_total / self.p
        else:
            self.dens_weight = np.zeros_like(self.p)
        self.w_sum = np.ones(m)
        self.radii = np.ones_like(self.r_o)
        self.coef = np.zeros_like(self.r_o)

    def refresh(self):
        m = self.y.shape[0]
        self.w_sum, self.radii = _radius_cache(self.y, self.frames, self.rows, self.cols, m,
                                               self.shape.a, self.shape.b)
        self.r_e = np.log(self.radii)
        if self.lam > 0:
            self.coef = corr_coefficients(self.r_o, self.r_e)
        return self.r_e


def _quiet_corr(r_o, r_e):
    if r_o.shape[0] < 3:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return density_correlation(r_o, r_e)[0]


def sgd_epoch(state, epoch):
    """One epoch: refresh caches, then edge-sampling updates in place."""
    state.refresh()
    alpha = 1.0 - epoch / state.n_epochs
    _projection_epoch(state.y, state.rows, state.cols, state.eps, state.next_s, state.eps_neg,
                      state.next_neg, float(epoch + 1), alpha, state.shape.a, state.shape.b,
                      state.edge_rep, state.dens_weight, state.frames, state.w_sum, state.radii, state.coef,
                      state.seed + epoch)
    if not np.all(np.isfinite(state.y)):
        raise OptimizationDiverged("projection", epoch, "non-finite coordinates")
    return state


# ---------------------------------------------------------------- pipeline

def embed(data, config=None, **overrides):
    """Full pipeline: kNN graph, tangent frames, frame embedding, projection."""
    config = RunConfig(**overrides) if config is None else config
    x = np.asarray(getattr(data, "values", data), dtype=np.float64)
    config.validate(x.shape[0])
    t0 = time.perf_counter()

    nbrs, _, graph = knn_graph.similarity_graph(x, config.k)
    d_cap = min(config.d_max, config.k, x.shape[1])
    bundle = tangent.estimate_frames(x, graph, nbrs, d_cap, config.tau)
    d = bundle.global_dim
    if config.d_prime > d:
        raise ParameterError(f"embedding dimension {config.d_prime} exceeds the frame dimension {d}")
    shape = fit_shape_params(config.min_dist)
    log.info("graph and frames ready: m=%d, edges=%d, d=%d", x.shape[0], graph.n_edges, d)

    padded = bundle.padded(d)
    raw = frame_embed.init_frames(x.shape[0], config.d_prime, config.seed)
    kl = []
    if config.frame_epochs > 0:
        sim = frame_embed.tangent_similarities(padded, nbrs)
        raw = frame_embed.optimize_frames(sim, raw, config.frame_epochs, shape.a, shape.b,
                                          config.neg_samples, config.seed, history=kl)
    field_ = frame_embed.orthonormalize(raw, bundle.singular_values)

    r_o = original_radii(bundle.singular_values, config.d_prime)
    rows, cols, p = _edge_arrays(graph)
    state = ProjectionState(init_embedding(graph, config.d_prime, config.seed, x), field_.frames, r_o,
                            rows, cols, p, shape, config.lam, config.neg_samples, config.epochs,
                            config.seed)
    ce_initial = cross_entropy(state.y, graph, shape)
    ce, corr = [], []
    for epoch in range(config.epochs):
        sgd_epoch(state, epoch)
        corr.append(_quiet_corr(r_o, state.r_e))
        ce.append(cross_entropy(state.y, graph, shape))

    y = state.y
    total, comps = radius_correlation(y, field_.frames, graph, shape, r_o)
    r_e = np.log(embedded_radii(y, field_.frames, graph, shape))
    diagnostics = {
        "ce_initial": ce_initial,
        "ce_loss": ce,
        "frame_kl": kl,
        "corr_history": corr,
        "radius_correlation": total,
        "radius_correlation_components": comps.tolist(),
        "frame_dim": d,
        "intrinsic_dims": bundle.dims.tolist(),
        "shape": {"a": shape.a, "b": shape.b, "min_dist": shape.min_dist},
        "seconds": time.perf_counter() - t0,
        "config": config.echo(),
        "r_o": r_o,
        "r_e": r_e,
    }
    return EmbeddingResult(
        embedding=y,
        frames=field_,
        importance=bundle.importance(d),
        tangent=bundle,
        diagnostics=diagnostics,
        labels=getattr(data, "labels", None),
        feature_names=getattr(data, "feature_names", None),
    )
