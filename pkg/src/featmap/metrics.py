"""Local and global embedding quality measures.

Local: trustworthiness, continuity, kNN accuracy.
Global: Shepard goodness, normalized stress, centroid triplet accuracy.
"""

import warnings
from dataclasses import asdict, dataclass
from itertools import combinations

import numpy as np
from scipy.spatial.distance import pdist, squareform
from scipy.stats import spearmanr

from .errors import ParameterError

MAX_PAIRS = 10 ** 6
SUBSAMPLE_SEED = 0


@dataclass
class MetricReport:
    trustworthiness: float
    continuity: float
    knn_accuracy: float | None
    shepard_goodness: float
    normalized_stress: float
    centroid_triplet_accuracy: float | None
    k: int
    m: int

    def to_dict(self):
        return asdict(self)


def _as2d(a):
    a = np.asarray(a, dtype=np.float64)
    return a.reshape(-1, 1) if a.ndim == 1 else a


def _rank_order(x):
    """Neighbour order per row (self first, ties by index) and its inverse."""
    d = squareform(pdist(x))
    np.fill_diagonal(d, -1.0)
    order = np.argsort(d, axis=1, kind="stable")
    ranks = np.empty_like(order)
    rows = np.arange(len(x))[:, None]
    ranks[rows, order] = np.arange(len(x))[None, :]
    return order, ranks


def trustworthiness(x, y, k):
    """Penalise points that enter an embedded k-neighbourhood from far away in ``x``."""
    x, y = _as2d(x), _as2d(y)
    m = len(x)
    if not 1 <= k < m / 2:
        raise ParameterError(f"trustworthiness needs 1 <= k < m/2 (k={k}, m={m})")
    _, ranks_x = _rank_order(x)
    order_y, _ = _rank_order(y)
    nn_y = order_y[:, 1:k + 1]
    r = np.take_along_axis(ranks_x, nn_y, axis=1)
    penalty = np.sum(np.maximum(r - k, 0))
    return float(1.0 - 2.0 / (m * k * (2.0 * m - 3.0 * k - 1.0)) * penalty)


def continuity(x, y, k):
    return trustworthiness(y, x, k)


def knn_accuracy(y, labels, k):
    """Leave-one-out kNN classification accuracy in the embedding."""
    if labels is None:
        raise ParameterError("knn_accuracy requires labels")
    y = _as2d(y)
    labels = np.asarray(labels)
    if len(labels) != len(y):
        raise ParameterError("labels and embedding differ in length")
    if not 1 <= k < len(y):
        raise ParameterError(f"k must satisfy 1 <= k < m (k={k}, m={len(y)})")
    classes, codes = np.unique(labels, return_inverse=True)
    order, _ = _rank_order(y)
    votes = codes[order[:, 1:k + 1]]
    counts = np.zeros((len(y), len(classes)), dtype=np.int64)
    np.add.at(counts, (np.repeat(np.arange(len(y)), k), votes.ravel()), 1)
    # argmax returns the first maximum, i.e. the lowest label on ties
    pred = np.argmax(counts, axis=1)
    return float(np.mean(pred == codes))


def _paired_distances(x, y, seed=SUBSAMPLE_SEED):
    m = len(x)
    if m * (m - 1) // 2 > MAX_PAIRS:
        keep = int(np.floor((1 + np.sqrt(1 + 8 * MAX_PAIRS)) / 2))
        idx = np.sort(np.random.default_rng(seed).choice(m, keep, replace=False))
        x, y = x[idx], y[idx]
    return pdist(x), pdist(y)


def shepard_goodness(x, y, seed=SUBSAMPLE_SEED):
    """Spearman correlation between original and embedded pairwise distances."""
    x, y = _as2d(x), _as2d(y)
    if len(x) < 3:
        raise ParameterError("shepard_goodness needs at least 3 points")
    dx, dy = _paired_distances(x, y, seed)
    if np.ptp(dx) == 0 or np.ptp(dy) == 0:
        warnings.warn("constant distances; Shepard goodness set to 0", RuntimeWarning)
        return 0.0
    return float(spearmanr(dx, dy).statistic)


def normalized_stress(x, y, seed=SUBSAMPLE_SEED):
    x, y = _as2d(x), _as2d(y)
    if len(x) < 2:
        raise ParameterError("normalized_stress needs at least 2 points")
    dx, dy = _paired_distances(x, y, seed)
    denom = np.sum(dx ** 2)
    if denom == 0:
        raise ParameterError("all original distances are zero")
    return float(np.sum((dx - dy) ** 2) / denom)


def _centroids(a, codes, n_classes):
    return np.stack([a[codes == c].mean(axis=0) for c in range(n_classes)])


def centroid_triplet_accuracy(x, y, labels):
    """Share of centroid triplets ``(a; b, c)`` whose distance order survives."""
    if labels is None:
        raise ParameterError("centroid_triplet_accuracy requires labels")
    x, y = _as2d(x), _as2d(y)
    classes, codes = np.unique(np.asarray(labels), return_inverse=True)
    c = len(classes)
    if c < 3:
        raise ParameterError(f"need at least 3 classes, got {c}")
    dx = squareform(pdist(_centroids(x, codes, c)))
    dy = squareform(pdist(_centroids(y, codes, c)))
    hits = total = 0
    for a in range(c):
        others = [i for i in range(c) if i != a]
        for b, cc in combinations(others, 2):
            total += 1
            hits += np.sign(dx[a, b] - dx[a, cc]) == np.sign(dy[a, b] - dy[a, cc])
    return float(hits / total)


def evaluate(x, y, labels=None, k=10):
    """All six measures; label-based ones are ``None`` without labels."""
    x, y = _as2d(x), _as2d(y)
    knn = cta = None
    if labels is not None:
        knn = knn_accuracy(y, labels, k)
        if len(np.unique(labels)) >= 3:
            cta = centroid_triplet_accuracy(x, y, labels)
    return MetricReport(
        trustworthiness=trustworthiness(x, y, k),
        continuity=continuity(x, y, k),
        knn_accuracy=knn,
        shepard_goodness=shepard_goodness(x, y),
        normalized_stress=normalized_stress(x, y),
        centroid_triplet_accuracy=cta,
        k=k,
        m=len(x),
    )
