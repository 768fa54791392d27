"""Synthetic point clouds used by the test-suite and the demo commands."""

import numpy as np


def gaussian_blobs(n_clusters=10, per_cluster=100, n_features=50, std=1.0, box=10.0, seed=0):
    """Isotropic blobs with centres drawn uniformly from ``[-box, box]^n``."""
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-box, box, (n_clusters, n_features))
    x = np.concatenate([c + std * rng.standard_normal((per_cluster, n_features)) for c in centers])
    labels = np.repeat(np.arange(n_clusters), per_cluster)
    return x, labels


def affine_plane(m=200, n=10, seed=0, active=None):
    """Points on a 2-plane in R^n.

    With ``active=(p, q)`` the plane is spanned by those coordinate axes and
    the remaining coordinates are a fixed offset; otherwise the plane has a
    random orientation.  Returns ``(x, basis)`` with ``basis`` an ``n x 2``
    orthonormal matrix spanning the plane.
    """
    rng = np.random.default_rng(seed)
    t = rng.uniform(-1.0, 1.0, (m, 2))
    if active is None:
        basis, _ = np.linalg.qr(rng.standard_normal((n, 2)))
    else:
        basis = np.zeros((n, 2))
        basis[active[0], 0] = 1.0
        basis[active[1], 1] = 1.0
    offset = rng.standard_normal(n)
    return offset + t @ basis.T, basis


def two_densities(per_cluster=300, n_features=10, variances=(1.0, 9.0), separation=20.0, seed=0):
    """Two Gaussians with different variances, centres ``separation`` apart on axis 0."""
    rng = np.random.default_rng(seed)
    parts = []
    for c, var in enumerate(variances):
        centre = np.zeros(n_features)
        centre[0] = c * separation
        parts.append(centre + np.sqrt(var) * rng.standard_normal((per_cluster, n_features)))
    labels = np.repeat(np.arange(len(variances)), per_cluster)
    return np.concatenate(parts), labels
