import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from featmap.errors import DataError, GraphError, ParameterError
from featmap.knn_graph import (BandwidthParams, build_knn, calibrate_bandwidth, calibrate_bandwidths,
                               directed_weights, fuzzy_union, membership, similarity_graph)


def brute_knn(x, k):
    """All-pairs distances, sorted by (distance, index), self removed."""
    m = len(x)
    d = np.sqrt(((x[:, None, :] - x[None, :, :]) ** 2).sum(-1))
    idx = np.empty((m, k), dtype=int)
    for i in range(m):
        cand = sorted((d[i, j], j) for j in range(m) if j != i)[:k]
        idx[i] = [j for _, j in cand]
    return idx, np.take_along_axis(d, idx, axis=1)


def scalar_gamma(dists, target):
    """Plain scalar bisection on sum(exp(-(d - d0)/g)) = target."""
    d = np.asarray(dists, float) - dists[0]
    f = lambda g: np.exp(-d / g).sum() - target  # noqa: E731
    lo, hi = 1e-8, 1e4
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


class TestBuildKnn:
    def test_collinear(self):
        nb = build_knn(np.array([[0.0], [1.0], [3.0]]), 1)
        assert nb.indices.ravel().tolist() == [1, 0, 1]
        assert nb.distances.ravel().tolist() == [1.0, 1.0, 2.0]

    def test_k1_is_argmin(self, rng):
        x = rng.standard_normal((40, 3))
        nb = build_knn(x, 1)
        d = np.sqrt(((x[:, None] - x[None]) ** 2).sum(-1))
        np.fill_diagonal(d, np.inf)
        assert np.array_equal(nb.indices[:, 0], np.argmin(d, axis=1))

    def test_matches_brute_force(self, rng):
        x = rng.standard_normal((100, 5))
        nb = build_knn(x, 10, chunk_size=17)
        idx, dist = brute_knn(x, 10)
        assert np.array_equal(nb.indices, idx)
        np.testing.assert_allclose(nb.distances, dist, rtol=1e-12)

    def test_ties_lower_index_and_duplicates(self):
        # points 1..4 all at distance 1 from 0; duplicates of 0 at index 5
        x = np.array([[0, 0], [1, 0], [0, 1], [-1, 0], [0, -1], [0, 0]], float)
        nb = build_knn(x, 3)
        assert nb.indices[0].tolist() == [5, 1, 2]
        assert nb.indices[5].tolist() == [0, 1, 2]
        assert 0 not in nb.indices[0]

    def test_errors(self):
        x = np.zeros((5, 2))
        with pytest.raises(ParameterError):
            build_knn(x, 5)
        with pytest.raises(ParameterError):
            build_knn(x, 0)
        x[2, 1] = np.nan
        with pytest.raises(DataError):
            build_knn(x, 2)
        with pytest.raises(ParameterError):
            build_knn(np.ones((4, 2)), 2, metric="cosine")

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(5, 30), st.integers(1, 4)),
                  elements=st.integers(-5, 5).map(float)),
           st.integers(1, 4))
    def test_brute_force_property(self, x, k):
        nb = build_knn(x, k)
        idx, dist = brute_knn(x, k)
        assert np.array_equal(nb.indices, idx)
        assert np.all(np.diff(nb.distances, axis=1) >= 0)
        assert not np.any(nb.indices == np.arange(len(x))[:, None])


class TestBandwidth:
    def test_equal_distances(self):
        assert calibrate_bandwidth([1.0, 1.0, 1.0], 3) == (1.0, 1.0)

    def test_one_two_three(self):
        dist, gamma = calibrate_bandwidth([1.0, 2.0, 3.0], 3)
        assert dist == 1.0
        oracle = scalar_gamma([1.0, 2.0, 3.0], np.log2(3))
        assert gamma == pytest.approx(oracle, abs=1e-4)
        assert gamma == pytest.approx(1.1332, abs=1e-3)
        u = np.exp(-1.0 / gamma)
        assert 1 + u + u * u == pytest.approx(np.log2(3), abs=1e-5)

    def test_zero_five_ten(self):
        dist, gamma = calibrate_bandwidth([0.0, 5.0, 10.0], 3)
        assert dist == 0.0
        assert gamma == pytest.approx(scalar_gamma([0.0, 5.0, 10.0], np.log2(3)), rel=1e-4)

    def test_empty(self):
        with pytest.raises(ParameterError):
            calibrate_bandwidth([], 3)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.integers(0, 50_000).map(lambda v: v / 1000), min_size=3, max_size=20))
    def test_row_sum_target(self, d):
        d = np.sort(np.array(d))
        target = np.log2(len(d))
        dist, gamma = calibrate_bandwidth(d)
        assert dist == d[0] and gamma > 0
        if np.all(d == d[0]):
            assert gamma == 1.0
        elif np.sum(d == d[0]) < target and gamma > 1e-3 * d.mean():
            # solvable: fewer tied minima than the target, so the sum can reach it
            assert np.exp(-(d - dist) / gamma).sum() == pytest.approx(target, abs=1e-4)


class TestWeights:
    def test_examples(self):
        assert membership(np.array([2.0]), np.array(2.0), np.array(0.7))[0] == 1.0
        assert membership(np.array([3.0]), np.array(2.0), np.array(1.0))[0] == pytest.approx(np.exp(-1))
        dist, gamma = calibrate_bandwidth([1.0, 2.0, 3.0], 3)
        w = membership(np.array([1.0, 2.0, 3.0]), np.array(dist), np.array(gamma))
        np.testing.assert_allclose(w, [1.0, 0.4138, 0.1712], atol=2e-4)

    def test_nearest_weight_one_and_monotone(self, rng):
        nb = build_knn(rng.standard_normal((60, 4)), 8)
        w = directed_weights(nb, calibrate_bandwidths(nb))
        vals = np.array([[w[i, j] for j in nb.indices[i]] for i in range(nb.m)])
        assert np.all(vals[:, 0] == 1.0)
        assert np.all(np.diff(vals, axis=1) <= 0)
        assert np.all((vals > 0) & (vals <= 1))

    def test_fuzzy_union_examples(self):
        def union(a, b):
            d = sp.csr_matrix(np.array([[0, a], [b, 0]], float))
            return fuzzy_union(d)

        assert union(1.0, 1.0).weight(0, 1) == 1.0
        assert union(0.5, 0.0).weight(0, 1) == 0.5
        assert union(0.5, 0.0).weight(1, 0) == 0.5
        assert union(0.5, 0.5).weight(0, 1) == 0.75

    def test_graph_invariants(self, rng):
        x = rng.standard_normal((80, 6))
        nb, bw, g = similarity_graph(x, 10)
        w = g.weights
        assert (w != w.T).nnz == 0
        assert np.all(w.data > 0) and np.all(w.data <= 1)
        d = directed_weights(nb, bw)
        dense, dd = w.toarray(), d.toarray()
        assert np.all(dense >= np.maximum(dd, dd.T) - 1e-15)
        # edge set is exactly the union of directed kNN edges
        assert np.array_equal(dense > 0, (dd > 0) | (dd.T > 0))
        assert isinstance(bw, BandwidthParams) and np.all(bw.gamma > 0)
        assert np.array_equal(bw.dist, nb.distances[:, 0])

    def test_missing_edge(self, rng):
        _, _, g = similarity_graph(rng.standard_normal((30, 2)), 2)
        i, j = 0, int(np.flatnonzero(g.weights.toarray()[0] == 0)[1])
        assert not g.has_edge(i, j)
        with pytest.raises(GraphError):
            g.weight(i, j)
