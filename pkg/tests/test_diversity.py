import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from streamclean.diversity import (ClusteringResult, bvsb, bvsb_matrix, kmeans, rank_suspicious_no_clustering,
                                   select_top_k_per_cluster)
from streamclean.types import PredictionDistribution, Sample


def test_bvsb_examples():
    assert math.isclose(bvsb(np.array([0.5, 0.3, 0.2])), 0.2)
    assert bvsb(np.array([0.0, 1.0, 0.0])) == 1.0
    assert bvsb(PredictionDistribution(np.full(4, 0.25))) == 0.0


@given(arrays(np.float64, (5,), elements=st.floats(0.01, 1.0)), st.permutations(range(5)))
def test_bvsb_permutation_invariant(raw, perm):
    p = raw / raw.sum()
    assert math.isclose(bvsb(p), bvsb(p[list(perm)]), abs_tol=1e-15)
    assert 0.0 <= bvsb(p) <= 1.0
    assert math.isclose(bvsb_matrix(p[None, :])[0], bvsb(p), abs_tol=1e-15)


def test_two_pairs_form_clusters():
    X = np.array([[0.0, 0.0], [0.1, 0.0], [10.0, 10.0], [10.0, 10.1]])
    res = kmeans(X, 2, seed=0)
    assert res.labels[0] == res.labels[1] != res.labels[2] == res.labels[3]


def test_single_cluster_is_mean():
    X = np.random.default_rng(1).normal(size=(20, 3))
    res = kmeans(X, 1)
    assert np.allclose(res.centroids[0], X.mean(axis=0))
    assert math.isclose(res.inertia, X.var(axis=0).sum() * len(X))


def _brute(X, k=2):
    best = math.inf
    for lab in itertools.product(range(k), repeat=len(X)):
        lab = np.array(lab)
        if len(set(lab)) < k:
            continue
        best = min(best, sum(((X[lab == c] - X[lab == c].mean(axis=0)) ** 2).sum() for c in range(k)))
    return best


def test_six_points_match_brute_force():
    rng = np.random.default_rng(2)
    X = np.vstack([rng.normal(size=(3, 2)), rng.normal(size=(3, 2)) + [8.0, 0.0]])
    assert math.isclose(kmeans(X, 2, seed=1).inertia, _brute(X), rel_tol=1e-12)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(3, 30), st.integers(1, 3)), elements=st.floats(-10, 10)),
       st.integers(1, 5), st.integers(0, 100), st.sampled_from(["kmeans++", "random"]))
def test_lloyd_invariants(X, k, seed, init):
    k = min(k, len(X))
    res = kmeans(X, k, seed=seed, init=init, n_init=1)
    h = np.array(res.inertia_history)
    assert np.all(np.diff(h) <= 1e-9 * (1 + h[:-1]))
    D = ((X[:, None, :] - res.centroids[None]) ** 2).sum(axis=2)
    assert np.array_equal(res.labels, np.argmin(D, axis=1))
    assert res.inertia >= 0


def test_kmeans_edge_cases():
    X = np.zeros((3, 2))
    with pytest.warns(UserWarning):
        res = kmeans(X, 5)
    assert len(res.centroids) == 3
    with pytest.raises(ValueError):
        kmeans(X, 0)
    with pytest.raises(ValueError):
        kmeans(X, 2, init="bogus")
    res = kmeans(np.arange(8.0)[:, None], 2, ids=range(100, 108))
    assert set(res.assignments) == set(range(100, 108))


def test_kmeans_is_deterministic():
    X = np.random.default_rng(3).normal(size=(50, 4))
    a, b = kmeans(X, 4, seed=7), kmeans(X, 4, seed=7)
    assert np.array_equal(a.centroids, b.centroids) and np.array_equal(a.labels, b.labels)


def _susp(n):
    return [Sample(i, np.zeros(1), 1, 0) for i in range(n)]


def _clusters(labels):
    return ClusteringResult(np.zeros((max(labels) + 1, 1)), np.array(labels), 1, 0.0, [0.0],
                            tuple(range(len(labels))))


def test_top_k_single_cluster():
    U = _susp(5)
    scores = {0: 0.5, 1: 0.1, 2: 0.4, 3: 0.05, 4: 0.9}
    sel, disc = select_top_k_per_cluster(U, _clusters([0] * 5), scores, 2)
    assert [s.id for s in sel] == [3, 1]
    assert sorted(s.id for s in disc) == [0, 2, 4]
    sel, disc = select_top_k_per_cluster(U, _clusters([0] * 5), scores, 9)
    assert [s.id for s in sel] == [3, 1, 2, 0, 4] and disc == []


def test_top_k_three_clusters_by_hand():
    U = _susp(9)
    labels = [0, 0, 0, 1, 1, 1, 2, 2, 2]
    scores = {0: 0.30, 1: 0.10, 2: 0.20, 3: 0.05, 4: 0.50, 5: 0.40, 6: 0.60, 7: 0.60, 8: 0.70}
    sel, disc = select_top_k_per_cluster(U, _clusters(labels), scores, 2)
    # cluster 0 -> {1, 2}; cluster 1 -> {3, 5}; cluster 2 -> {6, 7} (tie broken by id)
    assert [s.id for s in sel] == [3, 1, 2, 5, 6, 7]
    assert sorted(s.id for s in disc) == [0, 4, 8]


@given(st.lists(st.sampled_from([0.0, 0.1, 0.2, 0.5]), min_size=1, max_size=30))
def test_no_clustering_order(vals):
    U = _susp(len(vals))
    scores = dict(enumerate(vals))
    ranked = rank_suspicious_no_clustering(U, scores)
    keys = [(scores[s.id], s.id) for s in ranked]
    assert keys == sorted(keys) and len(ranked) == len(U)
