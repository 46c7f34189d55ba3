import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from tntrules.clustering import (
    Clustering, ClusteringError, LinkageTree, VariancePruningClustering, build_linkage, distance_prune,
    linkage_matrix, node_variance, variance_prune,
)
from tntrules.dataset import ExplanationDataset, generate_dataset, minmax
from tntrules.problems import SearchSpace


def brute_force_hac(F, method):
    """Naive agglomeration: recompute every pairwise cluster distance at each step."""
    clusters = {i: [i] for i in range(len(F))}
    merges = []
    nxt = len(F)

    def dist(a, b):
        A, B = F[clusters[a]], F[clusters[b]]
        D = np.linalg.norm(A[:, None] - B[None], axis=2)
        if method == "single":
            return D.min()
        if method == "complete":
            return D.max()
        if method == "average":
            return D.mean()
        na, nb = len(A), len(B)
        return np.sqrt(2 * na * nb / (na + nb)) * np.linalg.norm(A.mean(0) - B.mean(0))

    while len(clusters) > 1:
        keys = sorted(clusters)
        best = min(((dist(a, b), a, b) for i, a in enumerate(keys) for b in keys[i + 1:]))
        d, a, b = best
        merges.append((frozenset(clusters[a]), frozenset(clusters[b]), d))
        clusters[nxt] = clusters.pop(a) + clusters.pop(b)
        nxt += 1
    return merges


def tree_merges(Z, n):
    members = {i: [i] for i in range(n)}
    out = []
    for k, (a, b, d, _) in enumerate(Z):
        A, B = members[int(a)], members[int(b)]
        out.append((frozenset(A), frozenset(B), d))
        members[n + k] = A + B
    return out


@pytest.mark.parametrize("method", ["ward", "complete", "average", "single"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_merge_order_matches_brute_force(method, seed):
    F = np.random.default_rng(seed).normal(size=(10, 3))
    got = tree_merges(linkage_matrix(F, method), 10)
    ref = brute_force_hac(F, method)
    for (a, b, d), (ra, rb, rd) in zip(got, ref):
        assert {a, b} == {ra, rb}
        assert d == pytest.approx(rd, rel=1e-10)


def test_small_instances():
    Z = linkage_matrix(np.array([[0.0, 0.0], [1.0, 1.0]]))
    assert Z.shape == (1, 4) and Z[0, 3] == 2
    F = np.array([[0, 0], [0, 0.1], [10, 10], [10, 10.1]])
    merges = tree_merges(linkage_matrix(F), 4)
    assert {merges[0][0] | merges[0][1], merges[1][0] | merges[1][1]} == {frozenset({0, 1}), frozenset({2, 3})}
    Z = linkage_matrix(np.array([[1.0, 2.0], [1.0, 2.0], [5.0, 5.0]]))
    assert Z[0, 2] == 0.0


def test_unknown_names_rejected():
    F = np.zeros((3, 2)) + np.arange(3)[:, None]
    with pytest.raises(ValueError):
        linkage_matrix(F, "centroidal")
    with pytest.raises(ValueError):
        linkage_matrix(F, "ward", "manhattan")


def test_mahalanobis_equals_explicit_distance():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(12, 3)) @ np.array([[2, 0, 0], [1, 1, 0], [0, 0, 0.2]])
    VI = np.linalg.inv(np.cov(F, rowvar=False) + 1e-8 * np.eye(3))
    from scipy.cluster.hierarchy import linkage
    from scipy.spatial.distance import pdist

    ref = linkage(pdist(F, "mahalanobis", VI=VI), method="complete")
    got = linkage_matrix(F, "complete", "mahalanobis")
    np.testing.assert_allclose(got[:, 2], ref[:, 2], rtol=1e-8)
    np.testing.assert_array_equal(got[:, :2], ref[:, :2])


def test_mahalanobis_singular_features_raise():
    F = np.column_stack([np.arange(6.0), np.full(6, np.nan)])
    with pytest.raises((ClusteringError, ValueError)):
        linkage_matrix(F, "ward", "mahalanobis")


@settings(max_examples=25, deadline=None)
@given(arrays(float, (15, 3), elements=st.floats(-5, 5)))
def test_ward_heights_monotone(F):
    Z = linkage_matrix(F, "ward")
    assert np.all(np.diff(Z[:, 2]) >= -1e-9)


def three_leaf_tree():
    # ((0, 1), 2): node 3 joins 0 and 1, node 4 joins 3 and 2
    return LinkageTree(np.array([[0, 1, 0.1, 2], [3, 2, 1.0, 3]]), 3)


def test_variance_prune_reference_example():
    values = np.array([0.1, 0.1, 0.9])
    tree = three_leaf_tree()
    assert node_variance(values, tree.leaves(4)) == pytest.approx(0.1422, abs=1e-4)
    c = variance_prune(tree, values, 0.1, min_cluster_size=2, variance_scale="range")
    assert [list(m) for m in c.clusters] == [[0, 1]]
    assert [list(m) for m in c.discarded] == [[2]]


def test_variance_prune_extremes(bowl_dataset):
    tree = build_linkage(bowl_dataset)
    for scale in ("range", "total"):
        c = variance_prune(tree, bowl_dataset, 1.0, variance_scale=scale)
        assert len(c.clusters) == 1 and len(c.clusters[0]) == len(bowl_dataset)
        c0 = variance_prune(tree, bowl_dataset, 0.0, variance_scale=scale)
        assert c0.clusters == [] and all(len(m) == 1 for m in c0.discarded)
    with pytest.raises(ValueError):
        variance_prune(tree, bowl_dataset, 1.5)


def _random_dataset(seed, n=80):
    rng = np.random.default_rng(seed)
    space = SearchSpace.from_bounds([[0, 1], [0, 1]])
    X = space.sample_uniform(n, rng)
    mu = np.sin(6 * X[:, 0]) + X[:, 1] ** 2 + 0.1 * rng.normal(size=n)
    return ExplanationDataset(X, mu, np.full(n, 0.1), space)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0, 1), st.floats(0, 1), st.sampled_from(["range", "total"]))
def test_pruning_monotone_and_bounded(seed, t1, t2, scale):
    data = _random_dataset(seed)
    tree = build_linkage(data)
    lo, hi = sorted((t1, t2))
    a = variance_prune(tree, data, lo, variance_scale=scale)
    b = variance_prune(tree, data, hi, variance_scale=scale)
    assert b.n_before_filter <= a.n_before_filter
    values = data.mean_normalized
    total = values.var() if scale == "total" else 1.0
    for c in (a, b):
        for members in c.clusters:
            assert node_variance(values, members, total) <= c.threshold_used + 1e-12
        pieces = np.sort(np.concatenate(c.clusters + c.discarded))
        np.testing.assert_array_equal(pieces, np.arange(len(data)))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.1, 50), st.floats(-100, 100), st.floats(0, 1))
def test_pruning_affine_invariant(seed, a, b, t_s):
    data = _random_dataset(seed)
    scaled = ExplanationDataset(data.X, a * data.mean + b, a * data.std, data.space)
    ta, tb = build_linkage(data), build_linkage(scaled)
    ca, cb = variance_prune(ta, data, t_s), variance_prune(tb, scaled, t_s)
    assert [list(m) for m in ca.clusters] == [list(m) for m in cb.clusters]


def test_distance_prune_thresholds(bowl_dataset):
    tree = build_linkage(bowl_dataset)
    top = tree.merges[:, 2].max()
    assert len(distance_prune(tree, top * 1.01).clusters) == 1
    fine = distance_prune(tree, 0.0, min_cluster_size=1)
    assert len(fine.clusters) == len(bowl_dataset)


def test_tree_csv_round_trip(tmp_path, bowl_dataset):
    tree = build_linkage(bowl_dataset)
    tree.to_csv(tmp_path / "linkage.csv")
    back = LinkageTree.from_csv(tmp_path / "linkage.csv")
    np.testing.assert_array_equal(back.merges, tree.merges)
    for node in (back.root, back.root - 3, 5):
        np.testing.assert_array_equal(np.sort(back.leaves(node)), np.sort(tree.leaves(node)))


def test_dataset_contract(bowl_gp, unit_square, tmp_path):
    data = generate_dataset(bowl_gp, unit_square, 500, seed=1)
    assert unit_square.contains(data.X).all()
    assert data.mean_normalized.min() == 0 and data.mean_normalized.max() == 1
    se = 3 * unit_square.width / np.sqrt(12 * 500)
    assert np.all(np.abs(data.X.mean(0) - 0.5) <= se)
    with pytest.raises(ValueError):
        generate_dataset(bowl_gp, unit_square, 9)
    data.to_csv(tmp_path / "d.csv")
    back = ExplanationDataset.from_csv(tmp_path / "d.csv", unit_square)
    assert back.digest() == data.digest()
    np.testing.assert_array_equal(minmax(np.full(4, 2.0)), np.zeros(4))
    assert data.features().shape == (500, 4) and data.features("inputs").shape == (500, 2)


def test_estimator_style_clusterer():
    rng = np.random.default_rng(0)
    X = np.vstack([rng.normal(0, 0.1, (20, 2)), rng.normal(3, 0.1, (20, 2))])
    y = np.r_[np.zeros(20), np.ones(20)] + 0.01 * rng.normal(size=40)
    model = VariancePruningClustering(t_s=0.01, variance_scale="range").fit(X, y)
    assert set(model.labels_[:20]) != set(model.labels_[20:])
    assert len(set(model.labels_)) == 2
    assert isinstance(model.clustering_, Clustering)
