"""Agglomerative linkage over the explanation dataset and tree pruning."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster import hierarchy
from scipy.linalg import LinAlgError, cholesky
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_X_y

from .dataset import ExplanationDataset, minmax

__all__ = [
    "LINKAGES",
    "METRICS",
    "ClusteringError",
    "LinkageTree",
    "Clustering",
    "build_linkage",
    "linkage_matrix",
    "node_variance",
    "variance_prune",
    "distance_prune",
    "VariancePruningClustering",
]

LINKAGES = ("ward", "complete", "average", "single", "weighted", "centroid", "median")
METRICS = ("euclidean", "mahalanobis")
MAHALANOBIS_JITTER = 1e-8


class ClusteringError(ValueError):
    pass


@dataclass(frozen=True)
class LinkageTree:
    """Merge history in the scipy layout: rows ``(left, right, distance, size)``.

    Node ``n + i`` is created by row ``i``; ids below ``n`` are leaves.
    """

    merges: np.ndarray
    n_leaves: int
    method: str = "ward"
    metric: str = "euclidean"
    _order: np.ndarray = field(default=None, repr=False, compare=False)
    _span: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        Z = np.asarray(self.merges, dtype=float)
        if Z.shape != (self.n_leaves - 1, 4):
            raise ValueError("merge table must have n_leaves - 1 rows of 4 columns")
        Z.setflags(write=False)
        object.__setattr__(self, "merges", Z)
        order, span = self._layout()
        object.__setattr__(self, "_order", order)
        object.__setattr__(self, "_span", span)

    @property
    def root(self) -> int:
        return 2 * self.n_leaves - 2

    def children(self, node: int):
        row = self.merges[node - self.n_leaves]
        return int(row[0]), int(row[1])

    def _layout(self):
        # Leaves of every node form one contiguous run of a depth-first leaf order.
        n = self.n_leaves
        order = np.empty(n, dtype=np.intp)
        span = np.empty((2 * n - 1, 2), dtype=np.intp)
        pos = 0
        stack = [(2 * n - 2, False)]
        start = {}
        while stack:
            node, done = stack.pop()
            if node < n:
                order[pos] = node
                span[node] = (pos, pos + 1)
                pos += 1
                continue
            if done:
                span[node] = (start.pop(node), pos)
                continue
            start[node] = pos
            a, b = self.children(node)
            stack.append((node, True))
            stack.append((b, False))
            stack.append((a, False))
        return order, span

    def leaves(self, node: int) -> np.ndarray:
        lo, hi = self._span[node]
        return self._order[lo:hi]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["left", "right", "distance", "size"])
            for a, b, dist, size in self.merges:
                w.writerow([int(a), int(b), repr(float(dist)), int(size)])

    @classmethod
    def from_csv(cls, path, method="ward", metric="euclidean") -> "LinkageTree":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        Z = np.array(rows, dtype=float)
        return cls(Z, Z.shape[0] + 1, method, metric)


@dataclass(frozen=True)
class Clustering:
    """Leaf-index clusters kept after pruning, plus everything that was dropped."""

    clusters: list
    threshold_used: float
    discarded: list
    n_leaves: int
    criterion: str = "variance"

    @property
    def n_before_filter(self) -> int:
        return len(self.clusters) + len(self.discarded)

    def labels(self) -> np.ndarray:
        out = np.full(self.n_leaves, -1, dtype=int)
        for k, members in enumerate(self.clusters):
            out[members] = k
        return out


def _whiten(F: np.ndarray) -> np.ndarray:
    """Map features so that euclidean distance equals Mahalanobis distance."""
    cov = np.atleast_2d(np.cov(F, rowvar=False))
    cov = cov + MAHALANOBIS_JITTER * np.eye(cov.shape[0])
    try:
        VI = np.linalg.inv(cov)
        L = cholesky(VI, lower=True)
    except (LinAlgError, np.linalg.LinAlgError) as exc:
        raise ClusteringError(f"feature covariance is singular: {exc}") from exc
    if not np.all(np.isfinite(L)):
        raise ClusteringError("feature covariance is singular")
    return F @ L


def linkage_matrix(F, method: str = "ward", metric: str = "euclidean") -> np.ndarray:
    F = check_array(F, ensure_min_samples=2)
    if method not in LINKAGES:
        raise ValueError(f"linkage must be one of {LINKAGES}")
    if metric not in METRICS:
        raise ValueError(f"distance must be one of {METRICS}")
    if metric == "mahalanobis":
        F = _whiten(F)
    return hierarchy.linkage(F, method=method, metric="euclidean")


def build_linkage(dataset: ExplanationDataset, linkage: str = "ward", distance: str = "euclidean",
                  cluster_on: str = "full") -> LinkageTree:
    if len(dataset) < 2:
        raise ValueError("need at least two rows to build a linkage tree")
    Z = linkage_matrix(dataset.features(cluster_on), linkage, distance)
    return LinkageTree(Z, len(dataset), linkage, distance)


def node_variance(values: np.ndarray, members: np.ndarray, scale: float = 1.0) -> float:
    """Population variance of ``values[members]`` divided by ``scale``."""
    return float(np.var(values[members])) / scale


def _target(dataset_or_values, variance_scale: str):
    if isinstance(dataset_or_values, ExplanationDataset):
        values = dataset_or_values.mean_normalized
    else:
        values = np.asarray(dataset_or_values, dtype=float)
    if variance_scale == "range":
        return values, 1.0
    if variance_scale == "total":
        total = float(np.var(values))
        return values, total if total > 0 else 1.0
    raise ValueError("variance_scale must be 'range' or 'total'")


def variance_prune(tree: LinkageTree, dataset, t_s: float, min_cluster_size: int = 5,
                   variance_scale: str = "total") -> Clustering:
    """Top-down cut: a node whose target variance is within ``t_s`` becomes a cluster.

    ``dataset`` is an :class:`ExplanationDataset`, whose min-max rescaled
    mean is used, or a target vector already on that scale. With ``variance_scale='total'`` the
    node variance is divided by the variance over all leaves, so the root
    always scores 1; ``'range'`` compares the rescaled variance directly.
    """
    if not 0.0 <= t_s <= 1.0:
        raise ValueError("t_s must lie in [0, 1]")
    values, scale = _target(dataset, variance_scale)
    if values.size != tree.n_leaves:
        raise ValueError("target length does not match the tree")
    kept, dropped = [], []
    stack = [tree.root]
    while stack:
        node = stack.pop()
        members = tree.leaves(node)
        if node >= tree.n_leaves and node_variance(values, members, scale) > t_s:
            a, b = tree.children(node)
            stack.extend((b, a))
            continue
        members = np.sort(members)
        (kept if members.size >= min_cluster_size else dropped).append(members)
    return Clustering(kept, float(t_s), dropped, tree.n_leaves, "variance")


def distance_prune(tree: LinkageTree, t_dist: float, min_cluster_size: int = 5) -> Clustering:
    """Flat clusters from cutting the dendrogram at merge height ``t_dist``."""
    labels = hierarchy.fcluster(tree.merges, t=t_dist, criterion="distance")
    kept, dropped = [], []
    for lab in np.unique(labels):
        members = np.flatnonzero(labels == lab)
        (kept if members.size >= min_cluster_size else dropped).append(members)
    kept.sort(key=lambda m: int(m[0]))
    return Clustering(kept, float(t_dist), dropped, tree.n_leaves, "distance")


class VariancePruningClustering(BaseEstimator, ClusterMixin):
    """Agglomerative clustering cut by target variance instead of distance.

    ``fit(X, y)`` builds the linkage on ``X`` and prunes it using ``y``;
    points in clusters below ``min_cluster_size`` get label ``-1``.
    """

    def __init__(self, t_s=0.1, linkage="ward", metric="euclidean", min_cluster_size=5,
                 variance_scale="total"):
        self.t_s = t_s
        self.linkage = linkage
        self.metric = metric
        self.min_cluster_size = min_cluster_size
        self.variance_scale = variance_scale

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True, ensure_min_samples=2)
        Z = linkage_matrix(X, self.linkage, self.metric)
        self.tree_ = LinkageTree(Z, X.shape[0], self.linkage, self.metric)
        self.clustering_ = variance_prune(self.tree_, minmax(y), self.t_s, self.min_cluster_size,
                                          self.variance_scale)
        self.labels_ = self.clustering_.labels()
        self.n_features_in_ = X.shape[1]
        return self
