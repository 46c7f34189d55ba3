"""scikit-learn style front end for the rule-explanation pipeline."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .clustering import build_linkage, distance_prune, variance_prune
from .dataset import ExplanationDataset, generate_dataset
from .gp import GaussianProcessRegressor
from .problems import SearchSpace
from .rules import DEFAULT_WEIGHTS, construct_rules, rank_and_filter, score_rules

__all__ = ["TNTRules"]


class TNTRules(BaseEstimator):
    """Explain a GP-modelled landscape with ranked box rules.

    ``fit(X, y)`` takes the optimizer's evaluations, fits (or reuses) a GP
    surrogate, samples an explanation dataset from it and extracts rules.
    :meth:`fit_dataset` runs the same steps on a ready-made dataset, e.g.
    direct objective evaluations.

    Parameters
    ----------
    bounds : array-like of shape (d, 2) or SearchSpace, optional
        Search space; defaults to the bounding box of ``X``.
    surrogate : GaussianProcessRegressor, optional
        A fitted model is used as is; an unfitted one is cloned and fitted.
    n_explain : int
        Explanation samples drawn uniformly from the space.
    t_s : float
        Variance threshold of the tree cut, in ``[0, 1]``.
    t_alpha : float
        Minimum interestingness kept in ``rules_``.
    linkage, metric : str
        Agglomeration method and distance.
    pruning : {'variance', 'distance'}
        Variance cut, or flat cut at merge height ``t_dist``.
    min_cluster_size : int
        Smaller clusters produce no rule.
    weights : tuple of 4 floats
        Interestingness weights for coverage, support, confidence, relevance.
    cluster_on : {'full', 'inputs'}
        Cluster on inputs joined with posterior moments, or inputs only.
    variance_scale : {'total', 'range'}
        See :func:`~tntrules.clustering.variance_prune`.
    relevance_norm : {'relative', 'minmax'}
        See :func:`~tntrules.rules.normalize_relevance`.
    consequent_eps : float
        Symmetric widening of every consequent interval.
    random_state : int or None

    Attributes
    ----------
    surrogate_, dataset_, tree_, clustering_, f_best_
    rules_all_ : RuleSet
        Every scored rule, ranked.
    rules_ : RuleSet
        Ranked rules with α >= ``t_alpha``.
    """

    def __init__(self, bounds=None, surrogate=None, n_explain=200, t_s=0.1, t_alpha=0.4,
                 linkage="ward", metric="euclidean", pruning="variance", t_dist=None,
                 min_cluster_size=5, weights=DEFAULT_WEIGHTS, cluster_on="full",
                 variance_scale="total", relevance_norm="relative", consequent_eps=0.0,
                 random_state=None):
        self.bounds = bounds
        self.surrogate = surrogate
        self.n_explain = n_explain
        self.t_s = t_s
        self.t_alpha = t_alpha
        self.linkage = linkage
        self.metric = metric
        self.pruning = pruning
        self.t_dist = t_dist
        self.min_cluster_size = min_cluster_size
        self.weights = weights
        self.cluster_on = cluster_on
        self.variance_scale = variance_scale
        self.relevance_norm = relevance_norm
        self.consequent_eps = consequent_eps
        self.random_state = random_state

    def _space(self, X) -> SearchSpace:
        if isinstance(self.bounds, SearchSpace):
            return self.bounds
        if self.bounds is None:
            return SearchSpace.from_bounds(np.column_stack([X.min(axis=0), X.max(axis=0)]))
        return SearchSpace.from_bounds(self.bounds)

    def _surrogate(self, X, y):
        gp = self.surrogate
        if gp is not None and hasattr(gp, "kernel_"):
            return gp
        gp = clone(gp) if gp is not None else GaussianProcessRegressor(random_state=self.random_state)
        return gp.fit(X, y)

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        space = self._space(X)
        model = self._surrogate(X, y)
        rng = np.random.default_rng(self.random_state)
        dataset = generate_dataset(model, space, self.n_explain, rng)
        self.surrogate_ = model
        return self._explain(dataset, float(np.min(y)), model)

    def fit_dataset(self, dataset: ExplanationDataset, f_best: float | None = None, model=None):
        self.surrogate_ = model
        f_best = float(dataset.mean.min()) if f_best is None else float(f_best)
        return self._explain(dataset, f_best, model)

    def _explain(self, dataset: ExplanationDataset, f_best: float, model):
        self.dataset_ = dataset
        self.f_best_ = f_best
        self.space_ = dataset.space
        self.n_features_in_ = dataset.space.dims
        self.tree_ = build_linkage(dataset, self.linkage, self.metric, self.cluster_on)
        self.clustering_ = self.prune(self.tree_, dataset)
        rules = construct_rules(self.clustering_, dataset, self.consequent_eps)
        rules.provenance = self.get_params(deep=False) | {"surrogate": None, "bounds": None,
                                                           "weights": list(self.weights)}
        self.rules_all_ = rank_and_filter(score_rules(rules, dataset, f_best, self.weights, relevance_norm=self.relevance_norm), 0.0)
        self.rules_all_.t_alpha_used = None
        self.rules_ = rank_and_filter(self.rules_all_, self.t_alpha)
        return self

    def prune(self, tree, dataset, t_s=None, t_dist=None):
        if self.pruning == "variance":
            t_s = self.t_s if t_s is None else t_s
            return variance_prune(tree, dataset, t_s, self.min_cluster_size, self.variance_scale)
        if self.pruning == "distance":
            t_dist = self.t_dist if t_dist is None else t_dist
            if t_dist is None:
                raise ValueError("distance pruning needs t_dist")
            return distance_prune(tree, t_dist, self.min_cluster_size)
        raise ValueError("pruning must be 'variance' or 'distance'")

    def transform(self, X) -> np.ndarray:
        """Boolean membership matrix of shape ``(n, len(rules_))``."""
        check_is_fitted(self, "rules_")
        X = check_array(X)
        if not self.rules_.rules:
            return np.zeros((X.shape[0], 0), dtype=bool)
        return np.column_stack([r.covers(X) for r in self.rules_])

    def predict(self, X) -> np.ndarray:
        """Position in ``rules_`` of the most interesting covering rule, ``-1`` if none."""
        M = self.transform(X)
        if M.shape[1] == 0:
            return np.full(M.shape[0], -1)
        return np.where(M.any(axis=1), M.argmax(axis=1), -1)

    def predict_interval(self, X) -> np.ndarray:
        """Consequent interval of the rule chosen by :meth:`predict` (NaN if uncovered)."""
        idx = self.predict(X)
        out = np.full((idx.size, 2), np.nan)
        for i, k in enumerate(idx):
            if k >= 0:
                out[i] = self.rules_[k].consequent
        return out
