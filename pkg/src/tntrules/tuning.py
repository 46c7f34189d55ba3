"""Choosing the variance threshold ``t_s``: NSGA-II over explanation quality, or a grid scan.

Every evaluation re-prunes one fixed linkage tree, so the dataset and the
tree are never touched while tuning.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .clustering import LinkageTree, variance_prune
from .dataset import ExplanationDataset
from .rules import DEFAULT_WEIGHTS, RuleSet, construct_rules, rank_and_filter, score_rules

__all__ = [
    "TuningContext",
    "TsCandidate",
    "ParetoFront",
    "evaluate_ts",
    "dominates",
    "non_dominated_sort",
    "crowding_distance",
    "nsga2",
    "nsga2_tune",
    "scalar_tune",
]


@dataclass
class TuningContext:
    """Everything needed to turn a threshold into a filtered rule set."""

    dataset: ExplanationDataset
    tree: LinkageTree
    f_best: float
    t_alpha: float = 0.4
    weights: tuple = DEFAULT_WEIGHTS
    min_cluster_size: int = 5
    variance_scale: str = "total"
    relevance_norm: str = "relative"
    _cache: dict = field(default_factory=dict, repr=False)

    @classmethod
    def from_estimator(cls, est) -> "TuningContext":
        """Context sharing a fitted :class:`~tntrules.estimator.TNTRules`' dataset and tree."""
        return cls(est.dataset_, est.tree_, est.f_best_, est.t_alpha, tuple(est.weights),
                   est.min_cluster_size, est.variance_scale, est.relevance_norm)

    def rules(self, t_s: float) -> RuleSet:
        key = float(t_s)
        if key not in self._cache:
            clustering = variance_prune(self.tree, self.dataset, key, self.min_cluster_size,
                                        self.variance_scale)
            scored = score_rules(construct_rules(clustering, self.dataset), self.dataset,
                                 self.f_best, self.weights, relevance_norm=self.relevance_norm)
            self._cache[key] = rank_and_filter(scored, self.t_alpha)
        return self._cache[key]


@dataclass(frozen=True)
class TsCandidate:
    """A threshold and its objectives ``(mean support, mean relevance, rule count)``."""

    t_s: float
    objectives: tuple
    rank: int = 0
    crowding: float = 0.0

    @property
    def support(self) -> float:
        return self.objectives[0]

    @property
    def relevance(self) -> float:
        return self.objectives[1]

    @property
    def n_rules(self) -> int:
        return int(self.objectives[2])


@dataclass(frozen=True)
class ParetoFront:
    candidates: tuple

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self):
        return iter(self.candidates)

    def to_rows(self) -> list:
        return [{"t_s": c.t_s, "supp": c.support, "rel": c.relevance, "nrules": c.n_rules}
                for c in sorted(self.candidates, key=lambda c: c.t_s)]


def evaluate_ts(t_s: float, context: TuningContext) -> TsCandidate:
    """Prune at ``t_s`` and summarize the retained rules; an empty set scores ``(0, 0, 0)``."""
    t_s = float(np.clip(t_s, 0.0, 1.0))
    rules = context.rules(t_s)
    if len(rules) == 0:
        return TsCandidate(t_s, (0.0, 0.0, 0))
    supp = float(np.mean([r.metrics["support"] for r in rules]))
    rel = float(np.mean([r.metrics["relevance_norm"] for r in rules]))
    return TsCandidate(t_s, (supp, rel, len(rules)))


# -- NSGA-II ----------------------------------------------------------------------


def dominates(a, b) -> bool:
    """``a`` dominates ``b`` under maximization."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(a >= b) and np.any(a > b))


def non_dominated_sort(F) -> list:
    """Fast non-dominated sort (maximization); returns fronts as index lists, best first."""
    F = np.asarray(F, dtype=float)
    n = F.shape[0]
    better = np.all(F[:, None, :] >= F[None, :, :], axis=2) & np.any(F[:, None, :] > F[None, :, :], axis=2)
    n_dominators = better.sum(axis=0)
    fronts = []
    current = list(np.flatnonzero(n_dominators == 0))
    while current:
        fronts.append(sorted(int(i) for i in current))
        nxt = []
        for i in current:
            for j in np.flatnonzero(better[i]):
                n_dominators[j] -= 1
                if n_dominators[j] == 0:
                    nxt.append(j)
        current = nxt
    assert sum(len(f) for f in fronts) == n
    return fronts


def crowding_distance(F) -> np.ndarray:
    F = np.asarray(F, dtype=float)
    n, m = F.shape
    dist = np.zeros(n)
    if n <= 2:
        return np.full(n, np.inf)
    for k in range(m):
        order = np.argsort(F[:, k], kind="stable")
        span = F[order[-1], k] - F[order[0], k]
        dist[order[0]] = dist[order[-1]] = np.inf
        if span <= 0:
            continue
        dist[order[1:-1]] += (F[order[2:], k] - F[order[:-2], k]) / span
    return dist


def _sbx(p1, p2, lo, hi, eta, rng):
    c1, c2 = p1.copy(), p2.copy()
    for j in range(p1.size):
        if rng.random() > 0.5 or abs(p1[j] - p2[j]) < 1e-14:
            continue
        y1, y2 = min(p1[j], p2[j]), max(p1[j], p2[j])
        u = rng.random()
        out = []
        for beta in (1.0 + 2.0 * (y1 - lo[j]) / (y2 - y1), 1.0 + 2.0 * (hi[j] - y2) / (y2 - y1)):
            alpha = 2.0 - beta ** -(eta + 1.0)
            if u <= 1.0 / alpha:
                bq = (u * alpha) ** (1.0 / (eta + 1.0))
            else:
                bq = (1.0 / (2.0 - u * alpha)) ** (1.0 / (eta + 1.0))
            out.append(bq)
        a = 0.5 * ((y1 + y2) - out[0] * (y2 - y1))
        b = 0.5 * ((y1 + y2) + out[1] * (y2 - y1))
        a, b = np.clip(a, lo[j], hi[j]), np.clip(b, lo[j], hi[j])
        if rng.random() < 0.5:
            a, b = b, a
        c1[j], c2[j] = a, b
    return c1, c2


def _poly_mutation(x, lo, hi, eta, rate, rng):
    x = x.copy()
    for j in range(x.size):
        if rng.random() >= rate:
            continue
        width = hi[j] - lo[j]
        d1, d2 = (x[j] - lo[j]) / width, (hi[j] - x[j]) / width
        u = rng.random()
        power = 1.0 / (eta + 1.0)
        if u < 0.5:
            val = 2 * u + (1 - 2 * u) * (1 - d1) ** (eta + 1)
            dq = val ** power - 1.0
        else:
            val = 2 * (1 - u) + 2 * (u - 0.5) * (1 - d2) ** (eta + 1)
            dq = 1.0 - val ** power
        x[j] = np.clip(x[j] + dq * width, lo[j], hi[j])
    return x


def _rank_and_crowd(F):
    fronts = non_dominated_sort(F)
    rank = np.empty(len(F), dtype=int)
    crowd = np.empty(len(F))
    for r, idx in enumerate(fronts):
        rank[idx] = r
        crowd[idx] = crowding_distance(np.asarray(F)[idx])
    return rank, crowd


def nsga2(func, lower, upper, pop_size=20, generations=25, seed=None,
          eta_c=15.0, eta_m=20.0, mutation_rate=None):
    """Maximize a vector-valued ``func`` over a box with NSGA-II.

    Returns ``(X, F, rank, crowding)`` of the final population; the first
    front is ``X[rank == 0]``.
    """
    if pop_size < 4 or pop_size % 2:
        raise ValueError("population must be an even number >= 4")
    lo, hi = np.atleast_1d(np.asarray(lower, dtype=float)), np.atleast_1d(np.asarray(upper, dtype=float))
    rate = 1.0 / lo.size if mutation_rate is None else mutation_rate
    rng = np.random.default_rng(seed)
    X = rng.uniform(lo, hi, size=(pop_size, lo.size))
    F = np.array([func(x) for x in X], dtype=float)
    rank, crowd = _rank_and_crowd(F)

    def tournament():
        i, j = rng.integers(pop_size, size=2)
        if rank[i] != rank[j]:
            return i if rank[i] < rank[j] else j
        return i if crowd[i] >= crowd[j] else j

    for _ in range(generations):
        kids = []
        while len(kids) < pop_size:
            c1, c2 = _sbx(X[tournament()], X[tournament()], lo, hi, eta_c, rng)
            kids += [_poly_mutation(c1, lo, hi, eta_m, rate, rng), _poly_mutation(c2, lo, hi, eta_m, rate, rng)]
        Q = np.array(kids[:pop_size])
        FQ = np.array([func(x) for x in Q], dtype=float)
        RX, RF = np.vstack([X, Q]), np.vstack([F, FQ])
        chosen = []
        for front in non_dominated_sort(RF):
            if len(chosen) + len(front) <= pop_size:
                chosen += front
                continue
            cd = crowding_distance(RF[front])
            order = np.argsort(-cd, kind="stable")
            chosen += [front[k] for k in order[: pop_size - len(chosen)]]
            break
        X, F = RX[chosen], RF[chosen]
        rank, crowd = _rank_and_crowd(F)
    return X, F, rank, crowd


def nsga2_tune(context: TuningContext, generations: int = 25, population: int = 20, seed=None):
    """Pareto-tune ``t_s``; pick the front member with most rules (ties: higher relevance).

    Returns ``(ParetoFront, chosen TsCandidate)``.
    """
    def f(x):
        return evaluate_ts(x[0], context).objectives

    X, F, rank, crowd = nsga2(f, [0.0], [1.0], population, generations, seed)
    members, seen = [], set()
    for i in np.flatnonzero(rank == 0):
        t = float(X[i, 0])
        if t in seen:
            continue
        seen.add(t)
        members.append(TsCandidate(t, tuple(F[i][:2]) + (int(F[i][2]),), 0, float(crowd[i])))
    members.sort(key=lambda c: c.t_s)
    chosen = max(members, key=lambda c: (c.n_rules, c.relevance, -c.t_s))
    return ParetoFront(tuple(members)), chosen


def mean_alpha(context: TuningContext, t_s: float) -> float:
    rules = context.rules(t_s)
    return float(np.mean(rules.alphas)) if len(rules) else 0.0


def scalar_tune(context: TuningContext | None = None, grid: int = 101, score=None):
    """Grid scan of ``t_s`` in ``[0, 1]`` maximizing mean α of retained rules.

    ``score`` replaces the mean-α objective with any callable of ``t_s``.
    Ties go to the smaller threshold. Returns ``(t_s, scores)``.
    """
    if score is None:
        if context is None:
            raise ValueError("scalar_tune needs a context or a score function")
        score = lambda t: mean_alpha(context, t)  # noqa: E731
    ts = np.linspace(0.0, 1.0, grid)
    vals = np.array([score(float(t)) for t in ts])
    return float(ts[int(np.argmax(vals))]), vals
