"""Explanation quality metrics and the comparison studies built on them.

Correctness is the fidelity of rule consequents to the model inside the
antecedents, compactness the rule count, completeness the share of
parameters named by the longest rule.
"""

from __future__ import annotations

import csv
import io
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .bayes_opt import BOTrace, run_bo
from .clustering import LINKAGES, METRICS, ClusteringError
from .dataset import ExplanationDataset
from .estimator import TNTRules
from .problems import Objective, ProblemConfig, SearchSpace, default_config, get_problem
from .rules import HIGH, RuleSet
from .tuning import scalar_tune

__all__ = [
    "EvalReport",
    "AblationRow",
    "AblationGrid",
    "fidelity",
    "holdout_fidelity",
    "completeness",
    "minima_hits",
    "union_volume_fraction",
    "estimator_from_config",
    "run_gp_mode",
    "run_gt_mode",
    "run_gt_vs_gp",
    "ablation_configs",
    "run_clustering_ablation",
    "GT_SAMPLES",
    "GT_HOLDOUT",
    "GT_EPS",
]

GT_SAMPLES = 1000
GT_HOLDOUT = 0.25
GT_EPS = 1e-6
MIN_PER_RULE = 10


# -- 3-Cs ---------------------------------------------------------------------


def _allocate(volumes, n_samples: int, floor: int = MIN_PER_RULE) -> np.ndarray:
    v = np.asarray(volumes, dtype=float)
    share = v / v.sum() if v.sum() > 0 else np.full(v.size, 1.0 / v.size)
    return np.maximum(floor, np.rint(share * n_samples).astype(int))


def _predict_mean(model, X):
    if hasattr(model, "predict"):
        return np.asarray(model.predict(X), dtype=float)
    return np.asarray(model(X), dtype=float)


def fidelity(ruleset: RuleSet, model, n_samples: int = 300, seed=None):
    """Share of points drawn inside the antecedents whose predicted value meets the consequent.

    Samples are split across rules in proportion to antecedent volume,
    at least 10 per rule. ``model`` has ``predict`` or is a callable.

    Returns
    -------
    mean : float
        Pooled fidelity over all samples.
    per_rule : ndarray
    counts : ndarray
        Samples drawn for each rule.
    """
    if len(ruleset) == 0:
        raise ValueError("fidelity of an empty rule set is undefined")
    rng = np.random.default_rng(seed)
    counts = _allocate([r.volume for r in ruleset], n_samples)
    per_rule = np.empty(len(ruleset))
    for k, (r, m) in enumerate(zip(ruleset, counts)):
        X = rng.uniform(r.lower, r.upper, size=(m, r.lower.size))
        per_rule[k] = float(np.mean(r.predicts(_predict_mean(model, X))))
    mean = float(np.sum(per_rule * counts) / counts.sum())
    return mean, per_rule, counts


def holdout_fidelity(ruleset: RuleSet, X, y):
    """Fidelity on held-out evaluations: covered points whose value meets the consequent.

    Rules covering no held-out point get NaN and weight 0. The pooled
    value is NaN when nothing is covered.
    """
    if len(ruleset) == 0:
        raise ValueError("fidelity of an empty rule set is undefined")
    X, y = np.atleast_2d(X), np.asarray(y, dtype=float)
    per_rule, counts = np.full(len(ruleset), np.nan), np.zeros(len(ruleset), dtype=int)
    for k, r in enumerate(ruleset):
        inside = r.covers(X)
        counts[k] = int(inside.sum())
        if counts[k]:
            per_rule[k] = float(np.mean(r.predicts(y[inside])))
    if counts.sum() == 0:
        return float("nan"), per_rule, counts
    ok = counts > 0
    return float(np.sum(per_rule[ok] * counts[ok]) / counts.sum()), per_rule, counts


def completeness(ruleset: RuleSet, n_params: int) -> float:
    """Longest antecedent length over the number of parameters."""
    if n_params < 1:
        raise ValueError("n_params must be >= 1")
    if len(ruleset) == 0:
        return 0.0
    return max(r.n_antecedent_dims for r in ruleset) / n_params


def minima_hits(ruleset, minima, min_alpha: float | None = None) -> int:
    """Known minima contained in at least one rule (optionally with α strictly above ``min_alpha``)."""
    rules = [r for r in ruleset if min_alpha is None or r.alpha > min_alpha]
    return sum(any(bool(r.covers(np.asarray(loc))[0]) for r in rules) for loc, *_ in minima)


def union_volume_fraction(ruleset, space: SearchSpace, n: int = 10_000, seed=0):
    """Monte Carlo share of the space inside any antecedent, with its standard error."""
    if len(ruleset) == 0:
        return 0.0, 0.0
    U = space.sample_uniform(n, np.random.default_rng(seed))
    inside = np.zeros(n, dtype=bool)
    for r in ruleset:
        inside |= r.covers(U)
    p = float(inside.mean())
    return p, float(np.sqrt(p * (1 - p) / n))


@dataclass
class EvalReport:
    """3-Cs of one explanation run plus what is needed to audit it."""

    problem: str
    mode: str
    seed: int
    compactness: int
    correctness: float
    completeness: float
    rule_fidelities: list = field(default_factory=list)
    rule_samples: list = field(default_factory=list)
    n_rules_all: int = 0
    minima_hit: int = 0
    minima_hit_high: int = 0
    volume_fraction: float = float("nan")
    seconds: float = float("nan")
    config: dict = field(default_factory=dict)

    def row(self) -> dict:
        out = asdict(self)
        out.pop("config")
        out["rule_fidelities"] = ";".join(f"{v:.4f}" for v in self.rule_fidelities)
        out["rule_samples"] = ";".join(str(int(v)) for v in self.rule_samples)
        return out


def reports_to_csv(reports) -> str:
    rows = [r.row() if hasattr(r, "row") else r for r in reports]
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


def summary_table(reports) -> str:
    """Mean ± std of compactness and correctness per (problem, mode)."""
    groups = {}
    for r in reports:
        groups.setdefault((r.problem, r.mode), []).append(r)
    lines = [f"{'problem':<12}{'mode':<14}{'|rho|':>14}{'F':>16}{'completeness':>14}"]
    for (prob, mode), rs in groups.items():
        c = np.array([r.compactness for r in rs], dtype=float)
        f = np.array([r.correctness for r in rs], dtype=float)
        p = np.array([r.completeness for r in rs], dtype=float)
        lines.append(f"{prob:<12}{mode:<14}{c.mean():>8.2f}±{c.std():<5.2f}"
                     f"{np.nanmean(f):>10.3f}±{np.nanstd(f):<5.3f}{p.mean():>12.2f}")
    return "\n".join(lines)


# -- runs ---------------------------------------------------------------------


def estimator_from_config(config: ProblemConfig, obj: Objective, **overrides) -> TNTRules:
    params = dict(
        bounds=obj.space, n_explain=config.n_explain, t_s=config.t_s, t_alpha=config.t_alpha,
        linkage=config.linkage, metric=config.metric, pruning=config.pruning, t_dist=config.t_dist,
        min_cluster_size=config.min_cluster_size, weights=tuple(config.weights),
        cluster_on=config.cluster_on, variance_scale=config.variance_scale,
        relevance_norm=config.relevance_norm, random_state=config.seed,
    )
    params.update(overrides)
    return TNTRules(**params)


def _report(est, obj, config, mode, fid, seconds) -> EvalReport:
    rules = est.rules_
    mean, per_rule, counts = fid if len(rules) else (float("nan"), [], [])
    hits = minima_hits(rules, obj.known_minima) if obj.known_minima else 0
    hits_high = minima_hits(rules, obj.known_minima, HIGH) if obj.known_minima else 0
    return EvalReport(
        problem=obj.name, mode=mode, seed=config.seed, compactness=len(rules), correctness=mean,
        completeness=completeness(rules, obj.space.dims), rule_fidelities=list(np.asarray(per_rule, float)),
        rule_samples=list(np.asarray(counts, int)), n_rules_all=len(est.rules_all_), minima_hit=hits,
        minima_hit_high=hits_high, volume_fraction=union_volume_fraction(rules, obj.space, seed=config.seed)[0],
        seconds=seconds, config=config.to_dict(),
    )


def run_gp_mode(obj: Objective, config: ProblemConfig, trace: BOTrace | None = None):
    """Optimize (unless ``trace`` is given), explain from the final GP and score it.

    Returns ``(EvalReport, fitted TNTRules, BOTrace)``.
    """
    t0 = time.perf_counter()
    if trace is None:
        trace = run_bo(obj, config.bo_iterations, seed=config.seed)
    est = estimator_from_config(config, obj, surrogate=trace.model).fit(trace.X, trace.y)
    fid = fidelity(est.rules_, trace.model, config.fidelity_samples, config.seed) if len(est.rules_) else None
    return _report(est, obj, config, "gp-surrogate", fid, time.perf_counter() - t0), est, trace


def run_gt_mode(obj: Objective, config: ProblemConfig, n_samples: int = GT_SAMPLES,
                holdout: float = GT_HOLDOUT, eps: float = GT_EPS):
    """Explain direct objective evaluations (σ = 0) and score on a held-out share.

    Returns ``(EvalReport, fitted TNTRules)``.
    """
    if not obj.cheap:
        raise ValueError(f"ground-truth mode needs a cheap objective; {obj.name!r} is expensive")
    t0 = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    X = obj.space.sample_uniform(n_samples, rng)
    y = obj.evaluate_many(X)
    n_hold = int(round(holdout * n_samples))
    fit_idx, hold_idx = np.arange(n_samples - n_hold), np.arange(n_samples - n_hold, n_samples)
    data = ExplanationDataset(X[fit_idx], y[fit_idx], np.zeros(fit_idx.size), obj.space)
    est = estimator_from_config(config, obj, consequent_eps=eps)
    est.fit_dataset(data, float(y[fit_idx].min()))
    fid = holdout_fidelity(est.rules_, X[hold_idx], y[hold_idx]) if len(est.rules_) else None
    return _report(est, obj, config, "ground-truth", fid, time.perf_counter() - t0), est


def run_gt_vs_gp(problem, config: ProblemConfig | None = None, trace: BOTrace | None = None):
    """Paired ground-truth and GP-surrogate reports on one problem and seed."""
    obj = get_problem(problem) if isinstance(problem, str) else problem
    config = config or default_config(obj.name)
    gt, _ = run_gt_mode(obj, config)
    gp, _, _ = run_gp_mode(obj, config, trace)
    return gt, gp


# -- clustering ablation ---------------------------------------------------------


def ablation_configs(full: bool = False) -> list:
    """(linkage, metric, pruning) triples; 16 by default, all 28 with ``full``."""
    rows = [(lk, m, "variance") for lk in LINKAGES for m in METRICS]
    if full:
        rows += [(lk, m, "distance") for lk in LINKAGES for m in METRICS]
    else:
        rows += [("ward", "euclidean", "distance"), ("complete", "euclidean", "distance")]
    return rows


@dataclass
class AblationRow:
    linkage: str
    metric: str
    pruning: str
    threshold: float = float("nan")
    n_initial: int = 0
    n_high: int = 0
    n_moderate: int = 0
    confidence: float = float("nan")
    fidelity: float = float("nan")
    minima_hit: int = 0
    failed: str = ""

    @property
    def name(self) -> str:
        return f"{self.linkage}+{self.metric}+{self.pruning}"

    def row(self) -> dict:
        return {"config": self.name} | asdict(self)


@dataclass
class AblationGrid:
    rows: list
    problem: str = "himmelblau"
    seed: int = 0

    def __len__(self):
        return len(self.rows)

    def get(self, linkage, metric, pruning) -> AblationRow:
        for r in self.rows:
            if (r.linkage, r.metric, r.pruning) == (linkage, metric, pruning):
                return r
        raise KeyError((linkage, metric, pruning))

    def to_csv(self) -> str:
        return reports_to_csv([r.row() for r in self.rows])


def _tune_t_dist(est, grid: int = 101) -> float:
    """Merge height maximizing mean α of retained rules (scan of the dendrogram's height range)."""
    top = float(est.tree_.merges[:, 2].max())

    def score(u):
        rules = _rules_at(est, t_dist=u * top)
        return float(np.mean(rules.alphas)) if len(rules) else 0.0

    u, _ = scalar_tune(score=score, grid=grid)
    return u * top


def _rules_at(est, t_s=None, t_dist=None) -> RuleSet:
    from .rules import construct_rules, rank_and_filter, score_rules

    clustering = est.prune(est.tree_, est.dataset_, t_s=t_s, t_dist=t_dist)
    scored = score_rules(construct_rules(clustering, est.dataset_), est.dataset_, est.f_best_,
                         est.weights, relevance_norm=est.relevance_norm)
    return rank_and_filter(scored, est.t_alpha)


def run_clustering_ablation(problem="himmelblau", config: ProblemConfig | None = None,
                            trace: BOTrace | None = None, full: bool = False) -> AblationGrid:
    """Score every clustering configuration on one shared GP and explanation dataset."""
    obj = get_problem(problem) if isinstance(problem, str) else problem
    if not obj.known_minima:
        raise ValueError("the clustering ablation needs known minima")
    config = config or default_config(obj.name)
    if trace is None:
        trace = run_bo(obj, config.bo_iterations, seed=config.seed)
    base = estimator_from_config(config, obj, surrogate=trace.model).fit(trace.X, trace.y)
    rows = []
    for linkage, metric, pruning in ablation_configs(full):
        row = AblationRow(linkage, metric, pruning)
        try:
            est = estimator_from_config(config, obj, surrogate=trace.model, linkage=linkage,
                                        metric=metric, pruning=pruning, t_dist=1.0)
            est.fit_dataset(base.dataset_, base.f_best_, trace.model)
            if pruning == "distance":
                est.set_params(t_dist=_tune_t_dist(est))
                est.fit_dataset(base.dataset_, base.f_best_, trace.model)
            row.threshold = est.t_s if pruning == "variance" else est.t_dist
            alphas = est.rules_all_.alphas
            row.n_initial = len(est.rules_all_)
            row.n_high = int(np.sum(alphas > HIGH))
            row.n_moderate = int(np.sum((alphas >= est.t_alpha) & (alphas <= HIGH)))
            if row.n_initial:
                row.confidence = float(np.mean([r.metrics["confidence"] for r in est.rules_all_]))
            if len(est.rules_):
                row.fidelity = fidelity(est.rules_, trace.model, config.fidelity_samples, config.seed)[0]
            row.minima_hit = minima_hits(est.rules_all_, obj.known_minima, HIGH)
        except (ClusteringError, np.linalg.LinAlgError, FloatingPointError) as exc:
            row = replace(row, failed=f"{type(exc).__name__}: {exc}")
        rows.append(row)
    return AblationGrid(rows, obj.name, config.seed)
