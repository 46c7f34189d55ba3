"""Box rules from clusters, their quality metrics, ranking and filtering."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import Clustering
from .dataset import ExplanationDataset
from .gp import gaussian_logpdf

__all__ = [
    "DEFAULT_WEIGHTS",
    "HIGH",
    "MODERATE",
    "Rule",
    "RuleSet",
    "construct_rules",
    "coverage",
    "support",
    "confidence",
    "relevance",
    "interestingness",
    "score_rules",
    "normalize_relevance",
    "rank_and_filter",
    "interest_tag",
]

DEFAULT_WEIGHTS = (0.2, 0.2, 0.1, 0.5)
HIGH = 0.6
MODERATE = 0.4
_DEGENERATE_WIDEN = 1e-9


def interest_tag(alpha: float, high: float = HIGH, moderate: float = MODERATE) -> str:
    if alpha >= high:
        return "HIGH"
    if alpha >= moderate:
        return "MODERATE"
    return "LOW"


@dataclass(frozen=True)
class Rule:
    """``IF lower <= x <= upper THEN consequent[0] <= f <= consequent[1]``."""

    lower: np.ndarray
    upper: np.ndarray
    consequent: tuple
    members: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    metrics: dict = field(default_factory=dict)
    alpha: float = float("nan")
    index: int = 0

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ValueError("antecedent needs lower <= upper in every dimension")
        c_lo, c_hi = (float(v) for v in self.consequent)
        if c_lo > c_hi:
            raise ValueError("consequent lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)
        object.__setattr__(self, "consequent", (c_lo, c_hi))
        object.__setattr__(self, "members", np.asarray(self.members, dtype=int))

    @property
    def n_antecedent_dims(self) -> int:
        return self.lower.size

    @property
    def volume(self) -> float:
        return float(np.prod(self.upper - self.lower))

    @property
    def tag(self) -> str:
        return interest_tag(self.alpha)

    def covers(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.all((X >= self.lower) & (X <= self.upper), axis=1)

    def predicts(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return (y >= self.consequent[0]) & (y <= self.consequent[1])

    def to_dict(self, names=None) -> dict:
        names = names or [f"x{j + 1}" for j in range(self.lower.size)]
        out = {
            "index": self.index,
            "antecedent": {n: [float(a), float(b)] for n, a, b in zip(names, self.lower, self.upper)},
            "consequent": [float(self.consequent[0]), float(self.consequent[1])],
            "metrics": {k: _jsonable(v) for k, v in self.metrics.items()},
            "alpha": _jsonable(self.alpha),
            "tag": self.tag,
            "members": self.members.tolist(),
        }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "Rule":
        bounds = np.array(list(data["antecedent"].values()), dtype=float)
        metrics = {k: (float(v) if v is not None else float("-inf")) for k, v in data["metrics"].items()}
        alpha = float("nan") if data["alpha"] is None else float(data["alpha"])
        return cls(bounds[:, 0], bounds[:, 1], tuple(data["consequent"]),
                   np.asarray(data.get("members", []), dtype=int), metrics, alpha, int(data["index"]))

    def to_text(self, names=None, digits: int = 4) -> str:
        names = names or [f"x{j + 1}" for j in range(self.lower.size)]
        conds = " ∧ ".join(f"{n}∈[{a:.{digits}g}, {b:.{digits}g}]"
                           for n, a, b in zip(names, self.lower, self.upper))
        c_lo, c_hi = self.consequent
        return f"IF {conds} THEN f∈[{c_lo:.{digits}g}, {c_hi:.{digits}g}] (α={self.alpha:.3f})"


def _jsonable(v):
    v = float(v)
    return v if np.isfinite(v) else None


@dataclass
class RuleSet:
    """Ordered collection of rules with the settings that produced it."""

    rules: list
    t_alpha_used: float | None = None
    names: tuple = ()
    provenance: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.rules)

    def __iter__(self):
        return iter(self.rules)

    def __getitem__(self, i):
        return self.rules[i]

    @property
    def alphas(self) -> np.ndarray:
        return np.array([r.alpha for r in self.rules], dtype=float)

    def to_dict(self) -> dict:
        names = list(self.names) or None
        return {
            "t_alpha": self.t_alpha_used,
            "names": list(self.names),
            "provenance": self.provenance,
            "rules": [r.to_dict(names) for r in self.rules],
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, data: dict) -> "RuleSet":
        return cls([Rule.from_dict(r) for r in data["rules"]], data.get("t_alpha"),
                   tuple(data.get("names", ())), data.get("provenance", {}))

    @classmethod
    def from_json(cls, text: str) -> "RuleSet":
        return cls.from_dict(json.loads(text))

    def to_text(self) -> str:
        names = list(self.names) or None
        return "\n".join(f"{k + 1}. [{r.tag}] {r.to_text(names)}" for k, r in enumerate(self.rules))


# -- construction -----------------------------------------------------------------


def construct_rules(clustering: Clustering, dataset: ExplanationDataset, consequent_eps: float = 0.0) -> RuleSet:
    """One rule per cluster: member bounding box => ``mu +- 2 sigma`` envelope.

    ``consequent_eps`` widens every consequent on both sides, which keeps
    noise-free (``sigma = 0``) intervals from being razor thin.
    """
    space = dataset.space
    rules = []
    for k, members in enumerate(clustering.clusters):
        members = np.asarray(members, dtype=int)
        if members.size == 0:
            raise ValueError("cannot build a rule from an empty cluster")
        pts = dataset.X[members]
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        flat = hi - lo <= 0
        pad = _DEGENERATE_WIDEN * space.width
        lo = np.where(flat, lo - pad, lo)
        hi = np.where(flat, hi + pad, hi)
        mu, sd = dataset.mean[members], dataset.std[members]
        consequent = (float(np.min(mu - 2 * sd)) - consequent_eps, float(np.max(mu + 2 * sd)) + consequent_eps)
        rules.append(Rule(lo, hi, consequent, members, index=k))
    return RuleSet(rules, None, tuple(space.names))


# -- metrics ---------------------------------------------------------------------


def coverage(rule: Rule, dataset: ExplanationDataset) -> float:
    """Fraction of explanation samples inside the antecedent box."""
    return float(np.mean(rule.covers(dataset.X)))


def support(rule: Rule, dataset: ExplanationDataset) -> float:
    """Fraction of samples whose ``(x, mu(x))`` falls inside antecedent and consequent."""
    return float(np.mean(rule.covers(dataset.X) & rule.predicts(dataset.mean)))


def confidence(support_value: float, coverage_value: float) -> float:
    return support_value / coverage_value if coverage_value > 0 else 0.0


def relevance(rule: Rule, dataset: ExplanationDataset, f_best: float, model=None) -> float:
    """Best log-density of the incumbent value among covered samples.

    With ``model`` the posterior is recomputed at the covered inputs;
    otherwise the moments stored in ``dataset`` are used.
    """
    inside = rule.covers(dataset.X)
    if not inside.any():
        return float("-inf")
    if model is not None:
        ll = model.log_likelihood_of_value(dataset.X[inside], f_best)
    else:
        ll = gaussian_logpdf(f_best, dataset.mean[inside], dataset.std[inside])
    return float(np.max(ll))


def normalize_relevance(raw, how: str = "relative") -> np.ndarray:
    """Map raw log-likelihoods onto ``[0, 1]``; uncovered rules (``-inf``) get 0."""
    raw = np.asarray(raw, dtype=float)
    out = np.zeros_like(raw)
    finite = np.isfinite(raw)
    if not finite.any():
        return out
    lo, hi = raw[finite].min(), raw[finite].max()
    if how == "relative":
        out[finite] = np.exp(raw[finite] - hi)
    elif how == "minmax":
        out[finite] = (raw[finite] - lo) / (hi - lo) if hi > lo else 1.0
    else:
        raise ValueError("relevance normalization must be 'relative' or 'minmax'")
    return out


def interestingness(coverage_value, support_value, confidence_value, relevance_value,
                    weights=DEFAULT_WEIGHTS) -> float:
    w = np.asarray(weights, dtype=float)
    if w.shape != (4,) or abs(w.sum() - 1.0) > 1e-9:
        raise ValueError("interestingness weights must be four values summing to 1")
    m = np.array([coverage_value, support_value, confidence_value, relevance_value], dtype=float)
    return float(w @ m)


def score_rules(ruleset: RuleSet, dataset: ExplanationDataset, f_best: float,
                weights=DEFAULT_WEIGHTS, model=None, relevance_norm="relative") -> RuleSet:
    """Attach coverage, support, confidence, relevance and α to every rule."""
    rules = list(ruleset.rules)
    covr = np.array([coverage(r, dataset) for r in rules])
    supp = np.array([support(r, dataset) for r in rules])
    conf = np.array([confidence(s, c) for s, c in zip(supp, covr)])
    raw = np.array([relevance(r, dataset, f_best, model) for r in rules])
    rel = normalize_relevance(raw, relevance_norm)
    scored = []
    for r, c, s, cf, rr, rn in zip(rules, covr, supp, conf, raw, rel):
        metrics = {"coverage": c, "support": s, "confidence": cf,
                   "relevance_raw": rr, "relevance_norm": rn}
        scored.append(replace(r, metrics=metrics, alpha=interestingness(c, s, cf, rn, weights)))
    return RuleSet(scored, ruleset.t_alpha_used, ruleset.names, dict(ruleset.provenance))


def rank_and_filter(ruleset: RuleSet, t_alpha: float = 0.0) -> RuleSet:
    """Sort by descending α (ties: smaller coverage, then construction order) and keep α >= t_alpha."""
    def key(r):
        return (-r.alpha, r.metrics.get("coverage", 0.0), r.index)

    kept = sorted((r for r in ruleset.rules if r.alpha >= t_alpha), key=key)
    prev = ruleset.t_alpha_used
    used = t_alpha if prev is None else max(prev, t_alpha)
    return RuleSet(kept, used, ruleset.names, dict(ruleset.provenance))
