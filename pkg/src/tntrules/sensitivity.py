"""Local explanations: which inputs move the GP mean inside a rule.

Sensitivity of dimension ``j`` is the mean absolute finite-difference
slope of the posterior mean over the explanation samples a rule covers.
Dimensions with at least ``threshold`` of the normalized total are worth
tuning.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .dataset import ExplanationDataset
from .rules import Rule

__all__ = ["SensitivityReport", "finite_difference_gradient", "sensitivity", "sensitivity_csv"]

FD_STEP = 1e-4


def finite_difference_gradient(func, X, step) -> np.ndarray:
    """Central differences of a vectorized ``func`` at each row of ``X``."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    step = np.broadcast_to(np.asarray(step, dtype=float), (X.shape[1],))
    G = np.empty_like(X)
    for j in range(X.shape[1]):
        e = np.zeros(X.shape[1])
        e[j] = step[j]
        G[:, j] = (np.asarray(func(X + e)) - np.asarray(func(X - e))) / (2 * step[j])
    return G


@dataclass(frozen=True)
class SensitivityReport:
    rule_index: int
    scores: np.ndarray
    labels: tuple
    ranges: dict
    names: tuple
    threshold: float

    @property
    def tune(self) -> list:
        return [n for n, lab in zip(self.names, self.labels) if lab == "TUNE"]

    def to_dict(self) -> dict:
        return {
            "rule": self.rule_index,
            "scores": dict(zip(self.names, map(float, self.scores))),
            "labels": dict(zip(self.names, self.labels)),
            "ranges": {k: list(v) for k, v in self.ranges.items()},
            "threshold": self.threshold,
        }

    def to_text(self, digits: int = 4) -> str:
        tune = "; ".join(f"{n}∈[{a:.{digits}g}, {b:.{digits}g}]" for n, (a, b) in self.ranges.items())
        notune = ", ".join(n for n, lab in zip(self.names, self.labels) if lab == "NOTUNE")
        return f"TUNE: {tune or '-'}; NOTUNE: {notune or '-'}"


def sensitivity(rule: Rule, model, dataset: ExplanationDataset, threshold: float | None = None,
                step: float = FD_STEP, rule_index: int | None = None) -> SensitivityReport:
    """Normalized mean ``|d mu / d x_j|`` over covered samples and TUNE/NOTUNE labels.

    ``threshold`` defaults to half of a uniform share, ``1 / (2 d)``. The
    difference step in dimension ``j`` is ``step`` times its width.
    """
    space = dataset.space
    d = space.dims
    threshold = 1.0 / (2 * d) if threshold is None else float(threshold)
    inside = rule.covers(dataset.X)
    if not inside.any():
        raise ValueError("rule covers no explanation sample")
    G = finite_difference_gradient(model.predict, dataset.X[inside], step * space.width)
    raw = np.abs(G).mean(axis=0)
    total = raw.sum()
    scores = raw / total if total > 0 else np.zeros(d)
    labels = tuple("TUNE" if (total > 0 and s >= threshold) else "NOTUNE" for s in scores)
    names = tuple(space.names)
    ranges = {n: (float(rule.lower[j]), float(rule.upper[j]))
              for j, (n, lab) in enumerate(zip(names, labels)) if lab == "TUNE"}
    idx = rule.index if rule_index is None else rule_index
    return SensitivityReport(idx, scores, labels, ranges, names, threshold)


def sensitivity_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["rule", "dimension", "score", "label"])
    for rep in reports:
        for n, s, lab in zip(rep.names, rep.scores, rep.labels):
            w.writerow([rep.rule_index, n, repr(float(s)), lab])
    return buf.getvalue()
