"""Sequential GP-based minimization with expected improvement."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import norm, qmc
from sklearn.base import BaseEstimator, clone

from .gp import GaussianProcessRegressor
from .problems import Objective, SearchSpace

logger = logging.getLogger(__name__)

__all__ = [
    "BOTrace",
    "BOError",
    "BayesianOptimizer",
    "expected_improvement",
    "latin_hypercube",
    "run_bo",
]


def expected_improvement(mean, std, f_best) -> np.ndarray:
    """EI for minimization: ``E[max(f_best - Y, 0)]`` with ``Y ~ N(mean, std^2)``."""
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    gain = f_best - mean
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(std > 0, gain / np.where(std > 0, std, 1.0), 0.0)
        ei = np.where(std > 0, gain * norm.cdf(z) + std * norm.pdf(z), np.maximum(gain, 0.0))
    return np.maximum(ei, 0.0)


def latin_hypercube(space: SearchSpace, n: int, seed) -> np.ndarray:
    sampler = qmc.LatinHypercube(d=space.dims, seed=np.random.default_rng(seed))
    return space.from_unit(sampler.random(n))


@dataclass
class BOTrace:
    """Evaluation history of one optimization run."""

    X: np.ndarray
    y: np.ndarray
    n_initial: int
    model: GaussianProcessRegressor | None = None
    problem: str = ""
    seed: int | None = None
    incumbent_history: list = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.y) - self.n_initial

    @property
    def best_index(self) -> int:
        return int(np.argmin(self.y))

    @property
    def x_opt(self) -> np.ndarray:
        return self.X[self.best_index]

    @property
    def f_opt(self) -> float:
        return float(self.y[self.best_index])

    def to_dict(self) -> dict:
        return {
            "problem": self.problem,
            "seed": self.seed,
            "n_initial": self.n_initial,
            "iterations": self.iterations,
            "evaluations": [{"x": x.tolist(), "f": float(v)} for x, v in zip(self.X, self.y)],
            "incumbent": {"x": self.x_opt.tolist(), "f": self.f_opt},
            "model": None if self.model is None else self.model.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BOTrace":
        X = np.array([e["x"] for e in data["evaluations"]], dtype=float)
        y = np.array([e["f"] for e in data["evaluations"]], dtype=float)
        model = None if data.get("model") is None else GaussianProcessRegressor.from_dict(data["model"])
        trace = cls(X, y, int(data["n_initial"]), model, data.get("problem", ""), data.get("seed"))
        trace.incumbent_history = np.minimum.accumulate(y)[trace.n_initial - 1:].tolist()
        return trace

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "BOTrace":
        return cls.from_dict(json.loads(text))

    def save(self, path):
        with open(path, "w") as fh:
            fh.write(self.to_json())

    @classmethod
    def load(cls, path) -> "BOTrace":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


class BOError(RuntimeError):
    """Objective evaluation failed; ``trace`` holds everything evaluated so far."""

    def __init__(self, message, trace: BOTrace):
        super().__init__(message)
        self.trace = trace


class BayesianOptimizer(BaseEstimator):
    """Expected-improvement Bayesian optimization over a box.

    Parameters
    ----------
    n_iter : int
        Number of sequential evaluations after the initial design.
    n_initial : int or None
        Latin-hypercube design size; ``None`` means ``max(5, 2 d)``.
    n_candidates : int
        Uniform candidates scored per acquisition step.
    n_refine, refine_steps : int
        Best candidates refined by coordinate descent, and its step budget.
    surrogate : GaussianProcessRegressor or None
        Unfitted template cloned for every refit.
    random_state : int or None
    """

    def __init__(self, n_iter=100, n_initial=None, n_candidates=1000, n_refine=5,
                 refine_steps=50, surrogate=None, random_state=None):
        self.n_iter = n_iter
        self.n_initial = n_initial
        self.n_candidates = n_candidates
        self.n_refine = n_refine
        self.refine_steps = refine_steps
        self.surrogate = surrogate
        self.random_state = random_state

    def _fit_model(self, X, y, seed):
        template = self.surrogate if self.surrogate is not None else GaussianProcessRegressor()
        model = clone(template).set_params(random_state=seed)
        return model.fit(X, y)

    def _acquire(self, model, space: SearchSpace, f_best, rng) -> np.ndarray:
        def score(P):
            return expected_improvement(*model.predict(P, return_std=True), f_best)

        cand = space.sample_uniform(self.n_candidates, rng)
        ei = score(cand)
        order = np.argsort(-ei, kind="stable")[: self.n_refine]
        pts, vals = cand[order].copy(), ei[order].copy()
        step = np.full(len(pts), 0.1)
        d = space.dims
        for _ in range(self.refine_steps):
            improved = np.zeros(len(pts), dtype=bool)
            for j in range(d):
                for sign in (1.0, -1.0):
                    trial = pts.copy()
                    trial[:, j] = np.clip(trial[:, j] + sign * step * space.width[j],
                                          space.lower[j], space.upper[j])
                    tv = score(trial)
                    better = tv > vals
                    pts[better], vals[better] = trial[better], tv[better]
                    improved |= better
            step = np.where(improved, step, step * 0.5)
        return pts[int(np.argmax(vals))]

    def minimize(self, objective: Objective) -> BOTrace:
        space = objective.space
        rng = np.random.default_rng(self.random_state)
        n0 = self.n_initial if self.n_initial is not None else max(5, 2 * space.dims)
        X = latin_hypercube(space, n0, rng)
        y = []
        trace = BOTrace(X[:0], np.empty(0), n0, None, objective.name, self.random_state)
        for x in X:
            y.append(self._safe_eval(objective, x, trace, X, y))
        X, y = np.asarray(X), np.asarray(y, dtype=float)
        history = [float(y.min())]
        model = None
        for it in range(int(self.n_iter)):
            model = self._fit_model(X, y, int(rng.integers(2**31)))
            x_next = self._acquire(model, space, float(y.min()), rng)
            f_next = self._safe_eval(objective, x_next, trace, X, y)
            X = np.vstack([X, x_next])
            y = np.append(y, f_next)
            history.append(float(y.min()))
            logger.debug("iter %d f=%.6g best=%.6g", it, f_next, history[-1])
        model = self._fit_model(X, y, int(rng.integers(2**31)))
        self.trace_ = BOTrace(X, y, n0, model, objective.name, self.random_state, history)
        return self.trace_

    @staticmethod
    def _safe_eval(objective, x, trace, X, y) -> float:
        try:
            value = float(objective(x))
        except Exception as exc:
            done = len(y)
            trace.X = np.asarray(X[:done]) if done else np.empty((0, len(x)))
            trace.y = np.asarray(y, dtype=float)
            raise BOError(f"objective evaluation failed at x={np.asarray(x).tolist()}: {exc}", trace) from exc
        if not np.isfinite(value):
            trace.X = np.asarray(X[: len(y)])
            trace.y = np.asarray(y, dtype=float)
            raise BOError(f"objective returned non-finite value at x={np.asarray(x).tolist()}", trace)
        return value


def run_bo(objective: Objective, iterations: int, seed=None, **kwargs) -> BOTrace:
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    return BayesianOptimizer(n_iter=iterations, random_state=seed, **kwargs).minimize(objective)
