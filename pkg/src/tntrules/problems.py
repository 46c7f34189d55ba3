"""Search spaces, benchmark objectives and run configuration.

The registry maps CLI problem names onto :class:`Objective` instances::

    >>> obj = get_problem("booth")
    >>> obj([1.0, 3.0])
    0.0
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "SearchSpace",
    "Objective",
    "ProblemConfig",
    "ConfigError",
    "eval_booth",
    "eval_matyas",
    "eval_himmelblau",
    "eval_holder_table",
    "eval_cross_in_tray",
    "eval_toy_hpo",
    "get_problem",
    "default_config",
    "load_config",
    "PROBLEMS",
]

_BOUNDS_RTOL = 1e-12


class ConfigError(ValueError):
    """Raised for malformed configuration files or invalid settings."""


@dataclass(frozen=True)
class SearchSpace:
    """Axis-aligned box ``lower <= x <= upper``."""

    lower: np.ndarray
    upper: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=float))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lower.ndim != 1 or lower.shape != upper.shape or lower.size < 1:
            raise ValueError("lower and upper must be 1-D vectors of equal length")
        if not np.all(lower < upper):
            raise ValueError("every lower bound must be strictly below its upper bound")
        names = tuple(self.names) if self.names else tuple(f"x{j + 1}" for j in range(lower.size))
        if len(names) != lower.size:
            raise ValueError("names must have one entry per dimension")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "names", names)

    @property
    def dims(self) -> int:
        return self.lower.size

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower

    @property
    def volume(self) -> float:
        return float(np.prod(self.width))

    @property
    def bounds(self) -> np.ndarray:
        """``(d, 2)`` array of ``[lower, upper]`` rows."""
        return np.column_stack([self.lower, self.upper])

    def contains(self, X, tol: float = _BOUNDS_RTOL) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        slack = tol * np.maximum(self.width, 1.0)
        return np.all((X >= self.lower - slack) & (X <= self.upper + slack), axis=1)

    def sample_uniform(self, n: int, rng) -> np.ndarray:
        rng = np.random.default_rng(rng)
        return self.lower + rng.random((n, self.dims)) * self.width

    def to_unit(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.lower) / self.width

    def from_unit(self, U) -> np.ndarray:
        return self.lower + np.asarray(U, dtype=float) * self.width

    @classmethod
    def from_bounds(cls, bounds, names: Sequence[str] = ()) -> "SearchSpace":
        bounds = np.asarray(bounds, dtype=float)
        return cls(bounds[:, 0], bounds[:, 1], tuple(names))


def _as_point(x, space: SearchSpace, who: str) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size != space.dims:
        raise ValueError(f"{who} expects a {space.dims}-vector, got {x.size} values")
    if not np.all(np.isfinite(x)) or not space.contains(x)[0]:
        raise ValueError(f"{who}: point {x.tolist()} lies outside the search space")
    return x


BOX_10 = SearchSpace(np.array([-10.0, -10.0]), np.array([10.0, 10.0]), ("x", "y"))
BOX_5 = SearchSpace(np.array([-5.0, -5.0]), np.array([5.0, 5.0]), ("x", "y"))


def eval_booth(x) -> float:
    x, y = _as_point(x, BOX_10, "booth")
    return float((x + 2 * y - 7) ** 2 + (2 * x + y - 5) ** 2)


def eval_matyas(x) -> float:
    x, y = _as_point(x, BOX_10, "matyas")
    return float(0.26 * (x * x + y * y) - 0.48 * x * y)


def eval_himmelblau(x) -> float:
    x, y = _as_point(x, BOX_5, "himmelblau")
    return float((x * x + y - 11) ** 2 + (x + y * y - 7) ** 2)


def eval_holder_table(x) -> float:
    x, y = _as_point(x, BOX_10, "holder")
    r = np.hypot(x, y)
    return float(-abs(np.sin(x) * np.cos(y) * np.exp(abs(1 - r / np.pi))))


def eval_cross_in_tray(x) -> float:
    x, y = _as_point(x, BOX_10, "cross")
    r = np.hypot(x, y)
    inner = abs(np.sin(x) * np.sin(y) * np.exp(abs(100 - r / np.pi)))
    return float(-0.0001 * (inner + 1) ** 0.1)


# -- toy hyperparameter-optimisation objective ---------------------------------

HPO_SPACE = SearchSpace(
    np.array([-4.0, 4.0, 5.0, 0.05, -6.0, 0.0]),
    np.array([-1.0, 64.0, 50.0, 1.0, -2.0, 0.99]),
    ("log10_lr", "hidden_units", "epochs", "batch_fraction", "log10_l2", "momentum"),
)


@lru_cache(maxsize=4)
def _hpo_data(seed: int):
    from sklearn.datasets import make_classification

    X, y = make_classification(
        n_samples=500, n_features=8, n_informative=5, n_redundant=1,
        class_sep=1.0, flip_y=0.02, random_state=seed,
    )
    X = (X - X.mean(axis=0)) / X.std(axis=0)
    n_train = 375
    arrays = (X[:n_train], y[:n_train].astype(float), X[n_train:], y[n_train:].astype(float))
    for a in arrays:
        a.setflags(write=False)
    return arrays


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def _bce(p, y):
    p = np.clip(p, 1e-12, 1 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1 - y) * np.log(1 - p)))


def eval_toy_hpo(h, seed: int = 0) -> float:
    """Validation log-loss of a small tanh network trained with SGD.

    ``h`` holds ``(log10 learning rate, hidden units, epochs, batch
    fraction, log10 L2 penalty, momentum)``; integer-valued entries are
    rounded. Every call builds its own weights and RNG, so concurrent calls
    do not interact.
    """
    log_lr, hidden, epochs, batch_frac, log_l2, momentum = _as_point(h, HPO_SPACE, "toy-hpo")
    lr, l2 = 10.0 ** log_lr, 10.0 ** log_l2
    hidden, epochs = int(round(hidden)), int(round(epochs))
    X_tr, y_tr, X_va, y_va = _hpo_data(seed)
    n, d = X_tr.shape
    batch = max(1, int(round(batch_frac * n)))

    rng = np.random.default_rng(seed + 1)
    W1 = rng.normal(0.0, 1.0 / np.sqrt(d), (d, hidden))
    b1 = np.zeros(hidden)
    W2 = rng.normal(0.0, 1.0 / np.sqrt(hidden), hidden)
    b2 = 0.0
    vel = [np.zeros_like(W1), np.zeros_like(b1), np.zeros_like(W2), 0.0]

    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            xb, yb = X_tr[idx], y_tr[idx]
            a1 = np.tanh(xb @ W1 + b1)
            p = _sigmoid(a1 @ W2 + b2)
            g_out = (p - yb) / len(idx)
            gW2 = a1.T @ g_out + l2 * W2
            gb2 = g_out.sum()
            g_hid = np.outer(g_out, W2) * (1 - a1 ** 2)
            gW1 = xb.T @ g_hid + l2 * W1
            gb1 = g_hid.sum(axis=0)
            grads = (gW1, gb1, gW2, gb2)
            vel = [momentum * v - lr * g for v, g in zip(vel, grads)]
            W1, b1, W2, b2 = W1 + vel[0], b1 + vel[1], W2 + vel[2], b2 + vel[3]

    p_va = _sigmoid(np.tanh(X_va @ W1 + b1) @ W2 + b2)
    return _bce(p_va, y_va)


# -- registry -----------------------------------------------------------------


@dataclass(frozen=True)
class Objective:
    """A named black-box objective over a search space.

    ``known_minima`` lists ``(location, value)`` pairs where available;
    ``cheap`` marks objectives for which dense ground truth is affordable.
    """

    name: str
    space: SearchSpace
    func: Callable[[np.ndarray], float]
    known_minima: tuple = ()
    cheap: bool = True

    def __call__(self, x) -> float:
        return self.func(x)

    def evaluate_many(self, X) -> np.ndarray:
        return np.array([self.func(x) for x in np.atleast_2d(X)], dtype=float)


_HIMMELBLAU_MINIMA = (
    ((3.0, 2.0), 0.0),
    ((-2.805118, 3.131312), 0.0),
    ((-3.779310, -3.283186), 0.0),
    ((3.584428, -1.848126), 0.0),
)
_HOLDER_MINIMA = tuple(((sx * 8.05502, sy * 9.66459), -19.2085) for sx in (1, -1) for sy in (1, -1))
_CROSS_MINIMA = tuple(((sx * 1.34941, sy * 1.34941), -2.06261) for sx in (1, -1) for sy in (1, -1))

PROBLEMS = {
    "booth": Objective("booth", BOX_10, eval_booth, (((1.0, 3.0), 0.0),)),
    "matyas": Objective("matyas", BOX_10, eval_matyas, (((0.0, 0.0), 0.0),)),
    "himmelblau": Objective("himmelblau", BOX_5, eval_himmelblau, _HIMMELBLAU_MINIMA),
    "holder": Objective("holder", BOX_10, eval_holder_table, _HOLDER_MINIMA),
    "cross": Objective("cross", BOX_10, eval_cross_in_tray, _CROSS_MINIMA),
    "toy-hpo": Objective("toy-hpo", HPO_SPACE, eval_toy_hpo, (), cheap=False),
}


def get_problem(name: str) -> Objective:
    try:
        return PROBLEMS[name]
    except KeyError:
        raise ConfigError(f"unknown problem {name!r}; choose from {sorted(PROBLEMS)}") from None


# -- configuration ---------------------------------------------------------------


@dataclass
class ProblemConfig:
    """Settings for one explanation run.

    Defaults per problem come from :func:`default_config`; every field can
    be overridden from a ``key = value`` file or the command line.
    """

    problem: str = "booth"
    bo_iterations: int = 100
    n_explain: int = 200
    t_s: float = 0.1
    t_alpha: float = 0.4
    seed: int = 0
    linkage: str = "ward"
    metric: str = "euclidean"
    pruning: str = "variance"
    t_dist: Optional[float] = None
    min_cluster_size: int = 5
    weights: tuple = (0.2, 0.2, 0.1, 0.5)
    cluster_on: str = "full"
    variance_scale: str = "total"
    relevance_norm: str = "relative"
    fidelity_samples: int = 300

    def __post_init__(self):
        self.validate()

    def validate(self) -> "ProblemConfig":
        if self.problem not in PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}")
        if self.bo_iterations < 1:
            raise ConfigError("bo_iterations must be >= 1")
        if self.n_explain < 10:
            raise ConfigError("n_explain must be >= 10")
        if not 0.0 <= self.t_s <= 1.0:
            raise ConfigError("t_s must lie in [0, 1]")
        if not 0.0 < self.t_alpha <= 1.0:
            raise ConfigError("t_alpha must lie in (0, 1]")
        if len(self.weights) != 4 or abs(sum(self.weights) - 1.0) > 1e-9:
            raise ConfigError("weights must be four numbers summing to 1")
        return self

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["weights"] = list(self.weights)
        return d


# BO budgets for holder/cross are cut from 800 to 200 iterations to keep runs desk-sized.
_TABLE_DEFAULTS = {
    "booth": dict(bo_iterations=100, n_explain=200, t_s=1e-1),
    "matyas": dict(bo_iterations=100, n_explain=200, t_s=1e-3),
    "himmelblau": dict(bo_iterations=200, n_explain=400, t_s=5e-2),
    "holder": dict(bo_iterations=200, n_explain=1600, t_s=2e-3),
    "cross": dict(bo_iterations=200, n_explain=1600, t_s=2e-6),
    "toy-hpo": dict(bo_iterations=60, n_explain=1000, t_s=0.8),
}


def default_config(problem: str, **overrides) -> ProblemConfig:
    get_problem(problem)
    values = dict(_TABLE_DEFAULTS[problem])
    values.update(overrides)
    return ProblemConfig(problem=problem, **values)


_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(ProblemConfig)}


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "Optional[float]":
            return None if raw.lower() in ("", "none") else float(raw)
        if kind == "tuple":
            return tuple(float(v) for v in raw.strip("[]()").replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None
    return raw


def parse_config_text(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[key] = _coerce(key, raw)
    return values


def load_config(path=None, **overrides) -> ProblemConfig:
    """Build a config from problem defaults, an optional file, then overrides.

    ``None`` overrides are ignored so that unset CLI flags fall through.
    """
    values = parse_config_text(Path(path).read_text()) if path else {}
    values.update({k: v for k, v in overrides.items() if v is not None})
    problem = values.pop("problem", "booth")
    try:
        return default_config(problem, **values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None
