"""Explanation dataset: uniform samples of the space with GP posterior moments."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .problems import SearchSpace

__all__ = ["ExplanationDataset", "generate_dataset", "minmax"]


def minmax(v) -> np.ndarray:
    """Rescale to ``[0, 1]``; a constant vector maps to zeros."""
    v = np.asarray(v, dtype=float)
    lo, hi = v.min(), v.max()
    if hi - lo <= 0:
        return np.zeros_like(v)
    return (v - lo) / (hi - lo)


@dataclass(frozen=True)
class ExplanationDataset:
    """Rows ``[x, mu(x), sigma(x)]`` over a search space.

    ``mean_normalized`` is the min-max rescaled mean, the quantity the
    variance criterion and clustering features work on.
    """

    X: np.ndarray
    mean: np.ndarray
    std: np.ndarray
    space: SearchSpace

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        std = np.asarray(self.std, dtype=float).reshape(-1)
        if X.shape[0] != mean.size or mean.size != std.size:
            raise ValueError("X, mean and std must have matching lengths")
        if X.shape[1] != self.space.dims:
            raise ValueError("X columns must match the search-space dimension")
        if np.any(std < 0):
            raise ValueError("std must be non-negative")
        for name, arr in (("X", X), ("mean", mean), ("std", std)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def mean_normalized(self) -> np.ndarray:
        return minmax(self.mean)

    @property
    def std_normalized(self) -> np.ndarray:
        top = self.std.max()
        return self.std / top if top > 0 else np.zeros_like(self.std)

    def features(self, cluster_on: str = "full") -> np.ndarray:
        """Clustering features: unit-box inputs, optionally joined with ``mu~`` and ``sigma/max sigma``."""
        U = self.space.to_unit(self.X)
        if cluster_on == "inputs":
            return U
        if cluster_on != "full":
            raise ValueError("cluster_on must be 'full' or 'inputs'")
        return np.column_stack([U, self.mean_normalized, self.std_normalized])

    def digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.X, self.mean, self.std, self.space.lower, self.space.upper):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    # -- csv ------------------------------------------------------------------

    def to_csv(self, path):
        d = self.space.dims
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{j + 1}" for j in range(d)] + ["mu", "sigma"])
            for x, m, s in zip(self.X, self.mean, self.std):
                w.writerow([repr(float(v)) for v in x] + [repr(float(m)), repr(float(s))])

    @classmethod
    def from_csv(cls, path, space: SearchSpace) -> "ExplanationDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], np.array(rows[1:], dtype=float)
        if header[-2:] != ["mu", "sigma"]:
            raise ValueError("dataset csv must end with mu, sigma columns")
        return cls(body[:, :-2], body[:, -2], body[:, -1], space)


def generate_dataset(model, space: SearchSpace, n: int, seed=None, include_noise=True) -> ExplanationDataset:
    """Sample ``n`` points uniformly in ``space`` and attach the GP posterior.

    ``sigma`` is the predictive std of an observation unless
    ``include_noise`` is False.
    """
    if n < 10:
        raise ValueError("the explanation dataset needs at least 10 samples")
    X = space.sample_uniform(n, np.random.default_rng(seed))
    mean, std = model.predict(X, return_std=True, include_noise=include_noise)
    return ExplanationDataset(X, mean, std, space)
