"""Exact Gaussian-process regression with a squared-exponential ARD kernel.

Targets are standardized before fitting, so the prior mean is zero in
standardized units; every public output is in objective units.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

logger = logging.getLogger(__name__)

__all__ = [
    "SEKernel",
    "GaussianProcessRegressor",
    "GPFitError",
    "gaussian_logpdf",
    "JITTER_LADDER",
]

JITTER_LADDER = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)
_VAR_FLOOR = 1e-12
SERIAL_VERSION = 1


class GPFitError(RuntimeError):
    """The kernel matrix stayed indefinite after the full jitter ladder."""


@dataclass(frozen=True)
class SEKernel:
    """``k(x, x') = s2 * exp(-0.5 * sum(((x - x') / l)**2))`` plus white noise."""

    lengthscales: np.ndarray
    signal_variance: float = 1.0
    noise_variance: float = 0.0

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if np.any(ls <= 0) or self.signal_variance <= 0 or self.noise_variance < 0:
            raise ValueError("lengthscales and signal variance must be positive, noise non-negative")
        object.__setattr__(self, "lengthscales", ls)

    def __call__(self, A, B=None) -> np.ndarray:
        A = np.asarray(A, dtype=float) / self.lengthscales
        B = A if B is None else np.asarray(B, dtype=float) / self.lengthscales
        sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        np.maximum(sq, 0.0, out=sq)
        return self.signal_variance * np.exp(-0.5 * sq)

    @property
    def theta(self) -> np.ndarray:
        """Log-parameters ``[log l_1..l_d, log s2, log noise]``."""
        return np.log(np.r_[self.lengthscales, self.signal_variance, max(self.noise_variance, 1e-300)])

    @classmethod
    def from_theta(cls, theta) -> "SEKernel":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:-2]), float(np.exp(theta[-2])), float(np.exp(theta[-1])))

    def to_dict(self) -> dict:
        return {
            "kind": "se-ard",
            "lengthscales": self.lengthscales.tolist(),
            "signal_variance": self.signal_variance,
            "noise_variance": self.noise_variance,
        }


def _factor(K: np.ndarray):
    """Cholesky factor of ``K`` escalating diagonal jitter on failure."""
    n = K.shape[0]
    for jitter in JITTER_LADDER:
        try:
            return cholesky(K + jitter * np.eye(n), lower=True, check_finite=False), jitter
        except LinAlgError:
            continue
    raise GPFitError(f"kernel matrix not positive definite even with jitter {JITTER_LADDER[-1]:g}")


def gaussian_logpdf(y, mean, std) -> np.ndarray:
    var = np.maximum(np.asarray(std, dtype=float) ** 2, _VAR_FLOOR)
    r = np.asarray(y, dtype=float) - np.asarray(mean, dtype=float)
    return -0.5 * (np.log(2 * np.pi * var) + r * r / var)


class GaussianProcessRegressor(BaseEstimator, RegressorMixin):
    """GP regressor fitted by type-II maximum likelihood.

    Parameters
    ----------
    lengthscales : array-like or None
        Initial lengthscales in input units. ``None`` uses one fifth of
        each training input's span.
    signal_variance, noise_variance : float
        Initial kernel amplitude and white-noise variance, in standardized
        target units.
    optimize : bool
        When False the initial hyperparameters are kept as given.
    n_restarts : int
        Number of Nelder-Mead starts; the first starts from the initial
        hyperparameters, the rest from log-uniform draws inside the box.
    max_evals : int
        Likelihood evaluations allowed per start.
    noise_bounds : tuple
        Box for the noise variance during optimization.
    random_state : int or None
        Seed for restart draws.

    Attributes
    ----------
    kernel_ : SEKernel
    L_ : ndarray of shape (n, n)
        Lower Cholesky factor of ``K + (noise + jitter) I``.
    alpha_ : ndarray of shape (n,)
        ``K^-1 y`` in standardized units.
    """

    def __init__(
        self,
        lengthscales=None,
        signal_variance=1.0,
        noise_variance=3e-3,
        optimize=True,
        n_restarts=5,
        max_evals=200,
        noise_bounds=(3e-3, 1e-1),
        random_state=None,
    ):
        self.lengthscales = lengthscales
        self.signal_variance = signal_variance
        self.noise_variance = noise_variance
        self.optimize = optimize
        self.n_restarts = n_restarts
        self.max_evals = max_evals
        self.noise_bounds = noise_bounds
        self.random_state = random_state

    # -- fitting -----------------------------------------------------------

    def _initial_kernel(self, X) -> SEKernel:
        if self.lengthscales is not None:
            ls = np.broadcast_to(np.asarray(self.lengthscales, dtype=float), (X.shape[1],)).copy()
        else:
            span = X.max(axis=0) - X.min(axis=0)
            ls = np.where(span > 0, span / 5.0, 1.0)
        return SEKernel(ls, float(self.signal_variance), float(self.noise_variance))

    def _theta_bounds(self, X) -> np.ndarray:
        span = X.max(axis=0) - X.min(axis=0)
        span = np.where(span > 0, span, 1.0)
        lo = np.r_[np.log(span * 1e-3), np.log(1e-2), np.log(self.noise_bounds[0])]
        hi = np.r_[np.log(span * 1e2), np.log(1e2), np.log(self.noise_bounds[1])]
        return np.column_stack([lo, hi])

    def _neg_lml(self, theta, X, y) -> float:
        kernel = SEKernel.from_theta(theta)
        K = kernel(X)
        K[np.diag_indices_from(K)] += kernel.noise_variance
        try:
            L, _ = _factor(K)
        except GPFitError:
            return 1e25
        a = cho_solve((L, True), y, check_finite=False)
        return float(0.5 * y @ a + np.log(np.diag(L)).sum() + 0.5 * len(y) * np.log(2 * np.pi))

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        self.X_train_ = X.copy()
        self.y_train_ = y.copy()
        self.y_mean_ = float(y.mean())
        std = float(y.std())
        self.y_std_ = std if std > 0 else 1.0
        ys = (y - self.y_mean_) / self.y_std_
        self.n_features_in_ = X.shape[1]

        kernel = self._initial_kernel(X)
        self.initial_kernel_ = kernel
        if self.optimize and len(y) > 1:
            kernel = self._optimize(X, ys, kernel)
        self._set_kernel(kernel, X, ys)
        return self

    def _optimize(self, X, ys, kernel) -> SEKernel:
        bounds = self._theta_bounds(X)
        rng = np.random.default_rng(self.random_state)
        start = np.clip(kernel.theta, bounds[:, 0], bounds[:, 1])
        best_theta, best_val = start, self._neg_lml(start, X, ys)
        for k in range(max(1, self.n_restarts)):
            if k > 0:
                start = rng.uniform(bounds[:, 0], bounds[:, 1])
            res = minimize(
                self._neg_lml, start, args=(X, ys), method="Nelder-Mead",
                bounds=bounds, options={"maxfev": self.max_evals, "xatol": 1e-4, "fatol": 1e-6},
            )
            if res.fun < best_val:
                best_theta, best_val = res.x, float(res.fun)
        return SEKernel.from_theta(best_theta)

    def _set_kernel(self, kernel: SEKernel, X, ys):
        K = kernel(X)
        K[np.diag_indices_from(K)] += kernel.noise_variance
        self.L_, self.jitter_ = _factor(K)
        if self.jitter_ > 0:
            logger.debug("GP fit needed jitter %g", self.jitter_)
        self.kernel_ = kernel
        self.alpha_ = cho_solve((self.L_, True), ys, check_finite=False)

    def log_marginal_likelihood(self, theta=None) -> float:
        """Log evidence of the standardized targets at ``theta`` (default: fitted)."""
        check_is_fitted(self, "kernel_")
        theta = self.kernel_.theta if theta is None else theta
        ys = (self.y_train_ - self.y_mean_) / self.y_std_
        return -self._neg_lml(theta, self.X_train_, ys)

    # -- prediction --------------------------------------------------------

    def predict(self, X, return_std=False, include_noise=False):
        """Posterior mean, and std of the latent function (or of a noisy observation)."""
        check_is_fitted(self, "kernel_")
        X = check_array(X)
        Ks = self.kernel_(X, self.X_train_)
        mean = Ks @ self.alpha_ * self.y_std_ + self.y_mean_
        if not return_std:
            return mean
        v = solve_triangular(self.L_, Ks.T, lower=True, check_finite=False)
        if not np.all(np.isfinite(v)):
            raise FloatingPointError("triangular solve produced non-finite values")
        var = self.kernel_.signal_variance - np.einsum("ij,ij->j", v, v)
        if include_noise:
            var = np.maximum(var, 0.0) + self.kernel_.noise_variance
        std = np.sqrt(np.maximum(var, 0.0)) * self.y_std_
        return mean, std

    def predict_gradient(self, X) -> np.ndarray:
        """Exact gradient of the posterior mean, shape ``(m, d)``, in objective units."""
        check_is_fitted(self, "kernel_")
        X = check_array(X)
        ls2 = self.kernel_.lengthscales ** 2
        w = self.kernel_(X, self.X_train_) * self.alpha_
        diff = X[:, None, :] - self.X_train_[None, :, :]
        return -np.einsum("mn,mnd->md", w, diff) / ls2 * self.y_std_

    def log_likelihood_of_value(self, X, y_ref, include_noise=True) -> np.ndarray:
        """``log N(y_ref | mu(x), sigma(x)^2)`` for each row of ``X``."""
        mean, std = self.predict(np.atleast_2d(X), return_std=True, include_noise=include_noise)
        return gaussian_logpdf(y_ref, mean, std)

    @property
    def prior_std(self) -> float:
        check_is_fitted(self, "kernel_")
        return float(np.sqrt(self.kernel_.signal_variance) * self.y_std_)

    # -- serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        check_is_fitted(self, "kernel_")
        return {
            "version": SERIAL_VERSION,
            "kernel": self.kernel_.to_dict(),
            "X_train": self.X_train_.tolist(),
            "y_train": self.y_train_.tolist(),
            "y_mean": self.y_mean_,
            "y_std": self.y_std_,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "GaussianProcessRegressor":
        if data.get("version") != SERIAL_VERSION:
            raise ValueError(f"unsupported GP serialization version {data.get('version')!r}")
        k = data["kernel"]
        kernel = SEKernel(np.asarray(k["lengthscales"]), k["signal_variance"], k["noise_variance"])
        gp = cls(lengthscales=kernel.lengthscales, signal_variance=kernel.signal_variance,
                 noise_variance=kernel.noise_variance, optimize=False)
        gp.X_train_ = np.asarray(data["X_train"], dtype=float)
        gp.y_train_ = np.asarray(data["y_train"], dtype=float)
        gp.y_mean_ = float(data["y_mean"])
        gp.y_std_ = float(data["y_std"])
        gp.n_features_in_ = gp.X_train_.shape[1]
        gp.initial_kernel_ = kernel
        gp._set_kernel(kernel, gp.X_train_, (gp.y_train_ - gp.y_mean_) / gp.y_std_)
        return gp

    @classmethod
    def from_json(cls, text: str) -> "GaussianProcessRegressor":
        return cls.from_dict(json.loads(text))
