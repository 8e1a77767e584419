"""Mahalanobis-distance scoring against a Gaussian profile of training features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DegenerateInputError


@dataclass(frozen=True, eq=False)
class GaussianProfile:
    """Sample mean and covariance of the training features.

    ``chol`` is the lower Cholesky factor of ``cov`` (after any ridge), used
    for triangular solves in place of an explicit inverse.
    """

    mean: np.ndarray
    cov: np.ndarray
    chol: np.ndarray
    ridge: float = 0.0

    def solve(self, diff) -> np.ndarray:
        """Solve ``cov @ z = diff`` for one vector or a stack of row vectors."""
        diff = np.asarray(diff, dtype=float)
        rhs = diff.T if diff.ndim == 2 else diff
        y = solve_triangular(self.chol, rhs, lower=True)
        z = solve_triangular(self.chol.T, y, lower=False)
        return z.T if diff.ndim == 2 else z

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "cov": self.cov.tolist(), "ridge": self.ridge}


def fit_profile(features) -> GaussianProfile:
    X = np.asarray(features, dtype=float)
    if X.ndim != 2 or X.shape[0] < 4:
        raise ValueError(f"need an (n >= 4, d) feature matrix, got shape {X.shape}")
    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, ddof=1)
    cov = 0.5 * (cov + cov.T)
    if np.any(np.diag(cov) <= 0):
        raise DegenerateInputError("a feature column has zero variance")
    ridge = 0.0
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        ridge = 1e-9 * np.trace(cov) / cov.shape[0]
        cov = cov + ridge * np.eye(cov.shape[0])
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DegenerateInputError("covariance is not positive definite even after ridge") from None
    return GaussianProfile(mean=mean, cov=cov, chol=chol, ridge=ridge)


def _whiten(profile: GaussianProfile, X: np.ndarray) -> np.ndarray:
    diff = X - profile.mean
    return solve_triangular(profile.chol, diff.T, lower=True).T


def mahalanobis(profile: GaussianProfile, x) -> float:
    z = _whiten(profile, np.asarray(x, dtype=float).reshape(1, -1))
    return float(np.sqrt(np.sum(z * z)))


def distances(profile: GaussianProfile, features) -> np.ndarray:
    """Mahalanobis distance of every row of an (n, d) matrix, or of a Dataset's (T, V, N)."""
    X = getattr(features, "features", features)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z = _whiten(profile, X)
    return np.sqrt(np.sum(z * z, axis=1))


@dataclass(frozen=True)
class OodThreshold:
    percentile: float
    value: float
    n_train: int

    def exceeds(self, d) -> np.ndarray:
        return np.asarray(d) > self.value

    def to_dict(self) -> dict:
        return {"percentile": self.percentile, "value": self.value, "n_train": self.n_train}


def threshold_from_training(train_distances, percentile: float = 95.0) -> OodThreshold:
    """Empirical percentile cutoff, linear interpolation between order statistics."""
    d = np.asarray(train_distances, dtype=float).ravel()
    if d.size == 0:
        raise ValueError("need at least one training distance")
    if not 0 < percentile < 100:
        raise ValueError(f"percentile must lie in (0, 100), got {percentile}")
    value = float(np.percentile(d, percentile, method="linear"))
    return OodThreshold(percentile=float(percentile), value=value, n_train=int(d.size))
