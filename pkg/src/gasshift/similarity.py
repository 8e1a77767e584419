"""KL-divergence and Jensen-Shannon distance between 1-D samples.

Both samples are binned onto one set of equal-width edges spanning their
union; empty bins are lifted to a small probability floor so that KL stays
finite when the supports do not overlap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError, EdgeMismatchError


@dataclass(frozen=True)
class BinningConfig:
    n_bins: int = 50
    smoothing_eps: float = 1e-10

    def __post_init__(self):
        if self.n_bins < 2:
            raise ValueError(f"n_bins must be >= 2, got {self.n_bins}")
        if not 0 < self.smoothing_eps < 1.0 / self.n_bins:
            raise ValueError("smoothing_eps must lie in (0, 1/n_bins)")


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if edges.ndim != 1 or len(edges) != len(probs) + 1:
            raise ValueError("need len(edges) == len(probs) + 1")
        if np.any(np.diff(edges) <= 0):
            raise ValueError("edges must be strictly increasing")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_probs(cls, probs) -> "Histogram":
        """Histogram on unit-width bins starting at 0, for hand-built distributions."""
        probs = np.asarray(probs, dtype=float)
        return cls(np.arange(len(probs) + 1, dtype=float), probs)


@dataclass(frozen=True)
class DivergenceReport:
    kl: float
    js_distance: float
    n_a: int
    n_b: int
    binning: BinningConfig

    CSV_HEADER = ("dataset", "kl_nats", "js_distance", "n_a", "n_b", "n_bins")

    def csv_row(self, dataset: str) -> list[str]:
        return [dataset, repr(self.kl), repr(self.js_distance), str(self.n_a), str(self.n_b), str(self.binning.n_bins)]


def _smoothed(counts: np.ndarray, eps: float) -> np.ndarray:
    # additive floor: eps + (1 - k*eps) * p keeps the sum at 1 and every bin >= eps
    p = counts / counts.sum()
    return eps + (1.0 - len(p) * eps) * p


def build_shared_histograms(xs, ys, config: BinningConfig = BinningConfig()) -> tuple[Histogram, Histogram]:
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.size == 0 or ys.size == 0:
        raise ValueError("both samples must be nonempty")
    lo = min(xs.min(), ys.min())
    hi = max(xs.max(), ys.max())
    if not lo < hi:
        raise DegenerateInputError("all values are identical; histogram support is empty")
    edges = np.linspace(lo, hi, config.n_bins + 1)
    cx, _ = np.histogram(xs, bins=edges)
    cy, _ = np.histogram(ys, bins=edges)
    eps = config.smoothing_eps
    return Histogram(edges, _smoothed(cx, eps)), Histogram(edges, _smoothed(cy, eps))


def _check_edges(p: Histogram, q: Histogram):
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise EdgeMismatchError("histograms must share identical bin edges")


def _kl(p: np.ndarray, q: np.ndarray, log) -> float:
    mask = p > 0
    if np.any(q[mask] == 0):
        return float("inf")
    return float(np.sum(p[mask] * log(p[mask] / q[mask])))


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """KL(p || q) in nats."""
    _check_edges(p, q)
    if np.array_equal(p.probs, q.probs):
        return 0.0
    return max(_kl(p.probs, q.probs, np.log), 0.0)


def js_distance(p: Histogram, q: Histogram) -> float:
    """Square root of the base-2 Jensen-Shannon divergence; lies in [0, 1]."""
    _check_edges(p, q)
    if np.array_equal(p.probs, q.probs):
        return 0.0
    m = 0.5 * (p.probs + q.probs)
    jsd = 0.5 * _kl(p.probs, m, np.log2) + 0.5 * _kl(q.probs, m, np.log2)
    return float(np.sqrt(min(max(jsd, 0.0), 1.0)))


def divergence_report(sample_a, sample_b, config: BinningConfig = BinningConfig()) -> DivergenceReport:
    """KL(a || b) and JS distance, with ``a`` taken as the reference sample."""
    p, q = build_shared_histograms(sample_a, sample_b, config)
    return DivergenceReport(
        kl=kl_divergence(p, q),
        js_distance=js_distance(p, q),
        n_a=int(np.size(sample_a)),
        n_b=int(np.size(sample_b)),
        binning=config,
    )
