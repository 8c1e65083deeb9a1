"""Posterior summaries: mean flow, per-pixel Gaussian fits and confidence ellipses."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import DimensionError, DomainError, InsufficientDataError
from .grid import FlowField, GridSpec

DEFAULT_Q = 0.95


@dataclass(frozen=True)
class PixelUQ:
    mu: np.ndarray
    sigma: np.ndarray
    count: int


@dataclass(frozen=True)
class Ellipse:
    center: np.ndarray
    semi_axes: tuple[float, float]
    orientation: float
    degenerate: bool = False

    def boundary(self, num: int = 64) -> np.ndarray:
        """``num`` points on the ellipse, shape ``(num, 2)``."""
        t = np.linspace(0.0, 2.0 * np.pi, num, endpoint=False)
        a, b = self.semi_axes
        c, s = math.cos(self.orientation), math.sin(self.orientation)
        major = np.array([c, s])
        minor = np.array([-s, c])
        return self.center + np.outer(a * np.cos(t), major) + np.outer(b * np.sin(t), minor)


def pixel_stats(samples) -> PixelUQ:
    """Sample mean and unbiased covariance of a sequence of 2-vectors."""
    z = np.asarray(samples, dtype=float)
    if z.ndim != 2 or z.shape[1] != 2:
        raise DimensionError(f"expected a sequence of 2-vectors, got shape {z.shape}")
    if z.shape[0] < 2:
        raise InsufficientDataError(f"need at least 2 samples, got {z.shape[0]}")
    if not np.all(np.isfinite(z)):
        raise DomainError("samples contain non-finite values")
    mu = z.mean(axis=0)
    d = z - mu
    sigma = d.T @ d / (z.shape[0] - 1)
    return PixelUQ(mu, sigma, z.shape[0])


def chi2_quantile_2dof(q: float) -> float:
    """Quantile of chi-square with two degrees of freedom, ``-2 ln(1 - q)``."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"q must lie in (0, 1), got {q}")
    return -2.0 * math.log1p(-q)


def _eig2(sigma):
    """Eigenvalues (descending) and major-axis angle of a symmetric 2x2 matrix."""
    a, b, d = sigma[0, 0], 0.5 * (sigma[0, 1] + sigma[1, 0]), sigma[1, 1]
    half_tr = 0.5 * (a + d)
    rad = math.hypot(0.5 * (a - d), b)
    l1, l2 = half_tr + rad, half_tr - rad
    if rad <= 1e-12 * max(abs(l1), abs(l2), 1e-300):
        theta = 0.0
    else:
        theta = 0.5 * math.atan2(2.0 * b, a - d)
    if theta <= -math.pi / 2:
        theta += math.pi
    return l1, l2, theta


def confidence_ellipse(p: PixelUQ, q: float = DEFAULT_Q) -> Ellipse:
    """Region ``(z - mu)^T Sigma^{-1} (z - mu) <= chi2_2(q)`` as an ellipse.

    A covariance whose smaller eigenvalue is at most ``1e-14`` times the
    larger one gives a degenerate ellipse with zero minor axis.
    """
    c2 = chi2_quantile_2dof(q)
    l1, l2, theta = _eig2(np.asarray(p.sigma, dtype=float))
    degenerate = l1 <= 0.0 or l2 <= 1e-14 * l1
    a = math.sqrt(max(l1, 0.0) * c2)
    b = 0.0 if degenerate else math.sqrt(l2 * c2)
    return Ellipse(np.asarray(p.mu, dtype=float), (a, b), theta, degenerate)


def uncertainty_area(p: PixelUQ, q: float = DEFAULT_Q) -> float:
    """Area ``pi chi2_2(q) sqrt(det Sigma)`` of the confidence ellipse."""
    det = float(np.linalg.det(np.asarray(p.sigma, dtype=float)))
    return math.pi * chi2_quantile_2dof(q) * math.sqrt(max(det, 0.0))


def mean_flow(result, grid: GridSpec) -> FlowField:
    """Post-burn-in sample mean of the chain as a flow field."""
    if result.kept == 0:
        raise InsufficientDataError("chain kept no samples")
    return FlowField.from_vector(result.mean, grid)


@dataclass(frozen=True)
class UQField:
    """Per-pixel Gaussian fits, stored column-stacked (pixel ``i + j n_x``)."""

    grid: GridSpec
    mu: np.ndarray
    sigma: np.ndarray
    count: int
    q: float = DEFAULT_Q

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise DomainError(f"q must lie in (0, 1), got {self.q}")
        m = self.grid.size
        if self.mu.shape != (m, 2) or self.sigma.shape != (m, 2, 2):
            raise DimensionError("per-pixel arrays do not match the grid")

    def pixel(self, i: int, j: int) -> PixelUQ:
        k = i + j * self.grid.n_x
        return PixelUQ(self.mu[k], self.sigma[k], self.count)

    def areas(self) -> np.ndarray:
        det = self.sigma[:, 0, 0] * self.sigma[:, 1, 1] - self.sigma[:, 0, 1] ** 2
        return np.pi * chi2_quantile_2dof(self.q) * np.sqrt(np.maximum(det, 0.0))

    def ellipses(self, stride: int = 1):
        """Yield ``(i, j, Ellipse)`` on every ``stride``-th pixel in each direction."""
        for j in range(0, self.grid.n_y, stride):
            for i in range(0, self.grid.n_x, stride):
                yield i, j, confidence_ellipse(self.pixel(i, j), self.q)


def uq_field(result, grid: GridSpec, q: float = DEFAULT_Q) -> UQField:
    acc = result.accumulator
    m = grid.size
    if acc.m != m:
        raise DimensionError(f"chain has {acc.m} pixels, grid has {m}")
    mu = np.column_stack([acc.mean[:m], acc.mean[m:]])
    return UQField(grid, mu, acc.covariances(), acc.count, q)
