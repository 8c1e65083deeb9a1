"""Benchmark flows, synthetic image pairs and evaluation metrics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DimensionError, DomainError
from .grid import FlowField, GridSpec, ImageField, devectorize, image_gradients

FLOW_IDS = (1, 2, 3, 4, 5)
NOISE_KINDS = ("gaussian", "uniform", "laplace", "none")


def eval_flow_field(flow_id: int, x, y) -> tuple[np.ndarray, np.ndarray]:
    """Analytic velocity ``(u, v)`` of benchmark flow ``flow_id`` at ``(x, y)``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    pi = np.pi
    if flow_id == 1:
        return x.copy(), y.copy()
    if flow_id == 2:
        return -y, x.copy()
    if flow_id == 3:
        return y.copy(), np.sin(x)
    if flow_id == 4:
        return (-pi * np.sin(0.5 * pi * x) * np.cos(0.5 * pi * y),
                pi * np.cos(0.5 * pi * x) * np.sin(0.5 * pi * y))
    if flow_id == 5:
        return (-pi * np.sin(pi * x) * np.cos(pi * y),
                pi * np.cos(pi * x) * np.sin(pi * y))
    raise DomainError(f"flow id must be one of {FLOW_IDS}, got {flow_id!r}")


def true_flow(flow_id: int, grid: GridSpec) -> FlowField:
    X, Y = grid.mesh()
    u, v = eval_flow_field(flow_id, X, Y)
    return FlowField(grid, u, v)


def make_first_image(grid: GridSpec) -> ImageField:
    """``F(x, y) = (cos(pi x) cos(pi y) + 1) / 2`` sampled on ``grid``."""
    X, Y = grid.mesh()
    return ImageField(grid, 0.5 * (np.cos(np.pi * X) * np.cos(np.pi * Y) + 1.0))


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DomainError(f"noise kind must be one of {NOISE_KINDS}, got {self.kind!r}")
        if not self.sigma >= 0:
            raise DomainError(f"sigma must be >= 0, got {self.sigma}")

    def draw(self, size, rng: np.random.Generator) -> np.ndarray:
        """Zero-mean i.i.d. noise with standard deviation ``sigma``."""
        s = self.sigma
        if self.kind == "none" or s == 0.0:
            return np.zeros(size)
        if self.kind == "gaussian":
            return rng.normal(0.0, s, size)
        if self.kind == "uniform":
            h = s * np.sqrt(3.0)
            return rng.uniform(-h, h, size)
        return rng.laplace(0.0, s / np.sqrt(2.0), size)


NO_NOISE = NoiseSpec()


def advect_image(F: ImageField, flow: FlowField, noise: NoiseSpec = NO_NOISE,
                 rng: np.random.Generator | None = None) -> ImageField:
    """Second image from the linearized constancy equation.

    ``g = f - fx * u - fy * v + eta`` with forward-difference gradients of
    ``F``. No clipping to ``[0, 1]`` is applied.
    """
    if F.grid != flow.grid:
        raise DimensionError(f"image grid {F.grid} differs from flow grid {flow.grid}")
    fx, fy = image_gradients(F)
    u, v = flow.vec[:F.grid.size], flow.vec[F.grid.size:]
    g = F.vec - fx * u - fy * v
    if noise.kind != "none" and noise.sigma > 0:
        if rng is None:
            raise ValueError("a random generator is required for noisy advection")
        g = g + noise.draw(g.size, rng)
    return ImageField(F.grid, devectorize(g, F.grid))


def reconstruct_second_image(F: ImageField, flow: FlowField) -> ImageField:
    return advect_image(F, flow, NO_NOISE)


@dataclass(frozen=True)
class BenchCase:
    """Image pair for one flow: noisy ``G`` and the noiseless ``Gbar``."""

    name: str
    F: ImageField
    flow_id: int
    noise: NoiseSpec
    G: ImageField
    Gbar: ImageField

    @property
    def grid(self) -> GridSpec:
        return self.F.grid

    @property
    def truth(self) -> FlowField:
        return true_flow(self.flow_id, self.grid)


def make_case(F: ImageField, flow_id: int, noise: NoiseSpec = NO_NOISE,
              rng: np.random.Generator | None = None, name: str | None = None) -> BenchCase:
    flow = true_flow(flow_id, F.grid)
    Gbar = advect_image(F, flow, NO_NOISE)
    if noise.kind == "none" or noise.sigma == 0:
        G = Gbar
    else:
        G = advect_image(F, flow, noise, rng)
    if name is None:
        name = f"flow{flow_id}"
    return BenchCase(name, F, flow_id, noise, G, Gbar)


def synthetic_case(flow_id: int, grid: GridSpec = GridSpec(30, 30), noise: NoiseSpec = NO_NOISE,
                   rng: np.random.Generator | None = None) -> BenchCase:
    return make_case(make_first_image(grid), flow_id, noise, rng, name=f"synthetic_flow{flow_id}")


def _check_same_grid(*fields):
    grids = {f.grid for f in fields}
    if len(grids) != 1:
        raise DimensionError(f"fields live on different grids: {sorted(map(str, grids))}")


def endpoint_error(est: FlowField, truth: FlowField) -> float:
    """Average endpoint error over all pixels."""
    _check_same_grid(est, truth)
    return float(np.mean(np.hypot(est.u - truth.u, est.v - truth.v)))


def rmse(a: ImageField, b: ImageField) -> float:
    _check_same_grid(a, b)
    return float(np.sqrt(np.mean((a.data - b.data) ** 2)))


class ImageComparison(NamedTuple):
    rmse_g: float
    rmse_gbar: float
    ghat: np.ndarray
    g: np.ndarray
    gbar: np.ndarray


def compare_images(g_hat: ImageField, g_noisy: ImageField, g_true: ImageField) -> ImageComparison:
    """RMSE of the reconstruction against the noisy and the noiseless second image.

    The per-pixel value arrays are column-stacked, ready for scatter plots.
    """
    _check_same_grid(g_hat, g_noisy, g_true)
    return ImageComparison(rmse(g_hat, g_noisy), rmse(g_hat, g_true),
                           g_hat.vec, g_noisy.vec, g_true.vec)


@dataclass(frozen=True)
class Metrics:
    aee: float
    rmse_g: float
    rmse_gbar: float

    def __post_init__(self):
        if min(self.aee, self.rmse_g, self.rmse_gbar) < 0:
            raise DomainError("metrics must be non-negative")
