"""Grids, image/flow containers and the finite-difference operators.

Vectors are column-stacked: for an ``n_x x n_y`` matrix ``M`` the entry
``M[i, j]`` lives at index ``i + j * n_x``, so ``x`` varies fastest.
All operators are returned as canonical ``scipy.sparse.csr_matrix``
(sorted, duplicate-free column indices per row).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
import scipy.sparse as sp

from .exceptions import DimensionError, DomainError


@dataclass(frozen=True)
class GridSpec:
    """Uniform ``n_x x n_y`` grid on ``[-1, 1]^2``."""

    n_x: int
    n_y: int

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise DomainError(f"grid needs at least 2x2 points, got {self.n_x}x{self.n_y}")

    @property
    def dx(self) -> float:
        return 2.0 / (self.n_x - 1)

    @property
    def dy(self) -> float:
        return 2.0 / (self.n_y - 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_x, self.n_y)

    @property
    def size(self) -> int:
        return self.n_x * self.n_y

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        x = -1.0 + self.dx * np.arange(self.n_x)
        y = -1.0 + self.dy * np.arange(self.n_y)
        return x, y

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Coordinate matrices ``X[i, j] = x_i``, ``Y[i, j] = y_j``."""
        x, y = self.coords()
        return np.meshgrid(x, y, indexing="ij")


def _check_matrix(name, data, grid):
    data = np.asarray(data, dtype=float)
    if data.shape != grid.shape:
        raise DimensionError(f"{name} has shape {data.shape}, grid is {grid.shape}")
    if not np.all(np.isfinite(data)):
        raise DomainError(f"{name} contains non-finite entries")
    return data


@dataclass(frozen=True)
class ImageField:
    grid: GridSpec
    data: np.ndarray = field(repr=False)

    def __post_init__(self):
        data = _check_matrix("image", self.data, self.grid)
        data.setflags(write=False)
        object.__setattr__(self, "data", data)

    @property
    def vec(self) -> np.ndarray:
        return vectorize(self.data)


@dataclass(frozen=True)
class FlowField:
    grid: GridSpec
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("u", "v"):
            data = _check_matrix(name, getattr(self, name), self.grid)
            data.setflags(write=False)
            object.__setattr__(self, name, data)

    @classmethod
    def from_vector(cls, x, grid: GridSpec) -> "FlowField":
        x = np.asarray(x, dtype=float)
        m = grid.size
        if x.shape != (2 * m,):
            raise DimensionError(f"flow vector has length {x.size}, expected {2 * m}")
        return cls(grid, devectorize(x[:m], grid), devectorize(x[m:], grid))

    @property
    def vec(self) -> np.ndarray:
        """Stacked unknown vector ``[u; v]``."""
        return np.concatenate([vectorize(self.u), vectorize(self.v)])


def vectorize(M) -> np.ndarray:
    """Stack the columns of ``M`` into one vector."""
    return np.asarray(M, dtype=float).ravel(order="F").copy()


def devectorize(v, grid: GridSpec) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim != 1 or v.size != grid.size:
        raise DimensionError(f"vector of length {v.size} does not fit a {grid.n_x}x{grid.n_y} grid")
    return v.reshape(grid.shape, order="F").copy()


def build_diff_matrix(k: int) -> sp.csr_matrix:
    """Forward-difference matrix of size ``k``.

    Rows ``0..k-2`` hold ``-1`` on the diagonal and ``+1`` just right of
    it. The last row repeats the backward difference ``(-1, +1)`` at
    columns ``k-2, k-1`` so that every row sums to zero.
    """
    if k < 2:
        raise DomainError(f"difference matrix needs k >= 2, got {k}")
    cols = np.empty(2 * k, dtype=np.int64)
    cols[0::2] = np.arange(k)
    cols[1::2] = np.arange(k) + 1
    cols[-2:] = (k - 2, k - 1)
    data = np.tile([-1.0, 1.0], k)
    indptr = np.arange(0, 2 * k + 1, 2)
    return sp.csr_matrix((data, cols, indptr), shape=(k, k))


def build_qx_qy(grid: GridSpec) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Scaled forward differences along x and y on column-stacked vectors."""
    sx = build_diff_matrix(grid.n_x)
    sy = build_diff_matrix(grid.n_y)
    qx = sp.kron(sp.identity(grid.n_y, format="csr"), sx, format="csr") / grid.dx
    qy = sp.kron(sy, sp.identity(grid.n_x, format="csr"), format="csr") / grid.dy
    return _canonical(qx), _canonical(qy)


def build_regularizer(grid: GridSpec) -> sp.csr_matrix:
    """Gradient penalty ``I_2 kron (Qx^T Qx + Qy^T Qy)`` of size ``2 m``."""
    qx, qy = build_qx_qy(grid)
    block = (qx.T @ qx + qy.T @ qy).tocsr()
    # symmetrize exactly: the two products can differ in the last ulp
    block = 0.5 * (block + block.T)
    return _canonical(sp.block_diag([block, block], format="csr"))


def gradient_stack(grid: GridSpec) -> sp.csr_matrix:
    """``C = I_2 kron [Qx; Qy]`` of shape ``(4m, 2m)``, with ``C^T C = L``."""
    qx, qy = build_qx_qy(grid)
    d = sp.vstack([qx, qy], format="csr")
    return _canonical(sp.block_diag([d, d], format="csr"))


def _canonical(M) -> sp.csr_matrix:
    M = sp.csr_matrix(M)
    M.sum_duplicates()
    M.sort_indices()
    return M


@dataclass(frozen=True)
class FlowSystem:
    """Linearized brightness-constancy system ``A x = b`` plus regularizer ``L``.

    ``fx`` and ``fy`` are the spatial gradients of the first image; ``A``
    is ``[diag(fx), diag(fy)]``.
    """

    grid: GridSpec
    A: sp.csr_matrix = field(repr=False)
    b: np.ndarray = field(repr=False)
    L: sp.csr_matrix = field(repr=False)
    fx: np.ndarray = field(repr=False)
    fy: np.ndarray = field(repr=False)

    @property
    def m(self) -> int:
        return self.grid.size

    @property
    def n(self) -> int:
        return 2 * self.grid.size

    @cached_property
    def Ct(self) -> sp.csr_matrix:
        """Transpose of the gradient stack ``C`` with ``C^T C = L``."""
        return gradient_stack(self.grid).T.tocsr()

    @cached_property
    def AtA(self) -> sp.csr_matrix:
        return _canonical(self.A.T @ self.A)

    @cached_property
    def precision_pattern(self):
        """``A^T A`` and ``L`` expanded onto their shared CSR pattern.

        Returns ``(indptr, indices, ata, l)`` so that any combination
        ``lam A^T A + delta L`` is ``lam * ata + delta * l`` on that pattern.
        """
        n = self.n
        keys = []
        for M in (self.AtA, self.L):
            rows = np.repeat(np.arange(n), np.diff(M.indptr))
            keys.append(rows * n + M.indices)
        union = np.union1d(*keys)
        parts = []
        for M, k in zip((self.AtA, self.L), keys):
            d = np.zeros(union.size)
            d[np.searchsorted(union, k)] = M.data
            parts.append(d)
        indptr = np.concatenate([[0], np.cumsum(np.bincount(union // n, minlength=n))])
        return indptr, (union % n).astype(np.int32), parts[0], parts[1]

    def residual(self, x) -> np.ndarray:
        m = self.m
        return self.fx * x[:m] + self.fy * x[m:] - self.b

    def apply_A(self, x) -> np.ndarray:
        m = self.m
        return self.fx * x[:m] + self.fy * x[m:]

    def apply_At(self, r) -> np.ndarray:
        return np.concatenate([self.fx * r, self.fy * r])


def _diag_pair(fx, fy) -> sp.csr_matrix:
    m = fx.size
    data = np.empty(2 * m)
    data[0::2] = fx
    data[1::2] = fy
    cols = np.empty(2 * m, dtype=np.int64)
    cols[0::2] = np.arange(m)
    cols[1::2] = np.arange(m) + m
    indptr = np.arange(0, 2 * m + 1, 2)
    return sp.csr_matrix((data, cols, indptr), shape=(m, 2 * m))


@lru_cache(maxsize=16)
def _shared_qx_qy(grid: GridSpec):
    # read-only copies shared between calls; never handed to callers
    return build_qx_qy(grid)


def image_gradients(F: ImageField) -> tuple[np.ndarray, np.ndarray]:
    qx, qy = _shared_qx_qy(F.grid)
    f = F.vec
    return qx @ f, qy @ f


def assemble_system(F: ImageField, G: ImageField) -> FlowSystem:
    """Build ``A``, ``b = f - g`` and ``L`` from an image pair.

    Spatial gradients come from ``F`` alone.
    """
    if F.grid != G.grid:
        raise DimensionError(f"image grids differ: {F.grid} vs {G.grid}")
    fx, fy = image_gradients(F)
    b = F.vec - G.vec
    for arr in (fx, fy, b):
        arr.setflags(write=False)
    return FlowSystem(
        grid=F.grid,
        A=_diag_pair(fx, fy),
        b=b,
        L=build_regularizer(F.grid),
        fx=fx,
        fy=fy,
    )
