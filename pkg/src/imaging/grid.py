import logging
from dataclasses import dataclass
from typing import Callable, Tuple

import numpy as np

from src.errors import DomainError, ShapeMismatchError

logger = logging.getLogger(__name__)

# =========================
# DATA STRUCTURES
# =========================

ORIGIN = (-1.0, -1.0)


@dataclass(frozen=True, eq=False)
class ImageGrid:
    """
    Square lattice of (N+1) x (N+1) samples over [-1, 1]^2.
    values[i1, i2] is the sample at (-1, -1) + 2 (i1, i2) / N, so the first
    index runs along x and the second along y.
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[0] != values.shape[1]:
            raise ShapeMismatchError(f"image must be square, got shape {values.shape}")
        if values.shape[0] < 2:
            raise DomainError("image needs at least 2 samples per axis")
        if not np.all(np.isfinite(values)):
            raise DomainError("image contains non-finite values")
        object.__setattr__(self, "values", values)

    @property
    def n_side(self) -> int:
        return self.values.shape[0]

    @property
    def N(self) -> int:
        return self.n_side - 1

    @property
    def spacing(self) -> float:
        return 2.0 / self.N

    @property
    def origin(self) -> Tuple[float, float]:
        return ORIGIN

    @classmethod
    def zeros(cls, n_side: int) -> "ImageGrid":
        return cls(np.zeros((n_side, n_side)))

    @classmethod
    def from_function(cls, func: Callable, n_side: int) -> "ImageGrid":
        X, Y = lattice(n_side)
        return cls(np.broadcast_to(func(X, Y), X.shape).astype(float))


@dataclass(frozen=True, eq=False)
class GradientField:
    dx: np.ndarray
    dy: np.ndarray

    def __post_init__(self):
        if np.shape(self.dx) != np.shape(self.dy):
            raise ShapeMismatchError("gradient components differ in shape")

    def stacked(self) -> np.ndarray:
        return np.stack([self.dx, self.dy])


# =========================
# LATTICE GEOMETRY
# =========================

def axis_nodes(n_side: int) -> np.ndarray:
    N = n_side - 1
    return -1.0 + 2.0 * np.arange(n_side) / N


def lattice(n_side: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes = axis_nodes(n_side)
    return np.meshgrid(nodes, nodes, indexing="ij")


# =========================
# BILINEAR INTERPOLATION
# =========================

def bilinear_weights(n_side: int, x, y) -> Tuple[np.ndarray, np.ndarray]:
    """
    Flat pixel indices (..., 4) and bilinear coefficients (..., 4) for
    arbitrary points. Points outside [-1, 1]^2 get all-zero coefficients
    and index 0, so gathers and scatters through these arrays stay valid.
    """
    N = n_side - 1
    h = 2.0 / N
    x = np.nan_to_num(np.asarray(x, dtype=float), nan=np.inf)
    y = np.nan_to_num(np.asarray(y, dtype=float), nan=np.inf)

    u = (x + 1.0) / h
    v = (y + 1.0) / h
    inside = (u >= 0.0) & (u <= N) & (v >= 0.0) & (v <= N)

    u = np.where(inside, u, 0.0)
    v = np.where(inside, v, 0.0)
    i = np.minimum(np.floor(u), N - 1).astype(np.int64)
    j = np.minimum(np.floor(v), N - 1).astype(np.int64)
    tu = u - i
    tv = v - j

    base = i * n_side + j
    index = np.stack([base, base + n_side, base + 1, base + n_side + 1], axis=-1)
    weight = np.stack(
        [(1.0 - tu) * (1.0 - tv), tu * (1.0 - tv), (1.0 - tu) * tv, tu * tv],
        axis=-1,
    )
    weight *= inside[..., None]
    return index, weight


def sample(img: ImageGrid, x, y) -> np.ndarray:
    index, weight = bilinear_weights(img.n_side, x, y)
    return np.sum(img.values.ravel()[index] * weight, axis=-1)


def bilinear_eval(img: ImageGrid, point) -> float:
    x, y = point
    return float(sample(img, x, y))


def rotate_image(img: ImageGrid, beta: float) -> ImageGrid:
    """Resample img rotated counter-clockwise by beta about the origin."""
    X, Y = lattice(img.n_side)
    c, s = np.cos(beta), np.sin(beta)
    return ImageGrid(sample(img, c * X + s * Y, -s * X + c * Y))


def downsample2(img: ImageGrid) -> ImageGrid:
    """
    Coarse node (i, j) sits on fine node (2i, 2j); its value is the mean of
    the 2x2 fine block starting there (the last row/column reuses itself).
    """
    if img.N % 2:
        raise DomainError("downsample2 needs an even N")
    v = img.values
    padded = np.concatenate([v, v[-1:, :]], axis=0)
    padded = np.concatenate([padded, padded[:, -1:]], axis=1)
    blocks = (
        padded[0:-1:2, 0:-1:2]
        + padded[1::2, 0:-1:2]
        + padded[0:-1:2, 1::2]
        + padded[1::2, 1::2]
    )
    return ImageGrid(blocks / 4.0)


# =========================
# DISCRETE GRADIENT PAIR
# =========================

def grad_array(values: np.ndarray) -> np.ndarray:
    """Forward differences in lattice units, zero on the far edge; shape (2, n, n)."""
    out = np.zeros((2,) + values.shape)
    out[0, :-1, :] = values[1:, :] - values[:-1, :]
    out[1, :, :-1] = values[:, 1:] - values[:, :-1]
    return out


def div_array(field: np.ndarray) -> np.ndarray:
    """Negative transpose of grad_array."""
    dx, dy = field
    out = np.zeros(dx.shape)
    out[:-1, :] += dx[:-1, :]
    out[1:, :] -= dx[:-1, :]
    out[:, :-1] += dy[:, :-1]
    out[:, 1:] -= dy[:, :-1]
    return out


def gradient(img: ImageGrid) -> GradientField:
    dx, dy = grad_array(img.values)
    return GradientField(dx, dy)


def divergence(field: GradientField) -> ImageGrid:
    return ImageGrid(div_array(field.stacked()))


def gradient_adjoint(field: GradientField) -> ImageGrid:
    return ImageGrid(-div_array(field.stacked()))


# =========================
# CONVEX CONSTRAINT
# =========================

def project_nonneg(img: ImageGrid) -> ImageGrid:
    return ImageGrid(np.maximum(img.values, 0.0))
