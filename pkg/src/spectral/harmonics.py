import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.errors import DomainError, ShapeMismatchError
from src.imaging.grid import ImageGrid, sample
from src.transform.vline import Sinogram

logger = logging.getLogger(__name__)

COSINE = 1
SINE = 2

# =========================
# DATA STRUCTURE
# =========================

@dataclass(frozen=True, eq=False)
class HarmonicProfile:
    """
    One circular-harmonic coefficient sampled on a strictly increasing grid:
    radius rho in (0, 1] for image coefficients, psi in [0, pi/2] for data.
    """
    ell: int
    k: int
    grid: np.ndarray
    samples: np.ndarray
    radial: bool = True

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        samples = np.asarray(self.samples, dtype=float)
        if grid.shape != samples.shape or grid.ndim != 1:
            raise ShapeMismatchError("profile grid and samples must be matching 1-d arrays")
        if grid.size > 1 and np.any(np.diff(grid) <= 0):
            raise DomainError("profile grid must be strictly increasing")
        if not np.all(np.isfinite(samples)):
            raise DomainError("profile samples must be finite")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "samples", samples)

    def at(self, points) -> np.ndarray:
        """Linear interpolation; radial profiles of degree >= 1 vanish at rho = 0."""
        grid, samples = self.grid, self.samples
        if self.radial and self.ell >= 1 and grid[0] > 0.0:
            grid = np.concatenate([[0.0], grid])
            samples = np.concatenate([[0.0], samples])
        return np.interp(points, grid, samples, right=0.0 if self.radial else samples[-1])

    def norm(self) -> float:
        return float(np.linalg.norm(self.samples))


# =========================
# CIRCULAR HARMONICS
# =========================

def circular_harmonic(ell: int, k: int, theta) -> np.ndarray:
    """Orthonormal basis on the circle: 1/sqrt(2 pi), cos(l t)/sqrt(pi), sin(l t)/sqrt(pi)."""
    check_index(ell, k)
    theta = np.asarray(theta, dtype=float)
    if ell == 0:
        return np.full(theta.shape, 1.0 / np.sqrt(2.0 * np.pi))
    if k == COSINE:
        return np.cos(ell * theta) / np.sqrt(np.pi)
    return np.sin(ell * theta) / np.sqrt(np.pi)


def check_index(ell: int, k: int):
    if ell < 0:
        raise DomainError(f"harmonic degree must be non-negative, got {ell}")
    valid = (COSINE,) if ell == 0 else (COSINE, SINE)
    if k not in valid:
        raise DomainError(f"component index {k} invalid for degree {ell}")


# =========================
# COEFFICIENT EXTRACTION
# =========================

def image_coeffs(
    img: ImageGrid,
    ell: int,
    k: int,
    radial_nodes: int,
    angular_nodes: Optional[int] = None,
) -> HarmonicProfile:
    """f_{l,k}(rho) = int f(rho cos t, rho sin t) Y_{l,k}(t) dt, periodic trapezoid in t."""
    check_index(ell, k)
    if radial_nodes < 2:
        raise DomainError("need at least two radial nodes")
    angular_nodes = angular_nodes or max(256, 4 * img.N)

    rho = np.linspace(0.0, 1.0, radial_nodes + 1)[1:]
    theta = 2.0 * np.pi * np.arange(angular_nodes) / angular_nodes
    values = sample(img, rho[:, None] * np.cos(theta), rho[:, None] * np.sin(theta))
    coeffs = values @ circular_harmonic(ell, k, theta) * (2.0 * np.pi / angular_nodes)
    return HarmonicProfile(ell=ell, k=k, grid=rho, samples=coeffs, radial=True)


def sino_coeffs(g: Sinogram, ell: int, k: int) -> HarmonicProfile:
    """(Cf)_{l,k}(psi) over the uniform vertex grid, one value per psi column."""
    check_index(ell, k)
    P, n_psi = g.values.shape
    phi = 2.0 * np.pi * np.arange(P) / P
    psi = 0.5 * np.pi * np.arange(n_psi) / (n_psi - 1)
    coeffs = circular_harmonic(ell, k, phi) @ g.values * (2.0 * np.pi / P)
    return HarmonicProfile(ell=ell, k=k, grid=psi, samples=coeffs, radial=False)
