import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from src.errors import DomainError
from src.imaging.grid import ImageGrid, lattice
from src.transform.vline import Sinogram

logger = logging.getLogger(__name__)

# =========================
# DATA STRUCTURES
# =========================

@dataclass(frozen=True)
class Ellipse:
    center: Tuple[float, float]
    semi_axes: Tuple[float, float]
    rotation: float = 0.0
    amplitude: float = 1.0

    def extent(self) -> float:
        return float(np.hypot(*self.center) + max(self.semi_axes))

    def indicator(self, X, Y) -> np.ndarray:
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        dx, dy = X - self.center[0], Y - self.center[1]
        u = (c * dx + s * dy) / self.semi_axes[0]
        v = (-s * dx + c * dy) / self.semi_axes[1]
        return u * u + v * v <= 1.0


@dataclass(frozen=True)
class Star:
    """Star polygon with alternating outer and inner vertices around `center`."""
    center: Tuple[float, float]
    inner_radius: float
    outer_radius: float
    points: int = 5
    rotation: float = 0.0
    amplitude: float = 1.0

    def extent(self) -> float:
        return float(np.hypot(*self.center) + self.outer_radius)

    def indicator(self, X, Y) -> np.ndarray:
        # the polygon is star-shaped about its center: compare the radius of
        # each point with the edge crossing its polar ray
        px, py = X - self.center[0], Y - self.center[1]
        rho = np.hypot(px, py)
        theta = np.arctan2(py, px)

        step = np.pi / self.points
        sector = np.floor(np.mod(theta - self.rotation, 2.0 * np.pi) / step).astype(int)
        sector = np.minimum(sector, 2 * self.points - 1)

        def vertex(j):
            radius = np.where(j % 2 == 0, self.outer_radius, self.inner_radius)
            angle = self.rotation + j * step
            return radius * np.cos(angle), radius * np.sin(angle)

        ax, ay = vertex(sector)
        bx, by = vertex(sector + 1)
        dx, dy = np.cos(theta), np.sin(theta)
        ex, ey = bx - ax, by - ay
        edge_distance = (ax * by - ay * bx) / (dx * ey - dy * ex)
        return rho <= edge_distance


@dataclass(frozen=True)
class PhantomSpec:
    ellipse: Optional[Ellipse] = None
    stars: List[Star] = field(default_factory=list)
    support_margin: float = 0.95

    def features(self):
        return ([self.ellipse] if self.ellipse is not None else []) + list(self.stars)

    def validate(self):
        if self.support_margin > 0.95:
            raise DomainError(f"support margin {self.support_margin} exceeds 0.95")
        for feature in self.features():
            if feature.amplitude < 0:
                raise DomainError(f"negative amplitude in {feature}")
            if feature.extent() > self.support_margin:
                raise DomainError(
                    f"feature reaches radius {feature.extent():.3f} beyond support margin {self.support_margin}"
                )
        return self


# =========================
# DEFAULT SPECS
# =========================

def default_spec() -> PhantomSpec:
    """Ellipse with two five-point star inclusions added on top."""
    return PhantomSpec(
        ellipse=Ellipse(center=(-0.1, 0.0), semi_axes=(0.55, 0.4), amplitude=1.0),
        stars=[
            Star(center=(0.2, 0.25), inner_radius=0.05, outer_radius=0.14, points=5, amplitude=1.0),
            Star(center=(-0.3, -0.2), inner_radius=0.05, outer_radius=0.14, points=5, amplitude=1.0),
        ],
    )


def disc_spec(radius: float = 0.5, amplitude: float = 1.0) -> PhantomSpec:
    return PhantomSpec(ellipse=Ellipse(center=(0.0, 0.0), semi_axes=(radius, radius), amplitude=amplitude))


# =========================
# RASTERIZATION
# =========================

def make_phantom(N: int, spec: PhantomSpec) -> ImageGrid:
    if N < 2:
        raise DomainError(f"phantom needs N >= 2, got {N}")
    spec.validate()

    X, Y = lattice(N + 1)
    values = np.zeros_like(X)
    for feature in spec.features():
        values += feature.amplitude * feature.indicator(X, Y)

    logger.debug("rasterized %d features onto a %dx%d lattice", len(spec.features()), N + 1, N + 1)
    return ImageGrid(values)


# =========================
# CALIBRATED NOISE
# =========================

def add_noise(g: Sinogram, delta: float, seed: int) -> Tuple[Sinogram, float]:
    """
    Add Gaussian noise rescaled so that |xi| / |g| equals delta exactly.
    Returns the noisy data and the achieved relative noise level.
    """
    if delta < 0:
        raise DomainError(f"noise level must be non-negative, got {delta}")
    g_norm = np.linalg.norm(g.values)
    if g_norm == 0.0:
        raise DomainError("cannot calibrate relative noise on zero data")
    if delta == 0:
        return Sinogram(g.values.copy()), 0.0

    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(g.values.shape)
    xi *= delta * g_norm / np.linalg.norm(xi)

    achieved = float(np.linalg.norm(xi) / g_norm)
    logger.info("added Gaussian noise, relative level %.6f", achieved)
    return Sinogram(g.values + xi), achieved


# =========================
# DEMO / TEST RUN
# =========================

if __name__ == "__main__":

    phantom = make_phantom(256, default_spec())
    print("Phantom shape:", phantom.values.shape)
    print("Value range:", phantom.values.min(), phantom.values.max())
