import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional

import numpy as np
import scipy.sparse as sp
from joblib import Parallel, delayed

from src.errors import GeometryError, ShapeMismatchError
from src.imaging.grid import ImageGrid, bilinear_weights, lattice
from src.transform.weights import WeightSpec, constant_weight

logger = logging.getLogger(__name__)

# Upper bound on bilinear samples assembled per joblib task.
SAMPLES_PER_CHUNK = 2_000_000

# =========================
# DATA STRUCTURES
# =========================

@dataclass(frozen=True, eq=False)
class Sinogram:
    """
    V-line data g[k, l]: row k is the vertex at angle 2*pi*k/P (k = 0..P-1),
    column l the half-opening angle pi*l/(2Q) (l = 0..Q).
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2 or values.shape[1] < 2:
            raise ShapeMismatchError(f"sinogram must be P x (Q+1) with Q >= 1, got {values.shape}")
        object.__setattr__(self, "values", values)

    @property
    def vertex_count(self) -> int:
        return self.values.shape[0]

    @property
    def angle_count(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class ScanGeometry:
    P: int
    Q: int
    n_radii: int
    weight: WeightSpec = field(default_factory=constant_weight)
    r_max: float = 2.0

    def __post_init__(self):
        if self.P < 1:
            raise GeometryError(f"need at least one vertex, got P={self.P}")
        if self.Q < 1:
            raise GeometryError(f"need Q >= 1, got Q={self.Q}")
        if self.n_radii < 2:
            raise GeometryError(f"need at least two radii, got n_radii={self.n_radii}")

    @classmethod
    def for_grid(cls, N: int, P: int, Q: int, weight: Optional[WeightSpec] = None) -> "ScanGeometry":
        """N+1 radii per branch for an (N+1)^2 image."""
        return cls(P=P, Q=Q, n_radii=N + 1, weight=weight or constant_weight())

    @property
    def shape(self):
        return (self.P, self.Q + 1)

    @property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.P) / self.P

    @property
    def psi(self) -> np.ndarray:
        return 0.5 * np.pi * np.arange(self.Q + 1) / self.Q

    @property
    def radii(self) -> np.ndarray:
        return np.linspace(0.0, self.r_max, self.n_radii)

    @property
    def trapezoid(self) -> np.ndarray:
        h = self.r_max / (self.n_radii - 1)
        w = np.full(self.n_radii, h)
        w[0] = w[-1] = h / 2.0
        return w

    def radial_weights(self) -> np.ndarray:
        return self.trapezoid * self.weight(self.radii)

    def data_quadrature(self) -> np.ndarray:
        """Weights turning sum(g1 * g2 * W) into the continuous L2 product on S^1 x [0, pi/2]."""
        dpsi = 0.5 * np.pi / self.Q
        w_psi = np.full(self.Q + 1, dpsi)
        w_psi[0] = w_psi[-1] = dpsi / 2.0
        return np.broadcast_to((2.0 * np.pi / self.P) * w_psi, self.shape)

    def check(self, g: Sinogram):
        if g.values.shape != self.shape:
            raise ShapeMismatchError(f"sinogram shape {g.values.shape} does not match geometry {self.shape}")


# =========================
# OPERATOR ASSEMBLY
# =========================

def _assemble_rows(phi, psi, radii, radial_w, n_side):
    """Sparse block of the forward matrix for a run of vertex rows."""
    sigma = np.array([1.0, -1.0])
    n_psi = psi.size

    ang = phi[:, None, None] - sigma[None, None, :] * psi[None, :, None]
    zx = np.cos(phi)[:, None, None, None]
    zy = np.sin(phi)[:, None, None, None]
    px = zx - radii * np.cos(ang)[..., None]
    py = zy - radii * np.sin(ang)[..., None]

    index, weight = bilinear_weights(n_side, px, py)
    weight = weight * radial_w[:, None]

    rows = np.arange(phi.size * n_psi).reshape(phi.size, n_psi)
    rows = np.broadcast_to(rows[:, :, None, None, None], weight.shape)

    keep = weight != 0.0
    block = sp.coo_matrix(
        (weight[keep], (rows[keep], index[keep])),
        shape=(phi.size * n_psi, n_side * n_side),
    )
    return block.tocsr()


class VLineOperator:
    """
    Discrete attenuated V-line transform as an assembled sparse matrix.
    Each row holds the composite-trapezoid weights times U(r) times the
    bilinear coefficients of both branches, so `adjoint` is the exact
    transpose of `forward`.
    """

    def __init__(self, geom: ScanGeometry, n_side: int, n_jobs: int = 1):
        if n_side != geom.n_radii:
            logger.warning(
                "grid has %d samples per axis but geometry uses %d radii", n_side, geom.n_radii
            )
        self.geom = geom
        self.n_side = n_side

        phi = geom.phi
        per_row = (geom.Q + 1) * 2 * geom.n_radii * 4
        rows_per_chunk = max(1, SAMPLES_PER_CHUNK // per_row)
        chunks = [phi[i:i + rows_per_chunk] for i in range(0, phi.size, rows_per_chunk)]

        blocks = Parallel(n_jobs=n_jobs)(
            delayed(_assemble_rows)(chunk, geom.psi, geom.radii, geom.radial_weights(), n_side)
            for chunk in chunks
        )
        self.matrix = sp.vstack(blocks, format="csr")
        logger.debug(
            "assembled V-line matrix %s with %d non-zeros in %d chunks",
            self.matrix.shape, self.matrix.nnz, len(chunks),
        )

    @property
    def image_shape(self):
        return (self.n_side, self.n_side)

    @property
    def data_shape(self):
        return self.geom.shape

    # -------------------------
    # Array level application
    # -------------------------
    def apply(self, values: np.ndarray) -> np.ndarray:
        return (self.matrix @ values.ravel()).reshape(self.data_shape)

    def apply_adjoint(self, data: np.ndarray) -> np.ndarray:
        return (self.matrix.T @ data.ravel()).reshape(self.image_shape)

    # -------------------------
    # Typed application
    # -------------------------
    def forward(self, img: ImageGrid) -> Sinogram:
        if img.n_side != self.n_side:
            raise ShapeMismatchError(f"image has {img.n_side} samples per axis, operator expects {self.n_side}")
        return Sinogram(self.apply(img.values))

    def adjoint(self, g: Sinogram) -> ImageGrid:
        self.geom.check(g)
        return ImageGrid(self.apply_adjoint(g.values))


@lru_cache(maxsize=4)
def operator_for(geom: ScanGeometry, n_side: int, n_jobs: int = 1) -> VLineOperator:
    return VLineOperator(geom, n_side, n_jobs=n_jobs)


# =========================
# MODULE LEVEL OPERATIONS
# =========================

def forward(img: ImageGrid, geom: ScanGeometry) -> Sinogram:
    return operator_for(geom, img.n_side).forward(img)


def adjoint(g: Sinogram, geom: ScanGeometry, n_side: Optional[int] = None) -> ImageGrid:
    geom.check(g)
    return operator_for(geom, n_side or geom.n_radii).adjoint(g)


def backproject_points(g: Sinogram, geom: ScanGeometry, x, y) -> np.ndarray:
    """
    Continuous weighted conical backprojection at arbitrary points.
    For each vertex z the delta constraint fixes cos(psi) = <z - x, z>/|x - z|;
    g is interpolated linearly in psi and weighted by U(|x - z|)/|x - z|,
    the Jacobian of (r, psi) -> x in the plane. Points with |x| >= 1 get 0.
    """
    geom.check(g)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = x * x + y * y < 1.0
    dpsi = 0.5 * np.pi / geom.Q
    dphi = 2.0 * np.pi / geom.P

    out = np.zeros(np.broadcast(x, y).shape)
    for k, phi in enumerate(geom.phi):
        zx, zy = np.cos(phi), np.sin(phi)
        r = np.hypot(x - zx, y - zy)
        r = np.where(inside, r, 1.0)
        cos_psi = np.clip((1.0 - (x * zx + y * zy)) / r, 0.0, 1.0)
        col = np.arccos(cos_psi) / dpsi
        lo = np.minimum(np.floor(col).astype(int), geom.Q - 1)
        t = col - lo
        g_psi = (1.0 - t) * g.values[k, lo] + t * g.values[k, lo + 1]
        out += dphi * g_psi * geom.weight(r) / r
    return np.where(inside, out, 0.0)


def backproject_continuous(g: Sinogram, geom: ScanGeometry, n_side: Optional[int] = None) -> ImageGrid:
    X, Y = lattice(n_side or geom.n_radii)
    return ImageGrid(backproject_points(g, geom, X, Y))
