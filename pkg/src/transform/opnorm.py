import logging
from typing import Callable, Sequence

import numpy as np

from src.errors import DomainError

logger = logging.getLogger(__name__)

LinearMap = Callable[[np.ndarray], np.ndarray]


# =========================
# POWER ITERATION
# =========================

def estimate_opnorm(
    apply: LinearMap,
    apply_adjoint: LinearMap,
    shape: Sequence[int],
    iters: int = 100,
    seed: int = 0,
) -> float:
    """
    Spectral norm of `apply` by power iteration on A*A from a seeded
    Gaussian start. Returns sqrt of the largest Rayleigh quotient seen, so
    the estimate never decreases when `iters` grows.
    """
    if iters < 1:
        raise DomainError("power iteration needs at least one step")

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(tuple(shape))
    x /= np.linalg.norm(x)
    best = 0.0

    for it in range(iters):
        y = apply(x)
        best = max(best, float(np.vdot(y, y)))
        x = apply_adjoint(y)
        norm = np.linalg.norm(x)
        if norm == 0.0:
            break
        x /= norm

    estimate = float(np.sqrt(best))
    logger.info("operator norm estimate %.6e after %d power iterations", estimate, it + 1)
    return estimate


# =========================
# DOT PRODUCT TEST
# =========================

def adjointness_defect(apply: LinearMap, apply_adjoint: LinearMap, x: np.ndarray, y: np.ndarray) -> float:
    """|<Ax, y> - <x, A*y>| / (|Ax| |y|)."""
    ax = apply(x)
    lhs = float(np.vdot(ax, y))
    rhs = float(np.vdot(x, apply_adjoint(y)))
    scale = np.linalg.norm(ax) * np.linalg.norm(y)
    if scale == 0.0:
        return 0.0
    return abs(lhs - rhs) / scale


def dot_product_test(op, seed: int = 0, mismatched: bool = False) -> float:
    """
    Randomised adjoint test of a VLineOperator. `mismatched` pairs the
    forward map with the adjoint of column-shifted data, a negative control
    that has to fail.
    """
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(op.image_shape)
    g = rng.standard_normal(op.data_shape)

    apply_adjoint = op.apply_adjoint
    if mismatched:
        apply_adjoint = lambda data: op.apply_adjoint(np.roll(data, 1, axis=1))  # noqa: E731

    return adjointness_defect(op.apply, apply_adjoint, f, g)
