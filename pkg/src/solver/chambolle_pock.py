import logging
import time
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Optional, Tuple

import numpy as np
from tqdm import tqdm

from src.errors import ConfigError, DivergenceError, DomainError, ShapeMismatchError
from src.imaging.grid import ImageGrid, div_array, grad_array
from src.solver.metrics import IterateLog, IterateRecord
from src.transform.opnorm import estimate_opnorm
from src.transform.vline import ScanGeometry, Sinogram, VLineOperator, operator_for

logger = logging.getLogger(__name__)

# =========================
# CONFIGURATION
# =========================

REFERENCE_GRID = (256, 200, 150)


class Regularizer(str, Enum):
    L2 = "L2"
    H1 = "H1"
    TV = "TV"
    NONE = "NONE"


def as_regularizer(value) -> Regularizer:
    if isinstance(value, Regularizer):
        return value
    try:
        return Regularizer(str(value).strip().upper())
    except ValueError as exc:
        raise ConfigError(f"unknown regularizer {value!r}") from exc


@dataclass(frozen=True)
class SolverConfig:
    regularizer: Regularizer = Regularizer.TV
    alpha: float = 0.002
    positivity: bool = False
    max_iters: int = 700
    theta: float = 1.0
    norm_safety: float = 1.01
    opnorm_iters: int = 100
    seed: int = 0
    log_every: int = 10
    tol: Optional[float] = None
    progress: bool = False
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "regularizer", as_regularizer(self.regularizer))
        if self.alpha < 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")
        if self.regularizer is not Regularizer.NONE and self.alpha <= 0:
            raise ConfigError(f"{self.regularizer.value} regularization needs alpha > 0")
        if not 0.0 <= self.theta <= 1.0:
            raise ConfigError(f"theta must lie in [0, 1], got {self.theta}")
        if self.max_iters < 1:
            raise ConfigError("max_iters must be at least 1")
        if self.norm_safety < 1.0:
            raise ConfigError("norm_safety below 1 breaks the step-size condition")
        if self.log_every < 1:
            raise ConfigError("log_every must be at least 1")

    @property
    def q(self) -> int:
        return 1 if self.regularizer is Regularizer.TV else 2

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        base = "LS" if self.regularizer is Regularizer.NONE else self.regularizer.value
        return base + ("+pos" if self.positivity else "")


@dataclass
class DualState:
    p: np.ndarray
    q: Optional[np.ndarray]


IterCallback = Callable[[int, np.ndarray, DualState], None]


def scale_alpha(alpha: float, regularizer, N: int, P: int, Q: int, reference=REFERENCE_GRID) -> float:
    """
    Carry a regularization parameter tuned at `reference` = (N, P, Q) over to
    another discretisation. The fidelity term scales with the number of data
    entries P(Q+1); the penalty with N for the gradient penalties (edge
    length of a piecewise constant image in lattice units) and with N^2 for
    the L2 penalty.
    """
    regularizer = as_regularizer(regularizer)
    if regularizer is Regularizer.NONE:
        return 0.0
    N_ref, P_ref, Q_ref = reference
    data_ratio = (P * (Q + 1)) / (P_ref * (Q_ref + 1))
    power = 2 if regularizer is Regularizer.L2 else 1
    return alpha * data_ratio * (N_ref / N) ** power


# =========================
# REGULARIZER OPERATORS
# =========================

def _identity(x):
    return x


def _gradient_adjoint(q):
    return -div_array(q)


def penalty_maps(regularizer: Regularizer):
    """(L, L*) for the penalty; None for plain least squares."""
    if regularizer is Regularizer.NONE:
        return None
    if regularizer is Regularizer.L2:
        return _identity, _identity
    return grad_array, _gradient_adjoint


def stacked_norm(op: VLineOperator, cfg: SolverConfig) -> float:
    """Power-iteration estimate of |(C, L)|, or of |C| without a penalty."""
    maps = penalty_maps(cfg.regularizer)
    data_size = int(np.prod(op.data_shape))

    if maps is None:
        return estimate_opnorm(op.apply, op.apply_adjoint, op.image_shape, cfg.opnorm_iters, cfg.seed)

    L, Lt = maps
    penalty_shape = L(np.zeros(op.image_shape)).shape

    def apply(x):
        return np.concatenate([op.apply(x).ravel(), L(x).ravel()])

    def apply_adjoint(y):
        p = y[:data_size].reshape(op.data_shape)
        q = y[data_size:].reshape(penalty_shape)
        return op.apply_adjoint(p) + Lt(q)

    return estimate_opnorm(apply, apply_adjoint, op.image_shape, cfg.opnorm_iters, cfg.seed)


def primal_objective(values: np.ndarray, cf: np.ndarray, g: np.ndarray, cfg: SolverConfig) -> float:
    """1/2 |Cf - g|^2 + alpha/q |Lf|_q^q for f inside the constraint set."""
    fidelity = 0.5 * float(np.sum((cf - g) ** 2))
    if cfg.regularizer is Regularizer.NONE:
        return fidelity
    if cfg.regularizer is Regularizer.L2:
        return fidelity + 0.5 * cfg.alpha * float(np.sum(values ** 2))
    grad = grad_array(values)
    if cfg.regularizer is Regularizer.H1:
        return fidelity + 0.5 * cfg.alpha * float(np.sum(grad ** 2))
    return fidelity + cfg.alpha * float(np.sum(np.sqrt(np.sum(grad ** 2, axis=0))))


# =========================
# CHAMBOLLE-POCK ITERATION
# =========================

def chambolle_pock(
    g: Sinogram,
    geom: ScanGeometry,
    cfg: SolverConfig,
    truth: Optional[ImageGrid] = None,
    op: Optional[VLineOperator] = None,
    callback: Optional[IterCallback] = None,
) -> Tuple[ImageGrid, IterateLog]:
    """
    Primal-dual minimisation of 1/2 |Cf - g|^2 + alpha/q |Lf|_q^q + I_M(f).
    The dual p carries the data term, q the penalty (absent for plain least
    squares); M is the non-negative orthant when cfg.positivity is set.
    C u_k is propagated by linearity from C f_k, so each iteration costs one
    forward and one adjoint application.
    `callback(k, f_k, dual)` runs after every iteration.
    """
    geom.check(g)
    n_side = truth.n_side if truth is not None else geom.n_radii
    op = op or operator_for(geom, n_side)
    if op.data_shape != g.values.shape or op.n_side != n_side:
        raise ShapeMismatchError("operator does not match data and image sizes")

    data = g.values
    data_norm2 = float(np.sum(data ** 2))
    truth_values = truth.values if truth is not None else None
    if truth is not None and not np.any(truth_values):
        raise DomainError("relative error against a zero ground truth")

    a = cfg.norm_safety * stacked_norm(op, cfg)
    if a == 0.0:
        a = 1.0
    tau = sigma = 1.0 / a
    alpha, theta = cfg.alpha, cfg.theta
    maps = penalty_maps(cfg.regularizer)
    logger.info("%s: step a = %.6e, alpha = %g, %d iterations", cfg.label, a, alpha, cfg.max_iters)

    f = np.zeros(op.image_shape)
    u = f.copy()
    cf = np.zeros(op.data_shape)
    cu = cf.copy()
    dual = DualState(
        p=np.zeros(op.data_shape),
        q=None if maps is None else np.zeros(maps[0](f).shape),
    )

    log = IterateLog(label=cfg.label, has_truth=truth is not None)
    start = time.perf_counter()

    for k in tqdm(range(1, cfg.max_iters + 1), desc=cfg.label, disable=not cfg.progress):
        # data dual
        dual.p = (dual.p + sigma * (cu - data)) / (1.0 + sigma)

        # penalty dual
        step = op.apply_adjoint(dual.p)
        if maps is not None:
            L, Lt = maps
            v = dual.q + sigma * L(u)
            if cfg.regularizer is Regularizer.TV:
                magnitude = np.sqrt(np.sum(v ** 2, axis=0))
                dual.q = alpha * v / np.maximum(alpha, magnitude)[None]
            else:
                dual.q = alpha * v / (alpha + sigma)
            step = step + Lt(dual.q)

        # primal step, projection onto M
        f_next = f - tau * step
        if cfg.positivity:
            f_next = np.maximum(f_next, 0.0)
        cf_next = op.apply(f_next)

        # extrapolation
        u = f_next + theta * (f_next - f)
        cu = cf_next + theta * (cf_next - cf)

        residual2 = float(np.sum((cf_next - data) ** 2))
        r2 = residual2 / data_norm2 if data_norm2 > 0 else residual2
        e2 = float(np.sum((f_next - truth_values) ** 2) / np.sum(truth_values ** 2)) if truth is not None else np.nan

        if not np.isfinite(r2) or (truth is not None and not np.isfinite(e2)):
            raise DivergenceError(f"{cfg.label}: non-finite metrics at iteration {k} (E2={e2}, R2={r2})", k)

        objective = None
        if k % cfg.log_every == 0 or k == cfg.max_iters:
            objective = primal_objective(f_next, cf_next, data, cfg)
            logger.info("[%d] %s : E2 %.4e \t R2 %.4e \t objective %.6e", k, cfg.label, e2, r2, objective)
        log.append(IterateRecord(k=k, e2=e2, r2=r2, seconds=time.perf_counter() - start, objective=objective))
        if callback is not None:
            callback(k, f_next, dual)

        change = np.linalg.norm(f_next - f)
        previous = np.linalg.norm(f)
        f, cf = f_next, cf_next

        if cfg.tol is not None and previous > 0 and change / previous < cfg.tol:
            logger.info("%s: relative change below %g at iteration %d", cfg.label, cfg.tol, k)
            break

    return ImageGrid(f), log


def least_squares(
    g: Sinogram,
    geom: ScanGeometry,
    iters: int = 15,
    positivity: bool = False,
    truth: Optional[ImageGrid] = None,
    op: Optional[VLineOperator] = None,
    callback: Optional[IterCallback] = None,
    **overrides,
) -> Tuple[ImageGrid, IterateLog]:
    """Chambolle-Pock without a penalty: only the data dual p is kept."""
    cfg = SolverConfig(regularizer=Regularizer.NONE, alpha=0.0, positivity=positivity, max_iters=iters)
    if overrides:
        cfg = replace(cfg, **overrides)
    return chambolle_pock(g, geom, cfg, truth=truth, op=op, callback=callback)
