import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from scipy import optimize, special

from src.errors import DomainError
from src.spectral.harmonics import HarmonicProfile
from src.transform.weights import WeightSpec

logger = logging.getLogger(__name__)

# slack for rounding in domain checks such as rho >= sin(psi)
DOMAIN_TOL = 1e-12

# =========================
# KERNEL CONTEXT
# =========================

@dataclass(frozen=True)
class AbelKernelContext:
    n: int
    ell: int
    weight: WeightSpec

    def __post_init__(self):
        if self.n < 2:
            raise DomainError(f"ambient dimension must be >= 2, got {self.n}")
        if self.ell < 0:
            raise DomainError(f"harmonic degree must be non-negative, got {self.ell}")

    @property
    def mu(self) -> float:
        return (self.n - 2) / 2.0

    def gegenbauer(self, x) -> np.ndarray:
        """C_l^mu normalised to C(1) = 1; Chebyshev T_l in the mu = 0 limit."""
        x = np.clip(np.asarray(x, dtype=float), -1.0, 1.0)
        if self.mu == 0:
            return special.eval_chebyt(self.ell, x)
        return special.eval_gegenbauer(self.ell, self.mu, x) / special.eval_gegenbauer(self.ell, self.mu, 1.0)

    def weight_n(self, r) -> np.ndarray:
        """U_n(r) = U(r) r^(n-2)."""
        r = np.asarray(r, dtype=float)
        return self.weight(r) * np.power(r, self.n - 2)

    def sphere_area(self) -> float:
        """|S^(n-2)|, equal to 2 for n = 2."""
        m = self.n - 1
        return float(2.0 * np.pi ** (m / 2.0) / special.gamma(m / 2.0))


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


# =========================
# KERNEL K_l(psi, rho)
# =========================

def _branch_sum(ctx: AbelKernelContext, sin_psi, cos_psi, root, rho, sigmas=(1.0, -1.0)):
    """Sum over both branches of U_n(r) C(cos of polar angle) with r = cos(psi) - sigma*root."""
    total = 0.0
    safe_rho = np.where(rho > 0.0, rho, 1.0)
    for sigma in sigmas:
        r = cos_psi - sigma * root
        arg = np.where(rho > 0.0, (sin_psi ** 2 + sigma * cos_psi * root) / safe_rho, sigma)
        total = total + ctx.weight_n(r) * ctx.gegenbauer(arg)
    return total


def _kernel_root(psi, rho):
    psi = np.asarray(psi, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if np.any(psi < -DOMAIN_TOL) or np.any(psi > np.pi / 2 + DOMAIN_TOL):
        raise DomainError("psi must lie in [0, pi/2]")
    sin_psi, cos_psi = np.sin(psi), np.cos(psi)
    gap = rho ** 2 - sin_psi ** 2
    if np.any(gap < -DOMAIN_TOL) or np.any(rho > 1.0 + DOMAIN_TOL):
        raise DomainError("kernel needs sin(psi) <= rho <= 1")
    return sin_psi, cos_psi, np.sqrt(np.maximum(gap, 0.0)), rho


def kernel_sum(ctx: AbelKernelContext, psi, rho, sigmas: Sequence[float] = (1.0, -1.0)):
    sin_psi, cos_psi, root, rho = _kernel_root(psi, rho)
    return _scalar(_branch_sum(ctx, sin_psi, cos_psi, root, rho, sigmas))


def kernel_K(ctx: AbelKernelContext, psi, rho):
    """
    K_l(psi, rho) with the printed (sin psi)^(n-1) prefactor.
    The Abel identity itself integrates (sin psi)^(n-2) times the branch
    sum; see `abel_apply`.
    """
    sin_psi, cos_psi, root, rho = _kernel_root(psi, rho)
    return _scalar(sin_psi ** (ctx.n - 1) * _branch_sum(ctx, sin_psi, cos_psi, root, rho))


# =========================
# FORWARD ABEL OPERATORS
# =========================

def _check_psi_grid(psi_grid) -> np.ndarray:
    psi = np.asarray(psi_grid, dtype=float)
    if np.any(psi < 0.0) or np.any(psi > np.pi / 2 + DOMAIN_TOL):
        raise DomainError("psi grid must lie in [0, pi/2]")
    return np.minimum(psi, np.pi / 2)


def abel_apply(
    ctx: AbelKernelContext,
    f_profile: HarmonicProfile,
    psi_grid,
    nodes: int = 2001,
) -> HarmonicProfile:
    """
    |S^(n-2)| int_{sin psi}^1 f(rho) rho K(psi, rho) / sqrt(rho^2 - sin^2 psi) d rho,
    evaluated after rho = sqrt(sin^2 psi + t^2), which turns the weakly
    singular integrand into f(rho) (sin psi)^(n-2) times the branch sum, and
    integrated by the trapezoid rule in t over [0, cos psi].
    """
    psi = _check_psi_grid(psi_grid)
    u = np.linspace(0.0, 1.0, nodes)
    w = np.full(nodes, 1.0 / (nodes - 1))
    w[0] = w[-1] = 0.5 / (nodes - 1)

    sin_psi = np.sin(psi)[:, None]
    cos_psi = np.cos(psi)[:, None]
    t = cos_psi * u[None, :]
    rho = np.sqrt(sin_psi ** 2 + t ** 2)

    integrand = f_profile.at(rho) * _branch_sum(ctx, sin_psi, cos_psi, t, rho)
    values = ctx.sphere_area() * sin_psi[:, 0] ** (ctx.n - 2) * cos_psi[:, 0] * (integrand @ w)
    values = np.where(np.cos(psi) > 1e-15, values, 0.0)
    return HarmonicProfile(ell=f_profile.ell, k=f_profile.k, grid=psi, samples=values, radial=False)


def coeff_forward_alpha(
    ctx: AbelKernelContext,
    f_profile: HarmonicProfile,
    psi_grid,
    nodes: int = 4001,
) -> HarmonicProfile:
    """
    The same coefficient through the opening-angle parametrisation
    alpha in [0, pi - 2 psi]. Nodes are graded toward both ends with
    alpha = (pi - 2 psi)(u - sin(2 pi u)/(2 pi)), where the integrand peaks
    for small psi; the psi = 0 column, where the parametrisation collapses,
    uses the line-integral limit.
    """
    psi = _check_psi_grid(psi_grid)
    u = np.linspace(0.0, 1.0, nodes)
    w = np.full(nodes, 1.0 / (nodes - 1))
    w[0] = w[-1] = 0.5 / (nodes - 1)
    n = ctx.n

    values = np.zeros(psi.size)
    for i, p in enumerate(psi):
        span = np.pi - 2.0 * p
        if span <= 1e-15:
            continue
        if p == 0.0:
            if n == 2:
                rho = u
                sign = (-1.0) ** ctx.ell
                line = f_profile.at(rho) * (ctx.weight(1.0 - rho) + sign * ctx.weight(1.0 + rho))
                values[i] = ctx.sphere_area() * (line @ w)
            continue

        alpha = span * (u - np.sin(2.0 * np.pi * u) / (2.0 * np.pi))
        dalpha = span * (1.0 - np.cos(2.0 * np.pi * u))
        s_pa = np.sin(p + alpha)
        rho = np.sin(p) / s_pa
        r = np.sin(alpha) / s_pa
        integrand = (
            f_profile.at(rho)
            * ctx.weight(r)
            * np.sin(p) ** (n - 1)
            * np.sin(alpha) ** (n - 2)
            / s_pa ** n
            * ctx.gegenbauer(np.cos(alpha))
        )
        values[i] = ctx.sphere_area() * ((integrand * dalpha) @ w)

    return HarmonicProfile(ell=f_profile.ell, k=f_profile.k, grid=psi, samples=values, radial=False)


# =========================
# KERNEL F_l(t, s)
# =========================

def kernel_F(ctx: AbelKernelContext, t, s):
    """
    F_l(t, s) on 0 <= s <= t <= 1, s < 1. On the diagonal this returns
    v(s) = 2 U_n(sqrt s) C(sqrt(1 - s)).
    """
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    if np.any(s < -DOMAIN_TOL) or np.any(t < s - DOMAIN_TOL) or np.any(t > 1.0 + DOMAIN_TOL) or np.any(s >= 1.0):
        raise DomainError("kernel_F needs 0 <= s <= t <= 1 and s < 1")
    t = np.clip(t, 0.0, 1.0)
    s = np.clip(s, 0.0, None)

    diagonal = 2.0 * ctx.weight_n(np.sqrt(s)) * ctx.gegenbauer(np.sqrt(1.0 - s))
    root = np.sqrt(np.maximum(t - s, 0.0))
    total = 0.0
    for sigma in (1.0, -1.0):
        arg = (np.sqrt(t) * root + sigma * (1.0 - t)) / np.sqrt(1.0 - s)
        total = total + sigma ** ctx.ell * ctx.weight_n(np.sqrt(t) - sigma * root) * ctx.gegenbauer(arg)
    return _scalar(np.where(t == s, diagonal, total))


def hat_transforms(
    g_profile: HarmonicProfile,
    f_profile: HarmonicProfile,
    ctx: AbelKernelContext,
    t_grid,
    s_grid,
) -> Tuple[HarmonicProfile, HarmonicProfile]:
    """
    g_hat(t) = |S^(n-2)|^-1 (1 - t)^(-(n-2)/2) (Cf)(arccos sqrt t) and
    f_hat(s) = f(sqrt(1 - s)) / 2, by linear interpolation of the inputs.
    """
    t = np.asarray(t_grid, dtype=float)
    s = np.asarray(s_grid, dtype=float)
    if ctx.n >= 3 and np.any(t >= 1.0):
        raise DomainError("t = 1 is a pole of the g_hat prefactor for n >= 3")
    if np.any(t < 0) or np.any(t > 1) or np.any(s < 0) or np.any(s > 1):
        raise DomainError("t and s grids must lie in [0, 1]")

    prefactor = np.power(1.0 - t, -(ctx.n - 2) / 2.0) / ctx.sphere_area()
    g_hat = prefactor * g_profile.at(np.arccos(np.sqrt(t)))
    f_hat = f_profile.at(np.sqrt(1.0 - s)) / 2.0
    return (
        HarmonicProfile(ell=g_profile.ell, k=g_profile.k, grid=t, samples=g_hat, radial=False),
        HarmonicProfile(ell=f_profile.ell, k=f_profile.k, grid=s, samples=f_hat, radial=False),
    )


def abel_residual(
    ctx: AbelKernelContext,
    g_hat: HarmonicProfile,
    f_hat: HarmonicProfile,
    nodes: int = 2001,
) -> np.ndarray:
    """g_hat(t) - int_0^t f_hat(s) F(t, s) / sqrt(t - s) ds with s = t - u^2, on g_hat's grid."""
    u = np.linspace(0.0, 1.0, nodes)
    w = np.full(nodes, 1.0 / (nodes - 1))
    w[0] = w[-1] = 0.5 / (nodes - 1)

    residual = np.empty(g_hat.grid.size)
    for i, t in enumerate(g_hat.grid):
        upper = np.sqrt(t)
        uu = upper * u
        s = np.minimum(t - uu ** 2, t)
        s = np.clip(s, 0.0, np.nextafter(1.0, 0.0))
        integral = 2.0 * upper * ((f_hat.at(s) * kernel_F(ctx, np.full_like(s, min(t, 1.0)), s)) @ w)
        residual[i] = g_hat.samples[i] - integral
    return residual


# =========================
# UNIQUENESS CONDITIONS
# =========================

def diagonal_zeros(ctx: AbelKernelContext, a: float = 0.0, samples: int = 4001) -> np.ndarray:
    """Roots of s -> F_l(s, s) on [a, 1) by sign-change bracketing and Brent's method."""
    s = np.linspace(a, 1.0, samples)[:-1]
    v = kernel_F(ctx, s, s)

    roots = list(s[v == 0.0])
    for lo, hi, v_lo, v_hi in zip(s[:-1], s[1:], v[:-1], v[1:]):
        if v_lo * v_hi < 0.0:
            roots.append(optimize.brentq(lambda x: kernel_F(ctx, x, x), lo, hi, xtol=1e-15))
    return np.sort(np.asarray(roots, dtype=float))


def gegenbauer_diagonal_roots(ctx: AbelKernelContext, a: float = 0.0) -> np.ndarray:
    """s = 1 - x^2 for the roots x in (0, 1) of C_l^mu, restricted to [a, 1)."""
    if ctx.ell == 0:
        return np.empty(0)
    if ctx.mu == 0:
        x, _ = special.roots_chebyt(ctx.ell)
    else:
        x, _ = special.roots_gegenbauer(ctx.ell, ctx.mu)
    x = x[x > DOMAIN_TOL]
    s = 1.0 - x ** 2
    return np.sort(s[(s >= a) & (s < 1.0)])


def gradient_condition(ctx: AbelKernelContext, s0: float, h: float = 1e-5) -> float:
    """
    1 + beta1 / (2 (beta1 + beta2)) with (beta1, beta2) the gradient of F_l at
    (s0, s0); beta1 by a one-sided second-order difference in t, the sum
    beta1 + beta2 as the derivative of the diagonal restriction.
    """
    f0 = kernel_F(ctx, s0, s0)
    beta1 = (-3.0 * f0 + 4.0 * kernel_F(ctx, s0 + h, s0) - kernel_F(ctx, s0 + 2 * h, s0)) / (2.0 * h)
    beta_sum = (kernel_F(ctx, s0 + h, s0 + h) - kernel_F(ctx, s0 - h, s0 - h)) / (2.0 * h)
    return 1.0 + beta1 / (2.0 * beta_sum)


def margin_expression(weight: WeightSpec, n: int, s) -> np.ndarray:
    """(n + 1)/2 + sqrt(s) U'(sqrt s) / U(sqrt s)."""
    root = np.sqrt(np.asarray(s, dtype=float))
    u = weight(root)
    if np.any(u <= 0.0):
        raise DomainError(f"weight {weight.label!r} is not positive on the grid")
    return (n + 1) / 2.0 + root * weight.derivative(root) / u


def uniqueness_margin(weight: WeightSpec, n: int, s_grid=None) -> float:
    """Minimum of the uniqueness expression over s_grid; positive certifies the hypothesis there."""
    if s_grid is None:
        s_grid = np.linspace(0.0, 2.0, 2001)
    margin = float(np.min(margin_expression(weight, n, s_grid)))
    if margin <= 0:
        logger.warning("uniqueness condition fails for %s in dimension %d: margin %.4f", weight.label, n, margin)
    return margin
