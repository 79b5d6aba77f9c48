from dataclasses import dataclass, field
from typing import Callable, Tuple

import numpy as np

from src.errors import DomainError

# =========================
# DATA STRUCTURE
# =========================

@dataclass(frozen=True)
class WeightSpec:
    """
    Radial weight U(r) of the cone integrand, with its derivative.
    Equality and hashing go by label and parameters, not by the callables.
    """
    u: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    u_prime: Callable[[np.ndarray], np.ndarray] = field(compare=False, repr=False)
    label: str
    params: Tuple[float, ...] = ()

    def __call__(self, r):
        return self.u(np.asarray(r, dtype=float))

    def derivative(self, r):
        return self.u_prime(np.asarray(r, dtype=float))

    def check_nonnegative(self, r_max: float = 2.0, samples: int = 401):
        r = np.linspace(0.0, r_max, samples)
        values = self(r)
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError(f"weight {self.label!r} is negative or non-finite on [0, {r_max}]")
        return self


# =========================
# WEIGHT FAMILIES
# =========================

def constant_weight() -> WeightSpec:
    return WeightSpec(
        u=lambda r: np.ones_like(r),
        u_prime=lambda r: np.zeros_like(r),
        label="constant",
        params=(),
    )


def exponential_weight(mu: float) -> WeightSpec:
    """Photon attenuation e^{-mu r}; mu = 0 reduces to the constant weight."""
    mu = float(mu)
    return WeightSpec(
        u=lambda r: np.exp(-mu * r),
        u_prime=lambda r: -mu * np.exp(-mu * r),
        label=f"exponential(mu={mu:g})",
        params=(mu,),
    )


def power_weight(m: float) -> WeightSpec:
    m = float(m)
    if m < 0:
        raise DomainError("power weight exponent must be non-negative")
    return WeightSpec(
        u=lambda r: np.power(r, m),
        u_prime=lambda r: m * np.power(r, m - 1.0) if m != 0 else np.zeros_like(r),
        label=f"power(m={m:g})",
        params=(m,),
    )


def weight_from_label(kind: str, parameter: float = 0.0) -> WeightSpec:
    kind = kind.strip().lower()
    if kind in ("constant", "none", "one"):
        return constant_weight()
    if kind in ("exponential", "exp", "attenuation"):
        return exponential_weight(parameter)
    if kind == "power":
        return power_weight(parameter)
    raise DomainError(f"unknown weight kind {kind!r}")
