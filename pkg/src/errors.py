# =========================
# EXCEPTION HIERARCHY
# =========================


class VLineError(Exception):
    """Base class for every failure raised by the package."""


class GeometryError(VLineError, ValueError):
    pass


class ShapeMismatchError(VLineError, ValueError):
    pass


class DomainError(VLineError, ValueError):
    """Argument outside the domain where a formula is defined."""


class DivergenceError(VLineError, ArithmeticError):
    """Solver iterate or residual became non-finite."""

    def __init__(self, message: str, iteration: int):
        super().__init__(message)
        self.iteration = iteration


class ConfigError(VLineError, ValueError):
    pass


class FormatError(VLineError, ValueError):
    """File on disk does not match the expected layout."""
