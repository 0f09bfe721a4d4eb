"""Exception types shared across the package."""


class LyapnormError(Exception):
    """Base class for package errors."""


class NumericDomainError(LyapnormError, ValueError):
    """Non-finite or otherwise unusable numbers reached a computation."""


class GridMismatchError(LyapnormError, ValueError):
    """Two fields (or a field and an operator) live on different grids."""


class CFLError(LyapnormError):
    """Advection substep violates the configured CFL bound."""

    def __init__(self, cfl: float, bound: float, dt: float):
        self.cfl = cfl
        self.bound = bound
        self.dt = dt
        super().__init__(
            f"CFL number {cfl:.3g} exceeds bound {bound:.3g} at dt={dt:g}; "
            f"use a smaller dt (e.g. {dt / 2:g})")


class SplittingError(LyapnormError, ValueError):
    """Subspaces are not complementary."""


class RankError(LyapnormError, ValueError):
    """A basis is (numerically) rank deficient."""


class ConfigError(LyapnormError, ValueError):
    """Experiment configuration failed validation."""
