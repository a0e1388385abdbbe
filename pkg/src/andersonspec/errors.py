"""Exception types shared across the package.

Numerical failures derive from :class:`NumericalError` so the CLI can map them
onto a single exit code; malformed inputs derive from :class:`InvalidModel`
(a ``ValueError``).
"""

from __future__ import annotations


class AndersonSpecError(Exception):
    """Base class for all package errors."""


class InvalidModel(AndersonSpecError, ValueError):
    pass


class UnsupportedDimension(InvalidModel):
    pass


class NotUnitaryCorner(InvalidModel):
    """Raised when an operation needs a unitary corner block ``B_n``."""


class ConfigError(AndersonSpecError, ValueError):
    pass


class VerificationFailure(AndersonSpecError):
    def __init__(self, check: str, value: float, threshold: float):
        super().__init__(f"check {check!r} failed: {value:.3e} >= {threshold:.3e}")
        self.check = check
        self.value = value
        self.threshold = threshold


class NumericalError(AndersonSpecError):
    pass


class SingularShift(NumericalError):
    """The shift is numerically an eigenvalue (an LU pivot fell below the floor)."""


class NoConvergence(NumericalError):
    pass


class OverflowRisk(NumericalError):
    pass


class ZeroEigenvalue(NumericalError):
    pass


class BandEdge(NumericalError):
    pass


class QuadratureStall(NumericalError):
    def __init__(self, message: str, xi: float, estimate: float, n_angles: int):
        super().__init__(message)
        self.xi = xi
        self.estimate = estimate
        self.n_angles = n_angles


class RealAxisSingularity(NumericalError):
    pass


class NoPlateau(NumericalError):
    pass


class UnresolvedCluster(NumericalError):
    pass


class BudgetExceeded(NumericalError):
    pass


class DegenerateXi(NumericalError):
    pass


class EmptyHistogram(NumericalError):
    pass


class ClusterAmbiguous(UserWarning):
    """Loop count differs from the block size (not fatal)."""
