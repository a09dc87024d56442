"""Exception taxonomy shared across the package.

Validation problems (bad shapes, broken invariants of inputs) derive from
``VecspinError`` directly; failures that arise from the numerics of an
otherwise well-formed problem (singular matrices, infeasible order
parameters, lost positive definiteness) derive from ``NumericalError`` so
callers can map them to a distinct exit status.
"""

from __future__ import annotations


class VecspinError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(VecspinError):
    """Operands have incompatible shapes."""


class OrderOutOfRange(VecspinError):
    """Derivative order outside the supported range 0..4."""


class InvalidTruncation(VecspinError):
    """Series truncation cannot certify the requested tail tolerance."""


class MonotonicityViolation(VecspinError):
    """A sequence that must be nondecreasing (in value or PSD order) is not."""


class MemoryBudgetExceeded(VecspinError):
    """Coupling tensors would exceed the configured memory budget."""

    def __init__(self, message: str, footprint_bytes: int = 0):
        super().__init__(message)
        self.footprint_bytes = footprint_bytes


class NumericalError(VecspinError):
    """Numerical failure on a structurally valid input."""


class NotPositiveDefinite(NumericalError):
    """A matrix required to be positive definite is not."""

    def __init__(self, message: str, min_eigenvalue: float | None = None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class DomainError(NumericalError):
    """A spectral function was applied outside its domain."""

    def __init__(self, message: str, offending_eigenvalue: float | None = None):
        super().__init__(message)
        self.offending_eigenvalue = offending_eigenvalue


class SingularD(NumericalError):
    """A cumulative increment matrix D_p in the Crisanti-Sommers form is singular."""


class SingularLambda(NumericalError):
    """A multiplier matrix in the Parisi form lost positive definiteness."""


class SingularPath(NumericalError):
    """A matrix required along a path evaluation could not be inverted."""


class InvalidThat(NumericalError):
    """The free evaluation point of the Crisanti-Sommers functional is inadmissible."""


class DegenerateKnots(NumericalError):
    """Interpolation knots coincide while their matrices differ."""


class DegenerateDerivative(NumericalError):
    """A denominator built from path derivatives underflowed."""


class InfeasibleTriple(NumericalError):
    """A zero-temperature triple (L, alpha, path) violates its feasibility cone."""


class NoFeasibleStart(NumericalError):
    """No optimizer restart produced a feasible starting point."""


class BetaTooSmall(NumericalError):
    """Coupling strength below the threshold required by a construction."""


class RootNotBracketed(NumericalError):
    """A bisection target is not bracketed by the search interval."""


class IllConditionedFit(NumericalError):
    """A least-squares fit does not determine its parameters."""


class NonPDConstraint(NumericalError):
    """A constraint matrix that must be positive definite is singular."""
