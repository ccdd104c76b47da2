"""Exception and warning types shared by the tailwave modules."""


class TailwaveError(Exception):
    """Base class for all package errors."""


class DomainError(TailwaveError, ValueError):
    """A radius or null pair lies outside the exterior region."""


class UnsupportedOrder(TailwaveError, ValueError):
    """Requested derivative order of D is not available."""


class NoHorizon(TailwaveError):
    """D has no positive root."""


class Nonconvergence(TailwaveError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class BadSupport(TailwaveError, ValueError):
    """Support interval of compact data is empty or outside the grid."""


class QuadratureFailure(TailwaveError, RuntimeError):
    """Adaptive quadrature did not reach its tolerance."""


class InsufficientMargin(TailwaveError, ValueError):
    """A stencil or a requested slice falls outside the stored data."""


class InsufficientRadialRange(TailwaveError, ValueError):
    """Not enough radial coverage for an extrapolation or a flux cut."""


class WrongMode(TailwaveError, ValueError):
    """Operation is defined for a different angular mode."""


class UnsupportedK(TailwaveError, ValueError):
    """Commuted equation needs more derivatives of D than are available."""


class HypothesisViolated(TailwaveError, ValueError):
    """Input does not satisfy the hypotheses of an inequality check."""


class SupportViolation(TailwaveError, ValueError):
    """Coefficients are supported on modes below the Poincare threshold."""


class NonpositiveValues(TailwaveError, ValueError):
    """A log-log operation met a non-positive sample."""


class InsufficientPoints(TailwaveError, ValueError):
    """Too few samples in a fit window."""


class DegenerateDifferences(TailwaveError, ValueError):
    """Refinement increments are below the roundoff floor."""


class I0Unresolved(TailwaveError, RuntimeError):
    """Newman-Penrose constant could not be extracted precisely enough."""


class MissingSeries(TailwaveError, KeyError):
    """A report needs a series that was not supplied."""


class ConfigError(TailwaveError, ValueError):
    """Invalid scenario configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


class StabilityWarning(UserWarning):
    """The potential is under-resolved on the chosen grid."""


class ExtremalWarning(UserWarning):
    """Background is extremal Reissner-Nordstrom."""
