"""Exception types raised by the dysonrg package."""


class DysonRGError(Exception):
    """Base class for all package-specific errors."""


class GridContainmentError(DysonRGError):
    """A density's tails are not contained on the requested grid."""


class ProjectionConditionError(DysonRGError):
    """The Hermite projection Gram system is too ill-conditioned to solve."""


class NormalizerDivergence(DysonRGError):
    """The RG-step normalizer integrand does not decay on the grid.

    Signals the input density is too wide for the map (the analogue of
    variance >= 1 in the Gaussian family).
    """


class ResolutionLoss(DysonRGError):
    """A rescaled density no longer fits on the grid."""


class NotAFixedPoint(DysonRGError):
    """A linearization was requested at a density that is not a fixed point."""


class EigenSolveError(DysonRGError):
    """The dense eigensolver failed or produced invalid pairs."""


class SeedBracketError(DysonRGError):
    """No sign change of the quartic residual component on the scanned
    seed-constant range."""


class NewtonStall(DysonRGError):
    """Newton iteration stopped making progress before reaching tolerance."""


class NonNormalizableFamily(DysonRGError):
    """A one-parameter family member cannot be normalized on the grid."""


class SameClassificationAtEndpoints(DysonRGError):
    """Both endpoints of a critical search flow to the same phase."""


class UndecidedProbe(DysonRGError):
    """A bisection probe could not be classified within the step budget."""

    def __init__(self, t, m_max):
        super().__init__(
            f"flow at t={t!r} undecided after {m_max} steps; increase m_max"
        )
        self.t = t
        self.m_max = m_max
