"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class TrajEmbedError(Exception):
    """Base class for every error raised by the package."""


# --- process definitions ---------------------------------------------------

class SpecError(TrajEmbedError):
    """A process definition violates a structural invariant.

    ``violations`` holds every problem found, not just the first.
    """

    def __init__(self, message: str, violations: list | None = None):
        super().__init__(message)
        self.violations = violations if violations is not None else [self]


class NonStochastic(SpecError):
    pass


class DuplicateSymbolBranch(SpecError):
    pass


class UnreachableMode(SpecError):
    pass


class BadDensity(SpecError):
    pass


class NegativeTime(TrajEmbedError, ValueError):
    pass


class NoSuchBranch(TrajEmbedError, KeyError):
    pass


class NoUniqueStationary(TrajEmbedError):
    pass


# --- quantum model ---------------------------------------------------------

class HorizonTooShort(TrajEmbedError):
    pass


class NoConvergence(TrajEmbedError):
    pass


class UnsupportedDwellFamily(TrajEmbedError):
    pass


class NotPSD(TrajEmbedError):
    pass


class InsufficientSpan(TrajEmbedError):
    pass


class InconsistentAction(TrajEmbedError):
    pass


# --- embedding -------------------------------------------------------------

class LogBranchFailure(TrajEmbedError):
    pass


class NonConvergent(TrajEmbedError):
    pass


class NotHermitian(TrajEmbedError):
    pass


class NonPositiveRate(TrajEmbedError, ValueError):
    pass


# --- trajectories ----------------------------------------------------------

class ExpFailure(TrajEmbedError):
    pass


class HorizonExceeded(TrajEmbedError):
    """The no-jump survival plateaus above the drawn threshold."""

    def __init__(self, message: str, plateau: float | None = None):
        super().__init__(message)
        self.plateau = plateau


class DeadState(TrajEmbedError):
    pass


class StepTooLarge(TrajEmbedError, ValueError):
    pass


# --- analysis --------------------------------------------------------------

class EmptyLog(TrajEmbedError, ValueError):
    pass


class TooFewSamples(TrajEmbedError, ValueError):
    pass


class DimensionMismatch(TrajEmbedError, ValueError):
    pass


# --- reverse map -----------------------------------------------------------

class GridTooShort(TrajEmbedError):
    pass


class NotErasingError(TrajEmbedError):
    """Raised when an operation needs erasing jumps and does not get them."""

    def __init__(self, refusal):
        super().__init__(
            f"jump {refusal.symbol!r} is not erasing: "
            f"sigma2/sigma1 = {refusal.ratio:.3e}"
        )
        self.refusal = refusal
