"""Exception hierarchy shared by every edgesense module."""
from __future__ import annotations


class EdgeSenseError(Exception):
    """Base class for all domain errors."""


class InvalidSystem(EdgeSenseError, ValueError):
    """System matrices violate a structural requirement (shape, symmetry, invertibility)."""


class NotObservable(EdgeSenseError):
    """(A, G) fails the rank test at L = d."""


class DimensionMismatch(EdgeSenseError, ValueError):
    """Array shapes disagree with the system or topology they are used with."""


class IllConditionedTransform(EdgeSenseError):
    """The similarity transform of a block decomposition exceeds the condition limit."""

    def __init__(self, condition: float, limit: float) -> None:
        super().__init__(f"transform condition number {condition:.3e} exceeds {limit:.3e}")
        self.condition = condition
        self.limit = limit


class ZeroEigenvalue(EdgeSenseError):
    """A has an eigenvalue numerically equal to zero."""


class InfinitePower(EdgeSenseError, ValueError):
    """A success rate of one needs unbounded transmission power."""


class NegativePower(EdgeSenseError, ValueError):
    """Transmission power must be non-negative."""


class ZeroNoiseVariance(EdgeSenseError, ValueError):
    """Observation noise variances must be strictly positive."""


class SingularCovariance(EdgeSenseError):
    """A covariance or information matrix could not be inverted even after jitter."""


class UncoveredBlock(EdgeSenseError):
    """No observation row sees the first dimension of some block."""

    def __init__(self, block_start: int) -> None:
        super().__init__(f"no sensor row observes the first dimension of block at {block_start}")
        self.block_start = block_start


class EnumerationTooLarge(EdgeSenseError):
    """Subset enumeration would exceed the configured budget."""


class TargetUnreachable(EdgeSenseError):
    """The bound never reaches the requested probability on [0, 1]."""

    def __init__(self, target: float, supremum: float) -> None:
        super().__init__(f"target probability {target} unreachable; supremum is {supremum}")
        self.target = target
        self.supremum = supremum


class EmptyActionSpace(EdgeSenseError):
    """The compressed interval is empty (lower endpoint above upper endpoint)."""

    def __init__(self, mu_lo: float, mu_hi: float) -> None:
        super().__init__(f"compressed action space is empty: mu_lo={mu_lo} > mu_hi={mu_hi}")
        self.mu_lo = mu_lo
        self.mu_hi = mu_hi


class NonFiniteActivation(EdgeSenseError, FloatingPointError):
    """A network produced NaN or infinite values."""


class ConfigError(EdgeSenseError, ValueError):
    """Experiment configuration is malformed; carries the file location."""

    def __init__(self, message: str, path: str | None = None, line: int | None = None) -> None:
        location = ""
        if path is not None:
            location = f"{path}:{line}: " if line is not None else f"{path}: "
        super().__init__(f"{location}{message}")
        self.path = path
        self.line = line
        self.detail = message
