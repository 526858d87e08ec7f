"""Exception types shared across the package."""

from __future__ import annotations


class M3ABError(Exception):
    """Base class for all package-specific errors."""


class InsufficientBudgetError(M3ABError):
    """A stage budget is too small to give every arm at least one pull.

    Carries the starved arm (0 = control) and, when raised from the
    experiment harness, the (algorithm, budget) cell that failed.
    """

    def __init__(self, message: str, arm: int | None = None, cell: tuple | None = None):
        super().__init__(message)
        self.arm = arm
        self.cell = cell


class TooLargeError(M3ABError):
    """Exhaustive subset enumeration was refused; use the closed-form
    diagnostic (h3_prime) instead."""


class DegenerateVarianceError(M3ABError):
    """An estimated stddev of zero makes the z denominator vanish."""


class SchemaError(M3ABError):
    """An instance file violates the documented JSON schema.

    `field` is the path of the offending entry, e.g. "validation.delta[2]".
    """

    def __init__(self, message: str, field: str):
        super().__init__(f"{field}: {message}")
        self.field = field
