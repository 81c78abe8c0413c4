"""
Exception hierarchy for the planning library.

Precondition failures subclass ValueError so callers that only know the
builtin still catch them.
"""


class PlanningError(Exception):
    """Root of every error raised by this package."""


class InvalidArgumentError(PlanningError, ValueError):
    """An argument violates an operation's precondition."""


class ConfigError(InvalidArgumentError):
    """An experiment configuration document is malformed or inconsistent."""


class UndefinedProfileError(InvalidArgumentError):
    """A contraction profile was requested for V^pi equal to V*."""


class SolverError(PlanningError, ArithmeticError):
    """A linear solve or fixed-point iteration failed numerically."""

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        details = ", ".join(f"{k}={v}" for k, v in sorted(self.diagnostics.items()))
        return f"{base} ({details})"


class MazeGenerationError(PlanningError):
    """Seeded maze placement kept violating the layout invariants."""
