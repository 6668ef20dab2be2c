"""Exception hierarchy for causalgp."""

from __future__ import annotations


class CausalGPError(Exception):
    """Base class for all errors raised by causalgp."""


class ParameterDomainError(CausalGPError, ValueError):
    """A hyperparameter or time lies outside its domain."""


class InputError(CausalGPError, ValueError):
    """Malformed numeric input (NaN, infinite, empty, mismatched lengths)."""


class ConsistencyError(CausalGPError, ValueError):
    """Shared force hyperparameters disagree between covariates."""


class ConfigError(CausalGPError, ValueError):
    """Invalid configuration file or value."""


class ParseError(CausalGPError, ValueError):
    """A data file could not be parsed."""

    def __init__(self, msg: str, *, context: str | None = None) -> None:
        self.context = context
        super().__init__(msg if context is None else f"{msg} ({context})")


class ValidationError(CausalGPError, ValueError):
    """One or more records violate their invariants.

    All violations are collected in ``violations`` rather than stopping at the
    first one.
    """

    def __init__(self, violations: list[str]) -> None:
        self.violations = list(violations)
        body = "\n  ".join(self.violations)
        super().__init__(f"{len(self.violations)} validation error(s):\n  {body}")


class NumericalError(CausalGPError, ArithmeticError):
    """A numerical procedure failed; ``diagnostics`` holds the details."""

    def __init__(self, msg: str, *, diagnostics: dict[str, object] | None = None) -> None:
        self.diagnostics = dict(diagnostics or {})
        super().__init__(msg)


class FitError(NumericalError):
    """Every optimisation restart failed."""
