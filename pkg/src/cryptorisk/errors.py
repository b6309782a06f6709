"""Exception types shared across the package."""

from __future__ import annotations


class CryptoRiskError(Exception):
    """Base class for all errors raised by cryptorisk."""


class DomainError(CryptoRiskError, ValueError):
    """An argument lies outside the domain an operation is defined on."""


class ParseError(CryptoRiskError):
    """A document failed validation.

    ``errors`` holds one human-readable message per violation, each prefixed
    with the location it refers to.
    """

    def __init__(self, errors: list[str] | str, source: str | None = None):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        self.source = source
        head = f"{source}: " if source else ""
        super().__init__(head + "; ".join(self.errors))


class InvariantViolation(CryptoRiskError):
    """An internal consistency check failed (a bug, not bad input)."""
