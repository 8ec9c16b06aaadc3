"""Exception types shared across the package."""

from __future__ import annotations


class PrefSearchError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(PrefSearchError):
    """Raised when an expression or document cannot be parsed.

    ``position`` is a character offset into the offending text when known.
    """

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class KBValidationError(PrefSearchError):
    """Raised when a knowledge-base document violates its schema.

    Carries every finding, not just the first one.
    """

    def __init__(self, findings):
        self.findings = list(findings)
        super().__init__("; ".join(f.message for f in self.findings))


class NotFoundError(PrefSearchError):
    """Unknown slot, value, node, KB or session."""


class InapplicableOperatorError(PrefSearchError):
    """Operator cannot be applied to a slot of this kind/ordinality."""


class CycleError(PrefSearchError):
    """Relative preferences form a cycle."""

    def __init__(self, cycle):
        self.cycle = list(cycle)
        super().__init__("cyclic preference: " + " > ".join(str(v) for v in self.cycle))


class GenerationError(PrefSearchError):
    """A template or placeholder required for generation is missing."""


class ConflictError(PrefSearchError):
    """A turn is already being processed for this session, or it is closed."""
