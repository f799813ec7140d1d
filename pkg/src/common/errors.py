"""
Error types shared by every package.
Each error carries structured details for reports and the process exit code the CLI returns for it.
"""

from __future__ import annotations

from typing import Any

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4


class AltflowError(RuntimeError):
    exit_code = EXIT_DATA

    def __init__(self, message: str, *, details: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.details = details or {}

    def to_dict(self) -> dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self), "details": self.details}


class ConfigError(AltflowError):
    exit_code = EXIT_CONFIG


class FormatError(AltflowError):
    exit_code = EXIT_DATA


class MissingMaskError(FormatError):
    pass


class InvalidSpecError(AltflowError):
    exit_code = EXIT_CONFIG


class ShapeMismatchError(AltflowError):
    exit_code = EXIT_DATA


class EmptyInputError(AltflowError):
    exit_code = EXIT_DATA


class DegenerateLabelsError(AltflowError):
    exit_code = EXIT_DATA


class EmptyWindowError(AltflowError):
    exit_code = EXIT_DATA


class RequiresKnownDensityError(AltflowError):
    exit_code = EXIT_DATA


class NonFiniteError(AltflowError):
    exit_code = EXIT_NUMERICAL


class DomainError(NonFiniteError):
    """Operand outside the domain of the requested op (ln of non-positive, division by zero)."""


class EpochAbortedError(NonFiniteError):
    """A training epoch hit a non-finite value; the epoch's updates were discarded."""
