"""Error hierarchy for nibblescan."""

from typing import Any


class NibblescanError(Exception):
    """Base exception for all nibblescan errors."""


class ArgumentError(NibblescanError):
    """Raised when an operation receives invalid counts, shapes or codes."""

    def __init__(self, message: str, argument: str | None = None) -> None:
        self.message = message
        self.argument = argument
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        if self.argument is not None:
            return f"Invalid argument '{self.argument}': {self.message}"
        return self.message


class UsageError(NibblescanError):
    """Raised when command-line flags are missing or malformed."""


class FormatError(NibblescanError):
    """Raised when a vecs file or index container is malformed."""

    def __init__(
        self,
        message: str,
        offset: int | None = None,
        path: str | None = None,
    ) -> None:
        self.message = message
        self.offset = offset
        self.path = path
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        parts: list[str] = []
        if self.path is not None:
            parts.append(f"{self.path}:")
        parts.append(self.message)
        if self.offset is not None:
            parts.append(f"at byte offset {self.offset}")
        return " ".join(parts)


class CorruptionError(NibblescanError):
    """Raised when stored codes fall outside their codebook."""

    def __init__(self, message: str, row: int | None = None, column: int | None = None) -> None:
        self.message = message
        self.row = row
        self.column = column
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        if self.row is not None and self.column is not None:
            return f"{self.message} (row {self.row}, subquantizer {self.column})"
        return self.message


class EvaluationError(NibblescanError):
    """Raised when ground truth is missing or inconsistent with a result set."""


class PropertyError(NibblescanError):
    """Raised when a selftest property is violated."""

    def __init__(self, suite: str, message: str, counterexample: Any | None = None) -> None:
        self.suite = suite
        self.message = message
        self.counterexample = counterexample
        super().__init__(self._format_message())

    def _format_message(self) -> str:
        text = f"[{self.suite}] {self.message}"
        if self.counterexample is not None:
            text += f"\nCounterexample: {self.counterexample!r}"
        return text
