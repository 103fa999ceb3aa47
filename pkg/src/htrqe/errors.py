"""Shared exception types.

The CLI maps these onto exit codes: usage problems exit 1, DataError
(and its subclasses) exit 2, partial metric failures exit 3.
"""

from __future__ import annotations


class DataError(Exception):
    """Invalid or unusable input data (empty corpus, bad file, ...)."""


class EncodingError(DataError):
    """Input is not valid UTF-8."""

    def __init__(self, source: str, byte_offset: int, reason: str) -> None:
        super().__init__(f"{source}: invalid UTF-8 at byte {byte_offset}: {reason}")
        self.source = source
        self.byte_offset = byte_offset


class ArpaParseError(DataError):
    """Malformed ARPA language-model text."""

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class TransportError(Exception):
    """Scorer endpoint unreachable or broken mid-conversation."""
