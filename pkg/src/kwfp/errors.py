"""Exception types shared across the toolkit.

Everything raised for bad input data derives from :class:`KwfpError`, which
the command-line front end maps to exit status 2.
"""

from __future__ import annotations


class KwfpError(Exception):
    """Base class for data and validation errors."""


class TraceFormatError(KwfpError, ValueError):
    """A serialized trace line could not be parsed."""

    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class TraceValidationError(KwfpError, ValueError):
    """A trace parsed but broke one or more invariants."""

    def __init__(self, violations, lineno: int | None = None):
        self.violations = list(violations)
        self.lineno = lineno
        text = "; ".join(str(v) for v in self.violations)
        if lineno is not None:
            text = f"line {lineno}: {text}"
        super().__init__(text)


class PcapFormatError(KwfpError, ValueError):
    """Unsupported or corrupt pcap input."""


class PreconditionError(KwfpError, ValueError):
    """An operation was called with inputs outside its contract."""


class EmptyAfterFilterError(KwfpError, ValueError):
    """A filter removed every connection of a sample."""


class LabelMismatchError(KwfpError, ValueError):
    """Train and test label sets differ where they must agree."""

    def __init__(self, missing_in_train, missing_in_test):
        self.missing_in_train = sorted(missing_in_train)
        self.missing_in_test = sorted(missing_in_test)
        parts = []
        if self.missing_in_train:
            parts.append(f"absent from train: {', '.join(self.missing_in_train)}")
        if self.missing_in_test:
            parts.append(f"absent from test: {', '.join(self.missing_in_test)}")
        super().__init__("label sets differ (" + "; ".join(parts) + ")")
