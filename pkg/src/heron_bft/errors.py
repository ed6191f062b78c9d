"""Exception hierarchy."""

from __future__ import annotations


class HeronError(Exception):
    """Base class for all heron-bft errors."""


class ConfigError(HeronError, ValueError):
    """Invalid configuration, key material or experiment parameters."""


class ParseError(HeronError, ValueError):
    """Malformed or truncated encoded input."""


class ProtocolViolation(HeronError):
    """Local misuse of a protocol instance (double broadcast, double propose, ...)."""


class ThresholdNotMet(HeronError):
    """Fewer than t distinct valid signature shares were supplied."""


class Unavailable(HeronError):
    """Requested artifact does not exist yet (e.g. proof of an undelivered VCBC)."""
