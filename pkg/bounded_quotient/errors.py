"""Exceptions raised by Bounded Quotient."""


class QuotientError(Exception):
    """Base class for all library errors."""


class ConfigError(QuotientError, ValueError):
    """Invalid benchmark, family, table or run configuration."""


class SizeGuardError(ConfigError):
    """An enumeration or cache would exceed the configured cap."""


class AlphabetMismatchError(QuotientError, ValueError):
    """Controller, model or wrapper alphabets do not line up."""


class ZeroMassError(QuotientError, ValueError):
    """A law was requested for a zero-probability event."""


class VerificationError(QuotientError, AssertionError):
    """A bound, soundness check or artifact comparison failed."""
