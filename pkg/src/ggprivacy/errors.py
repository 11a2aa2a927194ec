"""Exception types shared across the package.

Everything raised on a caller-facing contract violation derives from
:class:`GGPrivacyError`, so the CLI can map the whole family to exit code 1.
"""

from __future__ import annotations


class GGPrivacyError(Exception):
    """Base class for all domain errors raised by this package."""


class ParameterError(GGPrivacyError, ValueError):
    """A parameter is outside its documented domain."""


class InputError(GGPrivacyError, ValueError):
    """An input array violates a precondition (non-finite values, bad shape)."""


class ConfigError(GGPrivacyError, ValueError):
    """An accountant configuration is internally inconsistent."""


class GridMismatchError(ConfigError):
    """Discrete privacy-loss distributions on different grids cannot compose."""


class TruncationError(GGPrivacyError, RuntimeError):
    """The truncation window captures too little of the loss distribution."""


class RangeError(GGPrivacyError, ValueError):
    """A requested target is outside the representable range; the message
    names the attainable range."""


class SolverError(GGPrivacyError, RuntimeError):
    """A calibration search exhausted its iteration budget."""


class AccountingInconsistencyError(GGPrivacyError, RuntimeError):
    """Accountant outputs violated an expected monotonicity beyond tolerance."""


class BudgetExhaustedError(GGPrivacyError, RuntimeError):
    """A privacy budget does not admit even a single step/composition."""


class IngestionError(GGPrivacyError, ValueError):
    """A data file violates its schema; the message carries the row number."""


class ConstructionError(GGPrivacyError, RuntimeError):
    """A randomized construction failed to produce a valid instance."""
