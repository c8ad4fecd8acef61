"""Shared exception types."""


class CuisimError(Exception):
    """Base class for all domain errors raised by this package."""


class IngestError(CuisimError):
    """Raised when RRF ingestion cannot produce a usable catalog."""


class ConfigError(CuisimError):
    """Raised for invalid configuration files, values or flags."""


class DataError(CuisimError):
    """Raised for malformed or inconsistent data artifacts."""
