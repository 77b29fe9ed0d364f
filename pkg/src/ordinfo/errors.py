"""Shared exception hierarchy; the CLI maps these onto exit codes."""


class OrdinfoError(Exception):
    """Base class for all package errors."""


class DataError(OrdinfoError):
    """Malformed, missing, or inconsistent input data (CLI exit code 2)."""


class ConvergenceError(OrdinfoError):
    """MCMC diagnostics failed their gate (CLI exit code 3)."""


class ScorerError(OrdinfoError):
    """External scorer protocol violation or transport failure (CLI exit code 4)."""
