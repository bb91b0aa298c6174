"""Error taxonomy: invalid arguments raise ValueError directly; these two
carry enough identity for the CLI to map them to exit codes."""

from __future__ import annotations

__all__ = ["ConfigError", "DegenerateInputError", "NumericError"]


class ConfigError(ValueError):
    """Bad or missing configuration (CLI exit code 2)."""


class DegenerateInputError(ValueError):
    """Input where the requested quantity is undefined (vanishing denominator)."""


class NumericError(ArithmeticError):
    """Non-finite value produced mid-computation (CLI exit code 3)."""
