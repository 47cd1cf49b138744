#!/usr/bin/env python3
"""
Error Types
===========

Exception hierarchy shared by the modeling modules and the command line.

Features:
- One base class so callers can catch everything the tool raises
- Config/usage problems, model invariant violations and numeric divergence
  kept apart so the CLI can map them to distinct exit codes
"""

from typing import Optional


class DnnScalingError(Exception):
    """Base class for all errors raised by the scaling model"""


class ConfigError(DnnScalingError, ValueError):
    """Bad usage, bad environment value or unreadable input file"""


class NetworkParseError(ConfigError):
    """Network/device/scenario document could not be parsed"""

    def __init__(self, message: str, location: Optional[str] = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ModelInvariantError(DnnScalingError, ValueError):
    """A model input violates a documented invariant"""

    def __init__(self, message: str, context: Optional[str] = None):
        self.context = context
        super().__init__(f"{context}: {message}" if context else message)


class LinkSaturatedError(ModelInvariantError):
    """Shared-filesystem data loading has no residual link bandwidth left"""


class NumericDivergenceError(DnnScalingError, ArithmeticError):
    """Loss became non-finite during training"""

    def __init__(self, message: str, iteration: Optional[int] = None):
        self.iteration = iteration
        prefix = f"iteration {iteration}: " if iteration is not None else ""
        super().__init__(f"{prefix}{message}")


__all__ = [
    'DnnScalingError',
    'ConfigError',
    'NetworkParseError',
    'ModelInvariantError',
    'LinkSaturatedError',
    'NumericDivergenceError',
]
