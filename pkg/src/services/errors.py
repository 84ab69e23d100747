"""
Error Types
Base classes shared by every service; module-specific errors live next to their code.
"""
from typing import Optional


class FlipscopeError(Exception):
    """Base class for domain errors raised by the numerical services."""

    def __init__(self, message: str, operation: Optional[str] = None, params: Optional[dict] = None):
        super().__init__(message)
        self.operation = operation
        self.params = params or {}

    def describe(self) -> str:
        """One-line report with the failing operation and its parameters."""
        parts = [f"{type(self).__name__}: {self}"]
        if self.operation:
            parts.append(f"operation={self.operation}")
        if self.params:
            parts.append(", ".join(f"{k}={v}" for k, v in self.params.items()))
        return " | ".join(parts)


class ConfigError(FlipscopeError):
    """Error when run configuration is invalid"""
    pass


class NoSignChange(FlipscopeError):
    """Error when a bisection bracket does not straddle a change"""
    pass
