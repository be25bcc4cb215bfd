from typing import Any, Dict, Optional


class OptimizerError(Exception):
    """Base class for every error raised by the optimizer."""

    exit_code = 3

    def __init__(self, message: str, context: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.context = context or {}

    def __str__(self) -> str:
        if not self.context:
            return self.message
        details = ", ".join(f"{key}={value}" for key, value in self.context.items())
        return f"{self.message} ({details})"


class ConfigurationError(OptimizerError):
    """Invalid configuration, manifest or data file."""

    exit_code = 2


class DomainError(OptimizerError):
    """Argument outside the mathematical domain of an operation."""

    exit_code = 2


class ResourceError(OptimizerError):
    """Request that would cost more than the configured limits allow."""


class EvaluationError(OptimizerError):
    """A response function or quadrature failed."""


class ModelError(OptimizerError):
    """A physical model invariant was breached upstream."""


class IntegrationError(OptimizerError):
    """The ODE integrator could not complete the propagation."""
