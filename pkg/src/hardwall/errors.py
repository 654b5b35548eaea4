"""Exception types raised across the package."""

from __future__ import annotations


class HardwallError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(HardwallError, ValueError):
    """An argument is outside its admissible range."""


class DomainError(HardwallError, ValueError):
    """An input violates a structural precondition (non-zero sum, non-convexity, ...)."""


class IntegrabilityError(HardwallError, ArithmeticError):
    """exp(-V) could not be integrated to the requested accuracy."""


class ConfigurationError(HardwallError, ValueError):
    """Invalid experiment or integrator configuration (unstable dt, unknown key, ...)."""


class NumericalBlowupError(HardwallError, FloatingPointError):
    """A non-finite value appeared during time integration."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


class NumericalError(HardwallError, ArithmeticError):
    """A linear solve or factorization broke down."""


class AcceptanceTooLowError(HardwallError, RuntimeError):
    """Rejection sampling exhausted its attempt budget."""

    def __init__(self, attempts: int, message: str = ""):
        self.attempts = attempts
        super().__init__(message or f"no acceptance after {attempts} attempts")


class BudgetError(HardwallError, RuntimeError):
    """A requested run would exceed the configured compute budget."""
