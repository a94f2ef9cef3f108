"""Exception hierarchy shared by the solvers, the CLI and the HTTP layer."""
from typing import Any, Dict, Optional


class ThinFlowError(Exception):
    """Base error. ``code`` is the machine-readable tag printed by the CLI."""

    code = "error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def diagnostic(self) -> str:
        """Single-line machine-parsable form: ``error=<code> message="..." k=v``."""
        parts = [f"error={self.code}", f'message="{self.message}"']
        parts.extend(f"{key}={value}" for key, value in sorted(self.details.items()))
        return " ".join(parts)


class ConfigError(ThinFlowError):
    code = "config"


class NumericError(ThinFlowError):
    code = "numeric"


class CharacteristicError(NumericError):
    code = "characteristic"


class InterpolationError(NumericError):
    code = "interpolation"


class CompatibilityError(NumericError):
    code = "compatibility"

    def __init__(self, message: str, defect: float, details: Optional[Dict[str, Any]] = None):
        super().__init__(message, {**(details or {}), "defect": f"{defect:.6e}"})
        self.defect = defect


class ConvergenceError(NumericError):
    code = "convergence"


class CFLError(NumericError):
    code = "cfl"

    def __init__(self, message: str, max_dt: float):
        super().__init__(message, {"max_dt": f"{max_dt:.6e}"})
        self.max_dt = max_dt


class DecayError(NumericError):
    code = "decay"


class HorizonError(NumericError):
    code = "horizon"


class DependencyError(ThinFlowError):
    code = "dependency"


EXIT_CODES = {
    ConfigError: 2,
    NumericError: 3,
    DependencyError: 4,
}


def exit_code_for(exc: ThinFlowError) -> int:
    for klass, code in EXIT_CODES.items():
        if isinstance(exc, klass):
            return code
    return 1
