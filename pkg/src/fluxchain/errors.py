from __future__ import annotations


class FluxchainError(Exception):
    """Base class for all package errors."""


class ParameterError(FluxchainError, ValueError):
    pass


class NumericalError(FluxchainError, ArithmeticError):
    pass


class LabelingError(FluxchainError):
    """Dressed states could not be matched to bare labels unambiguously."""


class DegenerateDriveError(FluxchainError):
    pass


class IntegrationError(NumericalError):
    pass


class OptimizationError(FluxchainError):
    pass


class ConfigError(FluxchainError):
    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class VerificationError(FluxchainError):
    pass
