from typing import Optional

__all__ = (
    "MobilityLabError",
    "ParameterError",
    "DomainError",
    "CapacityError",
    "StructureError",
    "ContractError",
    "ConvergenceError",
)


class MobilityLabError(Exception):
    """Base class for every failure raised by the library."""

    tag = "error"
    exit_code = 2


class ParameterError(MobilityLabError):
    tag = "parameter"


class DomainError(MobilityLabError):
    tag = "domain"


class CapacityError(MobilityLabError):
    tag = "capacity"


class StructureError(MobilityLabError):
    tag = "structure"


class ContractError(MobilityLabError):
    tag = "contract"


class ConvergenceError(MobilityLabError):
    tag = "convergence"
    exit_code = 3

    def __init__(
        self, message: str, best_residual: Optional[float] = None, iterations: int = 0
    ) -> None:
        super().__init__(message)
        self.best_residual = best_residual
        self.iterations = iterations
