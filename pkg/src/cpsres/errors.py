"""Exception hierarchy shared by all modules."""


class CPSResError(Exception):
    """Base class for every error raised by the toolkit."""


class ContractViolation(CPSResError, ValueError):
    """Inputs do not satisfy an operation's preconditions."""


class NumericError(CPSResError, ArithmeticError):
    pass


class DivergenceError(NumericError):
    def __init__(self, step: int, norm: float):
        self.step = step
        self.norm = norm
        super().__init__(f"state norm {norm:.3e} exceeded overflow guard at step {step}")


class NotSettledError(CPSResError):
    def __init__(self, last_deviation: float, message: str | None = None):
        self.last_deviation = last_deviation
        super().__init__(message or f"output never settled; last deviation {last_deviation:.6g}")


class UnsupportedOperation(CPSResError):
    pass


class NonRealizableSelection(CPSResError):
    pass


class DecompositionFailure(CPSResError):
    pass


class CannotNormalize(CPSResError):
    pass


class IncompleteEvaluation(CPSResError):
    pass


class CombinatorialGuard(CPSResError):
    pass


class EmptyPoolError(CPSResError):
    pass


class UndefinedRatio(CPSResError, ZeroDivisionError):
    pass


class ConfigError(CPSResError):
    """Scenario configuration failed validation."""
