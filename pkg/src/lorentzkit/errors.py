"""Exception hierarchy shared by every module."""


class LorentzError(Exception):
    """Base class for all errors raised by lorentzkit."""


class DimensionError(LorentzError, ValueError):
    pass


class ConfigurationError(LorentzError, ValueError):
    """Invalid configuration, curvature, or layer hyperparameter."""


class NumericDomainError(LorentzError, ArithmeticError):
    """A value fell outside the domain of a primitive (e.g. acosh below 1)."""


class NumericError(LorentzError, ArithmeticError):
    """Non-finite input where finite values are required."""


class ContractError(LorentzError, ValueError):
    """A documented precondition was violated by the caller."""


class DegenerateHyperplaneError(LorentzError, ValueError):
    pass


class StateError(LorentzError, RuntimeError):
    pass


class ConvergenceError(LorentzError, RuntimeError):
    pass


class TrainingAborted(LorentzError, RuntimeError):
    def __init__(self, message, parameter=None):
        super().__init__(message)
        self.parameter = parameter
