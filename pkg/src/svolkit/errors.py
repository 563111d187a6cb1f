"""Exception types shared across the toolkit."""


class NumericalDomainError(ArithmeticError):
    """A pricing formula produced a non-finite or out-of-domain intermediate."""


class QuadratureError(RuntimeError):
    """An inversion integral could not be resolved to the requested tolerance."""


class NoSolutionError(ValueError):
    """Implied-volatility inversion has no solution within the solver bounds."""


class ChainSchemaError(ValueError):
    """An option-chain file does not match the expected CSV schema."""


class EmptyChainError(ValueError):
    """An operation that needs quotes received none."""


class CalibrationError(RuntimeError):
    """Calibration could not evaluate its objective on a quote."""
