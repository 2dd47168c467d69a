"""Exception hierarchy shared across halfheat modules."""


class HalfheatError(Exception):
    """Base class for all halfheat errors."""


class DomainError(HalfheatError, ValueError):
    """An argument lies outside the domain of the operation (t <= 0, kappa < 0, ...)."""


class ConfigurationError(HalfheatError, ValueError):
    """Invalid measure document, solver controls or run configuration."""


class DivergenceError(HalfheatError, ArithmeticError):
    """The heat semigroup applied to the data is infinite (e.g. 4*lam*t >= 1)."""

    def __init__(self, message, value=float("inf")):
        super().__init__(message)
        self.value = value


class AccuracyError(HalfheatError, ArithmeticError):
    """Quadrature failed to reach the requested tolerance."""

    def __init__(self, message, error_estimate=None):
        super().__init__(message)
        self.error_estimate = error_estimate


class RegimeError(HalfheatError, ValueError):
    """A condition functional was requested outside its exponent regime."""


class MeasureTypeError(HalfheatError, TypeError):
    """Operation requires function-type data but the measure carries atoms."""


class SolverError(HalfheatError, RuntimeError):
    """Nonlinear solve or time stepping failed; ``state`` carries the partial run."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class NotBlownUpError(HalfheatError, ValueError):
    """A trace does not show enough growth to extrapolate a blow-up time."""


class ConsistencyError(HalfheatError, AssertionError):
    """Monotone iteration produced a non-monotone iterate beyond tolerance."""
