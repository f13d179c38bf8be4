"""Exception types shared across the package."""


class DomainError(ValueError):
    """A parameter lies outside the admissible range (e.g. a Bessel order <= -1)."""


class InputError(ValueError):
    """An input value is malformed, such as a non-finite argument."""


class GridMismatchError(ValueError):
    """A function or plan does not live on the grid it is combined with."""


class SingularPointError(ValueError):
    """A kernel was evaluated on the diagonal where it is not defined."""


class ConvergenceError(ArithmeticError):
    """A quadrature, limit or extrapolation failed to settle."""


class ConfigError(ValueError):
    """An experiment configuration is invalid."""
