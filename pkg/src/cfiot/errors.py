"""Exception types raised across the package."""


class ConfigError(ValueError):
    """Invalid configuration or out-of-domain argument."""


class GenerationError(RuntimeError):
    """A random field or dataset could not be generated."""


class ConditioningError(ArithmeticError):
    """A quantity that is positive analytically came out non-positive numerically."""


class ConvergenceError(RuntimeError):
    """A fixed-point iteration did not converge within its budget.

    Attributes
    ----------
    residual : float
        Last observed step size.
    iterations : int
        Number of iterations performed.
    """

    def __init__(self, msg, residual=float("nan"), iterations=0):
        super().__init__(msg)
        self.residual = residual
        self.iterations = iterations


class InfeasibleError(RuntimeError):
    """A power-control target cannot be met.

    Attributes
    ----------
    devices : list of int
        Devices whose coefficient left [0, 1] (or that could not be served).
    """

    def __init__(self, msg, devices=()):
        super().__init__(msg)
        self.devices = list(devices)


class SolverError(RuntimeError):
    """The conic feasibility solver returned neither a point nor a verdict."""


class TrainingError(RuntimeError):
    """Levenberg-Marquardt training broke down."""
