"""Exception types shared across modules."""


class HJSolveError(Exception):
    """Base class for package errors."""


class DimensionMismatch(HJSolveError, ValueError):
    pass


class NonPositiveL(HJSolveError, ValueError):
    """A Lipschitz bound L <= 0 was supplied."""


class InvalidThetaFile(HJSolveError, ValueError):
    pass


class NumericalFailure(HJSolveError, RuntimeError):
    """Base for failures that map to exit code 1 in the CLI."""


class DivergenceDetected(NumericalFailure):
    def __init__(self, message, stage=None, iteration=None, trace=None):
        super().__init__(message)
        self.stage = stage
        self.iteration = iteration
        self.trace = trace


class NotConverged(NumericalFailure):
    def __init__(self, message, residual=None, trace=None):
        super().__init__(message)
        self.residual = residual
        self.trace = trace if trace is not None else []


class BlowUp(NumericalFailure):
    pass


class ConfigError(HJSolveError, ValueError):
    """Invalid configuration or usage (exit code 2)."""
