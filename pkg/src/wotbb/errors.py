"""Exception types shared across solvers; the CLI maps them to exit codes."""


class ValidationError(ValueError):
    """Malformed input: bad shapes, weights, dimensions or parameters."""


class InfeasibleError(RuntimeError):
    """No martingale coupling exists; ``certificate`` explains why."""

    def __init__(self, message, certificate=None):
        super().__init__(message)
        self.certificate = certificate


class NonConvergenceError(RuntimeError):
    def __init__(self, message, last_gap=None, iterations=None):
        super().__init__(message)
        self.last_gap = last_gap
        self.iterations = iterations


class InternalError(AssertionError):
    """A built-in consistency check failed (solver disagreement, broken certificate)."""
