"""Exception hierarchy shared by all modules."""


class KedmdError(Exception):
    """Base class for every error raised by this package."""


class ConfigurationError(KedmdError, ValueError):
    """Invalid or unsupported parameter combination."""


class DomainError(KedmdError, ValueError):
    """Argument outside the domain of a function."""


class DuplicatePointsError(KedmdError, ValueError):
    def __init__(self, i, j, distance):
        self.pair = (i, j)
        self.distance = distance
        super().__init__(
            f"points {i} and {j} coincide (distance {distance:.3e}); "
            "the kernel matrix would be singular"
        )


class FactorizationError(KedmdError, ArithmeticError):
    def __init__(self, minor, size, lam):
        self.minor = minor
        self.size = size
        self.lam = lam
        super().__init__(
            f"Cholesky factorization of K + {lam:g} I (size {size}) failed: leading "
            f"minor of order {minor} is not positive definite; increase the "
            "regularization parameter lambda"
        )


class ConvergenceError(KedmdError, ArithmeticError):
    def __init__(self, message, last_iterate=None):
        self.last_iterate = last_iterate
        super().__init__(message)


class DatasetError(KedmdError, ValueError):
    """Cluster data violating the sampling requirements."""


class InfeasibleError(KedmdError, RuntimeError):
    """The optimal control problem has no admissible control sequence."""


class NumericalError(KedmdError, ArithmeticError):
    """Non-finite values encountered during optimization."""


class ClosedLoopAborted(InfeasibleError):
    """Raised by the closed loop; carries the partial trace."""

    def __init__(self, step, trace, cause):
        self.step = step
        self.trace = trace
        self.cause = cause
        super().__init__(f"closed loop aborted at step {step}: {cause}")
