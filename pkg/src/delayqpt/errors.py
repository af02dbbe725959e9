"""Exception hierarchy shared by all reconstruction pipelines."""


class QPTError(Exception):
    """Base class for errors raised by this package."""


class InvalidArgument(QPTError, ValueError):
    pass


class ResourceLimit(QPTError, MemoryError):
    pass


class InvalidOperator(QPTError, ValueError):
    pass


class InvalidRotation(QPTError, ValueError):
    pass


class Unsupported(QPTError, ValueError):
    pass


class ConvergenceFailure(QPTError, RuntimeError):
    pass


class DegenerateTrajectory(QPTError, ValueError):
    """The signal carries no frequency information (e.g. v parallel to r)."""


class InvalidGeometry(QPTError, ValueError):
    pass


class DegenerateGrid(QPTError, ValueError):
    pass


class InconsistentData(QPTError, ValueError):
    pass


class StillAmbiguous(QPTError, RuntimeError):
    def __init__(self, msg, margin=None):
        super().__init__(msg)
        self.margin = margin


class Divergence(QPTError, FloatingPointError):
    pass


class OptimizationFailure(QPTError, RuntimeError):
    pass


class Stalled(QPTError, RuntimeError):
    """Line search gave up; ``x`` holds the last accepted iterate."""

    def __init__(self, msg, x=None, history=None):
        super().__init__(msg)
        self.x = x
        self.history = history
