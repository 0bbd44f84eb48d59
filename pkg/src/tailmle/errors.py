"""Exception hierarchy shared by all modules."""


class TailMLEError(Exception):
    """Base class for every error raised by this package."""


class InvalidInput(TailMLEError, ValueError):
    pass


class InvalidK(InvalidInput):
    pass


class DomainViolation(TailMLEError, ValueError):
    """Profile parameter at or below ``-1/max(excess)``."""


class SupportViolation(TailMLEError, ValueError):
    """Some excess lies outside the support of the candidate GPD."""


class NoInteriorSolution(TailMLEError):
    """The likelihood equations have no solution inside the parameter region."""


class ConvergenceFailure(TailMLEError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DegenerateSample(TailMLEError):
    pass


class RequiresPositiveThreshold(TailMLEError, ValueError):
    pass


class QuadratureFailure(TailMLEError):
    pass


class InvalidModel(TailMLEError, ValueError):
    pass


class InfeasibleSchedule(TailMLEError, ValueError):
    pass
