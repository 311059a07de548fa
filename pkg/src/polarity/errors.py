"""Exception hierarchy shared by every module of the package."""


class PolarityError(Exception):
    """Base class for all numeric refusals raised by this package."""


class OutOfBox(PolarityError):
    pass


class NotDifferentiable(PolarityError):
    pass


class BoxExcludesOrigin(PolarityError):
    pass


class EmptyDomain(PolarityError):
    pass


class Unsupported(PolarityError):
    """No closed-form rule applies; callers fall back to the grid path."""


class DegenerateEpigraph(PolarityError):
    pass


class TruncationError(PolarityError):
    """A sup was attained on the input box boundary while running in strict mode."""


class SingularHessian(PolarityError):
    pass


class EmptyPolarGradient(PolarityError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class FrameOutOfRange(PolarityError):
    pass


class RayLinearAtY(PolarityError):
    pass


class NoFeasiblePair(PolarityError):
    pass


class AdvisoryFailure(PolarityError):
    pass


class TimesOutOfRange(PolarityError):
    pass


class BeyondMaximalTime(PolarityError):
    """Requested frames lie past the estimated maximal existence time.

    ``path`` holds the frames that could be produced (times up to ``t_max``).
    """

    def __init__(self, message, t_max=None, path=None):
        super().__init__(message)
        self.t_max = t_max
        self.path = path


class AdvisoryWarning(UserWarning):
    """A sampled hypothesis check failed under the ``warn`` policy."""
