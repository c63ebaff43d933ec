"""Exception hierarchy shared by all submodules."""


class BernoulliLinesError(Exception):
    """Base class for every error raised by this package."""


class StepViolationError(BernoulliLinesError, ValueError):
    def __init__(self, index, step):
        self.index = index
        self.step = step
        super().__init__(
            f"increment at index {index} is {step}, expected 0 or 1"
        )


class DimensionMismatchError(BernoulliLinesError, ValueError):
    pass


class InfeasibleBoundaryError(BernoulliLinesError, ValueError):
    """Boundary data for which the avoiding set cannot be certified non-empty.

    ``failed`` lists the violated feasibility conditions (1, 2 and/or 3).
    """

    def __init__(self, message, failed=()):
        self.failed = tuple(failed)
        super().__init__(message)


class CapExceededError(BernoulliLinesError, RuntimeError):
    """Brute-force enumeration would exceed the configured cap."""

    def __init__(self, size, cap):
        self.size = size
        self.cap = cap
        super().__init__(f"enumeration size {size} exceeds cap {cap}")


class DegenerateDenominatorError(BernoulliLinesError, ZeroDivisionError):
    pass


class MaxTriesExceededError(BernoulliLinesError, RuntimeError):
    def __init__(self, tries):
        self.tries = tries
        super().__init__(f"no admissible candidate after {tries} tries")


class InadmissibleStateError(BernoulliLinesError, ValueError):
    pass


class IncompatibleSpecError(BernoulliLinesError, ValueError):
    pass


class DomainError(BernoulliLinesError, ValueError):
    pass


class QuadratureError(BernoulliLinesError, RuntimeError):
    pass


class WindowTooSmallError(BernoulliLinesError, ValueError):
    pass


class ConfigError(BernoulliLinesError, ValueError):
    pass
