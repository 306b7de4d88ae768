"""Exception hierarchy shared by all ratesplit modules."""


class RateSplitError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(RateSplitError, ValueError):
    """Array shapes or counts are invalid or inconsistent."""


class DomainError(RateSplitError, ValueError):
    """A parameter lies outside its admissible range."""


class DegenerateInputError(RateSplitError, ValueError):
    """Input is degenerate (e.g. a zero channel vector)."""


class PreconditionError(RateSplitError, ValueError):
    """An operation precondition is violated."""


class InfeasibleZFError(RateSplitError):
    """Zero-forcing needs at least as many transmit antennas as users."""


class ConditioningError(RateSplitError):
    """Channel estimate is too close to rank deficient."""


class InfeasibleOuterError(RateSplitError):
    """No null space left for an outer (inter-group) precoder."""


class SearchError(RateSplitError):
    """A scalar search failed to converge within its evaluation budget."""


class NumericalFailure(RateSplitError):
    """An iterative algorithm lost a guaranteed property (e.g. monotonicity)."""


class DualSearchError(NumericalFailure):
    """Bisection on the power-constraint multiplier could not bracket a root."""


class UnsupportedTopology(RateSplitError, ValueError):
    """The multi-cell topology is not one the layered planner handles."""

    def __init__(self, reasons):
        self.reasons = list(reasons)
        super().__init__("; ".join(self.reasons))


class ConfigError(RateSplitError, ValueError):
    """Experiment configuration failed validation.

    ``problems`` lists every violated field, not only the first.
    """

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.problems))
