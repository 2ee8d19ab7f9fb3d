"""Exception hierarchy.

State and regime numbers carried by exceptions are 1-based, matching the
labels used in files and printed tables.
"""


class MarkovMixError(Exception):
    """Base class for all package errors."""


class ValidationError(MarkovMixError, ValueError):
    """A parameter set violates a model invariant."""


class DimensionMismatch(ValidationError):
    pass


class NegativeOffDiagonal(ValidationError):
    def __init__(self, regime, row, col, value):
        self.regime, self.row, self.col, self.value = regime, row, col, value
        super().__init__(
            f"regime {regime}: off-diagonal rate q[{row},{col}] = {value!r} is negative"
        )


class ProbabilityRowSum(ValidationError):
    """A probability vector does not sum to one, or has a negative entry."""

    def __init__(self, what, row, observed):
        self.what, self.row, self.observed = what, row, observed
        where = f" row {row}" if row is not None else ""
        super().__init__(f"{what}{where}: invalid probability row (sum = {observed!r})")


class NonZeroDiagonal(ValidationError):
    def __init__(self, state, value):
        self.state, self.value = state, value
        super().__init__(f"embedded chain has pi[{state},{state}] = {value!r}, expected 0")


class AbsorbingState(MarkovMixError):
    def __init__(self, state, regime=None):
        self.state, self.regime = state, regime
        tag = f" (regime {regime})" if regime is not None else ""
        super().__init__(f"state {state}{tag} has zero exit rate; embedded chain undefined")


class PathOverflow(MarkovMixError):
    def __init__(self, path_id, cap):
        self.path_id, self.cap = path_id, cap
        super().__init__(f"path {path_id} exceeded the jump cap of {cap}")


class InconsistentPath(MarkovMixError):
    def __init__(self, path_id, reason):
        self.path_id, self.reason = path_id, reason
        super().__init__(f"path {path_id}: {reason}")


class WeightRowSum(MarkovMixError):
    def __init__(self, row, observed):
        self.row, self.observed = row, observed
        super().__init__(f"weight row {row} sums to {observed!r}, expected 1")


class EstimationError(MarkovMixError):
    """A closed-form estimator is undefined on the given data."""


class NoOccupation(EstimationError):
    def __init__(self, state, regime=None):
        self.state, self.regime = state, regime
        tag = f", regime {regime}" if regime is not None else ""
        super().__init__(f"no occupation time in state {state}{tag}; rates undefined")


class NoInitial(EstimationError):
    def __init__(self, state):
        self.state = state
        super().__init__(f"no path starts in state {state}; switching probabilities undefined")


class NoExit(EstimationError):
    def __init__(self, state):
        self.state = state
        super().__init__(f"no jumps out of state {state}; pooled embedded chain undefined")


class InfeasiblePath(MarkovMixError):
    def __init__(self, path_id):
        self.path_id = path_id
        super().__init__(f"path {path_id} has zero likelihood under every regime")


class LabelRequired(MarkovMixError):
    pass


class MismatchedDataset(MarkovMixError):
    pass


class ParseError(MarkovMixError):
    def __init__(self, line, reason):
        self.line, self.reason = line, reason
        loc = f"line {line}: " if line is not None else ""
        super().__init__(f"{loc}{reason}")


class InvariantViolation(MarkovMixError):
    def __init__(self, record_id, reason):
        self.record_id, self.reason = record_id, reason
        super().__init__(f"record {record_id}: {reason}")


class NotConvergedWarning(UserWarning):
    pass
