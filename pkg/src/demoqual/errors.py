"""Exception types shared across the toolkit."""


class DemoqualError(Exception):
    """Base class for all toolkit errors."""


class FileMissing(DemoqualError):
    """A referenced data file does not exist."""


class SchemaViolation(DemoqualError):
    """A data file is structurally invalid (missing key, wrong arity)."""


class NonMonotonicTime(DemoqualError):
    """Timestamps in a trajectory are not strictly increasing."""


class EmptyDemonstration(DemoqualError):
    """A demonstration has too few samples to process."""


class EmptySet(DemoqualError):
    """An operation requires a non-empty demonstration set."""


class DegenerateData(DemoqualError):
    """Fewer distinct data points than mixture components."""


class SingularCovariance(DemoqualError):
    """A covariance (or precision sum) is not invertible."""


class SingularSystem(DemoqualError):
    """An undamped inverse was requested for a singular Jacobian."""


class UnknownFace(DemoqualError):
    """A face identifier is not one of the instrumented faces."""


class NoFeasiblePlan(DemoqualError):
    """The reference planner could not produce a clear, feasible path."""


class MissingSession(DemoqualError):
    """Adapter clustering requires session-1 results on both faces."""


class ZeroVariance(DemoqualError):
    """Correlation is undefined for a constant input vector."""


class LengthMismatch(DemoqualError):
    """Paired vectors have different lengths."""


class EmptyOutcomes(DemoqualError):
    """A success rate over zero outcomes is undefined."""
