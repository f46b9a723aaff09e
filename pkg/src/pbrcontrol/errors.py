"""Exception hierarchy shared by every module of the toolkit."""


class PBRError(Exception):
    """Base class for all toolkit failures."""


class NoInteriorOptimum(PBRError):
    """Raised when f'(0) <= r, so no biomass level maximizes f(x) - r x in (0, inf)."""


class PolicyInvalid(PBRError):
    """Raised for malformed control policies or unreachable singular arcs."""


class StateNegative(PBRError):
    """Raised when integration drives the biomass below zero."""


class NoPositiveFixedPoint(PBRError):
    """Raised when a policy admits no positive periodic orbit (washout only)."""


class AssumptionViolated(PBRError):
    """Raised when f'(0) * T_bar <= r * T: the closed reactor cannot sustain biomass."""


class DegenerateMonodromy(PBRError):
    """Raised when the periodic costate is not uniquely determined."""


class Infeasible(PBRError):
    """Raised when a candidate control structure has no admissible periodic orbit."""


class NoSolution(PBRError):
    """Raised when only washout can occur, whatever the control."""


class SolverStalled(PBRError):
    """Raised when no candidate structure admits a periodic orbit."""


class WindowOutOfRange(PBRError):
    """Raised when a harvest window does not fit inside the period."""


class SchemaError(PBRError):
    """Raised for configuration files that do not match the schema.

    The offending key path is available as ``path``.
    """

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class IoError(PBRError):
    """Raised when a configuration or solution file cannot be read."""
