"""
Exception taxonomy for the decomposition toolkit
"""


class BanachKLError(Exception):
    """Base class for every error raised by the toolkit"""


class KernelDomainError(BanachKLError, ValueError):
    """Argument outside the domain of a kernel or an analytic oracle"""


class KernelConstructionError(BanachKLError, ValueError):
    """Invalid kernel spec, grid or user matrix"""


class SupportMismatchError(BanachKLError, ValueError):
    """Dual functional supported outside the covariance grid"""


class DimensionMismatchError(BanachKLError, ValueError):
    """Vector length does not match the grid size"""


class DegeneratePivotError(BanachKLError, ValueError):
    """Rank-one split requested on a pivot with zero variance"""


class StepIndexError(BanachKLError, IndexError):
    """Step index outside the recorded decomposition"""


class SamplingError(BanachKLError, ValueError):
    """Invalid sampling request or degenerate sample batch"""


class ConditioningError(BanachKLError, ValueError):
    """Invalid conditioning request"""


class SourceMismatchError(BanachKLError, ValueError):
    """Two decompositions were not computed from the same covariance"""


class OracleRangeError(BanachKLError, ValueError):
    """Oracle comparison requested beyond the grid resolution"""


class ConfigurationError(BanachKLError):
    """Malformed run configuration or input file"""


class NumericalInvariantError(BanachKLError, ArithmeticError):
    """A mathematical invariant failed beyond round-off tolerance"""


class AcceptanceCheckError(BanachKLError):
    """A verification report did not pass"""
