"""Exception hierarchy shared by all tpflow modules."""


class TPFlowError(Exception):
    """Base class for every error raised by tpflow."""


class ConfigurationError(TPFlowError, ValueError):
    pass


class ParameterError(TPFlowError, ValueError):
    pass


class DimensionError(TPFlowError, ValueError):
    pass


class DegenerateCurveError(TPFlowError):
    """A curve whose speed drops below the regularity floor."""


class SelfIntersectionError(TPFlowError):
    """Two nodes (or a chord) came closer than the admissible floor.

    ``pair`` holds the offending node indices (or node index and offset)
    and ``distance`` the measured separation.
    """

    def __init__(self, message, pair=None, distance=None):
        super().__init__(message)
        self.pair = pair
        self.distance = distance


class PreconditionError(TPFlowError, ValueError):
    pass


class LinearAlgebraError(TPFlowError):
    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class StagnationError(TPFlowError):
    pass


class InsufficientSignalError(TPFlowError):
    pass
