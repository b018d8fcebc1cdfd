
class RsrsError(Exception):
    """"""


class ShapeError(RsrsError, ValueError):
    """"""


class RankDeficientError(RsrsError):
    """"""

    def __init__(self, message, condition=float("inf")):
        super(RankDeficientError, self).__init__(message)
        self.condition = condition


class NullspaceError(RsrsError):
    """"""


class SingularPivotError(RsrsError):
    """"""

    def __init__(self, message, pivot=-1):
        super(SingularPivotError, self).__init__(message)
        self.pivot = pivot


class TreeError(RsrsError):
    """"""


class OracleError(RsrsError):
    """"""


class UnsupportedOracleError(OracleError):
    """"""


class InsufficientSamplesError(RsrsError):
    """"""

    def __init__(self, message, deficit=0, box=None, level=None):
        super(InsufficientSamplesError, self).__init__(message)
        self.deficit = deficit
        self.box = box
        self.level = level


class FinalSkeletonTooLargeError(InsufficientSamplesError):
    """"""


class FactorizationError(RsrsError):
    """"""

    def __init__(self, message, box=None):
        super(FactorizationError, self).__init__(message)
        self.box = box


class ContainerError(RsrsError):
    """"""


class ConfigError(RsrsError):
    """"""

    def __init__(self, message, field=""):
        super(ConfigError, self).__init__(message)
        self.field = field
