"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable scripting contract (2 usage/config, 3 numerical, 4 I/O).
"""


class WhiskerRCError(Exception):
    exit_code = 1


class UsageError(WhiskerRCError):
    exit_code = 2


class ConfigError(UsageError):
    pass


class ArgumentError(UsageError, ValueError):
    pass


class InvalidGeometryError(ArgumentError):
    pass


class ResolutionError(ArgumentError):
    pass


class ExtentError(ArgumentError):
    pass


class WindowError(ArgumentError):
    pass


class ShapeError(ArgumentError):
    pass


class LabelError(ArgumentError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class SampleSizeError(ArgumentError):
    pass


class DegenerateTargetError(ArgumentError):
    pass


class StageDependencyError(UsageError):
    pass


class NumericalError(WhiskerRCError, ArithmeticError):
    exit_code = 3


class DivergenceError(NumericalError):
    pass


class SingularityError(NumericalError):
    pass


class RankError(NumericalError):
    def __init__(self, message, usable_d=None):
        super().__init__(message)
        self.usable_d = usable_d


class BoundaryError(WhiskerRCError):
    """The robot path left the terrain map; ends a navigation episode."""


class ArtifactIOError(WhiskerRCError, OSError):
    exit_code = 4
