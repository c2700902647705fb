"""Error taxonomy shared by the library and the command line.

Each class carries a distinct ``exit_code`` used by the CLI.
"""


class FieldBoundsError(Exception):
    exit_code = 1


class DimensionError(FieldBoundsError, ValueError):
    exit_code = 3


class FormatError(FieldBoundsError, ValueError):
    exit_code = 4


class ConfigError(FieldBoundsError, ValueError):
    exit_code = 5


class WeightError(FieldBoundsError, KeyError):
    exit_code = 6

    def __str__(self):
        # KeyError would otherwise repr() the message
        return str(self.args[0]) if self.args else ""


class IoError(FieldBoundsError, OSError):
    exit_code = 7


class RangeError(FieldBoundsError, ValueError):
    exit_code = 8


class TrainingError(FieldBoundsError, RuntimeError):
    exit_code = 9


class DegenerateBandError(FieldBoundsError, ValueError):
    exit_code = 10


class DegenerateSampleError(FieldBoundsError, ValueError):
    exit_code = 11


class EmptyGeometryError(FieldBoundsError, ValueError):
    exit_code = 12


ALL_ERRORS = (
    DimensionError,
    FormatError,
    ConfigError,
    WeightError,
    IoError,
    RangeError,
    TrainingError,
    DegenerateBandError,
    DegenerateSampleError,
    EmptyGeometryError,
)
