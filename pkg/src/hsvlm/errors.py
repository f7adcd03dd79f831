"""Exception hierarchy shared across the package.

Data/format problems derive from DataError (CLI exit 2), numerical
failures from NumericalError (CLI exit 3).
"""


class HsvlmError(Exception):
    pass


class DataError(HsvlmError):
    pass


class NumericalError(HsvlmError):
    pass


# numeric core
class NearZeroNorm(NumericalError):
    pass


class IndexOutOfRange(DataError):
    pass


class UnsupportedOperator(HsvlmError):
    pass


class ShapeMismatch(DataError):
    pass


# file formats
class BadMagic(DataError):
    pass


class TruncatedPayload(DataError):
    pass


class DimensionOverflow(DataError):
    pass


class VersionMismatch(DataError):
    pass


class IoError(DataError):
    pass


# scene / split handling
class RankDeficient(DataError):
    pass


class OutOfBounds(DataError):
    pass


class EmptyClass(DataError):
    pass


# prototypes
class DimMismatch(DataError):
    pass


class DuplicateName(DataError):
    pass


# encoder / trainer
class InvalidConfig(DataError):
    pass


class PrototypeDimMismatch(DataError):
    pass


class DivergedLoss(NumericalError):
    pass


# contrastive loss
class OverlapError(DataError):
    pass


class EmptyBatch(DataError):
    pass


class DegenerateSpec(DataError):
    pass


# evaluation
class LabelOutOfRange(DataError):
    pass


class EmptyEvaluation(DataError):
    pass


class PaletteTooSmall(DataError):
    pass
