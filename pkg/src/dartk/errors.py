"""Exception hierarchy.

Every error carries an ``exit_code`` so the command line can map failures
without a lookup table: 2 for data/parse problems, 3 for numeric failures.
"""


class DartkError(Exception):
    exit_code = 2


class DataError(DartkError, ValueError):
    exit_code = 2


class NumericError(DartkError, ArithmeticError):
    exit_code = 3


# ingest
class MissingCompanionFile(DataError, FileNotFoundError):
    pass


class UnsupportedEncoding(DataError):
    pass


class TruncatedData(DataError):
    pass


class MissingChannel(DataError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class IoFailure(DataError, OSError):
    pass


class ChecksumMismatch(DataError):
    pass


class InvalidManifest(DataError):
    pass


# synth
class InvalidBand(DataError):
    pass


class RateMismatch(DataError):
    pass


# preprocess
class IrrationalRatio(DataError):
    pass


class UpsamplingUnsupported(DataError):
    pass


class TooShort(DataError):
    pass


class LengthMismatch(DataError):
    pass


# autodiff / dar
class ShapeMismatch(DataError):
    pass


class DegenerateBatch(DataError):
    pass


class NonScalarLoss(DataError):
    pass


class InvalidConfig(DataError):
    pass


class EmptySplit(DataError):
    pass


class EmptyValidation(EmptySplit):
    pass


class VersionMismatch(DataError):
    pass


class CorruptFile(DataError):
    pass


class NonFiniteLoss(NumericError):
    pass


# baselines
class TooFewMarkers(DataError):
    pass


class RankDeficient(NumericError):
    pass


class InvalidK(DataError):
    pass


class NoConvergence(NumericError):
    pass


# metrics
class ZeroRange(DataError):
    pass


class ConstantInput(DataError):
    pass


class ZeroSignal(DataError):
    pass


class ZeroVector(DataError):
    pass


class Empty(DataError):
    pass


# stats
class ConstantDifferences(DataError):
    pass


class TooFew(DataError):
    pass


class TooMany(DataError):
    pass


# eval
class TooFewSubjects(DataError):
    pass
