"""Exception hierarchy.

Every error carries an ``exit_code`` so the CLI can map failures onto its
stable exit-status contract without a lookup table.
"""


class PPLError(Exception):
    exit_code = 1


class UsageError(PPLError, ValueError):
    exit_code = 1


class DataError(PPLError, ValueError):
    exit_code = 2


class NumericError(PPLError, ArithmeticError):
    exit_code = 4


# candidate sets / label space
class EmptySet(UsageError):
    pass


class FullSet(UsageError):
    pass


class OutOfRange(UsageError):
    pass


class CapExceeded(UsageError):
    pass


# generation models
class NormalizationFailure(UsageError):
    pass


class ImproperWeights(UsageError):
    pass


class Unsupported(UsageError):
    pass


# data files
class BadMagic(DataError):
    pass


class TruncatedFile(DataError):
    pass


class CountMismatch(DataError):
    pass


class FormatError(DataError):
    pass


class MissingLabels(DataError):
    pass


class NotComplementary(DataError):
    pass


# numerics
class DimensionMismatch(UsageError):
    pass


class BadWeights(UsageError):
    pass


class DegenerateDenominator(NumericError):
    pass


class NonFiniteGradient(NumericError):
    pass


class NonFiniteLoss(NumericError):
    pass
