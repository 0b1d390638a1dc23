"""Exception hierarchy shared across the package.

DataError covers everything caused by bad input files or datasets and maps
to CLI exit code 2; NumericalError maps to exit code 3.
"""


class EcgClfError(Exception):
    pass


class DataError(EcgClfError):
    pass


class MalformedFile(DataError):
    pass


class TooShort(DataError):
    pass


class NonFinite(DataError):
    pass


class UnknownLabel(DataError):
    pass


class DuplicateId(DataError):
    pass


class MissingFile(DataError):
    pass


class ClassTooSmall(DataError):
    pass


class TooShortForDepth(DataError):
    pass


class BadShape(EcgClfError):
    pass


class NegativeInput(EcgClfError):
    pass


class ShapeMismatch(EcgClfError):
    pass


class BadConfig(EcgClfError):
    pass


class IncompatibleShapes(EcgClfError):
    pass


class NoValidElements(EcgClfError):
    pass


class EmptySequence(EcgClfError):
    pass


class NumericalError(EcgClfError):
    pass


class NonFiniteLoss(NumericalError):
    pass
