"""Exception types shared across the package."""


class MapSegError(Exception):
    """Base class for all package errors."""


class DataError(MapSegError):
    """Invalid input data: dimension mismatch, empty mask, bad values."""


class FormatError(MapSegError):
    """File could not be decoded: bad header, wrong format, wrong depth."""
