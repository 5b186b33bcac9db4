"""Exception hierarchy shared by the library and the command line driver."""


class VGAError(Exception):
    """Base class for every error raised by hypervga."""


class InputError(VGAError, ValueError):
    """Invalid user input: malformed GeoJSON, bad parameters, empty grids."""


class GeometryError(InputError):
    pass


class GraphFormatError(VGAError, ValueError):
    """A VGACSR03 file could not be read."""


class BadMagicError(GraphFormatError):
    pass


class VersionError(GraphFormatError):
    pass


class TruncatedFileError(GraphFormatError):
    pass


class ChecksumError(GraphFormatError):
    pass


class CorruptStreamError(VGAError, ValueError):
    """A varint stream ended early or held an over-long encoding."""


class OrderingError(VGAError, ValueError):
    """Neighbour rows or producer batches arrived out of order."""
