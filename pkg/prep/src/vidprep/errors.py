"""Exception types raised by the asset preparation toolkit."""


class PrepError(Exception):
    """Base class for all toolkit failures."""


class DecodeError(PrepError):
    """A media source could not be opened or decoded."""


class FormatError(PrepError):
    """A binary or JSON artifact violates its documented layout."""


class LayoutError(PrepError):
    """A dataset archive does not match any supported directory layout."""
