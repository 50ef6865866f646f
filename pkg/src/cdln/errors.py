"""Exception types shared across the package."""


class CdlnError(Exception):
    """Base class for every error raised deliberately by this package."""


class DimensionError(CdlnError, ValueError):
    pass


class ConfigError(CdlnError, ValueError):
    pass


class ContractError(CdlnError, ValueError):
    pass


class DataError(CdlnError, ValueError):
    pass


class FormatError(CdlnError, ValueError):
    """Malformed input file (TSV or checkpoint)."""


class HarnessError(CdlnError, RuntimeError):
    """The verification harness itself could not produce a trustworthy answer."""


class UnsupportedVersionError(FormatError):
    """A checkpoint written with a format version this code cannot read."""
