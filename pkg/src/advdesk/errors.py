"""Exception hierarchy shared by every advdesk module."""


class AdvdeskError(Exception):
    """Base class for all advdesk errors."""


class ShapeError(AdvdeskError):
    """Array dimensions do not match the operation's contract."""


class ParameterError(AdvdeskError):
    """A scalar argument is outside its valid range."""


class ConfigError(AdvdeskError):
    """Invalid experiment configuration (unknown key, missing field, bad value)."""


class ParseError(AdvdeskError):
    """A file (IDX, CSV, PGM, JSON) could not be decoded."""


class DivergenceError(AdvdeskError):
    """Training produced a non-finite loss."""


class NumericError(AdvdeskError):
    """An iterative numerical routine violated its accuracy contract."""


class MigrationError(AdvdeskError):
    """A persisted artifact carries an unsupported schema_version."""


class UndefinedAucError(AdvdeskError):
    """ROC AUC requested for scores containing only one label."""
