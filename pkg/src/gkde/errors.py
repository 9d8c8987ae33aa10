"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand dimensions do not agree."""


class DomainError(ValueError):
    """Input outside an operation's mathematical domain (e.g. log of 0)."""


class ContractError(ValueError):
    """A documented precondition was violated by the caller."""


class PlacementError(RuntimeError):
    """Synthetic class centers could not be placed at the requested separation."""


class ConfigError(ValueError):
    """Invalid run configuration. ``field`` names the offending key."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class BankFormatError(ValueError):
    """Malformed model-bank file. ``offset`` is the byte position of the fault."""

    def __init__(self, message, offset=None, path=None):
        where = ""
        if path is not None:
            where += f" in {path}"
        if offset is not None:
            where += f" at byte offset {offset}"
        super().__init__(message + where)
        self.offset = offset
        self.path = path


class BankVersionError(BankFormatError):
    """Model-bank format version is not supported by this build."""
