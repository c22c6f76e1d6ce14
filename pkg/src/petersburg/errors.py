"""Exception hierarchy shared by all modules."""


class PetersburgError(Exception):
    """Base class for errors raised by this package."""


class DomainError(PetersburgError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class ResourceError(PetersburgError):
    """A brute-force computation would exceed its enumeration bound."""


class NumericalError(PetersburgError, ArithmeticError):
    """A numerical procedure failed to reach its tolerance."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class ConfigError(PetersburgError, ValueError):
    """A configuration document is malformed or violates a hypothesis."""

    def __init__(self, message, field=None, line=None):
        self.field = field
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)
