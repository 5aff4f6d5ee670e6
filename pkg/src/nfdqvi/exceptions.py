"""Exception hierarchy shared by every module."""


class NFDQVIError(Exception):
    """Base class for all package errors."""


class DomainError(NFDQVIError, ValueError):
    """An argument lies outside the domain of the operation."""


class ShapeError(NFDQVIError, ValueError):
    """Array shapes or grids do not match."""


class ConfigError(NFDQVIError, ValueError):
    """A problem description or run configuration violates an invariant.

    ``field`` names the offending entry (dotted path) when known.
    """

    def __init__(self, message, field=None):
        self.reason = message
        if field:
            message = f"{field}: {message}"
        super().__init__(message)
        self.field = field


class CertificationError(NFDQVIError):
    """Problem data fails a structural requirement of the certified family."""


class NonConvergenceError(NFDQVIError, RuntimeError):
    """An iteration hit its cap before meeting its tolerance.

    The last iterate and residual are kept on the exception so callers can
    inspect how far the iteration got.
    """

    def __init__(self, message, *, last=None, residual=None, iterations=None, node=None):
        super().__init__(message)
        self.last = last
        self.residual = residual
        self.iterations = iterations
        self.node = node
