"""Typed errors with stable CLI exit codes."""


class CspcountError(Exception):
    category = "internal"
    exit_code = 9


class ParseError(CspcountError):
    """Malformed instance text; carries a 1-based line number when known."""

    category = "syntax"
    exit_code = 2

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = "line %d: %s" % (line, message)
        super().__init__(message)


class RegimeError(CspcountError):
    """Parameter conditions violated badly enough that a procedure cannot certify its output."""

    category = "regime"
    exit_code = 3


class ResourceError(CspcountError):
    """A configured cap (enumeration space, tree nodes, resamples) was exceeded."""

    category = "resource"
    exit_code = 4


class UnsatError(CspcountError):
    category = "unsat"
    exit_code = 5


class InternalError(CspcountError):
    category = "internal"
    exit_code = 9
