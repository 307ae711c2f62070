"""Exception types shared across the toolkit.

Everything user-facing derives from CptError so the CLI can map failures to
exit codes without chasing module-specific hierarchies. Validation-ish errors
also derive from ValueError so plain library callers get the expected class.
"""


class CptError(Exception):
    pass


class InputError(CptError, ValueError):
    """Bad arguments or malformed data (CLI exit code 2)."""


class EmptyResult(CptError):
    """An operation legitimately produced nothing (CLI exit code 4)."""


# --- raster ---------------------------------------------------------------

class EmptyIntersection(InputError):
    pass


class DimensionMismatch(InputError):
    pass


class DuplicateColor(InputError):
    pass


class ShapeMismatch(InputError):
    pass


# --- prompts --------------------------------------------------------------

class EmptyQuery(InputError):
    pass


class EmptyText(InputError):
    pass


class BadMaskCount(InputError):
    pass


# --- batching -------------------------------------------------------------

class NoProposals(InputError):
    pass


# --- scoring --------------------------------------------------------------

class NonFiniteLogit(InputError):
    pass


class CandidateMismatch(InputError):
    pass


class GoldMissing(InputError):
    pass


class MissingTemplate(InputError):
    pass


class TokenNotCandidate(InputError):
    pass


# --- cps search -----------------------------------------------------------

class AllDiscarded(EmptyResult):
    pass


# --- evalkit --------------------------------------------------------------

class PoolTooSmall(InputError):
    pass


# --- dataio ---------------------------------------------------------------

class ParseError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(InputError):
    def __init__(self, line: int, field: str, message: str):
        super().__init__(f"line {line}: field {field!r}: {message}")
        self.line = line
        self.field = field


# --- backend --------------------------------------------------------------

class BackendError(CptError):
    """Base for scoring-backend failures (CLI exit code 3)."""

    retryable = False


class TransportError(BackendError):
    retryable = True


class ProtocolError(BackendError):
    retryable = False


class ModelFailureError(BackendError):
    retryable = False


class MissingMeta(ProtocolError):
    pass
