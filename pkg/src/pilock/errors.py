"""Error types and the shared Verdict record."""

from dataclasses import dataclass, field
from typing import Any, Optional


class PilockError(Exception):
    pass


class SortMismatch(PilockError):
    def __init__(self, message, subterm=None):
        super().__init__(message)
        self.subterm = subterm


@dataclass
class SourceSpan:
    start: int
    end: int
    line: int
    column: int

    def __post_init__(self):
        assert self.start <= self.end

    def __str__(self):
        return f"{self.line}:{self.column}"


class ParseError(PilockError):
    def __init__(self, message, span: Optional[SourceSpan] = None):
        loc = f" at {span}" if span is not None else ""
        super().__init__(message + loc)
        self.span = span


class CalculusError(ParseError):
    pass


class UntypableError(PilockError):
    """Raised when no typing derivation exists; carries the failing rule."""

    def __init__(self, code, rule, subterm=None, detail=""):
        msg = f"{code} (rule {rule})" + (f": {detail}" if detail else "")
        super().__init__(msg)
        self.code = code
        self.rule = rule
        self.subterm = subterm
        self.detail = detail


class PreconditionViolation(PilockError):
    pass


class StateBudgetExceeded(PilockError):
    def __init__(self, budget):
        super().__init__(f"state budget of {budget} nodes exceeded")
        self.budget = budget


@dataclass
class Verdict:
    ok: bool
    code: str = ""
    detail: str = ""
    data: Any = field(default=None, repr=False)

    def __bool__(self):
        return self.ok
