"""Abstract syntax shared by the three calculi.

Processes are immutable trees over interned names.  CCSL is embedded as the
lock-only fragment whose releases carry a unit placeholder and whose acquire
binders are wildcards; PILW adds the wait (deallocation) prefix.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

from .errors import SortMismatch


class Calculus(enum.Enum):
    CCSL = "ccsl"
    PIL = "pil"
    PILW = "pilw"


# ---------------------------------------------------------------- names

# Reserved label prefixes: "_" for machine-generated binders, "bn"/"fn"/"fb"
# for deterministically drawn bound-output / fresh-input names.
WILDCARD_LABEL = "_"


@dataclass(frozen=True, order=True)
class Name:
    label: str
    index: int = 0

    def __post_init__(self):
        assert self.label, "names need a nonempty label"

    def __str__(self):
        if self.index == 0:
            return self.label
        return f"{self.label}'{self.index}"


def fresh_name(base: str, avoid: Iterable[Name], start: int = 1) -> Name:
    avoid = set(avoid)
    if Name(base) not in avoid and start <= 1:
        candidate = Name(base)
        if candidate not in avoid:
            return candidate
    for i in itertools.count(max(start, 1)):
        candidate = Name(base, i)
        if candidate not in avoid:
            return candidate
    raise AssertionError


# ---------------------------------------------------------------- values


@dataclass(frozen=True)
class BoolVal:
    value: bool

    def __str__(self):
        return "tt" if self.value else "ff"


@dataclass(frozen=True)
class UnitVal:
    """Placeholder payload of CCSL releases and acquire binders."""

    def __str__(self):
        return "()"


TT = BoolVal(True)
FF = BoolVal(False)
UNIT = UnitVal()

Value = Union[Name, BoolVal, UnitVal]


# ---------------------------------------------------------------- sorts


@dataclass(frozen=True)
class BoolSort:
    def __str__(self):
        return "bool"


@dataclass(frozen=True)
class UnitSort:
    def __str__(self):
        return "unit"


@dataclass(frozen=True)
class LockSort:
    stored: "Sort"

    def __str__(self):
        return f"Lock<{self.stored}>"


Sort = Union[BoolSort, UnitSort, LockSort]
BOOL = BoolSort()
UNIT_SORT = UnitSort()


# ---------------------------------------------------------------- lock types

PayloadType = Union[BoolSort, UnitSort, "LockType"]


@dataclass(frozen=True)
class LockType:
    """Type of a lock name: stored payload type plus (release, wait) usage."""

    stored: PayloadType
    r: int
    w: int

    def __post_init__(self):
        assert self.r in (0, 1) and self.w in (0, 1)

    @property
    def usage(self) -> tuple[int, int]:
        return (self.r, self.w)

    def with_usage(self, r: int, w: int) -> "LockType":
        return LockType(self.stored, r, w)

    def sort(self) -> Sort:
        return LockSort(payload_sort(self.stored))

    def __str__(self):
        return f"Lock<{self.stored}>^{self.r}{self.w}"


def payload_sort(t: PayloadType) -> Sort:
    if isinstance(t, LockType):
        return t.sort()
    return t


def payload_usage(t: PayloadType) -> tuple[int, int]:
    """Obligations carried by a stored value: (0,0) unless it is a lock type."""
    if isinstance(t, LockType):
        return t.usage
    return (0, 0)


# ---------------------------------------------------------------- processes


@dataclass(frozen=True)
class Nil:
    def __str__(self):
        from .textio import print_process

        return print_process(self)


@dataclass(frozen=True)
class Release:
    subject: Name
    payload: Value

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Acquire:
    subject: Name
    binder: Name
    body: "Process"

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Wait:
    subject: Name
    binder: Name
    body: "Process"

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Restrict:
    name: Name
    body: "Process"
    annot: Optional[Union[Sort, LockType]] = None

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Par:
    left: "Process"
    right: "Process"

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Match:
    left: Value
    right: Value
    then_branch: "Process"
    else_branch: "Process"

    __str__ = Nil.__str__


@dataclass(frozen=True)
class Hole:
    """Context hole; only legal inside context templates."""

    def __str__(self):
        return "[]"


Process = Union[Nil, Release, Acquire, Wait, Restrict, Par, Match, Hole]

NIL = Nil()


def par(*procs: Process) -> Process:
    """Right-associated parallel composition; () gives Nil."""
    ps = [p for p in procs if not isinstance(p, Nil)]
    if not ps:
        return NIL
    out = ps[-1]
    for p in reversed(ps[:-1]):
        out = Par(p, out)
    return out


def value_names(v: Value) -> frozenset[Name]:
    return frozenset([v]) if isinstance(v, Name) else frozenset()


def free_locks(p: Process) -> frozenset[Name]:
    """Free names of p; Restrict, Acquire and Wait bind their name."""
    if isinstance(p, (Nil, Hole)):
        return frozenset()
    if isinstance(p, Release):
        return frozenset([p.subject]) | value_names(p.payload)
    if isinstance(p, (Acquire, Wait)):
        return frozenset([p.subject]) | (free_locks(p.body) - {p.binder})
    if isinstance(p, Restrict):
        return free_locks(p.body) - {p.name}
    if isinstance(p, Par):
        return free_locks(p.left) | free_locks(p.right)
    if isinstance(p, Match):
        return (
            value_names(p.left)
            | value_names(p.right)
            | free_locks(p.then_branch)
            | free_locks(p.else_branch)
        )
    raise TypeError(p)


def bound_names(p: Process) -> frozenset[Name]:
    if isinstance(p, (Nil, Release, Hole)):
        return frozenset()
    if isinstance(p, (Acquire, Wait)):
        return frozenset([p.binder]) | bound_names(p.body)
    if isinstance(p, Restrict):
        return frozenset([p.name]) | bound_names(p.body)
    if isinstance(p, Par):
        return bound_names(p.left) | bound_names(p.right)
    if isinstance(p, Match):
        return bound_names(p.then_branch) | bound_names(p.else_branch)
    raise TypeError(p)


def all_names(p: Process) -> frozenset[Name]:
    return free_locks(p) | bound_names(p)


def subjects(p: Process) -> Iterator[Name]:
    """Every name occurring in subject position (free or not)."""
    if isinstance(p, Release):
        yield p.subject
    elif isinstance(p, (Acquire, Wait)):
        yield p.subject
        yield from subjects(p.body)
    elif isinstance(p, Restrict):
        yield from subjects(p.body)
    elif isinstance(p, Par):
        yield from subjects(p.left)
        yield from subjects(p.right)
    elif isinstance(p, Match):
        yield from subjects(p.then_branch)
        yield from subjects(p.else_branch)


def _subst_value(v: Value, val: Value, x: Name) -> Value:
    return val if v == x else v


def substitute(p: Process, val: Value, x: Name) -> Process:
    """Capture-avoiding substitution of val for free occurrences of x.

    Substituting a non-name value for a name used in subject position is a
    sort violation and raises SortMismatch.
    """
    if x not in free_locks(p):
        return p
    if not isinstance(val, Name) and any(s == x for s in _free_subjects(p)):
        raise SortMismatch(f"cannot use {val} as a lock subject", p)
    return _subst(p, val, x)


def _free_subjects(p: Process) -> Iterator[Name]:
    if isinstance(p, Release):
        yield p.subject
    elif isinstance(p, (Acquire, Wait)):
        yield p.subject
        for s in _free_subjects(p.body):
            if s != p.binder:
                yield s
    elif isinstance(p, Restrict):
        for s in _free_subjects(p.body):
            if s != p.name:
                yield s
    elif isinstance(p, Par):
        yield from _free_subjects(p.left)
        yield from _free_subjects(p.right)
    elif isinstance(p, Match):
        yield from _free_subjects(p.then_branch)
        yield from _free_subjects(p.else_branch)


def _subst(p: Process, val: Value, x: Name) -> Process:
    if isinstance(p, (Nil, Hole)):
        return p
    if isinstance(p, Release):
        subj = p.subject
        if subj == x:
            assert isinstance(val, Name)
            subj = val
        return Release(subj, _subst_value(p.payload, val, x))
    if isinstance(p, (Acquire, Wait)):
        cls = type(p)
        subj = p.subject
        if subj == x:
            assert isinstance(val, Name)
            subj = val
        if p.binder == x:
            return cls(subj, p.binder, p.body)
        binder, body = p.binder, p.body
        if isinstance(val, Name) and binder == val:
            binder = fresh_name(binder.label, all_names(body) | {val, x}, binder.index + 1)
            body = _subst(body, binder, p.binder)
        return cls(subj, binder, _subst(body, val, x) if x in free_locks(body) else body)
    if isinstance(p, Restrict):
        if p.name == x:
            return p
        name, body = p.name, p.body
        if isinstance(val, Name) and name == val:
            name = fresh_name(name.label, all_names(body) | {val, x}, name.index + 1)
            body = _subst(body, name, p.name)
        if x not in free_locks(body):
            return Restrict(name, body, p.annot)
        return Restrict(name, _subst(body, val, x), p.annot)
    if isinstance(p, Par):
        return Par(_subst(p.left, val, x), _subst(p.right, val, x))
    if isinstance(p, Match):
        return Match(
            _subst_value(p.left, val, x),
            _subst_value(p.right, val, x),
            _subst(p.then_branch, val, x),
            _subst(p.else_branch, val, x),
        )
    raise TypeError(p)


def plug(ctx: Process, p: Process) -> Process:
    """Replace every hole in ctx by p."""
    if isinstance(ctx, Hole):
        return p
    if isinstance(ctx, (Nil, Release)):
        return ctx
    if isinstance(ctx, (Acquire, Wait)):
        return type(ctx)(ctx.subject, ctx.binder, plug(ctx.body, p))
    if isinstance(ctx, Restrict):
        return Restrict(ctx.name, plug(ctx.body, p), ctx.annot)
    if isinstance(ctx, Par):
        return Par(plug(ctx.left, p), plug(ctx.right, p))
    if isinstance(ctx, Match):
        return Match(ctx.left, ctx.right, plug(ctx.then_branch, p), plug(ctx.else_branch, p))
    raise TypeError(ctx)


def check_calculus(p: Process, calculus: Calculus) -> Optional[str]:
    """Return a reason when p uses a construct outside the calculus."""
    if isinstance(p, Wait) and calculus is not Calculus.PILW:
        return "wait prefix is only available in pilw"
    if isinstance(p, (Nil, Match)) and calculus is Calculus.CCSL:
        return f"{type(p).__name__.lower()} does not exist in ccsl"
    if isinstance(p, Release):
        if calculus is Calculus.CCSL and not isinstance(p.payload, UnitVal):
            return "ccsl releases carry no value"
        if calculus is not Calculus.CCSL and isinstance(p.payload, UnitVal):
            return "releases must carry a value outside ccsl"
        return None
    if isinstance(p, (Acquire, Wait)):
        return check_calculus(p.body, calculus)
    if isinstance(p, Restrict):
        return check_calculus(p.body, calculus)
    if isinstance(p, Par):
        return check_calculus(p.left, calculus) or check_calculus(p.right, calculus)
    if isinstance(p, Match):
        return check_calculus(p.then_branch, calculus) or check_calculus(p.else_branch, calculus)
    return None


# ------------------------------------------------------- canonical renaming


def canonical(p: Process) -> Process:
    """Alpha-rename every binder to a reserved machine name.

    Binders become distinct along every path and distinct from all free
    names, so two terms are alpha-equivalent iff their canonical forms are
    equal.
    """
    free = free_locks(p)
    counter = itertools.count(1)

    def next_binder() -> Name:
        while True:
            n = Name("_b", next(counter))
            if n not in free:
                return n

    def go(q: Process, env: dict[Name, Name]) -> Process:
        if isinstance(q, (Nil, Hole)):
            return q
        if isinstance(q, Release):
            return Release(env.get(q.subject, q.subject), _rename_value(q.payload, env))
        if isinstance(q, (Acquire, Wait)):
            b = next_binder()
            inner = dict(env)
            inner[q.binder] = b
            return type(q)(env.get(q.subject, q.subject), b, go(q.body, inner))
        if isinstance(q, Restrict):
            b = next_binder()
            inner = dict(env)
            inner[q.name] = b
            return Restrict(b, go(q.body, inner), q.annot)
        if isinstance(q, Par):
            return Par(go(q.left, env), go(q.right, env))
        if isinstance(q, Match):
            return Match(
                _rename_value(q.left, env),
                _rename_value(q.right, env),
                go(q.then_branch, env),
                go(q.else_branch, env),
            )
        raise TypeError(q)

    return go(p, {})


def _rename_value(v: Value, env: dict[Name, Name]) -> Value:
    if isinstance(v, Name):
        return env.get(v, v)
    return v


def alpha_equiv(p: Process, q: Process) -> bool:
    return canonical(p) == canonical(q)


def size(p: Process) -> int:
    """Number of prefixes/operators; used as a generator budget."""
    if isinstance(p, (Nil, Hole)):
        return 0
    if isinstance(p, Release):
        return 1
    if isinstance(p, (Acquire, Wait)):
        return 1 + size(p.body)
    if isinstance(p, Restrict):
        return 1 + size(p.body)
    if isinstance(p, Par):
        return size(p.left) + size(p.right)
    if isinstance(p, Match):
        return 1 + size(p.then_branch) + size(p.else_branch)
    raise TypeError(p)
