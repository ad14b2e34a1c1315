"""Sort reconstruction for the implicit sorting discipline.

Every name gets a sort (bool, unit, or a lock sort over a stored sort) by
unification over the term.  A second union-find tracks *flow* classes: names
connected by store/bind positions must share a full lock type in pilw, while
match comparison only equates sorts.  Unconstrained sorts default to bool.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Optional

from .errors import SortMismatch
from .syntax import (
    BOOL,
    UNIT_SORT,
    Acquire,
    BoolSort,
    BoolVal,
    Calculus,
    Hole,
    LockSort,
    LockType,
    Match,
    Name,
    Nil,
    Par,
    Process,
    Release,
    Restrict,
    Sort,
    UnitSort,
    Value,
    Wait,
)

_uid = itertools.count()


class Slot:
    __slots__ = ("parent", "ctor", "stored", "uid")

    def __init__(self, ctor: Optional[str] = None):
        self.parent: Optional[Slot] = None
        self.ctor = ctor  # "bool" | "unit" | "lock"
        self.stored: Optional[Slot] = None
        self.uid = next(_uid)

    def find(self) -> "Slot":
        root = self
        while root.parent is not None:
            root = root.parent
        node = self
        while node.parent is not None:
            node.parent, node = root, node.parent
        return root


def _unify(a: Slot, b: Slot, where):
    a, b = a.find(), b.find()
    if a is b:
        return
    if a.ctor is not None and b.ctor is not None:
        if a.ctor != b.ctor:
            raise SortMismatch(f"sort clash: {a.ctor} vs {b.ctor}", where)
        b.parent = a
        if a.ctor == "lock":
            _unify(a.stored, b.stored, where)
        return
    if a.ctor is None:
        a, b = b, a
    b.parent = a


def _make_lock(s: Slot, where) -> Slot:
    s = s.find()
    if s.ctor is None:
        s.ctor = "lock"
        s.stored = Slot()
    elif s.ctor != "lock":
        raise SortMismatch(f"{s.ctor}-sorted name used as a lock", where)
    return s


def _pin_sort(s: Slot, sort: Sort, where):
    s = s.find()
    if isinstance(sort, BoolSort):
        _unify(s, Slot("bool"), where)
    elif isinstance(sort, UnitSort):
        _unify(s, Slot("unit"), where)
    else:
        s = _make_lock(s, where)
        _pin_sort(s.find().stored, sort.stored, where)


@dataclass
class SortAnalysis:
    """Resolved sorts plus flow classes over a binder-unique term."""

    sort_slots: dict[Name, Slot]
    flow_slots: dict[Name, Slot]
    usage_pins: list[tuple[Slot, tuple[int, int]]] = field(default_factory=list)

    def sort_of(self, n: Name) -> Sort:
        slot = self.sort_slots.get(n)
        if slot is None:
            return BOOL
        return self._resolve(slot)

    def _resolve(self, slot: Slot, depth: int = 0) -> Sort:
        slot = slot.find()
        if depth > 64:
            raise SortMismatch("cyclic sort", None)
        if slot.ctor == "lock":
            return LockSort(self._resolve(slot.stored, depth + 1))
        if slot.ctor == "unit":
            return UNIT_SORT
        return BOOL

    def value_sort(self, v: Value) -> Sort:
        if isinstance(v, Name):
            return self.sort_of(v)
        if isinstance(v, BoolVal):
            return BOOL
        return UNIT_SORT

    def is_lock_sorted(self, n: Name) -> bool:
        slot = self.sort_slots.get(n)
        return slot is not None and slot.find().ctor == "lock"

    def lock_value(self, v: Value) -> Optional[Name]:
        if isinstance(v, Name) and self.is_lock_sorted(v):
            return v
        return None

    def stored_slot(self, n: Name) -> Optional[Slot]:
        slot = self.flow_slots.get(n)
        if slot is None:
            return None
        slot = slot.find()
        if slot.ctor != "lock":
            return None
        return slot.stored.find()

    def pin_lock_type(self, n: Name, t: LockType, where=None):
        """Record payload usages demanded by a declared type for n."""
        slot = self.sort_slots.get(n)
        if slot is not None:
            _pin_sort(slot, t.sort(), where)
        fslot = self.flow_slots.get(n)
        if fslot is None:
            return
        _pin_sort(fslot, t.sort(), where)
        cur, ty = fslot.find(), t
        while isinstance(ty.stored, LockType):
            cur = cur.stored.find()
            self.usage_pins.append((cur, ty.stored.usage))
            ty = ty.stored

    def pinned_usages(self) -> dict[int, tuple[int, int]]:
        out: dict[int, tuple[int, int]] = {}
        for slot, usage in self.usage_pins:
            uid = slot.find().uid
            prev = out.get(uid)
            if prev is not None and prev != usage:
                raise SortMismatch(f"payload usage clash {prev} vs {usage}", None)
            out[uid] = usage
        return out


def analyze(
    p: Process,
    declared: Optional[dict[Name, Sort]] = None,
    calculus: Calculus = Calculus.PIL,
) -> SortAnalysis:
    """Reconstruct sorts of a binder-unique process.

    Raises SortMismatch on inconsistency, on comparisons across sorts, and on
    self-storing releases (the typing notation gamma,l,l' requires l != l').
    """
    sort_slots: dict[Name, Slot] = {}
    flow_slots: dict[Name, Slot] = {}
    analysis = SortAnalysis(sort_slots, flow_slots)

    def slot(n: Name, table: dict[Name, Slot]) -> Slot:
        if n not in table:
            table[n] = Slot()
        return table[n]

    def value_slot(v: Value, table: dict[Name, Slot]) -> Slot:
        if isinstance(v, Name):
            return slot(v, table)
        return Slot("bool" if isinstance(v, BoolVal) else "unit")

    def go(q: Process):
        if isinstance(q, (Nil, Hole)):
            return
        if isinstance(q, Release):
            if isinstance(q.payload, Name) and q.payload == q.subject:
                raise SortMismatch("a lock cannot store itself", q)
            ls = _make_lock(slot(q.subject, sort_slots), q)
            lf = _make_lock(slot(q.subject, flow_slots), q)
            _unify(ls.find().stored, value_slot(q.payload, sort_slots), q)
            _unify(lf.find().stored, value_slot(q.payload, flow_slots), q)
            return
        if isinstance(q, (Acquire, Wait)):
            ls = _make_lock(slot(q.subject, sort_slots), q)
            lf = _make_lock(slot(q.subject, flow_slots), q)
            _unify(ls.find().stored, slot(q.binder, sort_slots), q)
            _unify(lf.find().stored, slot(q.binder, flow_slots), q)
            go(q.body)
            return
        if isinstance(q, Restrict):
            if q.annot is not None:
                if isinstance(q.annot, LockType):
                    _pin_sort(slot(q.name, sort_slots), q.annot.sort(), q)
                    analysis.flow_slots.setdefault(q.name, Slot())
                    analysis.pin_lock_type(q.name, q.annot, q)
                else:
                    _pin_sort(slot(q.name, sort_slots), q.annot, q)
                    _pin_sort(slot(q.name, flow_slots), q.annot, q)
            go(q.body)
            return
        if isinstance(q, Par):
            go(q.left)
            go(q.right)
            return
        if isinstance(q, Match):
            a = value_slot(q.left, sort_slots)
            b = value_slot(q.right, sort_slots)
            _unify(a, b, q)  # sorts agree; flow classes stay apart
            go(q.then_branch)
            go(q.else_branch)
            return
        raise TypeError(q)

    if declared:
        for n, s in declared.items():
            _pin_sort(slot(n, sort_slots), s, p)
            if isinstance(s, LockSort):
                _pin_sort(slot(n, flow_slots), s, p)
    go(p)
    return analysis
