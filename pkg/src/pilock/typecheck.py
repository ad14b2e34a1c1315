"""Typing environments, composition, and algorithmic type checking.

Judgements are synthesized bottom-up as the finest environment (components
merged only when forced, obligations exactly the available releases, usages
exactly the demanded bits) over the full normal form; a declared environment
is accepted when it is a weakening of the minimal one: components may be
merged, extra names may pad components (at usage 00 in pilw), obligation
sets and usages must match exactly.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from . import sorts
from .congruence import normalize
from .errors import PilockError, UntypableError, Verdict
from .syntax import (
    BOOL,
    UNIT_SORT,
    Acquire,
    BoolSort,
    Calculus,
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
    Wait,
    canonical,
    free_locks,
)


class Undefined(PilockError):
    """A composition of environments is not defined."""

    def __init__(self, reason, data=None):
        super().__init__(f"composition undefined: {reason}")
        self.reason = reason
        self.data = data


# ------------------------------------------------------------ environments


def _validate_partition(components: Iterable[frozenset[Name]]):
    seen: set[Name] = set()
    for comp in components:
        if not comp:
            raise PilockError("environment components must be nonempty")
        if seen & comp:
            raise PilockError("environment components must be pairwise disjoint")
        seen |= comp


@dataclass(frozen=True)
class PilEnv:
    """Partition of lock names into components plus the obligation set R."""

    components: frozenset[frozenset[Name]]
    obligations: frozenset[Name]

    def __post_init__(self):
        _validate_partition(self.components)
        if not self.obligations <= self.domain:
            raise PilockError("R must be included in the environment domain")

    @property
    def domain(self) -> frozenset[Name]:
        out: frozenset[Name] = frozenset()
        for c in self.components:
            out |= c
        return out

    def component_of(self, n: Name) -> Optional[frozenset[Name]]:
        for c in self.components:
            if n in c:
                return c
        return None

    def merge(self, a: Name, b: Name) -> "PilEnv":
        """Merge the components of a and b (adding missing singletons)."""
        ca = self.component_of(a) or frozenset([a])
        cb = self.component_of(b) or frozenset([b])
        comps = {c for c in self.components if c not in (ca, cb)}
        comps.add(ca | cb)
        return PilEnv(frozenset(comps), self.obligations)

    def add_name(self, anchor: Name, n: Name) -> "PilEnv":
        ca = self.component_of(anchor) or frozenset([anchor])
        comps = {c for c in self.components if c != ca}
        comps.add(ca | {n})
        return PilEnv(frozenset(comps), self.obligations)

    def with_obligations(self, obligations: frozenset[Name]) -> "PilEnv":
        return PilEnv(self.components, obligations)

    def __str__(self):
        from .textio import print_env

        return print_env(self)


def _freeze_types(types: dict[Name, LockType]) -> tuple[tuple[Name, LockType], ...]:
    return tuple(sorted(types.items(), key=lambda kv: kv[0]))


@dataclass(frozen=True)
class PilwEnv:
    """Partition plus one usage-typed hypothesis per name."""

    components: frozenset[frozenset[Name]]
    types: tuple[tuple[Name, LockType], ...]

    def __post_init__(self):
        _validate_partition(self.components)
        if {n for n, _ in self.types} != set(self.domain):
            raise PilockError("every name needs exactly one typing hypothesis")

    @classmethod
    def make(cls, components, types: dict[Name, LockType]) -> "PilwEnv":
        return cls(frozenset(frozenset(c) for c in components), _freeze_types(types))

    @property
    def domain(self) -> frozenset[Name]:
        out: frozenset[Name] = frozenset()
        for c in self.components:
            out |= c
        return out

    @functools.cached_property
    def typemap(self) -> dict[Name, LockType]:
        return dict(self.types)

    def type_of(self, n: Name) -> Optional[LockType]:
        return self.typemap.get(n)

    def component_of(self, n: Name) -> Optional[frozenset[Name]]:
        for c in self.components:
            if n in c:
                return c
        return None

    def replace(self, components=None, types=None) -> "PilwEnv":
        comps = self.components if components is None else frozenset(map(frozenset, components))
        tmap = self.typemap if types is None else types
        return PilwEnv(comps, _freeze_types(dict(tmap)))

    def usage_delta(self, n: Name, dr: int, dw: int) -> "PilwEnv":
        t = self.typemap[n]
        r, w = t.r + dr, t.w + dw
        if not (0 <= r <= 1 and 0 <= w <= 1):
            raise Undefined("UsageClash", n)
        tmap = dict(self.typemap)
        tmap[n] = t.with_usage(r, w)
        return self.replace(types=tmap)

    def drop_name(self, n: Name) -> "PilwEnv":
        comps = []
        for c in self.components:
            c2 = c - {n}
            if c2:
                comps.append(c2)
        tmap = dict(self.typemap)
        tmap.pop(n, None)
        return PilwEnv(frozenset(comps), _freeze_types(tmap))

    def merge(self, a: Name, b: Name) -> "PilwEnv":
        ca = self.component_of(a) or frozenset([a])
        cb = self.component_of(b) or frozenset([b])
        comps = {c for c in self.components if c not in (ca, cb)}
        comps.add(ca | cb)
        return PilwEnv(frozenset(comps), self.types)

    def add_hypothesis(self, anchor: Optional[Name], n: Name, t: LockType) -> "PilwEnv":
        """Add n:t, composing with an existing hypothesis if present."""
        tmap = dict(self.typemap)
        if n in tmap:
            tmap[n] = _compose_hyp(tmap[n], t)
            env = self.replace(types=tmap)
        else:
            if anchor is not None and self.component_of(anchor) is not None:
                ca = self.component_of(anchor)
                comps = {c for c in self.components if c != ca}
                comps.add(ca | {n})
            else:
                comps = set(self.components) | {frozenset([n])}
            tmap[n] = t
            env = PilwEnv(frozenset(comps), _freeze_types(tmap))
        if anchor is not None:
            env = env.merge(anchor, n)
        return env

    def __str__(self):
        from .textio import print_env

        return print_env(self)


TypeEnv = Union[PilEnv, PilwEnv]

EMPTY_PIL = PilEnv(frozenset(), frozenset())
EMPTY_PILW = PilwEnv(frozenset(), ())


# ------------------------------------------------------------- composition


def connect(g: frozenset[Name], gs: Iterable[frozenset[Name]]) -> Optional[frozenset[frozenset[Name]]]:
    """The component-connection operator; None when some overlap has >= 2 names."""
    try:
        return _connect(g, gs)
    except Undefined:
        return None


def _connect(g, gs) -> frozenset[frozenset[Name]]:
    kept, merged = [], set(g)
    for gi in gs:
        overlap = gi & g
        if len(overlap) >= 2:
            raise Undefined("Overlap", overlap)
        if overlap:
            merged |= gi
        else:
            kept.append(gi)
    return frozenset(kept) | {frozenset(merged)}


def _compose_hyp(a: LockType, b: LockType) -> LockType:
    if a.stored != b.stored:
        raise Undefined("TypeClash", (a, b))
    r, w = a.r + b.r, a.w + b.w
    if r > 1 or w > 1:
        raise Undefined("UsageClash", (a, b))
    return LockType(a.stored, r, w)


def _compose_checked(e1: TypeEnv, e2: TypeEnv) -> TypeEnv:
    if isinstance(e1, PilEnv) != isinstance(e2, PilEnv):
        raise PilockError("cannot compose environments of different flavours")
    comps: frozenset[frozenset[Name]] = e2.components
    for g in e1.components:
        comps = _connect(g, comps)
    if isinstance(e1, PilEnv):
        if e1.obligations & e2.obligations:
            raise Undefined("ObligationClash", e1.obligations & e2.obligations)
        return PilEnv(comps, e1.obligations | e2.obligations)
    tmap = dict(e2.typemap)
    for n, t in e1.types:
        tmap[n] = _compose_hyp(tmap[n], t) if n in tmap else t
    return PilwEnv(comps, _freeze_types(tmap))


def compose(e1: TypeEnv, e2: TypeEnv) -> Optional[TypeEnv]:
    """Environment composition (the paper's tensor); None when undefined."""
    try:
        return _compose_checked(e1, e2)
    except Undefined:
        return None


def compose_mu(e1: TypeEnv, mu, e2: TypeEnv) -> Optional[TypeEnv]:
    """Composition guarded by an action: undefined when mu deallocates a name
    still present in either domain."""
    freed = getattr(mu, "deallocates", None)
    if freed is not None and (freed in e1.domain or freed in e2.domain):
        return None
    return compose(e1, e2)


def flat(e: TypeEnv) -> frozenset[Name]:
    """Merge all components into a single one (its domain)."""
    return e.domain


# ------------------------------------------------------------ usage algebra


def _u_add(a: tuple[int, int], b: tuple[int, int]) -> tuple[int, int]:
    return (a[0] + b[0], a[1] + b[1])


@dataclass(frozen=True)
class SymUsage:
    """Constant bits plus payload-usage variable terms, summed componentwise.

    A variable term (uid, mask) contributes the payload-usage variable uid,
    either fully ("rw") or only its wait bit ("w"): the release bit of an
    acquire continuation's demand is discharged by the prefix, its wait bit
    survives to the conclusion.
    """

    r: int = 0
    w: int = 0
    vars: tuple[tuple[int, str], ...] = ()

    def __add__(self, other: "SymUsage") -> "SymUsage":
        return SymUsage(self.r + other.r, self.w + other.w, self.vars + other.vars)

    def wait_part(self) -> "SymUsage":
        return SymUsage(0, self.w, tuple((uid, "w") for uid, _ in self.vars))

    def value(self, assignment: dict[int, tuple[int, int]]) -> tuple[int, int]:
        r, w = self.r, self.w
        for uid, mask in self.vars:
            vr, vw = assignment.get(uid, (0, 0))
            if mask == "rw":
                r += vr
            w += vw
        return (r, w)

    def determined(self, assignment: dict[int, tuple[int, int]]) -> bool:
        return all(uid in assignment for uid, _ in self.vars)


@dataclass
class _Constraint:
    kind: str  # "eq_var" | "eq_const" | "eq_r" | "le_one" | "eq_expr"
    expr: SymUsage
    var: Optional[int] = None
    const: Optional[tuple[int, int]] = None
    other: Optional[SymUsage] = None
    code: str = "UsageOverflow"
    rule: str = ""
    where: Optional[Process] = None


def _solve_usages(
    constraints: list[_Constraint], pins: dict[int, tuple[int, int]]
) -> dict[int, tuple[int, int]]:
    assignment = dict(pins)
    varset: set[int] = set()
    for c in constraints:
        varset.update(uid for uid, _ in c.expr.vars)
        if c.var is not None:
            varset.add(c.var)
        if c.other is not None:
            varset.update(uid for uid, _ in c.other.vars)

    def violated(c: _Constraint, partial) -> Optional[bool]:
        # True: definitely violated; False: satisfied; None: not yet decidable
        lower = c.expr.value(partial)  # missing vars count as (0, 0): a lower bound
        det = c.expr.determined(partial)
        if c.kind == "le_one":
            if lower[0] > 1 or lower[1] > 1:
                return True
            return False if det else None
        if c.kind == "eq_const":
            if lower[0] > c.const[0] or lower[1] > c.const[1]:
                return True
            return (lower != c.const) if det else None
        if c.kind == "eq_r":
            if lower[0] > c.const[0]:
                return True
            return (lower[0] != c.const[0]) if det else None
        if c.kind == "eq_var":
            if c.var in partial and det:
                return lower != partial[c.var]
            return None
        if c.kind == "eq_expr":
            if det and c.other.determined(partial):
                return lower != c.other.value(partial)
            return None
        raise AssertionError(c.kind)

    # propagate equalities whose right-hand side is determined
    changed = True
    while changed:
        changed = False
        for c in constraints:
            ver = violated(c, assignment)
            if ver is True:
                raise UntypableError(c.code, c.rule, c.where)
            if c.kind == "eq_var" and c.var not in assignment and c.expr.determined(assignment):
                assignment[c.var] = c.expr.value(assignment)
                changed = True

    residual = sorted(varset - set(assignment))
    if len(residual) > 12:
        raise PilockError("usage inference needs too many free payload variables")

    order = [(0, 0), (0, 1), (1, 0), (1, 1)]

    def search(i: int, partial) -> Optional[dict[int, tuple[int, int]]]:
        for c in constraints:
            if violated(c, partial) is True:
                return None
        if i == len(residual):
            for c in constraints:
                if violated(c, partial):
                    return None
            return dict(partial)
        for val in order:
            partial[residual[i]] = val
            found = search(i + 1, partial)
            if found is not None:
                return found
            del partial[residual[i]]
        return None

    solution = search(0, dict(assignment))
    if solution is None:
        for c in constraints:
            if violated(c, dict(assignment)) is True:
                raise UntypableError(c.code, c.rule, c.where)
        raise UntypableError("UsageOverflow", "", None, "no usage assignment satisfies the term")
    return solution


# ----------------------------------------------------------------- inference


def _lockname(analysis: sorts.SortAnalysis, v) -> Optional[Name]:
    return analysis.lock_value(v)


def _infer_pil(p: Process, analysis: sorts.SortAnalysis, rule_suffix: str):
    """Finest judgement for ccsl/pil: (components, obligations)."""

    def rec(q: Process) -> tuple[list[frozenset[Name]], frozenset[Name]]:
        if isinstance(q, Nil):
            return [], frozenset()
        if isinstance(q, Release):
            comp = {q.subject}
            v = _lockname(analysis, q.payload)
            if v is not None:
                comp.add(v)
            return [frozenset(comp)], frozenset([q.subject])
        if isinstance(q, Acquire):
            comps, r = rec(q.body)
            if q.subject not in r:
                raise UntypableError(
                    "MissingRelease", "Acq" + rule_suffix, q,
                    f"the continuation does not release {q.subject}",
                )
            if q.binder in r:
                raise UntypableError(
                    "BinderObligation", "Acq" + rule_suffix, q,
                    "the release obligation of a received lock cannot be assumed",
                )
            names = set().union(*comps) if comps else set()
            names.add(q.subject)
            names.discard(q.binder)
            return [frozenset(names)], r - {q.subject}
        if isinstance(q, Restrict):
            comps, r = rec(q.body)
            if q.name not in r:
                raise UntypableError(
                    "MissingRelease", "New" + rule_suffix, q,
                    f"a new lock must be initialised with a release of {q.name}",
                )
            out = []
            for c in comps:
                c2 = c - {q.name}
                if c2:
                    out.append(c2)
            return out, r - {q.name}
        if isinstance(q, Par):
            ca, ra = rec(q.left)
            cb, rb = rec(q.right)
            if ra & rb:
                raise UntypableError(
                    "DoubleRelease", "Par" + rule_suffix, q,
                    f"both sides release {', '.join(map(str, sorted(ra & rb)))}",
                )
            comps = list(cb)
            try:
                for g in ca:
                    comps = list(_connect(g, comps))
            except Undefined as e:
                raise UntypableError(
                    "CompositionCycle", "Par" + rule_suffix, q,
                    f"parallel components share {', '.join(map(str, sorted(e.data)))}",
                ) from None
            return comps, ra | rb
        if isinstance(q, Match):
            c1, r1 = rec(q.then_branch)
            c2, r2 = rec(q.else_branch)
            if r1 != r2:
                raise UntypableError(
                    "BranchMismatch", "Mat", q,
                    "both branches must hold the same obligations",
                )
            return _join_partitions(c1, c2), r1
        if isinstance(q, Wait):
            raise UntypableError("CalculusMismatch", "", q, "wait is a pilw construct")
        raise TypeError(q)

    comps, r = rec(p)
    return PilEnv(frozenset(comps), r)


def _join_partitions(c1, c2) -> list[frozenset[Name]]:
    """Finest partition coarser than both (union of the merge relations)."""
    parent: dict[Name, Name] = {}

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb

    for comp in itertools.chain(c1, c2):
        for n in comp:
            parent.setdefault(n, n)
        first = next(iter(comp))
        for n in comp:
            union(first, n)
    groups: dict[Name, set[Name]] = {}
    for n in parent:
        groups.setdefault(find(n), set()).add(n)
    return [frozenset(g) for g in groups.values()]


def _infer_pilw(p: Process, analysis: sorts.SortAnalysis):
    """Finest pilw judgement via symbolic usage demands + constraint solving."""
    constraints: list[_Constraint] = []

    def stored_var(n: Name) -> Optional[int]:
        slot = analysis.stored_slot(n)
        if slot is None or slot.ctor != "lock":
            return None
        return slot.uid

    def payload_demand(n: Name) -> SymUsage:
        v = stored_var(n)
        return SymUsage(vars=((v, "rw"),)) if v is not None else SymUsage()

    def collect(q: Process) -> dict[Name, SymUsage]:
        if isinstance(q, Nil):
            return {}
        if isinstance(q, Release):
            d = {q.subject: SymUsage(1, 0)}
            v = _lockname(analysis, q.payload)
            if v is not None:
                d[v] = d.get(v, SymUsage()) + payload_demand(q.subject)
            return d
        if isinstance(q, (Acquire, Wait)):
            d = collect(q.body)
            bd = d.pop(q.binder, SymUsage())
            if analysis.is_lock_sorted(q.binder):
                sv = stored_var(q.subject)
                if sv is not None:
                    constraints.append(
                        _Constraint("eq_var", bd, var=sv, code="BinderUsageMismatch",
                                    rule="Acq-w" if isinstance(q, Acquire) else "Wait-w",
                                    where=q)
                    )
            if isinstance(q, Acquire):
                subj = d.get(q.subject, SymUsage())
                # the continuation must hold the release obligation on the subject
                constraints.append(
                    _Constraint("eq_r", subj, const=(1, 0),
                                code="MissingRelease", rule="Acq-w", where=q)
                )
                constraints.append(
                    _Constraint("le_one", subj, code="UsageOverflow", rule="Acq-w", where=q)
                )
                d[q.subject] = subj.wait_part()
            else:
                if q.subject in d or q.subject in free_locks(q.body):
                    raise UntypableError(
                        "WaitBodyUsesSubject", "Wait-w", q,
                        f"{q.subject} cannot occur in the continuation of its wait",
                    )
                d[q.subject] = SymUsage(0, 1)
            return d
        if isinstance(q, Restrict):
            d = collect(q.body)
            demand = d.pop(q.name, SymUsage())
            constraints.append(
                _Constraint("eq_const", demand, const=(1, 1), code="MissingWait",
                            rule="New-w", where=q)
            )
            return d
        if isinstance(q, Par):
            da = collect(q.left)
            db = collect(q.right)
            for n, u in db.items():
                da[n] = da.get(n, SymUsage()) + u
            return da
        if isinstance(q, Match):
            d1 = collect(q.then_branch)
            d2 = collect(q.else_branch)
            for n in set(d1) | set(d2):
                constraints.append(
                    _Constraint("eq_expr", d1.get(n, SymUsage()),
                                other=d2.get(n, SymUsage()),
                                code="BranchMismatch", rule="Mat-w", where=q)
                )
            for n, u in d2.items():
                if n not in d1:
                    d1[n] = u
            return d1
        raise TypeError(q)

    top = collect(p)
    for n, u in top.items():
        constraints.append(_Constraint("le_one", u, code="UsageOverflow", rule="", where=p))
    assignment = _solve_usages(constraints, analysis.pinned_usages())
    return _build_pilw(p, analysis, assignment)


def _type_from_slot(slot, assignment, depth=0) -> Union[BoolSort, UnitSort, LockType]:
    if slot is None or depth > 32:
        return BOOL
    slot = slot.find()
    if slot.ctor == "lock":
        inner = slot.stored.find()
        usage = assignment.get(inner.uid, (0, 0))
        return LockType(_type_from_slot(inner, assignment, depth + 1), *usage)
    if slot.ctor == "unit":
        return UNIT_SORT
    return BOOL


def _build_pilw(p: Process, analysis: sorts.SortAnalysis, assignment) -> PilwEnv:
    def lock_type_of(n: Name, usage: tuple[int, int]) -> LockType:
        slot = analysis.flow_slots.get(n)
        if slot is None or slot.find().ctor != "lock":
            stored: Union[BoolSort, UnitSort, LockType] = BOOL
        else:
            stored = _type_from_slot(slot.find().stored, assignment)
        return LockType(stored, *usage)

    def payload_usage_of(subject: Name) -> tuple[int, int]:
        slot = analysis.stored_slot(subject)
        if slot is None or slot.ctor != "lock":
            return (0, 0)
        return assignment.get(slot.uid, (0, 0))

    def rec(q: Process) -> tuple[list[frozenset[Name]], dict[Name, tuple[int, int]]]:
        if isinstance(q, Nil):
            return [], {}
        if isinstance(q, Release):
            usages = {q.subject: (1, 0)}
            comp = {q.subject}
            v = _lockname(analysis, q.payload)
            if v is not None:
                comp.add(v)
                u = payload_usage_of(q.subject)
                usages[v] = _u_add(usages.get(v, (0, 0)), u)
            return [frozenset(comp)], usages
        if isinstance(q, (Acquire, Wait)):
            comps, usages = rec(q.body)
            usages.pop(q.binder, None)
            if isinstance(q, Acquire):
                ur, uw = usages.get(q.subject, (0, 0))
                if ur != 1:
                    raise UntypableError(
                        "MissingRelease", "Acq-w", q,
                        f"the continuation does not release {q.subject}",
                    )
                new_usage = (0, uw)
            else:
                if q.subject in usages:
                    raise UntypableError("WaitBodyUsesSubject", "Wait-w", q)
                new_usage = (0, 1)
            names = set().union(*comps) if comps else set()
            names.add(q.subject)
            names.discard(q.binder)
            usages[q.subject] = new_usage
            return [frozenset(names)], usages
        if isinstance(q, Restrict):
            comps, usages = rec(q.body)
            u = usages.pop(q.name, (0, 0))
            if u != (1, 1):
                code = "MissingWait" if u[0] == 1 else "MissingRelease"
                raise UntypableError(
                    code, "New-w", q,
                    f"a restricted lock needs usage 11, found {u[0]}{u[1]} for {q.name}",
                )
            out = []
            for c in comps:
                c2 = c - {q.name}
                if c2:
                    out.append(c2)
            return out, usages
        if isinstance(q, Par):
            ca, ua = rec(q.left)
            cb, ub = rec(q.right)
            for n, u in ub.items():
                s = _u_add(ua.get(n, (0, 0)), u)
                if s[0] > 1:
                    raise UntypableError("DoubleRelease", "Par-w", q, f"{n} released twice")
                if s[1] > 1:
                    raise UntypableError("UsageOverflow", "Par-w", q, f"{n} waited on twice")
                ua[n] = s
            comps = list(cb)
            try:
                for g in ca:
                    comps = list(_connect(g, comps))
            except Undefined as e:
                raise UntypableError(
                    "CompositionCycle", "Par-w", q,
                    f"parallel components share {', '.join(map(str, sorted(e.data)))}",
                ) from None
            return comps, ua
        if isinstance(q, Match):
            c1, u1 = rec(q.then_branch)
            c2, u2 = rec(q.else_branch)
            for n in set(u1) | set(u2):
                if u1.get(n, (0, 0)) != u2.get(n, (0, 0)):
                    raise UntypableError(
                        "BranchMismatch", "Mat-w", q,
                        "both branches must hold the same obligations",
                    )
            merged = dict(u2)
            merged.update(u1)
            return _join_partitions(c1, c2), merged
        raise TypeError(q)

    comps, usages = rec(p)
    types = {n: lock_type_of(n, u) for n, u in usages.items()}
    return PilwEnv(frozenset(comps), _freeze_types(types))


def _declared_sorts(declared: Optional[TypeEnv]) -> dict[Name, Sort]:
    if not isinstance(declared, PilwEnv):
        return {}
    return {n: t.sort() for n, t in declared.types}


def infer(p: Process, calculus: Calculus, declared: Optional[TypeEnv] = None) -> TypeEnv:
    """Synthesize the canonical finest judgement of the full normal form.

    Raises UntypableError (or SortMismatch for ill-sorted input).
    """
    nf = normalize(p)
    q = nf.to_process()
    analysis = sorts.analyze(q, _declared_sorts(declared), calculus)
    if calculus in (Calculus.CCSL, Calculus.PIL):
        suffix = "-C" if calculus is Calculus.CCSL else ""
        return _infer_pil(q, analysis, suffix)
    if isinstance(declared, PilwEnv):
        for n, t in declared.types:
            analysis.pin_lock_type(n, t)
    return _infer_pilw(q, analysis)


def check(p: Process, declared: TypeEnv, calculus: Calculus) -> Verdict:
    """Accept iff p is typable and declared weakens the minimal judgement."""
    try:
        minimal = infer(p, calculus, declared)
    except UntypableError as e:
        return Verdict(False, e.code, str(e), e)
    except sorts.SortMismatch as e:
        return Verdict(False, "SortMismatch", str(e), e)

    if not minimal.domain <= declared.domain:
        missing = ", ".join(map(str, sorted(minimal.domain - declared.domain)))
        return Verdict(False, "DeclaredEnvMismatch", f"missing hypotheses for {missing}")
    comp_of: dict[Name, frozenset[Name]] = {}
    for c in declared.components:
        for n in c:
            comp_of[n] = c
    for c in minimal.components:
        targets = {comp_of[n] for n in c}
        if len(targets) != 1:
            return Verdict(
                False, "DeclaredEnvMismatch",
                f"declared environment splits the forced component {{{', '.join(map(str, sorted(c)))}}}",
            )
    if isinstance(declared, PilEnv):
        assert isinstance(minimal, PilEnv)
        if declared.obligations != minimal.obligations:
            return Verdict(
                False, "DeclaredEnvMismatch",
                f"R must be exactly {{{', '.join(map(str, sorted(minimal.obligations)))}}}",
            )
    else:
        assert isinstance(minimal, PilwEnv)
        for n, t in minimal.types:
            dt = declared.type_of(n)
            if dt is None or dt != t:
                return Verdict(
                    False, "DeclaredEnvMismatch",
                    f"hypothesis for {n} must be {t}, declared {dt}",
                )
        for n, t in declared.types:
            if minimal.type_of(n) is None and t.usage != (0, 0):
                return Verdict(
                    False, "DeclaredEnvMismatch",
                    f"padding name {n} must carry usage 00, declared {t}",
                )
    return Verdict(True, data=minimal)


def is_complete(e: TypeEnv, p: Process) -> bool:
    """pil flavour: R covers every free lock of p; pilw flavour: every
    hypothesis is Lock<bool>^10 or Lock<Lock<t>^00>^10."""
    if isinstance(e, PilEnv):
        q = canonical(p)
        analysis = sorts.analyze(q)
        lockfree = {n for n in free_locks(q) if analysis.is_lock_sorted(n)}
        return e.obligations == frozenset(lockfree)
    for _, t in e.types:
        if t.usage != (1, 0):
            return False
        if isinstance(t.stored, LockType) and t.stored.usage != (0, 0):
            return False
    return True


def is_wait_closed(e: TypeEnv) -> bool:
    if not isinstance(e, PilwEnv):
        return False
    return all(t == LockType(BOOL, 1, 0) for _, t in e.types)
