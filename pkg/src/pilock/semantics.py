"""Reduction semantics, the untyped early LTS, type-allowed transitions of
pil, and the typed LTS of pilw.

All step functions work on canonical normal forms and return canonical
successors.  Input branching is finitized over the free names of the process
of the right sort, one deterministically drawn fresh name per needed sort,
and the boolean literals.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable, Optional, Union

from . import sorts
from .congruence import NormalForm, normalize
from .errors import PilockError
from .syntax import (
    BOOL,
    FF,
    TT,
    UNIT,
    UNIT_SORT,
    Acquire,
    BoolSort,
    BoolVal,
    Calculus,
    LockSort,
    LockType,
    Name,
    Par,
    Process,
    Release,
    Restrict,
    Sort,
    UnitSort,
    UnitVal,
    Value,
    Wait,
    free_locks,
    fresh_name,
    par,
    payload_sort,
    payload_usage,
    substitute,
    value_names,
)
from .typecheck import PilEnv, PilwEnv, TypeEnv, Undefined, check

# ------------------------------------------------------------------ actions


@dataclass(frozen=True)
class Tau:
    def __str__(self):
        return "tau"


@dataclass(frozen=True)
class Input:
    subject: Name
    value: Value

    def __str__(self):
        return f"{self.subject}({self.value})"


@dataclass(frozen=True)
class FreeOutput:
    subject: Name
    value: Value

    def __str__(self):
        return f"{self.subject}!{self.value}"


@dataclass(frozen=True)
class BoundOutput:
    subject: Name
    exported: Name

    def __str__(self):
        return f"{self.subject}!(new {self.exported})"


@dataclass(frozen=True)
class WaitAct:
    subject: Name
    value: Value

    def __str__(self):
        return f"{self.subject}(({self.value}))"

    @property
    def deallocates(self) -> Name:
        return self.subject


@dataclass(frozen=True)
class TauSlash:
    subject: Name

    def __str__(self):
        return f"tau/{self.subject}"

    @property
    def deallocates(self) -> Name:
        return self.subject


Action = Union[Tau, Input, FreeOutput, BoundOutput, WaitAct, TauSlash]

TAU = Tau()


def action_free_names(mu: Action) -> frozenset[Name]:
    if isinstance(mu, Tau):
        return frozenset()
    if isinstance(mu, BoundOutput):
        return frozenset([mu.subject])
    if isinstance(mu, TauSlash):
        return frozenset([mu.subject])
    return frozenset([mu.subject]) | value_names(mu.value)


@dataclass(frozen=True)
class Config:
    env: TypeEnv
    proc: NormalForm

    def __str__(self):
        return f"[{self.env}; {self.proc}]"


# ----------------------------------------------------------- reductions


def _rebuild(restricted: Iterable[Name], primes: Iterable[Process]) -> NormalForm:
    out = par(*primes)
    for n in reversed(list(restricted)):
        out = Restrict(n, out)
    return normalize(out)


def reduction_successors(nf: NormalForm, calculus: Calculus) -> tuple[NormalForm, ...]:
    """One-step successors modulo structural congruence."""
    out: list[NormalForm] = []
    seen: set[NormalForm] = set()
    primes = nf.primes
    restricted = set(nf.restricted)
    for i, pr in enumerate(primes):
        if not isinstance(pr, Release):
            continue
        for j, pj in enumerate(primes):
            if j == i:
                continue
            if isinstance(pj, Acquire) and pj.subject == pr.subject:
                rest = [p for k, p in enumerate(primes) if k not in (i, j)]
                body = substitute(pj.body, pr.payload, pj.binder)
                succ = _rebuild(nf.restricted, rest + [body])
                if succ not in seen:
                    seen.add(succ)
                    out.append(succ)
            elif (
                calculus is Calculus.PILW
                and isinstance(pj, Wait)
                and pj.subject == pr.subject
            ):
                l = pr.subject
                rest = [p for k, p in enumerate(primes) if k not in (i, j)]
                if l not in restricted:
                    continue
                if any(l in free_locks(p) for p in rest):
                    continue
                if l in value_names(pr.payload) or l in free_locks(pj.body) - {pj.binder}:
                    continue
                body = substitute(pj.body, pr.payload, pj.binder)
                keep = [n for n in nf.restricted if n != l]
                succ = _rebuild(keep, rest + [body])
                if succ not in seen:
                    seen.add(succ)
                    out.append(succ)
    return tuple(out)


def reductions(p: Process, calculus: Calculus) -> tuple[Process, ...]:
    """Public reduction op on raw processes."""
    return tuple(nf.to_process() for nf in reduction_successors(normalize(p), calculus))


# ------------------------------------------------------- value candidates


@functools.lru_cache(maxsize=1 << 14)
def _term_analysis(p: Process) -> sorts.SortAnalysis:
    return sorts.analyze(p)


def _candidate_values(
    payload: Sort,
    nf: NormalForm,
    extra: tuple[tuple[Name, Sort], ...],
    avoid: frozenset[Name],
) -> list[Value]:
    """Free names of the right sort + one canonical fresh name + booleans.

    extra carries sort-tagged names contributed by the caller (in the
    bisimulation game: the other side's free names), so both players
    enumerate identical challenge values.
    """
    if isinstance(payload, UnitSort):
        return [UNIT]
    analysis = _term_analysis(nf.to_process())
    avoid_all = avoid | nf.free | frozenset(nf.restricted)
    out: list[Value] = []
    if isinstance(payload, BoolSort):
        out.extend([TT, FF])
        for n in sorted(nf.free):
            if not analysis.is_lock_sorted(n):
                out.append(n)
        for n, s in extra:
            if isinstance(s, BoolSort) and n not in out:
                out.append(n)
        out.append(fresh_name("fb", avoid_all))
        return out
    for n in sorted(nf.free):
        if analysis.is_lock_sorted(n) and analysis.sort_of(n) == payload:
            out.append(n)
    for n, s in extra:
        if s == payload and n not in out:
            out.append(n)
    out.append(fresh_name("fn", avoid_all))
    return out


def _payload_sort_pil(nf: NormalForm, subject: Name, calculus: Calculus) -> Sort:
    if calculus is Calculus.CCSL:
        return UNIT_SORT
    analysis = _term_analysis(nf.to_process())
    s = analysis.sort_of(subject)
    if isinstance(s, LockSort):
        return s.stored
    return BOOL


# ----------------------------------------------------- untyped LTS (pil)


def untyped_steps(
    p: Union[Process, NormalForm],
    calculus: Calculus = Calculus.PIL,
    extra_values: tuple[tuple[Name, Sort], ...] = (),
    avoid: frozenset[Name] = frozenset(),
) -> list[tuple[Action, NormalForm]]:
    """Early-style transitions of the untyped LTS (no wait actions)."""
    nf = p if isinstance(p, NormalForm) else normalize(p)
    res: list[tuple[Action, NormalForm]] = []
    restricted = set(nf.restricted)
    for succ in reduction_successors(nf, calculus):
        res.append((TAU, succ))
    for i, pr in enumerate(nf.primes):
        rest = [q for k, q in enumerate(nf.primes) if k != i]
        if isinstance(pr, Release) and pr.subject not in restricted:
            v = pr.payload
            if isinstance(v, Name) and v in restricted:
                b = fresh_name("bn", avoid | nf.free | frozenset(nf.restricted))
                keep = [n for n in nf.restricted if n != v]
                renamed = [substitute(q, b, v) for q in rest]
                res.append((BoundOutput(pr.subject, b), _rebuild(keep, renamed)))
            else:
                res.append((FreeOutput(pr.subject, v), _rebuild(nf.restricted, rest)))
        elif isinstance(pr, Acquire) and pr.subject not in restricted:
            payload = _payload_sort_pil(nf, pr.subject, calculus)
            for v in _candidate_values(payload, nf, extra_values, avoid):
                body = substitute(pr.body, v, pr.binder)
                res.append(
                    (Input(pr.subject, v), _rebuild(nf.restricted, rest + [body]))
                )
    return res


# ------------------------------------------- type-allowed transitions (pil)


def typed_steps_pil(
    c: Config,
    extra_values: tuple[tuple[Name, Sort], ...] = (),
    avoid: frozenset[Name] = frozenset(),
    calculus: Calculus = Calculus.PIL,
) -> list[tuple[Action, Config]]:
    """Filter the untyped transitions by the typing environment.

    tau keeps the environment; free output requires the subject in R (which
    it then leaves); bound output moves the obligation to the exported name
    and adds it to the subject's component; input is allowed iff P | l!v is
    typable at the current environment with comp(l) and comp(v) merged, the
    successor environment being exactly that merge.
    """
    env = c.env
    assert isinstance(env, PilEnv)
    nf = c.proc
    avoid = avoid | env.domain
    out: list[tuple[Action, Config]] = []
    for succ in reduction_successors(nf, calculus):
        out.append((TAU, Config(env, succ)))
    restricted = set(nf.restricted)
    for i, pr in enumerate(nf.primes):
        rest = [q for k, q in enumerate(nf.primes) if k != i]
        if isinstance(pr, Release) and pr.subject not in restricted:
            l, v = pr.subject, pr.payload
            if l not in env.obligations:
                continue
            if isinstance(v, Name) and v in restricted:
                b = fresh_name("bn", avoid | nf.free | frozenset(nf.restricted))
                keep = [n for n in nf.restricted if n != v]
                renamed = [substitute(q, b, v) for q in rest]
                env2 = env.add_name(l, b).with_obligations(
                    (env.obligations - {l}) | {b}
                )
                out.append((BoundOutput(l, b), Config(env2, _rebuild(keep, renamed))))
            else:
                comp = env.component_of(l) or frozenset()
                vn = v if isinstance(v, Name) else None
                if vn is not None and vn in env.domain and vn not in comp:
                    analysis = _term_analysis(nf.to_process())
                    if analysis.is_lock_sorted(vn):
                        continue  # subject and object must share a component
                env2 = env.with_obligations(env.obligations - {l})
                out.append((FreeOutput(l, v), Config(env2, _rebuild(nf.restricted, rest))))
        elif isinstance(pr, Acquire) and pr.subject not in restricted:
            l = pr.subject
            if l in env.obligations:
                continue
            payload = _payload_sort_pil(nf, l, calculus)
            for v in _candidate_values(payload, nf, extra_values, avoid):
                env2 = env
                if isinstance(v, Name) and isinstance(payload, LockSort):
                    env2 = env.merge(l, v)
                env2 = env2.with_obligations(env2.obligations | {l})
                probe = Par(nf.to_process(), Release(l, v))
                if not check(probe, env2, calculus).ok:
                    continue
                body = substitute(pr.body, v, pr.binder)
                succ = _rebuild(nf.restricted, rest + [body])
                out.append((Input(l, v), Config(env2, succ)))
    return out


# ------------------------------------------------------ typed LTS (pilw)


def typed_steps_pilw(
    env: PilwEnv,
    p: Union[Process, NormalForm],
    extra_values: tuple[tuple[Name, Sort], ...] = (),
    avoid: frozenset[Name] = frozenset(),
) -> list[tuple[Action, PilwEnv, NormalForm]]:
    """Inductively defined typed transitions of pilw.

    Wait actions and wait synchronisations demand that the deallocated name
    occurs nowhere else; under a restriction the synchronisation becomes a
    plain tau and discharges the restriction (handled by the reduction
    relation).
    """
    nf = p if isinstance(p, NormalForm) else normalize(p)
    avoid = avoid | env.domain
    out: list[tuple[Action, PilwEnv, NormalForm]] = []
    for succ in reduction_successors(nf, Calculus.PILW):
        out.append((TAU, env, succ))
    restricted = set(nf.restricted)

    def gate(action, env2, succ):
        if check(succ.to_process(), env2, Calculus.PILW).ok:
            out.append((action, env2, succ))

    for i, pr in enumerate(nf.primes):
        rest = [q for k, q in enumerate(nf.primes) if k != i]
        if isinstance(pr, Release) and pr.subject not in restricted:
            l, v = pr.subject, pr.payload
            t = env.type_of(l)
            if t is None or t.r != 1:
                continue
            if isinstance(v, Name) and v in restricted:
                # bound output: export the restricted payload
                if not isinstance(t.stored, LockType):
                    continue
                b = fresh_name("bn", avoid | nf.free | frozenset(nf.restricted))
                pu = t.stored.usage
                btype = LockType(t.stored.stored, 1 - pu[0], 1 - pu[1])
                keep = [n for n in nf.restricted if n != v]
                renamed = [substitute(q, b, v) for q in rest]
                try:
                    env2 = env.usage_delta(l, -1, 0).add_hypothesis(l, b, btype)
                except Undefined:
                    continue
                gate(BoundOutput(l, b), env2, _rebuild(keep, renamed))
            else:
                try:
                    env2 = env.usage_delta(l, -1, 0)
                    vn = v if isinstance(v, Name) else None
                    if vn is not None and env2.type_of(vn) is not None:
                        pu = payload_usage(t.stored)
                        env2 = env2.usage_delta(vn, -pu[0], -pu[1])
                except Undefined:
                    continue
                gate(FreeOutput(l, v), env2, _rebuild(nf.restricted, rest))
        elif isinstance(pr, Acquire) and pr.subject not in restricted:
            l = pr.subject
            t = env.type_of(l)
            if t is None or t.r != 0:
                continue
            payload = payload_sort(t.stored)
            for v in _candidate_values(payload, nf, extra_values, avoid):
                try:
                    env2 = env.usage_delta(l, +1, 0)
                    if isinstance(v, Name) and isinstance(t.stored, LockType):
                        env2 = env2.add_hypothesis(l, v, t.stored)
                except Undefined:
                    continue
                # allowed iff P | l!v is typable at the successor environment
                probe = Par(nf.to_process(), Release(l, v))
                if not check(probe, env2, Calculus.PILW).ok:
                    continue
                body = substitute(pr.body, v, pr.binder)
                out.append((Input(l, v), env2, _rebuild(nf.restricted, rest + [body])))
        elif isinstance(pr, Wait) and pr.subject not in restricted:
            l = pr.subject
            t = env.type_of(l)
            if t is None or t.w != 1:
                continue
            if any(l in free_locks(q) for q in rest):
                continue
            if l in free_locks(pr.body) - {pr.binder}:
                continue
            comp_rest = (env.component_of(l) or frozenset()) - {l}
            anchor = min(comp_rest) if comp_rest else None
            payload = payload_sort(t.stored)
            for v in _candidate_values(payload, nf, extra_values, avoid):
                try:
                    env2 = env.drop_name(l)
                    if isinstance(v, Name) and isinstance(t.stored, LockType):
                        env2 = env2.add_hypothesis(anchor, v, t.stored)
                except Undefined:
                    continue
                # allowed iff (new l)(P | l!v) is typable at the successor env
                probe = Restrict(l, Par(nf.to_process(), Release(l, v)))
                if not check(probe, env2, Calculus.PILW).ok:
                    continue
                body = substitute(pr.body, v, pr.binder)
                out.append((WaitAct(l, v), env2, _rebuild(nf.restricted, rest + [body])))

    # wait synchronisation on a free name: tau/l
    for i, pr in enumerate(nf.primes):
        if not isinstance(pr, Release) or pr.subject in restricted:
            continue
        l = pr.subject
        t = env.type_of(l)
        if t is None or t.usage != (1, 1):
            continue
        for j, pj in enumerate(nf.primes):
            if j == i or not isinstance(pj, Wait) or pj.subject != l:
                continue
            rest = [q for k, q in enumerate(nf.primes) if k not in (i, j)]
            if any(l in free_locks(q) for q in rest):
                continue
            if l in value_names(pr.payload) or l in free_locks(pj.body) - {pj.binder}:
                continue
            env2 = env.drop_name(l)
            body = substitute(pj.body, pr.payload, pj.binder)
            gate(TauSlash(l), env2, _rebuild(nf.restricted, rest + [body]))
    return out


# --------------------------------------------------------------- weak arrows


def tau_closure(step_fn, state, budget: int = 1 << 20) -> list:
    """All states reachable through tau transitions, the state included.

    step_fn(state) yields (action, state') pairs.
    """
    seen = {state}
    queue = [state]
    order = [state]
    while queue:
        s = queue.pop()
        for mu, t in step_fn(s):
            if isinstance(mu, Tau) and t not in seen:
                seen.add(t)
                queue.append(t)
                order.append(t)
                if len(order) > budget:
                    raise PilockError("tau closure exceeded budget")
    return order


def weak_closure(step_fn, state, mu: Optional[Action] = None) -> list:
    """Weak arrows: tau* when mu is None/tau, tau* mu tau* otherwise."""
    pre = tau_closure(step_fn, state)
    if mu is None or isinstance(mu, Tau):
        return pre
    hits: list = []
    seen: set = set()
    for s in pre:
        for action, t in step_fn(s):
            if action == mu:
                for u in tau_closure(step_fn, t):
                    if u not in seen:
                        seen.add(u)
                        hits.append(u)
    return hits
