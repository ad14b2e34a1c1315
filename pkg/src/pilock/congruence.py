"""Structural congruence and canonical normal forms.

A normal form is a canonically ordered restriction prefix over a multiset of
prime processes (releases, acquires, waits, and - under prefixes only -
unresolved mismatches).  Full mode applies the mismatch axiom at unguarded
positions; under acquire/wait prefixes and inside match branches recursion
switches to the restricted congruence, where only the match axiom fires.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Iterable

from .syntax import (
    Acquire,
    BoolVal,
    Hole,
    Match,
    Name,
    Nil,
    Par,
    Process,
    Release,
    Restrict,
    Value,
    Wait,
    canonical,
    free_locks,
    par,
)

FULL = "full"
RESTRICTED = "restricted"


@dataclass(frozen=True)
class NormalForm:
    restricted: tuple[Name, ...]
    primes: tuple[Process, ...]

    def to_process(self) -> Process:
        out = par(*self.primes)
        for n in reversed(self.restricted):
            out = Restrict(n, out)
        return out

    @property
    def free(self) -> frozenset[Name]:
        names = frozenset()
        for q in self.primes:
            names |= free_locks(q)
        return names - frozenset(self.restricted)

    def __str__(self):
        from .textio import print_process

        return print_process(self.to_process())


def _value_key(v: Value, env: dict[Name, tuple]) -> tuple:
    if isinstance(v, Name):
        return env.get(v, ("f", v.label, v.index))
    if isinstance(v, BoolVal):
        return ("v", v.value)
    return ("u",)


def _key(p: Process, env: dict[Name, tuple], depth: int) -> tuple:
    """Binder-name-independent structure key used for canonical ordering."""
    if isinstance(p, Nil):
        return ("0",)
    if isinstance(p, Hole):
        return ("h",)
    if isinstance(p, Release):
        return ("rel", _value_key(p.subject, env), _value_key(p.payload, env))
    if isinstance(p, (Acquire, Wait)):
        tag = "acq" if isinstance(p, Acquire) else "wai"
        inner = dict(env)
        inner[p.binder] = ("b", depth)
        return (tag, _value_key(p.subject, env), _key(p.body, inner, depth + 1))
    if isinstance(p, Restrict):
        inner = dict(env)
        inner[p.name] = ("b", depth)
        return ("res", _key(p.body, inner, depth + 1))
    if isinstance(p, Par):
        return ("par", _key(p.left, env, depth), _key(p.right, env, depth))
    if isinstance(p, Match):
        return (
            "mat",
            _value_key(p.left, env),
            _value_key(p.right, env),
            _key(p.then_branch, env, depth),
            _key(p.else_branch, env, depth),
        )
    raise TypeError(p)


def _soup(p: Process, mode: str) -> tuple[list[Name], list[Process]]:
    """Flatten to restricted names + primes, applying the congruence axioms."""
    if isinstance(p, Nil):
        return [], []
    if isinstance(p, Par):
        ra, pa = _soup(p.left, mode)
        rb, pb = _soup(p.right, mode)
        return ra + rb, pa + pb
    if isinstance(p, Restrict):
        rs, ps = _soup(p.body, mode)
        used = frozenset().union(*map(free_locks, ps)) if ps else frozenset()
        if p.name not in used:
            return rs, ps
        return [p.name] + rs, ps
    if isinstance(p, Match):
        if p.left == p.right:
            return _soup(p.then_branch, mode)
        if mode == FULL:
            # distinct values: two distinct names denote distinct locks
            return _soup(p.else_branch, mode)
        then_nf = normalize(p.then_branch, RESTRICTED)
        else_nf = normalize(p.else_branch, RESTRICTED)
        return [], [Match(p.left, p.right, then_nf.to_process(), else_nf.to_process())]
    if isinstance(p, Release):
        return [], [p]
    if isinstance(p, (Acquire, Wait)):
        body_nf = normalize(p.body, RESTRICTED)
        return [], [type(p)(p.subject, p.binder, body_nf.to_process())]
    raise TypeError(p)


def _occurrences(p: Process) -> Iterable[Name]:
    if isinstance(p, Release):
        yield p.subject
        if isinstance(p.payload, Name):
            yield p.payload
    elif isinstance(p, (Acquire, Wait)):
        yield p.subject
        yield from _occurrences(p.body)
    elif isinstance(p, Restrict):
        yield from _occurrences(p.body)
    elif isinstance(p, Par):
        yield from _occurrences(p.left)
        yield from _occurrences(p.right)
    elif isinstance(p, Match):
        for v in (p.left, p.right):
            if isinstance(v, Name):
                yield v
        yield from _occurrences(p.then_branch)
        yield from _occurrences(p.else_branch)


def _order(restricted: list[Name], primes: list[Process]) -> tuple[list[Name], list[Process]]:
    """Sort primes canonically; order restricted names by first use.

    Restricted names start indistinguishable and are refined by their first
    occurrence in the sorted prime list until the assignment is stable.
    """
    res_set = set(restricted)
    assignment: dict[Name, tuple] = {n: ("r", -1) for n in res_set}
    for _ in range(len(res_set) + 2):
        keyed = sorted(primes, key=lambda q: _key(q, assignment, 0))
        new_assignment: dict[Name, tuple] = {}
        for q in keyed:
            for n in _occurrences(q):
                if n in res_set and n not in new_assignment:
                    new_assignment[n] = ("r", len(new_assignment))
        if new_assignment == assignment and keyed == primes:
            primes = keyed
            break
        primes, assignment = keyed, new_assignment
    order = sorted(res_set, key=lambda n: assignment[n])
    return order, primes


@functools.lru_cache(maxsize=1 << 16)
def normalize(p: Process, mode: str = FULL) -> NormalForm:
    """Canonical normal form; two ≡-related processes map to the same value."""
    q = canonical(p)
    restricted, primes = _soup(q, mode)
    restricted, primes = _order(restricted, primes)
    rebuilt = par(*primes)
    for n in reversed(restricted):
        rebuilt = Restrict(n, rebuilt)
    rebuilt = canonical(rebuilt)
    rs: list[Name] = []
    body = rebuilt
    for _ in restricted:
        assert isinstance(body, Restrict)
        rs.append(body.name)
        body = body.body
    prime_list: list[Process] = []
    while isinstance(body, Par):
        prime_list.append(body.left)
        body = body.right
    if not isinstance(body, Nil):
        prime_list.append(body)
    return NormalForm(tuple(rs), tuple(prime_list))


def struct_equiv(p: Process, q: Process) -> bool:
    return normalize(p) == normalize(q)
