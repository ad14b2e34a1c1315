"""Exhaustive exploration and the safety properties of typable processes:
termination/stuck/deadlock classification, leak detection, progress over the
whole reachable graph, barbs, the lock-sharing-graph diagnostic, and a
derivation-directed generator of typable terms for property tests.
"""

from __future__ import annotations

import enum
import os
import random
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

from .congruence import NormalForm, normalize
from .errors import PilockError, SortMismatch, StateBudgetExceeded, UntypableError, Verdict
from .semantics import (
    TAU,
    Action,
    Config,
    Tau,
    reduction_successors,
    typed_steps_pil,
    typed_steps_pilw,
)
from .syntax import (
    BOOL,
    FF,
    TT,
    UNIT,
    Acquire,
    BoolSort,
    BoolVal,
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
    UnitSort,
    Value,
    Wait,
    free_locks,
    fresh_name,
    par,
    value_names,
)
from .typecheck import PilEnv, PilwEnv, TypeEnv, check, infer, is_complete

DEFAULT_BUDGET = int(os.environ.get("PILOCK_MAX_STATES", "1000000"))


# ------------------------------------------------------------- exploration


@dataclass
class StateGraph:
    nodes: list[Config]
    edges: list[tuple[int, Action, int]]
    roots: list[int]
    complete: bool = True
    index: dict[Config, int] = field(default_factory=dict, repr=False)

    def successors(self, i: int) -> list[tuple[Action, int]]:
        return [(mu, dst) for src, mu, dst in self.edges if src == i]

    def path_to(self, target: int) -> list[int]:
        """Some root-to-target node path (BFS)."""
        prev: dict[int, int] = {}
        queue = list(self.roots)
        seen = set(queue)
        while queue:
            cur = queue.pop(0)
            if cur == target:
                path = [cur]
                while cur not in self.roots or (path[0] != cur and cur in prev):
                    if cur not in prev:
                        break
                    cur = prev[cur]
                    path.insert(0, cur)
                return path
            for _, dst in self.successors(cur):
                if dst not in seen:
                    seen.add(dst)
                    prev[dst] = cur
                    queue.append(dst)
        return [target]


def reduction_stepper(calculus: Calculus) -> Callable[[Config], list[tuple[Action, Config]]]:
    def step(c: Config) -> list[tuple[Action, Config]]:
        return [(TAU, Config(c.env, s)) for s in reduction_successors(c.proc, calculus)]

    return step


def typed_stepper(calculus: Calculus) -> Callable[[Config], list[tuple[Action, Config]]]:
    if calculus is Calculus.PILW:

        def step(c: Config) -> list[tuple[Action, Config]]:
            return [
                (mu, Config(e2, nf2))
                for mu, e2, nf2 in typed_steps_pilw(c.env, c.proc)
            ]

        return step

    def step_pil(c: Config) -> list[tuple[Action, Config]]:
        return typed_steps_pil(c, calculus=calculus)

    return step_pil


def explore(
    c: Config,
    stepper: Callable[[Config], list[tuple[Action, Config]]],
    max_states: int = DEFAULT_BUDGET,
) -> StateGraph:
    """Full reachable graph under the stepper, with normal-form identity."""
    graph = StateGraph(nodes=[], edges=[], roots=[0])
    graph.nodes.append(c)
    graph.index[c] = 0
    frontier = [0]
    while frontier:
        i = frontier.pop(0)
        for mu, succ in stepper(graph.nodes[i]):
            j = graph.index.get(succ)
            if j is None:
                if len(graph.nodes) >= max_states:
                    graph.complete = False
                    raise StateBudgetExceeded(max_states)
                j = len(graph.nodes)
                graph.nodes.append(succ)
                graph.index[succ] = j
                frontier.append(j)
            graph.edges.append((i, mu, j))
    return graph


def export_edge_list(graph: StateGraph) -> str:
    lines = [f"# nodes {len(graph.nodes)} edges {len(graph.edges)}"]
    for i, node in enumerate(graph.nodes):
        lines.append(f"node {i} {node.proc}")
    for src, mu, dst in graph.edges:
        lines.append(f"{src} -> {dst} {mu}")
    return "\n".join(lines) + "\n"


def export_dot(graph: StateGraph) -> str:
    lines = ["digraph states {"]
    for i, node in enumerate(graph.nodes):
        label = str(node.proc).replace('"', "'")
        lines.append(f'  n{i} [label="{label}"];')
    for src, mu, dst in graph.edges:
        lines.append(f'  n{src} -> n{dst} [label="{mu}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------- classification


class Classification(enum.Enum):
    TERMINATED = "terminated"
    STUCK = "stuck"
    DEADLOCKED = "deadlocked"
    REDUCIBLE = "reducible"


def classify(
    p: Union[Process, NormalForm],
    complete: bool,
    calculus: Calculus = Calculus.PIL,
) -> Classification:
    """A terminated process is parallel releases under restrictions; a stuck
    process contains an acquire (or wait) and cannot reduce; stuck and
    complete means deadlocked."""
    nf = p if isinstance(p, NormalForm) else normalize(p)
    if reduction_successors(nf, calculus):
        return Classification.REDUCIBLE
    if all(isinstance(q, Release) for q in nf.primes):
        return Classification.TERMINATED
    return Classification.DEADLOCKED if complete else Classification.STUCK


def find_leak(p: Union[Process, NormalForm]) -> Optional[Name]:
    """Some restricted l with p == (new l)(P' | l!v) and l not free in P'."""
    nf = p if isinstance(p, NormalForm) else normalize(p)
    restricted = set(nf.restricted)
    for i, pr in enumerate(nf.primes):
        if not isinstance(pr, Release):
            continue
        l = pr.subject
        if l not in restricted or l in value_names(pr.payload):
            continue
        others = [q for k, q in enumerate(nf.primes) if k != i]
        if all(l not in free_locks(q) for q in others):
            return l
    return None


def terminated_shape_ok(nf: NormalForm) -> bool:
    """(new S) of parallel releases with pairwise-distinct subjects."""
    subjects = [q.subject for q in nf.primes if isinstance(q, Release)]
    return len(nf.primes) == len(subjects) and len(subjects) == len(set(subjects))


def check_progress(
    c: Config,
    calculus: Calculus,
    max_states: int = DEFAULT_BUDGET,
    require_leak_freedom: Optional[bool] = None,
) -> Verdict:
    """Every reachable node reduces or is a terminated parallel composition
    of releases with pairwise-distinct subjects; pilw graphs additionally
    must be leak-free."""
    if not is_complete(c.env, c.proc.to_process()):
        return Verdict(False, "PreconditionViolation", "configuration is not complete")
    if require_leak_freedom is None:
        require_leak_freedom = calculus is Calculus.PILW
    try:
        graph = explore(c, reduction_stepper(calculus), max_states)
    except StateBudgetExceeded:
        return Verdict(False, "Incomplete", f"state budget {max_states} exceeded")
    for i, node in enumerate(graph.nodes):
        cls = classify(node.proc, True, calculus)
        if cls is Classification.DEADLOCKED:
            return Verdict(False, "Deadlocked", f"node {i}: {node.proc}", graph.path_to(i))
        if cls is not Classification.REDUCIBLE and not terminated_shape_ok(node.proc):
            return Verdict(
                False, "BadTerminalShape", f"node {i}: {node.proc}", graph.path_to(i)
            )
        if require_leak_freedom:
            leak = find_leak(node.proc)
            if leak is not None:
                return Verdict(
                    False, "Leak", f"node {i} leaks {leak}: {node.proc}", graph.path_to(i)
                )
    return Verdict(True, data=graph)


# ------------------------------------------------------------------- barbs

BOUND = "bound"


@dataclass(frozen=True)
class Barb:
    subject: Name
    payload: Union[Value, str]  # a value, or the bound marker

    def __str__(self):
        if self.payload == BOUND:
            return f"{self.subject}!(new)"
        return f"{self.subject}!{self.payload}"


def strong_barbs(p: Union[Process, NormalForm], bool_only: bool = False) -> frozenset[Barb]:
    nf = p if isinstance(p, NormalForm) else normalize(p)
    restricted = set(nf.restricted)
    out = set()
    for q in nf.primes:
        if isinstance(q, Release) and q.subject not in restricted:
            if isinstance(q.payload, Name) and q.payload in restricted:
                b = Barb(q.subject, BOUND)
            else:
                b = Barb(q.subject, q.payload)
            if bool_only and not isinstance(b.payload, BoolVal):
                continue
            out.add(b)
    return frozenset(out)


def barbs(
    p: Union[Process, NormalForm],
    weak: bool = False,
    calculus: Calculus = Calculus.PIL,
    bool_only: bool = False,
    max_states: int = DEFAULT_BUDGET,
) -> frozenset[Barb]:
    nf = p if isinstance(p, NormalForm) else normalize(p)
    if not weak:
        return strong_barbs(nf, bool_only)
    seen = {nf}
    queue = [nf]
    out: set[Barb] = set()
    while queue:
        s = queue.pop()
        out |= strong_barbs(s, bool_only)
        for t in reduction_successors(s, calculus):
            if t not in seen:
                if len(seen) >= max_states:
                    raise StateBudgetExceeded(max_states)
                seen.add(t)
                queue.append(t)
    return frozenset(out)


# ------------------------------------------------------------- lock graph


def _release_available(q: Process, l: Name, env: Optional[PilwEnv]) -> bool:
    """An unguarded-by-l release of l, or a release storing l whose carrier
    transmits the release obligation (type-free approximation without env)."""

    def walk(t: Process) -> bool:
        if isinstance(t, Release):
            if t.subject == l:
                return True
            if isinstance(t.payload, Name) and t.payload == l:
                if env is None:
                    return True
                ct = env.type_of(t.subject)
                return (
                    ct is not None
                    and isinstance(ct.stored, LockType)
                    and ct.stored.r == 1
                )
            return False
        if isinstance(t, (Acquire, Wait)):
            if t.subject == l or t.binder == l:
                return False
            return walk(t.body)
        if isinstance(t, Restrict):
            return False if t.name == l else walk(t.body)
        if isinstance(t, Par):
            return walk(t.left) or walk(t.right)
        if isinstance(t, Match):
            return walk(t.then_branch) or walk(t.else_branch)
        return False

    return walk(q)


def _wait_available(q: Process, l: Name, env: Optional[PilwEnv]) -> bool:
    def walk(t: Process) -> bool:
        if isinstance(t, Wait) and t.subject == l:
            return True
        if isinstance(t, Release):
            if isinstance(t.payload, Name) and t.payload == l:
                if env is None:
                    return True
                ct = env.type_of(t.subject)
                return (
                    ct is not None
                    and isinstance(ct.stored, LockType)
                    and ct.stored.w == 1
                )
            return False
        if isinstance(t, (Acquire, Wait)):
            if t.binder == l:
                return False
            return walk(t.body)
        if isinstance(t, Restrict):
            return False if t.name == l else walk(t.body)
        if isinstance(t, Par):
            return walk(t.left) or walk(t.right)
        if isinstance(t, Match):
            return walk(t.then_branch) or walk(t.else_branch)
        return False

    return walk(q)


def _acquire_present(q: Process, l: Name) -> bool:
    def walk(t: Process) -> bool:
        if isinstance(t, Acquire):
            return t.subject == l or (t.binder != l and walk(t.body))
        if isinstance(t, Wait):
            return t.binder != l and walk(t.body)
        if isinstance(t, Restrict):
            return t.name != l and walk(t.body)
        if isinstance(t, Par):
            return walk(t.left) or walk(t.right)
        if isinstance(t, Match):
            return walk(t.then_branch) or walk(t.else_branch)
        return False

    return walk(q)


@dataclass
class LockGraph:
    vertices: list[Process]
    edges: list[tuple[int, int, Name]]
    cycle: Optional[list[int]] = None

    def to_dot(self) -> str:
        lines = ["digraph locks {"]
        for i, v in enumerate(self.vertices):
            lines.append(f'  p{i} [label="{str(v)[:40]}"];')
        for a, b, l in self.edges:
            lines.append(f'  p{a} -> p{b} [label="{l}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def lock_graph(p: Union[Process, NormalForm], env: Optional[PilwEnv] = None) -> LockGraph:
    """Diagnostic graph over top-level primes, per the progress proofs: each
    prime points at the primes holding the resource its subject is blocked
    on.  Resources satisfiable by an immediate top-level synchronisation are
    not blocking and contribute no edge, so redexes keep the graph acyclic.
    """
    nf = p if isinstance(p, NormalForm) else normalize(p)
    primes = list(nf.primes)
    top_release = {q.subject for q in primes if isinstance(q, Release)}
    top_wait = {q.subject for q in primes if isinstance(q, Wait)}
    top_acquire = {q.subject for q in primes if isinstance(q, Acquire)}
    edges: list[tuple[int, int, Name]] = []
    for i, pr in enumerate(primes):
        if isinstance(pr, Match):
            continue
        l = pr.subject
        for j, other in enumerate(primes):
            if j == i or isinstance(other, Match):
                continue
            hit = False
            if isinstance(pr, Acquire):
                # blocked unless a top-level release of l exists (a redex)
                hit = l not in top_release and _release_available(other, l, env)
            elif isinstance(pr, Wait):
                if l in top_release:
                    # the wait needs the pending acquires on l to fire first
                    hit = not isinstance(other, Release) and _acquire_present(other, l)
                else:
                    hit = _release_available(other, l, env)
            elif isinstance(pr, Release):
                if l in top_acquire:
                    hit = False  # immediate synchronisation possible
                elif l in top_wait:
                    # the wait-synchronisation needs the guarded acquires gone
                    hit = not isinstance(other, (Release, Wait)) and _acquire_present(other, l)
                else:
                    hit = _wait_available(other, l, env) or (
                        not isinstance(other, Release) and _acquire_present(other, l)
                    )
            if hit:
                edges.append((i, j, l))
    cycle = _find_cycle(len(primes), edges)
    return LockGraph(primes, edges, cycle)


def _find_cycle(n: int, edges: list[tuple[int, int, Name]]) -> Optional[list[int]]:
    adj: dict[int, list[int]] = {}
    for a, b, _ in edges:
        adj.setdefault(a, []).append(b)
    color = [0] * n
    stack: list[int] = []

    def dfs(v: int) -> Optional[list[int]]:
        color[v] = 1
        stack.append(v)
        for w in adj.get(v, []):
            if color[w] == 1:
                return stack[stack.index(w):] + [w]
            if color[w] == 0:
                found = dfs(w)
                if found:
                    return found
        stack.pop()
        color[v] = 2
        return None

    for v in range(n):
        if color[v] == 0:
            found = dfs(v)
            if found:
                return found
    return None


# ---------------------------------------------------------------- generator


def generate_typable(
    seed: int,
    size: int,
    calculus: Calculus,
    complete: bool = False,
    wait_closed: bool = False,
) -> tuple[Process, TypeEnv]:
    """Random typable process, reproducible from the seed.

    Pieces are grown bottom-up and only combined when the composite stays
    typable, so every output carries a valid derivation; the completion pass
    adds release providers (and waits + restrictions in pilw) so the result
    is complete.
    """
    rng = random.Random((seed, size, calculus.value, complete, wait_closed).__repr__())
    last: Optional[Exception] = None
    for _ in range(60):
        try:
            p = _grow(rng, size, calculus)
            if complete or wait_closed:
                p = _completion(rng, p, calculus, wait_closed)
            env = infer(p, calculus)
            if complete or wait_closed:
                if not is_complete(env, p):
                    continue
            return p, env
        except (UntypableError, SortMismatch, PilockError) as e:
            last = e
            continue
    raise PilockError(f"generator failed to produce a typable term: {last}")


def _grow(rng: random.Random, size: int, calculus: Calculus) -> Process:
    labels = ["a", "b", "c", "d", "e", "f"]
    names = [Name(l) for l in rng.sample(labels, rng.randint(3, len(labels)))]
    counter = [0]

    def fresh(base="m") -> Name:
        counter[0] += 1
        return Name(base, counter[0] + 100)

    def base_piece() -> Process:
        l = rng.choice(names)
        if calculus is Calculus.CCSL:
            return Release(l, UNIT)
        roll = rng.random()
        if calculus is Calculus.PIL and roll < 0.15:
            m = fresh()
            return Restrict(m, Par(Release(l, m), Release(m, TT)))
        if calculus is Calculus.PILW and roll < 0.12:
            # higher-order release of a free, self-sufficient lock: storing a
            # restricted lock at payload usage 00 would block its wait forever
            m = fresh()
            return Par(Release(l, m), Release(m, TT))
        if calculus is Calculus.PILW and roll < 0.2:
            # obligation transfer: a restricted lock stores the release duty
            carrier = fresh("t")
            y = fresh("y")
            return Restrict(
                carrier, Par(Release(carrier, l), Wait(carrier, y, Release(y, TT)))
            )
        return Release(l, TT if rng.random() < 0.5 else FF)

    pool: list[Process] = [base_piece() for _ in range(max(2, size // 2))]
    ops = size
    while ops > 0:
        ops -= 1
        roll = rng.random()
        if roll < 0.4 and len(pool) >= 2:
            i, j = rng.sample(range(len(pool)), 2)
            a, b = pool[i], pool[j]
            cand = Par(a, b)
            if _typable(cand, calculus):
                pool = [q for k, q in enumerate(pool) if k not in (i, j)] + [cand]
        elif roll < 0.7:
            i = rng.randrange(len(pool))
            a = pool[i]
            env = _try_infer(a, calculus)
            if env is None:
                continue
            obligations = _release_obligations(env)
            if not obligations:
                continue
            l = rng.choice(sorted(obligations))
            binder = fresh("x")
            cand: Process = Acquire(l, binder, a)
            if _typable(cand, calculus):
                pool[i] = cand
        elif roll < 0.9:
            i = rng.randrange(len(pool))
            a = pool[i]
            env = _try_infer(a, calculus)
            if env is None:
                continue
            if calculus is Calculus.PILW:
                stored = _payload_names(a)
                closable = [
                    n for n, t in env.types if t.usage == (1, 1) and n not in stored
                ]
                if not closable:
                    # pair a release with a wait to build usage 11, then close;
                    # names stored in other locks would block their own wait
                    rel = [n for n, t in env.types if t.usage == (1, 0)
                           and isinstance(t.stored, BoolSort) and n not in stored]
                    if rel:
                        l = rng.choice(sorted(rel))
                        x = fresh("x")
                        cand = Restrict(l, Par(a, Wait(l, x, Nil())))
                        if _typable(cand, calculus):
                            pool[i] = cand
                    continue
                l = rng.choice(sorted(closable))
                cand = Restrict(l, a)
            else:
                obligations = _release_obligations(env)
                if not obligations:
                    continue
                l = rng.choice(sorted(obligations))
                cand = Restrict(l, a)
            if _typable(cand, calculus):
                pool[i] = cand
        elif calculus is not Calculus.CCSL and pool:
            i = rng.randrange(len(pool))
            a = pool[i]
            u, v = rng.choice([(TT, TT), (TT, FF), (FF, FF)])
            cand = Match(u, v, a, a)
            if _typable(cand, calculus):
                pool[i] = cand
    # fold the pool into a single process, renaming clashes apart
    result = pool[0]
    for piece in pool[1:]:
        cand = Par(result, piece)
        if _typable(cand, calculus):
            result = cand
            continue
        renamed = piece
        for n in sorted(free_locks(result) & free_locks(piece)):
            renamed = _rename_free(renamed, n, fresh(n.label))
        cand = Par(result, renamed)
        if _typable(cand, calculus):
            result = cand
    return result


def _rename_free(p: Process, old: Name, new: Name) -> Process:
    from .syntax import substitute

    return substitute(p, new, old)


def _payload_names(p: Process) -> frozenset[Name]:
    """Free names occurring as a release payload somewhere in p."""
    if isinstance(p, Release):
        return value_names(p.payload)
    if isinstance(p, (Acquire, Wait)):
        return _payload_names(p.body) - {p.binder}
    if isinstance(p, Restrict):
        return _payload_names(p.body) - {p.name}
    if isinstance(p, Par):
        return _payload_names(p.left) | _payload_names(p.right)
    if isinstance(p, Match):
        return _payload_names(p.then_branch) | _payload_names(p.else_branch)
    return frozenset()


def _typable(p: Process, calculus: Calculus) -> bool:
    return _try_infer(p, calculus) is not None


def _try_infer(p: Process, calculus: Calculus):
    try:
        return infer(p, calculus)
    except (UntypableError, SortMismatch, PilockError):
        return None


def _release_obligations(env: TypeEnv) -> list[Name]:
    if isinstance(env, PilEnv):
        return sorted(env.obligations)
    return sorted(n for n, t in env.types if t.r == 1)


def _provider(rng: random.Random, l: Name, payload, calculus: Calculus, fresh) -> Process:
    """A parallel component making a release of l available.

    payload is the sort (pil) or payload type (pilw) of values stored in l;
    lock-sorted payloads get a fresh, fully discharged lock, recursively.
    """
    if calculus is Calculus.CCSL:
        return Release(l, UNIT)
    if payload is None or isinstance(payload, (BoolSort, UnitSort)):
        return Release(l, TT if rng.random() < 0.5 else FF)
    m = fresh("p")
    if calculus is Calculus.PIL:
        inner = payload.stored if isinstance(payload, LockSort) else BOOL
        return Restrict(m, Par(Release(l, m), _provider(rng, m, inner, calculus, fresh)))
    if isinstance(payload, LockType) and payload.usage != (0, 0):
        return _release_with(l, payload, fresh)
    # obligation-free payload: store a free, self-sufficient lock (restricting
    # it would leave its wait blocked by this very release)
    inner = payload.stored if isinstance(payload, LockType) else BOOL
    return Par(Release(l, m), _provider(rng, m, inner, calculus, fresh))


def _completion(rng: random.Random, p: Process, calculus: Calculus, wait_closed: bool) -> Process:
    env = infer(p, calculus)
    counter = [1000]

    def fresh(base="q") -> Name:
        counter[0] += 1
        return Name(base, counter[0])

    if isinstance(env, PilEnv):
        from . import sorts as _sorts
        from .syntax import canonical as _canonical

        analysis = _sorts.analyze(_canonical(p), calculus=calculus)
        missing = sorted(
            n for n in free_locks(p)
            if (analysis.is_lock_sorted(n) or calculus is Calculus.CCSL)
            and n not in env.obligations
        )
        parts = [p]
        for l in missing:
            s = analysis.sort_of(l)
            payload = s.stored if isinstance(s, LockSort) else None
            parts.append(_provider(rng, l, payload, calculus, fresh))
        return par(*parts)

    # pilw: provide releases, then restrict names that still owe a wait or
    # carry payload obligations
    work = p
    for _ in range(40):
        env = infer(work, Calculus.PILW)
        fixed = True
        for n, t in env.types:
            if t.usage == (1, 0) and (
                isinstance(t.stored, BoolSort)
                or (isinstance(t.stored, LockType) and t.stored.usage == (0, 0))
            ):
                if wait_closed and not isinstance(t.stored, BoolSort):
                    pass  # handled below
                else:
                    continue
            fixed = False
            if t.r == 0:
                work = Par(work, _provider(rng, n, t.stored, Calculus.PILW, fresh))
                break
            if n in _payload_names(work):
                raise PilockError(f"{n} is stored in another lock; cannot restrict it")
            if t.w == 0:
                x = fresh("x")
                body = _discharge(x, t.stored, fresh)
                work = Restrict(n, Par(work, Wait(n, x, body)))
                break
            work = Restrict(n, work)
            break
        if fixed:
            return work
    return work


def _release_with(l: Name, stored, fresh) -> Process:
    """A release of l carrying a value of payload type `stored`; lock-typed
    payloads are fresh restricted locks whose leftover obligations are
    discharged alongside."""
    if not isinstance(stored, LockType):
        return Release(l, TT)
    m = fresh("d")
    parts: list[Process] = [Release(l, m)]
    if stored.r == 0:
        parts.append(_release_with(m, stored.stored, fresh))
    if stored.w == 0:
        y = fresh("y")
        parts.append(Wait(m, y, _discharge(y, stored.stored, fresh)))
    return Restrict(m, par(*parts))


def _discharge(x: Name, payload, fresh) -> Process:
    """Use up the obligations a received value carries."""
    if not isinstance(payload, LockType):
        return Nil()
    parts: list[Process] = []
    if payload.r == 1:
        parts.append(_release_with(x, payload.stored, fresh))
    if payload.w == 1:
        z = fresh("z")
        parts.append(Wait(x, z, _discharge(z, payload.stored, fresh)))
    return par(*parts)
