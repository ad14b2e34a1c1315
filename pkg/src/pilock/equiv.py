"""Weak typed bisimilarity for pil and pilw, the reduction-closed barbed
game on complete/wait-closed pairs, a context-refutation harness, and the
wait-inserting translation of pil terms into pilw.

The bisimulation game is an exact greatest-fixpoint computation: the calculi
are finite and every challenge consumes a prefix of the challenger, so the
memoized recursion is well-founded.  Challenges are the typed transitions;
answers are weak moves of the partner, or the alternative answers: an
acquire l(v) may be answered by Q | l!v =>, a wait l((v)) by
(new l)(Q | l!v) =>, and a wait synchronisation tau/l by (new l)Q =>.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Union

from . import sorts
from .congruence import NormalForm, normalize
from .errors import PilockError, PreconditionViolation, UntypableError, Verdict
from .semantics import (
    TAU,
    Action,
    Config,
    Input,
    Tau,
    TauSlash,
    WaitAct,
    reduction_successors,
    typed_steps_pil,
    typed_steps_pilw,
)
from .syntax import (
    BOOL,
    FF,
    TT,
    Acquire,
    BoolSort,
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
    Value,
    Wait,
    canonical,
    free_locks,
    fresh_name,
    par,
    plug,
)
from .typecheck import PilEnv, PilwEnv, TypeEnv, check, infer, is_complete, is_wait_closed
from .verify import strong_barbs, barbs

DEFAULT_PAIR_BUDGET = 200000


# ------------------------------------------------------------- result types


@dataclass(frozen=True)
class PairState:
    env: TypeEnv
    left: NormalForm
    right: NormalForm


@dataclass
class Distinguisher:
    """Replayable evidence that a pair is not equivalent.

    kind "trace": the challenge sequence of a winning attacker strategy,
    ending in a challenge with no valid answer.  kind "context": a context
    whose instantiation separates the pair in the barbed game.
    """

    kind: str
    moves: tuple[tuple[str, str], ...] = ()
    context: Optional[Process] = None
    evidence: str = ""

    def script(self) -> str:
        if self.kind == "context":
            from .textio import print_process

            ctx = print_process(self.context) if self.context is not None else "?"
            return f"context {ctx}\n{self.evidence}"
        lines = [f"{side} {mu}" for side, mu in self.moves]
        if self.evidence:
            lines.append(f"# {self.evidence}")
        return "\n".join(lines)


@dataclass
class BisimResult:
    equivalent: bool
    distinguisher: Optional[Distinguisher] = None
    pairs_explored: int = 0


# ----------------------------------------------------------------- the game


def _pair_extras(env: TypeEnv, ln: NormalForm, rn: NormalForm) -> tuple[tuple[Name, Sort], ...]:
    """Sort-tagged names both players must consider as input candidates."""
    out: dict[Name, Sort] = {}
    if isinstance(env, PilwEnv):
        for n, t in env.types:
            out[n] = t.sort()
    for nf in (ln, rn):
        analysis = sorts.analyze(canonical(nf.to_process()))
        for n in nf.free:
            if analysis.is_lock_sorted(n):
                out.setdefault(n, analysis.sort_of(n))
    return tuple(sorted(out.items()))


class _Game:
    def __init__(self, calculus: Calculus, max_pairs: int):
        self.calculus = calculus
        self.max_pairs = max_pairs
        self.memo: dict[tuple, bool] = {}
        self.fail_info: dict[tuple, tuple[str, Action, "PairKey"]] = {}
        self.pairs = 0

    # -- keys ------------------------------------------------------------
    def key(self, env, ln, rn):
        a, b = sorted((ln, rn), key=str)
        return (env, a, b)

    # -- steppers ---------------------------------------------------------
    def steps(self, env, nf, extras, avoid):
        if self.calculus is Calculus.PILW:
            return typed_steps_pilw(env, nf, extras, avoid)
        return [
            (mu, c.env, c.proc)
            for mu, c in typed_steps_pil(
                Config(env, nf), extras, avoid, calculus=self.calculus
            )
        ]

    def tau_closure(self, env, nf) -> list[NormalForm]:
        seen = {nf}
        queue = [nf]
        order = [nf]
        while queue:
            s = queue.pop()
            for t in reduction_successors(s, self.calculus):
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
                    order.append(t)
        return order

    def answers(self, env, rn, mu, env_target, extras, avoid) -> list[NormalForm]:
        """Weak answers of rn to the challenge mu with target environment."""
        out: list[NormalForm] = []
        seen: set[NormalForm] = set()

        def push(nf):
            for t in self.tau_closure(env_target, nf):
                if t not in seen:
                    seen.add(t)
                    out.append(t)

        if isinstance(mu, Tau):
            push(rn)
            return out
        for q1 in self.tau_closure(env, rn):
            for mu2, env2, q2 in self.steps(env, q1, extras, avoid):
                if mu2 == mu and env2 == env_target:
                    push(q2)
        proc = rn.to_process()
        if isinstance(mu, Input):
            alt = normalize(Par(proc, Release(mu.subject, mu.value)))
            if check(alt.to_process(), env_target, self.calculus).ok:
                push(alt)
        elif isinstance(mu, WaitAct):
            alt = normalize(Restrict(mu.subject, Par(proc, Release(mu.subject, mu.value))))
            if check(alt.to_process(), env_target, self.calculus).ok:
                push(alt)
        elif isinstance(mu, TauSlash):
            alt = normalize(Restrict(mu.subject, proc))
            if check(alt.to_process(), env_target, self.calculus).ok:
                push(alt)
        return out

    # -- the fixpoint ------------------------------------------------------
    def equivalent(self, env, ln, rn) -> bool:
        k = self.key(env, ln, rn)
        if k in self.memo:
            return self.memo[k]
        if ln == rn:
            self.memo[k] = True
            return True
        self.pairs += 1
        if self.pairs > self.max_pairs:
            raise PilockError(f"bisimulation game exceeded {self.max_pairs} pairs")
        extras = _pair_extras(env, ln, rn)
        avoid = ln.free | rn.free | frozenset(ln.restricted) | frozenset(rn.restricted)
        ok = True
        for side, challenger, defender in (("left", ln, rn), ("right", rn, ln)):
            for mu, env2, p2 in self.steps(env, challenger, extras, avoid):
                found = False
                for q2 in self.answers(env, defender, mu, env2, extras, avoid):
                    if self.equivalent(env2, p2, q2):
                        found = True
                        break
                if not found:
                    self.fail_info[k] = (side, mu, (env2, p2))
                    ok = False
                    break
            if not ok:
                break
        self.memo[k] = ok
        return ok

    def trace(self, env, ln, rn) -> tuple[tuple[str, str], ...]:
        moves: list[tuple[str, str]] = []
        k = self.key(env, ln, rn)
        depth = 0
        while k in self.fail_info and depth < 64:
            side, mu, (env2, p2) = self.fail_info[k]
            moves.append((side, str(mu)))
            # follow the challenger; the defender has no surviving answer, so
            # the recorded challenge is the last replayable move
            break
        return tuple(moves)


def _run_game(env: TypeEnv, p: Process, q: Process, calculus: Calculus, max_pairs: int) -> BisimResult:
    for side, term in (("left", p), ("right", q)):
        verdict = check(term, env, calculus)
        if not verdict.ok:
            raise PreconditionViolation(
                f"{side} process is not typable at the given environment: {verdict.detail}"
            )
    game = _Game(calculus, max_pairs)
    ln, rn = normalize(p), normalize(q)
    if game.equivalent(env, ln, rn):
        return BisimResult(True, pairs_explored=game.pairs)
    k = game.key(env, ln, rn)
    side, mu, _ = game.fail_info.get(k, ("left", TAU, None))
    dist = Distinguisher(
        "trace",
        moves=((side, str(mu)),),
        evidence=f"challenge {mu} by the {side} process admits no weak answer "
        f"leading to bisimilar states",
    )
    return BisimResult(False, dist, game.pairs)


def bisim_pil(env: PilEnv, p: Process, q: Process, max_pairs: int = DEFAULT_PAIR_BUDGET,
              calculus: Calculus = Calculus.PIL) -> BisimResult:
    """Weak typed bisimilarity for pil (and ccsl via the embedding)."""
    return _run_game(env, p, q, calculus, max_pairs)


def bisim_pilw(env: PilwEnv, p: Process, q: Process, max_pairs: int = DEFAULT_PAIR_BUDGET) -> BisimResult:
    """Weak typed bisimilarity for pilw, with the wait answer clauses."""
    return _run_game(env, p, q, Calculus.PILW, max_pairs)


def replay(env: TypeEnv, p: Process, q: Process, calculus: Calculus, dist: Distinguisher) -> bool:
    """Re-derive the verdict a distinguisher claims."""
    if dist.kind == "context":
        res = refute_with_context(dist.context, env, p, q, calculus)
        return res is not None
    res = _run_game(env, p, q, calculus, DEFAULT_PAIR_BUDGET)
    return not res.equivalent


# ----------------------------------------------------------- barbed game


def barbed_game(
    env: TypeEnv,
    p: Process,
    q: Process,
    calculus: Calculus,
    max_pairs: int = DEFAULT_PAIR_BUDGET,
) -> Verdict:
    """Reduction-closed barb equivalence (clauses 1-2 of barbed equivalence;
    context closure is not decided here).

    pil/ccsl pairs must be complete, pilw pairs wait-closed.
    """
    if calculus is Calculus.PILW:
        if not is_wait_closed(env):
            raise PreconditionViolation("pilw barbed observation needs a wait-closed pair")
    else:
        if not (is_complete(env, p) and is_complete(env, q)):
            raise PreconditionViolation("barbed observation needs complete processes")
    for side, term in (("left", p), ("right", q)):
        v = check(term, env, calculus)
        if not v.ok:
            raise PreconditionViolation(f"{side} process untypable: {v.detail}")

    memo: dict[tuple[NormalForm, NormalForm], bool] = {}
    weak_cache: dict[NormalForm, frozenset] = {}
    fail: dict[tuple[NormalForm, NormalForm], str] = {}
    counter = itertools.count()

    def weak_barbs_of(nf: NormalForm) -> frozenset:
        if nf not in weak_cache:
            weak_cache[nf] = barbs(nf, weak=True, calculus=calculus)
        return weak_cache[nf]

    def closure(nf: NormalForm) -> list[NormalForm]:
        seen = {nf}
        queue = [nf]
        order = [nf]
        while queue:
            s = queue.pop()
            for t in reduction_successors(s, calculus):
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
                    order.append(t)
        return order

    def game(a: NormalForm, b: NormalForm) -> bool:
        key = (a, b) if str(a) <= str(b) else (b, a)
        if key in memo:
            return memo[key]
        if next(counter) > max_pairs:
            raise PilockError("barbed game exceeded the pair budget")
        if a == b:
            memo[key] = True
            return True
        ok = True
        for x, y, side in ((a, b, "left"), (b, a, "right")):
            missing = strong_barbs(x) - weak_barbs_of(y)
            if missing:
                fail[key] = f"{side} shows barb {sorted(map(str, missing))[0]}, partner never does"
                ok = False
                break
            for x2 in reduction_successors(x, calculus):
                if not any(game(x2, y2) for y2 in closure(y)):
                    fail[key] = f"{side} reduction to {x2} cannot be matched"
                    ok = False
                    break
            if not ok:
                break
        memo[key] = ok
        return ok

    a, b = normalize(p), normalize(q)
    if game(a, b):
        return Verdict(True, "ReductionClosedBarbEquivalent")
    key = (a, b) if str(a) <= str(b) else (b, a)
    return Verdict(False, "Distinguished", fail.get(key, "barb mismatch"))


# ----------------------------------------------------- context refutation


def refute_with_context(
    ctx: Process,
    env2: TypeEnv,
    p: Process,
    q: Process,
    calculus: Calculus,
    max_pairs: int = DEFAULT_PAIR_BUDGET,
) -> Optional[Distinguisher]:
    """Instantiate a one-hole context and run the barbed game."""
    cp, cq = plug(ctx, p), plug(ctx, q)
    for side, term in (("ctx[left]", cp), ("ctx[right]", cq)):
        v = check(term, env2, calculus)
        if not v.ok:
            raise PreconditionViolation(f"{side} untypable at the context environment: {v.detail}")
    verdict = barbed_game(env2, cp, cq, calculus, max_pairs)
    if verdict.ok:
        return None
    return Distinguisher("context", context=ctx, evidence=verdict.detail)


def _fresh_many(count: int, avoid: set[Name], base: str = "w") -> list[Name]:
    out: list[Name] = []
    taken = set(avoid)
    for _ in range(count):
        n = fresh_name(base, taken)
        taken.add(n)
        out.append(n)
    return out


def builtin_contexts(
    p: Process, q: Process, env: TypeEnv, calculus: Calculus
) -> Iterable[tuple[Process, TypeEnv]]:
    """The two shapes of distinguishing contexts used in the examples: the
    forwarder detector E and compositions of E_w = w!ff | w(_).([.] | w!tt),
    instantiated over the pair's free lock names with boolean payloads."""
    avoid = set(free_locks(p)) | set(free_locks(q)) | set(env.domain)
    analysis_p = sorts.analyze(canonical(p))
    analysis_q = sorts.analyze(canonical(q))

    def payload_of(n: Name) -> Optional[Sort]:
        for an in (analysis_p, analysis_q):
            if an.is_lock_sorted(n):
                s = an.sort_of(n)
                if isinstance(s, LockSort):
                    return s.stored
        if isinstance(env, PilwEnv):
            t = env.type_of(n)
            if t is not None:
                from .syntax import payload_sort

                return payload_sort(t.stored)
        return None

    locks = sorted(env.domain)
    wild = itertools.count(1)

    def w_(base):  # wildcard binder
        return Name("_", next(wild))

    # forwarder detector: [.] | l0(y).w(_).(w!tt|l0!y) | w'(_).(w'!tt|l!v) | w!ff | w'!ff
    for l0 in locks:
        if not isinstance(payload_of(l0), BoolSort):
            continue
        for l in locks:
            if l == l0:
                continue
            pl = payload_of(l)
            if not isinstance(pl, BoolSort):
                continue
            w, w2 = _fresh_many(2, avoid)
            y = Name("y", 991)
            ctx = par(
                Hole(),
                Acquire(l0, y, Acquire(w, w_(""), par(Release(w, TT), Release(l0, y)))),
                Acquire(w2, w_(""), par(Release(w2, TT), Release(l, TT))),
                Release(w, FF),
                Release(w2, FF),
            )
            e2 = _context_env(ctx, p, q, calculus)
            if e2 is not None:
                yield ctx, e2

    # acquire-order detector built from E_w shapes
    for l1 in locks:
        for l2 in locks:
            if l1 == l2:
                continue
            if not isinstance(payload_of(l1), BoolSort) or not isinstance(payload_of(l2), BoolSort):
                continue
            w1, w2 = _fresh_many(2, avoid)
            z = Name("z", 992)

            def ew(w: Name, inner: Process) -> Process:
                return par(Release(w, FF), Acquire(w, w_(""), Par(inner, Release(w, TT))))

            ctx = par(
                Hole(),
                ew(w2, Release(l2, TT)),
                Release(l1, TT),
                Acquire(l1, z, ew(w1, Release(l1, z))),
            )
            e2 = _context_env(ctx, p, q, calculus)
            if e2 is not None:
                yield ctx, e2


def _context_env(ctx: Process, p: Process, q: Process, calculus: Calculus) -> Optional[TypeEnv]:
    """A common environment making ctx[p] and ctx[q] observable, if any."""
    try:
        ep = infer(plug(ctx, p), calculus)
        eq = infer(plug(ctx, q), calculus)
    except (UntypableError, sorts.SortMismatch):
        return None
    env = _join_envs(ep, eq)
    if env is None:
        return None
    for term in (plug(ctx, p), plug(ctx, q)):
        if not check(term, env, calculus).ok:
            return None
    if calculus is Calculus.PILW:
        if not is_wait_closed(env):
            return None
    else:
        if not (is_complete(env, plug(ctx, p)) and is_complete(env, plug(ctx, q))):
            return None
    return env


def _join_envs(a: TypeEnv, b: TypeEnv) -> Optional[TypeEnv]:
    from .typecheck import _join_partitions

    comps = _join_partitions(list(a.components), list(b.components))
    if isinstance(a, PilEnv):
        if a.obligations != b.obligations:
            return None
        return PilEnv(frozenset(comps), a.obligations)
    tmap = dict(a.typemap)
    for n, t in b.types:
        if n in tmap and tmap[n] != t:
            return None
        tmap[n] = t
    return PilwEnv.make(comps, tmap)


def refute_auto(
    p: Process, q: Process, env: TypeEnv, calculus: Calculus, max_pairs: int = DEFAULT_PAIR_BUDGET
) -> Optional[Distinguisher]:
    """Try the built-in context family until one separates the pair."""
    for ctx, env2 in builtin_contexts(p, q, env, calculus):
        try:
            d = refute_with_context(ctx, env2, p, q, calculus, max_pairs)
        except PreconditionViolation:
            continue
        if d is not None:
            return d
    return None


# -------------------------------------------------------------- translation


def encw(p: Process) -> Process:
    """Translate a pil process into pilw by adding a trivial wait under every
    restriction; raises UntypableError when p is not typable in pil."""
    infer(p, Calculus.PIL)
    return _encw(p)


def _encw(p: Process) -> Process:
    if isinstance(p, (Nil, Release, Hole)):
        return p
    if isinstance(p, Acquire):
        return Acquire(p.subject, p.binder, _encw(p.body))
    if isinstance(p, Wait):
        raise PilockError("encw applies to pil terms only")
    if isinstance(p, Restrict):
        x = fresh_name("x", free_locks(p.body) | {p.name}, 700)
        return Restrict(p.name, Par(_encw(p.body), Wait(p.name, x, Nil())), p.annot)
    if isinstance(p, Par):
        return Par(_encw(p.left), _encw(p.right))
    if isinstance(p, Match):
        return Match(p.left, p.right, _encw(p.then_branch), _encw(p.else_branch))
    raise TypeError(p)


def encw_env(env: PilEnv, p: Process) -> PilwEnv:
    """The pilw environment of the translation: sorts made explicit, usage 10
    for obligations and 00 otherwise, all payload usages 00."""
    analysis = sorts.analyze(canonical(p))

    def to_type(n: Name) -> LockType:
        s = analysis.sort_of(n)
        stored = _zero_usage(s.stored) if isinstance(s, LockSort) else BOOL
        usage = (1, 0) if n in env.obligations else (0, 0)
        return LockType(stored, *usage)

    types = {n: to_type(n) for n in env.domain}
    return PilwEnv.make(list(env.components), types)


def _zero_usage(s: Sort):
    if isinstance(s, LockSort):
        return LockType(_zero_usage(s.stored), 0, 0)
    return BOOL
