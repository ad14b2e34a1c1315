"""Command-line front end.

Exit codes: 0 success/positive verdict, 1 negative verdict (untypable,
distinguished, deadlock found), 2 resource/incomplete, 3 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import random
import sys
from typing import Optional

from . import equiv, verify
from .congruence import normalize
from .errors import (
    CalculusError,
    ParseError,
    PilockError,
    PreconditionViolation,
    SortMismatch,
    StateBudgetExceeded,
    UntypableError,
)
from .semantics import Config, reduction_successors
from .syntax import Calculus, Process
from .textio import parse, parse_context, parse_env, print_env, print_process
from .typecheck import TypeEnv, check, infer, is_complete

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INCOMPLETE = 2
EXIT_USAGE = 3


class _Reporter:
    def __init__(self, fmt: str, command: str):
        self.fmt = fmt
        self.command = command

    def emit(self, verdict: str, **fields):
        if self.fmt == "records":
            rec = {"command": self.command, "verdict": verdict}
            rec.update(fields)
            print(json.dumps(rec, default=str))
        else:
            extra = " ".join(f"{k}={v}" for k, v in fields.items())
            print(f"{verdict}" + (f" {extra}" if extra else ""))

    def text(self, line: str):
        if self.fmt != "records":
            print(line)


def _calculus(name: str) -> Calculus:
    return Calculus(name)


def _load_process(path: str, calculus: Calculus) -> Process:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), calculus)


def _load_env(spec: Optional[str], calculus: Calculus) -> Optional[TypeEnv]:
    if spec is None:
        return None
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            spec = fh.read()
    return parse_env(spec.strip(), calculus)


def _budget(args) -> int:
    if args.max_states is not None:
        return args.max_states
    return int(os.environ.get("PILOCK_MAX_STATES", "1000000"))


def cmd_check(args) -> int:
    calc = _calculus(args.calculus)
    rep = _Reporter(args.format, "check")
    p = _load_process(args.file, calc)
    env = _load_env(args.env, calc)
    if env is None:
        try:
            minimal = infer(p, calc)
        except (UntypableError, SortMismatch) as e:
            code = getattr(e, "code", "SortMismatch")
            rep.emit("untypable", code=code, detail=str(e))
            return EXIT_NEGATIVE
        rep.emit("typable", env=print_env(minimal))
        return EXIT_OK
    verdict = check(p, env, calc)
    if verdict.ok:
        rep.emit("typable", env=print_env(env), minimal=print_env(verdict.data))
        return EXIT_OK
    rep.emit("untypable", code=verdict.code, detail=verdict.detail)
    return EXIT_NEGATIVE


def _config(args, calc) -> Config:
    p = _load_process(args.file, calc)
    env = _load_env(args.env, calc)
    if env is None:
        env = infer(p, calc)
    else:
        verdict = check(p, env, calc)
        if not verdict.ok:
            raise UntypableError(verdict.code, "", None, verdict.detail)
    return Config(env, normalize(p))


def cmd_run(args) -> int:
    calc = _calculus(args.calculus)
    rep = _Reporter(args.format, "run")
    cfg = _config(args, calc)
    rng = random.Random(args.seed)
    state = cfg.proc
    trace = [state]
    for _ in range(_budget(args)):
        succs = reduction_successors(state, calc)
        if not succs:
            break
        state = rng.choice(succs)
        trace.append(state)
    for i, s in enumerate(trace):
        rep.text(f"{i}: {s}")
    cls = verify.classify(state, is_complete(cfg.env, cfg.proc.to_process()), calc)
    rep.emit("run", steps=len(trace) - 1, final=str(state), classification=cls.value)
    return EXIT_OK if cls is not verify.Classification.DEADLOCKED else EXIT_NEGATIVE


def cmd_explore(args) -> int:
    calc = _calculus(args.calculus)
    rep = _Reporter(args.format, "explore")
    cfg = _config(args, calc)
    budget = _budget(args)
    try:
        graph = verify.explore(cfg, verify.reduction_stepper(calc), budget)
    except StateBudgetExceeded:
        rep.emit("incomplete", budget=budget)
        return EXIT_INCOMPLETE
    complete = is_complete(cfg.env, cfg.proc.to_process())
    leaves = deadlocks = leaks = 0
    bad_nodes = []
    for i, node in enumerate(graph.nodes):
        cls = verify.classify(node.proc, complete, calc)
        if cls is verify.Classification.REDUCIBLE:
            continue
        leaves += 1
        if cls is verify.Classification.DEADLOCKED:
            deadlocks += 1
            bad_nodes.append(i)
        if verify.find_leak(node.proc) is not None and calc is Calculus.PILW:
            leaks += 1
    weak = verify.barbs(cfg.proc, weak=True, calculus=calc)
    lg = verify.lock_graph(cfg.proc, cfg.env if calc is Calculus.PILW else None)
    if args.dot:
        with open(args.dot, "w", encoding="utf-8") as fh:
            fh.write(verify.export_dot(graph))
    if args.edges:
        with open(args.edges, "w", encoding="utf-8") as fh:
            fh.write(verify.export_edge_list(graph))
    rep.text(f"states: {len(graph.nodes)}, edges: {len(graph.edges)}")
    rep.text(f"terminated leaves: {leaves - deadlocks}, deadlocks: {deadlocks}, leaks: {leaks}")
    rep.text(f"weak barbs: {', '.join(sorted(map(str, weak))) or '(none)'}")
    rep.text(f"lock graph: {len(lg.edges)} edges, cycle: {lg.cycle or 'none'}")
    if complete:
        progress = verify.check_progress(cfg, calc, budget)
        rep.text(f"progress: {'ok' if progress.ok else progress.code}")
    else:
        progress = None
    rep.emit(
        "explored",
        states=len(graph.nodes),
        deadlocks=deadlocks,
        leaks=leaks,
        weak_barbs=sorted(map(str, weak)),
        cycle=lg.cycle,
        progress=(None if progress is None else progress.ok),
    )
    return EXIT_NEGATIVE if deadlocks or leaks else EXIT_OK


def _common_env(args, calc, p, q) -> TypeEnv:
    env = _load_env(args.env, calc)
    if env is not None:
        return env
    ep, eq = infer(p, calc), infer(q, calc)
    joined = equiv._join_envs(ep, eq)
    if joined is None:
        raise PreconditionViolation(
            "no common environment; give one explicitly with --env"
        )
    return joined


def cmd_bisim(args) -> int:
    calc = _calculus(args.calculus)
    rep = _Reporter(args.format, "bisim")
    p = _load_process(args.file, calc)
    q = _load_process(args.file2, calc)
    env = _common_env(args, calc, p, q)
    if calc is Calculus.PILW:
        res = equiv.bisim_pilw(env, p, q)
    else:
        res = equiv.bisim_pil(env, p, q, calculus=calc)
    if res.equivalent:
        rep.emit("Equivalent", env=print_env(env), pairs=res.pairs_explored)
        return EXIT_OK
    rep.emit(
        "Distinguished",
        env=print_env(env),
        pairs=res.pairs_explored,
        distinguisher=res.distinguisher.script(),
    )
    return EXIT_NEGATIVE


def cmd_refute(args) -> int:
    calc = _calculus(args.calculus)
    rep = _Reporter(args.format, "refute")
    p = _load_process(args.file, calc)
    q = _load_process(args.file2, calc)
    env = _common_env(args, calc, p, q)
    if args.context:
        spec = args.context
        if os.path.exists(spec):
            with open(spec, encoding="utf-8") as fh:
                spec = fh.read()
        ctx = parse_context(spec, calc)
        env2 = equiv._context_env(ctx, p, q, calc)
        if env2 is None:
            rep.emit("PreconditionViolation", detail="context instantiations are not observable")
            return EXIT_USAGE
        d = equiv.refute_with_context(ctx, env2, p, q, calc)
    else:
        d = equiv.refute_auto(p, q, env, calc)
    if d is None:
        rep.emit("NoDistinguisherFound")
        return EXIT_OK
    rep.emit("Distinguished", distinguisher=d.script())
    return EXIT_NEGATIVE


def cmd_translate(args) -> int:
    rep = _Reporter(args.format, "translate")
    p = _load_process(args.file, Calculus.PIL)
    env = _load_env(args.env, Calculus.PIL)
    if env is None:
        env = infer(p, Calculus.PIL)
    translated = equiv.encw(p)
    env_w = equiv.encw_env(env, p)
    rep.text(print_process(translated, Calculus.PILW))
    rep.text(print_env(env_w))
    rep.emit("translated", process=print_process(translated, Calculus.PILW), env=print_env(env_w))
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pilock", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, two_files=False):
        sp.add_argument("file")
        if two_files:
            sp.add_argument("file2")
        sp.add_argument("--calculus", choices=[c.value for c in Calculus], default="pil")
        sp.add_argument("--env", help="environment, inline text or a file path")
        sp.add_argument("--max-states", type=int, default=None)
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--format", choices=["text", "records"], default="text")

    sp = sub.add_parser("check", help="sort-check and type-check a process")
    common(sp)
    sp.set_defaults(fn=cmd_check)

    sp = sub.add_parser("run", help="one maximal reduction path (seeded scheduler)")
    common(sp)
    sp.set_defaults(fn=cmd_run)

    sp = sub.add_parser("explore", help="exhaustive exploration and safety summary")
    common(sp)
    sp.add_argument("--dot", help="write the state graph in dot format")
    sp.add_argument("--edges", help="write the state graph as an edge list")
    sp.set_defaults(fn=cmd_explore)

    sp = sub.add_parser("bisim", help="decide weak typed bisimilarity")
    common(sp, two_files=True)
    sp.set_defaults(fn=cmd_bisim)

    sp = sub.add_parser("refute", help="search for a distinguishing context")
    common(sp, two_files=True)
    sp.add_argument("--context", help="context template ([] marks the hole), inline or file")
    sp.set_defaults(fn=cmd_refute)

    sp = sub.add_parser("translate", help="insert waits: pil source to pilw source")
    common(sp)
    sp.set_defaults(fn=cmd_translate)
    return ap


def main(argv: Optional[list[str]] = None) -> int:
    try:
        args = _parser().parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else 0
    try:
        return args.fn(args)
    except (ParseError, CalculusError) as e:
        print(f"parse error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UntypableError, SortMismatch) as e:
        print(f"untypable: {e}", file=sys.stderr)
        return EXIT_NEGATIVE
    except PreconditionViolation as e:
        print(f"precondition: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StateBudgetExceeded as e:
        print(f"incomplete: {e}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except FileNotFoundError as e:
        print(f"no such file: {e.filename}", file=sys.stderr)
        return EXIT_USAGE
    except PilockError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
