"""Concrete syntax: tokenizer, recursive-descent parser, pretty-printer.

Grammar (EBNF):

    proc  := "0" | name "(" name ")" "." proc | name "!" [value]
           | name "((" name "))" "." proc | name "." proc        (ccsl sugar)
           | "new" name [":" type] "." proc | proc "|" proc
           | "[" value "=" value "]" proc "," proc | "(" proc ")" | "[]"
    value := name | "tt" | "ff"
    type  := "bool" | "Lock" "<" type ">" ["^" usage]
    usage := "00" | "01" | "10" | "11"

"|" is right-associative and binds weakest; prefixes bind tighter.  "ν" is
accepted as an alias for "new".  An identifier ending in a primed number,
like l'2, denotes the name (l, 2); a bare identifier denotes index 0.
Environment syntax: pil "{l1,l2}{l3}; R={l2}", pilw "{l:Lock<bool>^10}{...}".
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Union

from .errors import CalculusError, ParseError, SourceSpan
from .syntax import (
    BOOL,
    FF,
    NIL,
    TT,
    UNIT,
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
    UnitVal,
    Value,
    Wait,
    free_locks,
)

_PUNCT = {
    "(": "LP",
    ")": "RP",
    ".": "DOT",
    "!": "BANG",
    "|": "BAR",
    "[": "LB",
    "]": "RB",
    "=": "EQ",
    ",": "COMMA",
    ":": "COLON",
    "<": "LT",
    ">": "GT",
    "^": "HAT",
    "{": "LC",
    "}": "RC",
    ";": "SEMI",
}


@dataclass
class Token:
    kind: str  # NAME | DIGITS | punct kinds | EOF
    text: str
    span: SourceSpan


def _tokenize(text: str) -> list[Token]:
    toks: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(start, end, l, c):
        return SourceSpan(start, end, l, c)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if ch.isspace():
            i += 1
            col += 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start, l0, c0 = i, line, col
        if ch == "ν":
            toks.append(Token("NAME", "new", span(i, i + 1, l0, c0)))
            i += 1
            col += 1
            continue
        if ch in _PUNCT:
            toks.append(Token(_PUNCT[ch], ch, span(i, i + 1, l0, c0)))
            i += 1
            col += 1
            continue
        if ch.isdigit():
            j = i
            while j < n and text[j].isdigit():
                j += 1
            toks.append(Token("DIGITS", text[i:j], span(i, j, l0, c0)))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] in "_"):
                j += 1
            while j < n and text[j] == "'":
                k = j + 1
                while k < n and text[k].isdigit():
                    k += 1
                j = k
            toks.append(Token("NAME", text[i:j], span(i, j, l0, c0)))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {ch!r}", span(i, i + 1, l0, c0))
    toks.append(Token("EOF", "", span(n, n, line, col)))
    return toks


def decode_name(text: str) -> Name:
    """Identifier text to a Name; a trailing primed number is the index."""
    if "'" in text:
        head, _, tail = text.rpartition("'")
        if tail.isdigit() and head and not head.endswith("'"):
            return Name(head, int(tail))
    return Name(text)


class _Parser:
    def __init__(self, text: str, calculus: Calculus, allow_hole: bool = False):
        self.toks = _tokenize(text)
        self.pos = 0
        self.calculus = calculus
        self.allow_hole = allow_hole
        self._wild = itertools.count(1)

    # -- token plumbing -------------------------------------------------
    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def expect(self, kind: str) -> Token:
        t = self.peek()
        if t.kind != kind:
            raise ParseError(f"expected {kind}, found {t.text!r}", t.span)
        return self.next()

    def fail(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.peek()
        raise ParseError(msg, tok.span)

    def calc_fail(self, msg: str, tok: Token):
        raise CalculusError(msg, tok.span)

    # -- grammar --------------------------------------------------------
    def process(self) -> Process:
        p = self.par_expr()
        t = self.peek()
        if t.kind != "EOF":
            self.fail(f"trailing input {t.text!r}")
        return p

    def par_expr(self) -> Process:
        left = self.prefix_expr()
        if self.peek().kind == "BAR":
            self.next()
            return Par(left, self.par_expr())
        return left

    def wildcard(self) -> Name:
        return Name("_", next(self._wild))

    def name_token(self) -> tuple[Name, Token]:
        t = self.expect("NAME")
        if t.text in ("tt", "ff", "new", "bool", "Lock"):
            self.fail(f"{t.text!r} is reserved", t)
        return decode_name(t.text), t

    def binder(self) -> Name:
        nm, tok = self.name_token()
        if nm.label == "_" and nm.index == 0:
            return self.wildcard()
        return nm

    def value(self) -> Value:
        t = self.peek()
        if t.kind == "NAME" and t.text == "tt":
            self.next()
            return TT
        if t.kind == "NAME" and t.text == "ff":
            self.next()
            return FF
        nm, _ = self.name_token()
        return nm

    def prefix_expr(self) -> Process:
        t = self.peek()
        if t.kind == "DIGITS" and t.text == "0":
            if self.calculus is Calculus.CCSL:
                self.calc_fail("ccsl has no nil process", t)
            self.next()
            return NIL
        if t.kind == "LP":
            self.next()
            p = self.par_expr()
            self.expect("RP")
            return p
        if t.kind == "LB":
            if self.peek(1).kind == "RB":
                if not self.allow_hole:
                    self.fail("hole [] is only allowed in context templates", t)
                self.next()
                self.next()
                return Hole()
            if self.calculus is Calculus.CCSL:
                self.calc_fail("ccsl has no match construct", t)
            self.next()
            v = self.value()
            self.expect("EQ")
            w = self.value()
            self.expect("RB")
            then_branch = self.prefix_expr()
            self.expect("COMMA")
            else_branch = self.prefix_expr()
            return Match(v, w, then_branch, else_branch)
        if t.kind == "NAME" and t.text == "new":
            self.next()
            nm, _ = self.name_token()
            annot: Optional[Union[Sort, LockType]] = None
            if self.peek().kind == "COLON":
                self.next()
                annot = self.type_expr()
            self.expect("DOT")
            return Restrict(nm, self.prefix_expr(), annot)
        if t.kind == "NAME":
            subj, subj_tok = self.name_token()
            nxt = self.peek()
            if nxt.kind == "BANG":
                self.next()
                if self.peek().kind in ("NAME", "DIGITS") and self.peek().text not in ("new",):
                    if self.peek().kind == "DIGITS":
                        self.fail("values are names, tt or ff")
                    if self.calculus is Calculus.CCSL:
                        self.calc_fail("ccsl releases carry no value", self.peek())
                    return Release(subj, self.value())
                if self.calculus is not Calculus.CCSL:
                    self.calc_fail("releases must carry a value outside ccsl", nxt)
                return Release(subj, UNIT)
            if nxt.kind == "LP" and self.peek(1).kind == "LP":
                if self.calculus is not Calculus.PILW:
                    self.calc_fail("wait prefix is only available in pilw", nxt)
                self.next()
                self.next()
                b = self.binder()
                self.expect("RP")
                self.expect("RP")
                self.expect("DOT")
                return Wait(subj, b, self.prefix_expr())
            if nxt.kind == "LP":
                if self.calculus is Calculus.CCSL:
                    self.calc_fail("ccsl acquires bind no value; write l.P", nxt)
                self.next()
                b = self.binder()
                self.expect("RP")
                self.expect("DOT")
                return Acquire(subj, b, self.prefix_expr())
            if nxt.kind == "DOT":
                if self.calculus is not Calculus.CCSL:
                    self.calc_fail("bare prefix l.P is ccsl sugar; write l(x).P", nxt)
                self.next()
                return Acquire(subj, self.wildcard(), self.prefix_expr())
            self.fail(f"expected '!', '(' or '.' after {subj_tok.text!r}")
        self.fail(f"expected a process, found {t.text!r}")

    def type_expr(self) -> Union[Sort, LockType]:
        t = self.expect("NAME")
        if t.text == "bool":
            return BOOL
        if t.text != "Lock":
            self.fail("expected 'bool' or 'Lock<...>'", t)
        self.expect("LT")
        inner = self.type_expr()
        self.expect("GT")
        if self.peek().kind == "HAT":
            self.next()
            u = self.expect("DIGITS")
            if len(u.text) != 2 or any(c not in "01" for c in u.text):
                self.fail("usage must be two bits", u)
            stored = _as_payload(inner)
            return LockType(stored, int(u.text[0]), int(u.text[1]))
        return LockSort(_as_sort(inner))


def _as_payload(t: Union[Sort, LockType]):
    if isinstance(t, LockSort):
        return LockType(_as_payload(t.stored), 0, 0)
    return t


def _as_sort(t: Union[Sort, LockType]) -> Sort:
    if isinstance(t, LockType):
        return t.sort()
    return t


def parse(text: str, calculus: Calculus = Calculus.PIL) -> Process:
    """Parse concrete syntax into a process tree."""
    return _Parser(text, calculus).process()


def parse_context(text: str, calculus: Calculus = Calculus.PIL) -> Process:
    """Parse a context template; [] marks the hole."""
    return _Parser(text, calculus, allow_hole=True).process()


def parse_type(text: str) -> Union[Sort, LockType]:
    p = _Parser(text, Calculus.PILW)
    t = p.type_expr()
    p.expect("EOF")
    return t


# ------------------------------------------------------------- printing


def print_value(v: Value) -> str:
    if isinstance(v, UnitVal):
        return ""
    return str(v)


def print_type(t: Union[Sort, LockType]) -> str:
    if isinstance(t, LockType):
        return f"Lock<{print_type(t.stored)}>^{t.r}{t.w}"
    if isinstance(t, LockSort):
        return f"Lock<{print_type(t.stored)}>"
    if isinstance(t, BoolSort):
        return "bool"
    return "unit"


def _has_unit_release(p: Process) -> bool:
    if isinstance(p, Release):
        return isinstance(p.payload, UnitVal)
    if isinstance(p, (Acquire, Wait, Restrict)):
        return _has_unit_release(p.body)
    if isinstance(p, Par):
        return _has_unit_release(p.left) or _has_unit_release(p.right)
    if isinstance(p, Match):
        return _has_unit_release(p.then_branch) or _has_unit_release(p.else_branch)
    return False


def print_process(p: Process, calculus: Calculus = None) -> str:
    """Concrete syntax for p; parse(print_process(p)) is alpha-equivalent to p.

    With no explicit calculus the ccsl sugar (l.P, l!) is used exactly when
    the term carries unit payloads.
    """
    if calculus is None:
        calculus = Calculus.CCSL if _has_unit_release(p) else Calculus.PIL
    taken = {str(n) for n in free_locks(p)}
    return _print(p, {}, taken, calculus is Calculus.CCSL)


def _pick(n: Name, taken: set[str]) -> str:
    base = n.label if n.label != "_" else "x"
    start = 1 if n.label == "_" else n.index + 1
    candidates = itertools.chain(
        [] if n.label == "_" else [str(n)],
        (f"{base}'{i}" for i in itertools.count(start)),
    )
    for c in candidates:
        if c not in taken:
            return c
    raise AssertionError


def _pv(v: Value, env: dict[Name, str]) -> str:
    if isinstance(v, Name):
        return env.get(v, str(v))
    return print_value(v)


def _atom(s: str, p: Process) -> str:
    return f"({s})" if isinstance(p, Par) else s


def _print(p: Process, env: dict[Name, str], taken: set[str], ccsl: bool) -> str:
    if isinstance(p, Nil):
        return "0"
    if isinstance(p, Hole):
        return "[]"
    if isinstance(p, Release):
        subj = env.get(p.subject, str(p.subject))
        if isinstance(p.payload, UnitVal):
            return f"{subj}!"
        return f"{subj}!{_pv(p.payload, env)}"
    if isinstance(p, (Acquire, Wait)):
        subj = env.get(p.subject, str(p.subject))
        unused = p.binder not in free_locks(p.body)
        if unused and p.binder.label == "_":
            bstr = "_"
        else:
            bstr = _pick(p.binder, taken)
        inner_env = dict(env)
        inner_env[p.binder] = bstr
        body = _print(p.body, inner_env, taken | {bstr}, ccsl)
        body = _atom(body, p.body)
        if isinstance(p, Wait):
            return f"{subj}(({bstr})).{body}"
        if ccsl and unused:
            return f"{subj}.{body}"
        return f"{subj}({bstr}).{body}"
    if isinstance(p, Restrict):
        bstr = _pick(p.name, taken)
        inner_env = dict(env)
        inner_env[p.name] = bstr
        body = _print(p.body, inner_env, taken | {bstr}, ccsl)
        body = _atom(body, p.body)
        ann = f": {print_type(p.annot)} " if p.annot is not None else ""
        return f"new {bstr}{ann}.{body}"
    if isinstance(p, Par):
        left = _print(p.left, env, taken, ccsl)
        if isinstance(p.left, Par):
            left = f"({left})"
        return f"{left} | {_print(p.right, env, taken, ccsl)}"
    if isinstance(p, Match):
        tb = _print(p.then_branch, env, taken, ccsl)
        eb = _print(p.else_branch, env, taken, ccsl)
        tb = _atom(tb, p.then_branch)
        eb = _atom(eb, p.else_branch)
        return f"[{_pv(p.left, env)}={_pv(p.right, env)}]{tb},{eb}"
    raise TypeError(p)


# --------------------------------------------------------- environments


def parse_env(text: str, calculus: Calculus):
    """Parse textual environments.

    ccsl/pil: ``{l1,l2}{l3}; R={l2}`` (the R part defaults to empty);
    pilw:     ``{l1:Lock<bool>^10}{l2:Lock<Lock<bool>^00>^11}``.
    """
    from .typecheck import PilEnv, PilwEnv

    p = _Parser(text, calculus)
    components: list[frozenset[Name]] = []
    types: dict[Name, LockType] = {}
    while p.peek().kind == "LC":
        p.next()
        names: list[Name] = []
        while p.peek().kind != "RC":
            nm, tok = p.name_token()
            if calculus is Calculus.PILW:
                p.expect("COLON")
                t = p.type_expr()
                if not isinstance(t, LockType):
                    p.fail("pilw hypotheses need a usage, e.g. Lock<bool>^10", tok)
                types[nm] = t
            names.append(nm)
            if p.peek().kind == "COMMA":
                p.next()
        p.expect("RC")
        if names:
            components.append(frozenset(names))
    obligations: frozenset[Name] = frozenset()
    if p.peek().kind == "SEMI":
        p.next()
        t = p.expect("NAME")
        if t.text != "R":
            p.fail("expected R={...}", t)
        p.expect("EQ")
        p.expect("LC")
        r: list[Name] = []
        while p.peek().kind != "RC":
            nm, _ = p.name_token()
            r.append(nm)
            if p.peek().kind == "COMMA":
                p.next()
        p.expect("RC")
        obligations = frozenset(r)
    p.expect("EOF")
    if calculus is Calculus.PILW:
        if obligations:
            raise ParseError("pilw environments have no R component")
        return PilwEnv.make(components, types)
    return PilEnv(frozenset(components), obligations)


def print_env(env) -> str:
    from .typecheck import PilEnv

    comps = sorted(env.components, key=lambda c: sorted(c))
    if isinstance(env, PilEnv):
        parts = "".join("{" + ",".join(str(n) for n in sorted(c)) + "}" for c in comps)
        r = "{" + ",".join(str(n) for n in sorted(env.obligations)) + "}"
        return (parts or "{}") + "; R=" + r
    chunks = []
    for c in comps:
        inner = ",".join(f"{n}:{print_type(env.type_of(n))}" for n in sorted(c))
        chunks.append("{" + inner + "}")
    return "".join(chunks) or "{}"
