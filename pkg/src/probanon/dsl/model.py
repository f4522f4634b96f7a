"""Parsing and elaboration of ``.pam`` model files."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from importlib import resources

from lark import Lark, Token, Tree
from lark.exceptions import UnexpectedCharacters, UnexpectedEOF, UnexpectedInput, UnexpectedToken

from ..algebra import channel_halves, compose_all, handshake, hide, reachable, restrict
from ..anonymity import VIEWS, AnonymitySpec
from ..core import (INPUT, OUTPUT, ActionLabel, Distribution, ModelError, Path, ProbAutomaton,
                    label)
from ..measure import Occurs
from ..sched import (COLLAPSE, HALT, MODES, MemorylessScheduler, ObservationMap, PathScheduler,
                     SchedulerKey, TabularScheduler, TraceScheduler, frame_for, priority_scheduler)

FORMAT_VERSION = 1


class DslError(ValueError):
    """A problem in a model file; ``line`` and ``column`` are 1-based."""

    def __init__(self, message: str, line: int = 0, column: int = 0, expected=()):
        self.message = message
        self.line = line
        self.column = column
        self.expected = tuple(sorted(expected))
        where = f"{line}:{column}: " if line else ""
        super().__init__(where + message)


class DslSyntaxError(DslError):
    pass


class UnknownName(DslError):
    pass


class BadFraction(DslError):
    pass


class BadDistribution(DslError):
    pass


_PARSER = Lark(resources.files(__package__).joinpath("grammar.lark").read_text(),
               parser="lalr", propagate_positions=True, maybe_placeholders=True)

# Readable names for the anonymous terminals lark generates.
_TOKEN_TEXT = {
    "LBRACE": "{", "RBRACE": "}", "LSQB": "[", "RSQB": "]", "LPAR": "(", "RPAR": ")",
    "SEMICOLON": ";", "COMMA": ",", "COLON": ":", "EQUAL": "=", "SLASH": "/", "MORETHAN": ">",
    "MINUS": "-", "AT": "@", "__ANON_0": "->", "__ANON_1": "||", "$END": "end of input",
}
# keywords are shown as written
_TOKEN_TEXT.update({t.name: t.pattern.value for t in _PARSER.terminals
                    if t.pattern.type == "str" and t.pattern.value.isalpha()})


def _pos(node) -> tuple:
    if isinstance(node, Token):
        return node.line or 0, node.column or 0
    meta = getattr(node, "meta", None)
    if meta is not None and not meta.empty:
        return meta.line, meta.column
    return 0, 0


# ---------------------------------------------------------------------------
# syntax tree


@dataclass(frozen=True)
class Ref:
    name: str


@dataclass(frozen=True)
class Par:
    parts: tuple
    sync: tuple = ()


@dataclass(frozen=True)
class Restrict:
    expr: object
    labels: tuple


@dataclass(frozen=True)
class Hide:
    expr: object
    labels: tuple


@dataclass(frozen=True)
class SchedulerDef:
    """A scheduler as written; resolved against the system by :meth:`ModelBundle.scheduler`.

    ``rows`` holds ``(key, choice)`` pairs whose shape depends on ``kind``.
    A choice is an int, ``HALT``, an :class:`ActionLabel`, or a tuple of
    ``(int or label, Fraction)`` pairs.
    """

    name: str
    kind: str
    mode: str | None = None
    rows: tuple = ()
    option: str | None = None


KINDS = ("priority", "memoryless", "history", "table", "paths")


@dataclass
class ModelBundle:
    automata: dict = field(default_factory=dict)
    system_name: str | None = None
    system_expr: object = None
    spec: AnonymitySpec | None = None
    schedulers: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, ModelBundle):
            return NotImplemented
        return (self.automata == other.automata and self.system_name == other.system_name
                and self.system_expr == other.system_expr and self.spec == other.spec
                and self.schedulers == other.schedulers)

    @cached_property
    def system(self) -> ProbAutomaton:
        """The elaborated system (the only automaton when no system is declared)."""
        if self.system_expr is None:
            if len(self.automata) != 1:
                raise UnknownName("no system declared and more than one automaton")
            return next(iter(self.automata.values()))
        return elaborate(self.system_expr, self.automata)

    def scheduler(self, name: str):
        if name not in self.schedulers:
            raise UnknownName(f"unknown scheduler {name!r}; known: {sorted(self.schedulers)}")
        return resolve_scheduler(self.schedulers[name], self.system, self.spec)


# ---------------------------------------------------------------------------
# elaboration


def _expand(labels, channels_too: bool) -> tuple:
    """Bare names also stand for the two halves of a channel of that name."""
    out = []
    for a in labels:
        out.append(a)
        if channels_too and a.kind == "external":
            out += [ActionLabel(a.name, INPUT), ActionLabel(a.name, OUTPUT)]
    return tuple(out)


def _channels(labels) -> list:
    return [a.name for a in labels if a.kind == "external"]


def elaborate(expr, automata: dict) -> ProbAutomaton:
    """Build the automaton of a composition expression (reachable part only)."""
    if isinstance(expr, Ref):
        if expr.name not in automata:
            raise UnknownName(f"unknown automaton {expr.name!r}")
        return automata[expr.name]
    if isinstance(expr, Restrict) and isinstance(expr.expr, Par):
        # restrict over a product: bare names are channels, synchronised by handshake
        par = expr.expr
        parts = [elaborate(p, automata) for p in par.parts]
        chans = _channels(expr.labels) + _channels(par.sync)
        R = set(_expand(expr.labels, True)) | channel_halves(_channels(par.sync))
        return compose_all(parts, handshake(chans), restrict_to=R)
    if isinstance(expr, Par):
        parts = [elaborate(p, automata) for p in expr.parts]
        chans = _channels(expr.sync)
        if len(parts) == 1 and not chans:
            return parts[0]
        return compose_all(parts, handshake(chans), restrict_to=channel_halves(chans))
    if isinstance(expr, Restrict):
        return reachable(restrict(elaborate(expr.expr, automata), _expand(expr.labels, True)))
    if isinstance(expr, Hide):
        return hide(elaborate(expr.expr, automata), _expand(expr.labels, True))
    raise TypeError(f"not an expression: {expr!r}")


def state_text(name) -> str:
    """A state name as it is written in model files (tuples are dotted)."""
    if isinstance(name, tuple):
        return ".".join(state_text(x) for x in name)
    if isinstance(name, Path):
        return f"path{len(name)}"
    text = str(name)
    if not text or not (text[0].isalpha() or text[0] == "_"):
        text = "s" + text
    return text


def _state_index(A: ProbAutomaton) -> dict:
    return {state_text(nm): s for s, nm in enumerate(A.names)}


def _choice_row(choice, A: ProbAutomaton, s: int):
    """A written choice as a transition-level row of ``s`` (index, HALT, or mapping)."""
    ts = A.transitions[s]

    def idx(c):
        if isinstance(c, int):
            if not 0 <= c < len(ts):
                raise UnknownName(f"state {state_text(A.names[s])} has no transition {c}")
            return c
        ks = [k for k, (a, _) in enumerate(ts) if a == c]
        if not ks:
            raise UnknownName(f"state {state_text(A.names[s])} has no {c} transition")
        return ks[0]

    if choice is HALT:
        return HALT
    if isinstance(choice, tuple):
        return {idx(c): p for c, p in choice}
    return idx(choice)


def resolve_scheduler(d: SchedulerDef, A: ProbAutomaton, spec: AnonymitySpec | None):
    if d.kind == "priority":
        return priority_scheduler(A, [(mode, labs) for mode, labs in d.rows])
    if d.kind == "memoryless":
        index = _state_index(A)
        default = d.option or "halt"
        rows = []
        for s in A.states:
            if not A.transitions[s] or default == "halt":
                rows.append(HALT)
            else:
                rows.append(0)
        for st, choice in d.rows:
            if st not in index:
                raise UnknownName(f"unknown state {st!r}")
            s = index[st]
            rows[s] = _choice_row(choice, A, s)
        return MemorylessScheduler(A, tuple(rows))
    if d.kind == "history":
        table = {}
        for trace, choice in d.rows:
            table[trace] = HALT if choice is HALT else (
                dict(choice) if isinstance(choice, tuple) else choice)
        return TraceScheduler(A, table, d.option or "halt")
    if d.kind == "table":
        obs = (spec.observation_map(d.mode or COLLAPSE) if spec is not None
               else ObservationMap.for_automaton(A, d.mode or COLLAPSE))
        frame = frame_for(A, obs)
        index = _state_index(A)
        table = {}
        for (hist, st), choice in d.rows:
            if st not in index:
                raise UnknownName(f"unknown state {st!r}")
            s = index[st]
            if isinstance(choice, tuple):
                choice = {c: p for c, p in choice}
            table[SchedulerKey(tuple(hist), frame.cls(s))] = choice
        xi = TabularScheduler(frame, table)
        if not xi.well_formed():
            raise BadDistribution(f"scheduler {d.name}: a row names a choice its class lacks")
        return xi
    if d.kind == "paths":
        index = _state_index(A)
        table = {}
        for (start, steps), choice in d.rows:
            try:
                s = index[start]
                pi = Path(s)
                for a, t in steps:
                    t = index[t]
                    ks = [k for k, (b, mu) in enumerate(A.transitions[pi.last]) if b == a and t in mu]
                    if not ks:
                        raise UnknownName(f"no step {a} to {state_text(A.names[t])}")
                    pi = pi.extend(a, ks[0], t)
            except KeyError as e:
                raise UnknownName(f"unknown state {e.args[0]!r}") from None
            table[pi] = _choice_row(choice, A, pi.last)
        return PathScheduler(A, table)
    raise UnknownName(f"unknown scheduler kind {d.kind!r}")


# ---------------------------------------------------------------------------
# tree walking


class _Builder:
    def __init__(self):
        self.bundle = ModelBundle()

    def fail(self, cls, msg, node):
        line, col = _pos(node)
        raise cls(msg, line, col)

    # leaves ---------------------------------------------------------------

    def label(self, node) -> ActionLabel:
        tok = node.children[0]
        try:
            return label(str(tok))
        except ValueError as e:
            self.fail(DslSyntaxError, str(e), tok)

    def labels(self, node) -> tuple:
        return tuple(self.label(c) for c in node.children if c is not None)

    def prob(self, node) -> Fraction:
        if node.data == "decimal":
            self.fail(BadFraction, f"decimal {node.children[0]} is not allowed; write p/q", node)
        if node.data == "whole":
            return Fraction(int(node.children[0]))
        p, q = (int(c) for c in node.children)
        if q == 0:
            self.fail(BadFraction, "zero denominator", node)
        return Fraction(p, q)

    def choice(self, node):
        if node.data == "index":
            return int(node.children[0])
        if node.data == "halt":
            return HALT
        if node.data == "bylabel":
            return self.label(node.children[0])
        out = []
        for ce in node.children:
            c, p = ce.children
            key = int(c) if isinstance(c, Token) else self.label(c)
            out.append((key, self.prob(p)))
        return tuple(out)

    # items ----------------------------------------------------------------

    def automaton(self, node):
        name = str(node.children[0])
        if name in self.bundle.automata:
            self.fail(DslSyntaxError, f"automaton {name} defined twice", node.children[0])
        init = None
        order: list = []
        ids: dict = {}
        rows: list = []

        def sid(st):
            nm = str(st.children[0])
            if nm not in ids:
                ids[nm] = len(order)
                order.append(nm)
                rows.append([])
            return ids[nm]

        for stmt in node.children[1:]:
            if stmt.data == "init":
                if init is not None:
                    self.fail(DslSyntaxError, "init given twice", stmt)
                init = sid(stmt.children[0])
            elif stmt.data == "states":
                for st in stmt.children:
                    sid(st)
            elif stmt.data == "terminal":
                sid(stmt.children[0])
        if init is None:
            self.fail(DslSyntaxError, f"automaton {name} has no init", node)
        for stmt in node.children[1:]:
            if stmt.data != "trans":
                continue
            src, lab, dist = stmt.children
            s = sid(src)
            entries = []
            seen = set()
            for e in dist.children:
                if e is None:
                    continue
                st, p = e.children
                t = sid(st)
                if t in seen:
                    self.fail(BadDistribution, f"target {st.children[0]} listed twice", e)
                seen.add(t)
                entries.append((t, self.prob(p)))
            try:
                mu = Distribution(entries)
            except ModelError as e:
                self.fail(BadDistribution, str(e), dist)
            rows[s].append((self.label(lab), mu))
        self.bundle.automata[name] = ProbAutomaton(tuple(order), tuple(tuple(r) for r in rows), init)

    def expr(self, node):
        if node.data == "ref":
            nm = str(node.children[0])
            if nm not in self.bundle.automata:
                self.fail(UnknownName, f"unknown automaton {nm!r}", node)
            return Ref(nm)
        if node.data == "par":
            kids = list(node.children)
            sync = ()
            if kids and kids[-1] is None:
                kids = kids[:-1]
            elif kids and isinstance(kids[-1], Tree) and kids[-1].data == "labelset":
                sync = self.labels(kids[-1])
                kids = kids[:-1]
            return Par(tuple(self.expr(k) for k in kids), sync)
        inner, labs = node.children
        cls = Hide if node.data == "hide" else Restrict
        return cls(self.expr(inner), self.labels(labs))

    def system(self, node):
        if self.bundle.system_expr is not None:
            self.fail(DslSyntaxError, "only one system per file", node)
        self.bundle.system_name = str(node.children[0])
        self.bundle.system_expr = self.expr(node.children[1])
        try:
            self.bundle.system
        except ModelError as e:
            self.fail(BadDistribution, str(e), node)

    def spec(self, node):
        users: list = []
        markers: dict = {}
        observe: tuple = ()
        view = "ordered"
        for stmt in node.children:
            if stmt.data == "users":
                users = [_uid(u) for u in stmt.children]
            elif stmt.data == "marker":
                u, lab = stmt.children
                markers[_uid(u)] = self.label(lab)
            elif stmt.data == "observe":
                observe = self.labels(stmt.children[0])
            elif stmt.data == "view":
                view = str(stmt.children[0])
                if view not in VIEWS:
                    self.fail(DslSyntaxError, f"view must be one of {', '.join(VIEWS)}",
                              stmt.children[0])
        for u in users:
            if u not in markers:
                self.fail(UnknownName, f"user {u} has no marker", node)
        for u in markers:
            if u not in users:
                self.fail(UnknownName, f"marker for undeclared user {u}", node)
        A = self.bundle.system
        for a in list(markers.values()) + list(observe):
            if a not in A.actions:
                self.fail(UnknownName, f"label {a} does not occur in the system", node)
        self.bundle.spec = AnonymitySpec(tuple(users), {u: Occurs(markers[u]) for u in users},
                                         observe, view)

    def scheduler(self, node):
        name, kind, mode = (str(c) if c is not None else None for c in node.children[:3])
        if kind not in KINDS:
            self.fail(UnknownName, f"scheduler kind must be one of {', '.join(KINDS)}",
                      node.children[1])
        if mode is not None and (kind != "table" or mode not in MODES):
            self.fail(DslSyntaxError, f"unexpected mode {mode}", node.children[2])
        rows = []
        option = None
        for r in node.children[3:]:
            want = {"level": "priority", "staterow": "memoryless", "default": "memoryless",
                    "tracerow": "history", "fallback": "history", "keyrow": "table",
                    "pathrow": "paths"}[r.data]
            if want != kind:
                self.fail(DslSyntaxError, f"row not allowed in a {kind} scheduler", r)
            if r.data == "level":
                mode_tok, labs = r.children
                if str(mode_tok) not in ("first", "uniform"):
                    self.fail(DslSyntaxError, "priority level must be first or uniform", mode_tok)
                rows.append((str(mode_tok), self.labels(labs)))
            elif r.data in ("default", "fallback"):
                option = str(r.children[0])
                if option not in ("first", "halt"):
                    self.fail(DslSyntaxError, "expected first or halt", r.children[0])
            elif r.data == "staterow":
                st, ch = r.children
                rows.append((str(st.children[0]), self.choice(ch)))
            elif r.data == "tracerow":
                tr, ch = r.children
                rows.append((self.labels(tr), self.choice(ch)))
            elif r.data == "keyrow":
                tr, st, ch = r.children
                rows.append(((self.labels(tr), str(st.children[0])), self.choice(ch)))
            else:
                p, ch = r.children
                kids = p.children
                start = str(kids[0].children[0])
                steps = tuple((self.label(kids[k]), str(kids[k + 1].children[0]))
                              for k in range(1, len(kids), 2))
                rows.append(((start, steps), self.choice(ch)))
        d = SchedulerDef(name, kind, mode, tuple(rows), option)
        if name in self.bundle.schedulers:
            self.fail(DslSyntaxError, f"scheduler {name} defined twice", node)
        try:
            resolve_scheduler(d, self.bundle.system, self.bundle.spec)
        except DslError as e:
            self.fail(type(e), e.message, node)
        except (ValueError, KeyError) as e:
            self.fail(UnknownName, str(e), node)
        self.bundle.schedulers[name] = d


def _uid(tok):
    text = str(tok.children[0]) if isinstance(tok, Tree) else str(tok)
    return int(text) if text.isdigit() else text


def _expected(e: UnexpectedInput) -> set:
    exp = getattr(e, "expected", None) or getattr(e, "allowed", None) or ()
    return {_TOKEN_TEXT.get(t, t.strip('"').lower() if t.startswith('"') else t) for t in exp}


def parse_model(text) -> ModelBundle:
    """Parse and elaborate a ``.pam`` model; errors carry a line and column."""
    if isinstance(text, (bytes, bytearray)):
        try:
            text = bytes(text).decode("utf-8")
        except UnicodeDecodeError as e:
            prefix = bytes(text[:e.start])
            line = prefix.count(b"\n") + 1
            col = e.start - (prefix.rfind(b"\n") + 1) + 1
            raise DslSyntaxError("input is not UTF-8", line, col) from None
    try:
        tree = _PARSER.parse(text)
    except UnexpectedEOF as e:
        lines = text.split("\n")
        raise DslSyntaxError("unexpected end of input", len(lines), len(lines[-1]) + 1,
                             _expected(e)) from None
    except UnexpectedToken as e:
        got = "end of input" if e.token.type == "$END" else repr(str(e.token))
        raise DslSyntaxError(f"unexpected {got}", e.line or 0, e.column or 0,
                             _expected(e)) from None
    except UnexpectedCharacters as e:
        raise DslSyntaxError(f"unexpected character {e.char!r}", e.line, e.column,
                             _expected(e)) from None
    except UnexpectedInput as e:  # pragma: no cover - other lark failures
        raise DslSyntaxError(str(e), getattr(e, "line", 0), getattr(e, "column", 0)) from None
    header, *items = tree.children
    version = header.children[0]
    if int(version) != FORMAT_VERSION:
        line, col = _pos(version)
        raise DslSyntaxError(f"unsupported format {version}", line, col)
    b = _Builder()
    for item in items:
        getattr(b, item.data)(item)
    return b.bundle


def load_model(path) -> ModelBundle:
    with open(path, "rb") as fh:
        return parse_model(fh.read())


def shipped_model(name: str) -> str:
    """Text of a model file shipped with the package (e.g. ``dining3.pam``)."""
    return resources.files("probanon").joinpath("data", name).read_text(encoding="utf-8")
