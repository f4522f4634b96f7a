"""Distributions, probabilistic automata and paths.

All probabilities are :class:`fractions.Fraction` values; nothing in the
verification path touches floating point.
"""

from __future__ import annotations

import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Hashable, Iterable, Iterator, Sequence

EXTERNAL = "external"
INPUT = "input"
OUTPUT = "output"
INTERNAL = "internal"
KINDS = (EXTERNAL, INPUT, OUTPUT, INTERNAL)


class ModelError(ValueError):
    """Base class for malformed model objects."""


class SumNotOne(ModelError):
    pass


class NegativeMass(ModelError):
    pass


class NotAPath(ModelError):
    pass


@dataclass(frozen=True)
class ActionLabel:
    """An action of an automaton.

    ``kind`` is one of external, input (``c?``), output (``c!``) or
    internal.  Internal labels print as ``tau``; a tagged internal label
    (``tau[p1]``) is a marker produced by hand-shaking or hiding and keeps
    the tag so that events over it stay expressible.
    """

    name: str
    kind: str = EXTERNAL
    tag: str | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown action kind {self.kind!r}")
        if self.kind != INTERNAL and self.tag is not None:
            raise ModelError("only internal labels carry a tag")

    def sort_key(self):
        return (self.name, self.kind, self.tag or "")

    def __lt__(self, other):
        if not isinstance(other, ActionLabel):
            return NotImplemented
        return self.sort_key() < other.sort_key()

    def __le__(self, other):
        if not isinstance(other, ActionLabel):
            return NotImplemented
        return self.sort_key() <= other.sort_key()

    def __gt__(self, other):
        if not isinstance(other, ActionLabel):
            return NotImplemented
        return self.sort_key() > other.sort_key()

    @property
    def internal(self) -> bool:
        return self.kind == INTERNAL

    @property
    def is_marker(self) -> bool:
        return self.kind == INTERNAL and self.tag is not None

    def __str__(self) -> str:
        if self.kind == INPUT:
            return self.name + "?"
        if self.kind == OUTPUT:
            return self.name + "!"
        if self.kind == INTERNAL:
            return "tau" if self.tag is None else f"tau[{self.tag}]"
        return self.name

    def __repr__(self) -> str:
        return f"ActionLabel({str(self)!r})"


TAU = ActionLabel("tau", INTERNAL)

_LABEL_RE = re.compile(r"^(?:tau(?:\[(?P<tag>[^\[\]\s]+)\])?|(?P<name>[A-Za-z_][A-Za-z0-9_]*)(?P<sfx>[?!]?))$")


def label(text: str | ActionLabel) -> ActionLabel:
    """Parse ``c``, ``c?``, ``c!``, ``tau`` or ``tau[tag]``."""
    if isinstance(text, ActionLabel):
        return text
    m = _LABEL_RE.match(text.strip())
    if m is None:
        raise ModelError(f"bad action label {text!r}")
    if m.group("name") is None:
        return ActionLabel("tau", INTERNAL, m.group("tag"))
    kind = {"?": INPUT, "!": OUTPUT, "": EXTERNAL}[m.group("sfx")]
    return ActionLabel(m.group("name"), kind)


def marker(tag: str) -> ActionLabel:
    return ActionLabel("tau", INTERNAL, tag)


def as_fraction(value) -> Fraction:
    if isinstance(value, float):
        raise ModelError("probabilities must be exact; got a float")
    return Fraction(value)


def _sort_key(x):
    # Outcomes may mix ints and tuples; order by type name first.
    return (type(x).__name__, x)


class Distribution(Mapping):
    """A finitely supported probability distribution with exact masses.

    Zero-mass entries are dropped; the remaining masses must sum to one.
    """

    __slots__ = ("_items", "_map", "_hash")

    def __init__(self, entries: Mapping[Hashable, Any] | Iterable[tuple[Hashable, Any]]):
        items = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict = {}
        for k, v in items:
            p = as_fraction(v)
            if p < 0:
                raise NegativeMass(f"negative mass {p} on {k!r}")
            acc[k] = acc.get(k, Fraction(0)) + p
        if not acc:
            raise SumNotOne("empty distribution")
        self._check(acc)
        self._map = {k: p for k, p in acc.items() if p != 0}
        self._items = tuple(sorted(self._map.items(), key=lambda kv: _sort_key(kv[0])))
        self._hash = None

    def _check(self, acc):
        total = sum(acc.values(), Fraction(0))
        if total != 1:
            raise SumNotOne(f"masses sum to {total}, not 1")

    @classmethod
    def point(cls, outcome) -> "Distribution":
        return cls({outcome: 1})

    @classmethod
    def uniform(cls, outcomes: Sequence) -> "Distribution":
        n = len(outcomes)
        return cls([(o, Fraction(1, n)) for o in outcomes])

    def __getitem__(self, key) -> Fraction:
        return self._map[key]

    def get(self, key, default=Fraction(0)):
        return self._map.get(key, default)

    def __iter__(self) -> Iterator:
        return (k for k, _ in self._items)

    def __len__(self) -> int:
        return len(self._items)

    def items(self):
        return self._items

    @property
    def support(self) -> frozenset:
        return frozenset(self._map)

    def map(self, f) -> "Distribution":
        """Push the distribution forward along ``f`` (masses of merged keys add up)."""
        return type(self)([(f(k), p) for k, p in self._items])

    def __eq__(self, other):
        if isinstance(other, Distribution):
            return self._items == other._items
        return NotImplemented

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self._items)
        return self._hash

    def __repr__(self):
        body = ", ".join(f"{k!r}: {p}" for k, p in self._items)
        return f"{type(self).__name__}({{{body}}})"


def dist_new(entries) -> Distribution:
    return Distribution(entries)


class SubDistribution:
    """Masses over outcomes plus a halting mass, together summing to one."""

    __slots__ = ("entries", "halt")

    def __init__(self, entries=(), halt=0):
        items = entries.items() if isinstance(entries, Mapping) else entries
        acc: dict = {}
        for k, v in items:
            p = as_fraction(v)
            if p < 0:
                raise NegativeMass(f"negative mass {p} on {k!r}")
            if p:
                acc[k] = acc.get(k, Fraction(0)) + p
        h = as_fraction(halt)
        if h < 0:
            raise NegativeMass("negative halt mass")
        if sum(acc.values(), Fraction(0)) + h != 1:
            raise SumNotOne("entries plus halt mass must sum to 1")
        self.entries = dict(sorted(acc.items(), key=lambda kv: _sort_key(kv[0])))
        self.halt = h

    @classmethod
    def halting(cls) -> "SubDistribution":
        return cls({}, 1)

    @classmethod
    def of(cls, dist: Distribution) -> "SubDistribution":
        return cls(dist.items(), 0)

    def __eq__(self, other):
        return (isinstance(other, SubDistribution) and self.entries == other.entries
                and self.halt == other.halt)

    def __hash__(self):
        return hash((tuple(self.entries.items()), self.halt))

    def __repr__(self):
        return f"SubDistribution({self.entries!r}, halt={self.halt})"


# ---------------------------------------------------------------------------
# automata


Transition = tuple  # (ActionLabel, Distribution over state ids)


@dataclass(frozen=True)
class ProbAutomaton:
    """A probabilistic automaton over dense integer states ``0..n-1``.

    ``transitions[s]`` is the tuple of ``(label, Distribution)`` pairs
    enabled in ``s``; ``names[s]`` is a display name (a string, or a tuple
    of component names after composition).
    """

    names: tuple
    transitions: tuple
    initial: int = 0
    actions: frozenset = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "transitions", tuple(tuple(ts) for ts in self.transitions))
        if self.actions is None:
            acts = frozenset(a for ts in self.transitions for a, _ in ts)
            object.__setattr__(self, "actions", acts)
        else:
            object.__setattr__(self, "actions", frozenset(self.actions))

    @property
    def n_states(self) -> int:
        return len(self.names)

    @property
    def states(self) -> range:
        return range(len(self.names))

    def is_terminating(self, s: int) -> bool:
        return not self.transitions[s]

    def n_transitions(self) -> int:
        return sum(len(ts) for ts in self.transitions)

    def index(self, name) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise KeyError(name) from None

    def successors(self, s: int) -> Iterator[tuple[int, ActionLabel, int, Fraction]]:
        """Yield ``(transition index, label, target, mass)`` for every ``s ~> t``."""
        for k, (a, mu) in enumerate(self.transitions[s]):
            for t, p in mu.items():
                yield k, a, t, p

    def has_cycle(self, only_reachable: bool = True) -> bool:
        roots = [self.initial] if only_reachable else list(self.states)
        return _has_cycle(roots, lambda s: (t for _, _, t, _ in self.successors(s)))

    @classmethod
    def build(cls, initial, transitions: Mapping, actions=None) -> "ProbAutomaton":
        """Build from named states.

        ``transitions`` maps a state name to a list of ``(label, {target: p})``
        pairs; labels may be strings.  Targets that never appear as keys are
        added as terminating states.
        """
        names: list = []
        ids: dict = {}

        def sid(n):
            if n not in ids:
                ids[n] = len(names)
                names.append(n)
            return ids[n]

        sid(initial)
        for s in transitions:
            sid(s)
        for s, ts in transitions.items():
            for _, mu in ts:
                for t in (mu if isinstance(mu, Mapping) else dict(mu)):
                    sid(t)
        table: list = [[] for _ in names]
        for s, ts in transitions.items():
            for a, mu in ts:
                d = mu if isinstance(mu, Distribution) else Distribution(mu)
                table[ids[s]].append((label(a), d.map(lambda t: ids[t])))
        acts = None if actions is None else frozenset(label(a) for a in actions)
        return cls(tuple(names), tuple(tuple(ts) for ts in table), ids[initial], acts)


@dataclass(frozen=True)
class FullyProbAutomaton:
    """A fully probabilistic automaton.

    ``step[s]`` is ``None`` for a terminated state, otherwise a
    :class:`SubDistribution` over ``(label, target)`` pairs whose halt mass
    records scheduler halting.  States in ``cut`` were stopped by a horizon.
    """

    names: tuple
    step: tuple
    initial: int = 0
    actions: frozenset = field(default=None)
    cut: frozenset = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        steps = []
        for st in self.step:
            if isinstance(st, Distribution):
                st = SubDistribution.of(st)
            steps.append(st)
        object.__setattr__(self, "step", tuple(steps))
        if self.actions is None:
            acts = frozenset(a for st in self.step if st is not None for a, _ in st.entries)
            object.__setattr__(self, "actions", acts)
        object.__setattr__(self, "cut", frozenset(self.cut))

    @property
    def n_states(self) -> int:
        return len(self.names)

    @property
    def states(self) -> range:
        return range(len(self.names))

    def is_terminating(self, s: int) -> bool:
        st = self.step[s]
        return st is None or not st.entries

    def successors(self, s: int):
        st = self.step[s]
        if st is None:
            return
        for (a, t), p in st.entries.items():
            yield a, t, p

    def has_cycle(self) -> bool:
        return _has_cycle([self.initial], lambda s: (t for _, t, _ in self.successors(s)))

    @classmethod
    def build(cls, initial, step: Mapping) -> "FullyProbAutomaton":
        """Build from named states: ``step[name]`` maps ``(label, target)`` to mass."""
        names: list = []
        ids: dict = {}

        def sid(n):
            if n not in ids:
                ids[n] = len(names)
                names.append(n)
            return ids[n]

        sid(initial)
        for s in step:
            sid(s)
        for s, mu in step.items():
            for (_, t) in (mu or {}):
                sid(t)
        table: list = [None for _ in names]
        for s, mu in step.items():
            if mu:
                table[ids[s]] = SubDistribution(
                    [((label(a), ids[t]), p) for (a, t), p in mu.items()])
        return cls(tuple(names), tuple(table), ids[initial])


def _has_cycle(roots, succ) -> bool:
    WHITE, GREY, BLACK = 0, 1, 2
    colour: dict = {}
    for r in roots:
        if colour.get(r, WHITE) != WHITE:
            continue
        stack = [(r, iter(succ(r)))]
        colour[r] = GREY
        while stack:
            node, it = stack[-1]
            for t in it:
                c = colour.get(t, WHITE)
                if c == GREY:
                    return True
                if c == WHITE:
                    colour[t] = GREY
                    stack.append((t, iter(succ(t))))
                    break
            else:
                colour[node] = BLACK
                stack.pop()
    return False


# ---------------------------------------------------------------------------
# validation


@dataclass
class ValidationReport:
    problems: list = field(default_factory=list)
    n_states: int = 0
    n_terminating: int = 0

    @property
    def ok(self) -> bool:
        return not self.problems

    def __bool__(self):
        return self.ok


def pa_validate(A: ProbAutomaton) -> ValidationReport:
    """Collect well-formedness violations of ``A`` without raising."""
    rep = ValidationReport(n_states=A.n_states)
    n = A.n_states
    if not 0 <= A.initial < n:
        rep.problems.append(f"initial state {A.initial} is not a state")
    if len(A.transitions) != n:
        rep.problems.append(f"{len(A.transitions)} transition rows for {n} states")
    for s, ts in enumerate(A.transitions):
        if not ts:
            rep.n_terminating += 1
        for k, tr in enumerate(ts):
            try:
                a, mu = tr
            except (TypeError, ValueError):
                rep.problems.append(f"state {s}: transition {k} is not a (label, distribution) pair")
                continue
            if not isinstance(a, ActionLabel):
                rep.problems.append(f"state {s}: transition {k} has non-label action {a!r}")
            elif a not in A.actions:
                rep.problems.append(f"state {s}: action {a} missing from the alphabet")
            if not isinstance(mu, Distribution):
                rep.problems.append(f"state {s}: transition {k} target is not a distribution")
                continue
            for t in mu:
                if not (isinstance(t, int) and 0 <= t < n):
                    rep.problems.append(f"state {s}: dangling target {t!r}")
    return rep


# ---------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class Path:
    """A finite path: a start state and ``(label, transition index, next state)`` steps.

    For paths of a fully probabilistic automaton the transition index is ``None``.
    """

    start: int
    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(tuple(st) for st in self.steps))

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def first(self) -> int:
        return self.start

    @property
    def last(self) -> int:
        return self.steps[-1][2] if self.steps else self.start

    def trace(self) -> tuple:
        return tuple(a for a, _, _ in self.steps)

    def states(self) -> tuple:
        return (self.start,) + tuple(t for _, _, t in self.steps)

    def extend(self, a, k, t) -> "Path":
        return Path(self.start, self.steps + ((a, k, t),))

    def prefix(self, n: int) -> "Path":
        return Path(self.start, self.steps[:n])

    def __le__(self, other: "Path") -> bool:
        return (self.start == other.start and len(self.steps) <= len(other.steps)
                and other.steps[: len(self.steps)] == self.steps)

    def __lt__(self, other: "Path") -> bool:
        return self <= other and len(self) < len(other)

    def __str__(self) -> str:
        parts = [str(self.start)]
        for a, _, t in self.steps:
            parts.append(f"-{a}-> {t}")
        return " ".join(parts)


def path_trace(pi: Path) -> tuple:
    return pi.trace()


def check_path(A, pi: Path) -> None:
    """Raise :class:`NotAPath` unless every step of ``pi`` has positive probability."""
    s = pi.start
    for a, k, t in pi.steps:
        if isinstance(A, ProbAutomaton):
            ts = A.transitions[s]
            if k is None or not 0 <= k < len(ts) or ts[k][0] != a or ts[k][1].get(t) <= 0:
                raise NotAPath(f"no step {s} -{a}-> {t}")
        else:
            st = A.step[s]
            if st is None or st.entries.get((a, t), 0) <= 0:
                raise NotAPath(f"no step {s} -{a}-> {t}")
        s = t
