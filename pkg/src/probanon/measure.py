"""Exact probabilities of complete paths and path events in acyclic FPAs."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable

from .core import ActionLabel, FullyProbAutomaton, NotAPath, Path, label


class CyclicUnsupported(ValueError):
    pass


class ConditionNullEvent(ZeroDivisionError):
    pass


# ---------------------------------------------------------------------------
# events


class Event:
    """A predicate on the trace of a complete path."""

    def holds(self, trace: tuple) -> bool:  # pragma: no cover - interface
        raise NotImplementedError

    def __and__(self, other):
        return And(self, other)

    def __or__(self, other):
        return Or(self, other)

    def __invert__(self):
        return Not(self)


@dataclass(frozen=True)
class All(Event):
    def holds(self, trace):
        return True

    def __str__(self):
        return "all"


@dataclass(frozen=True)
class Occurs(Event):
    """The label (matched on name, kind and tag) occurs somewhere on the path."""

    label: ActionLabel

    def __post_init__(self):
        object.__setattr__(self, "label", label(self.label))

    def holds(self, trace):
        return self.label in trace

    def __str__(self):
        return f"occurs({self.label})"


def otrace(trace: Iterable, observables: Iterable) -> tuple:
    """The trace with every action outside ``observables`` removed."""
    obs = observables if isinstance(observables, frozenset) else frozenset(observables)
    return tuple(a for a in trace if a in obs)


@dataclass(frozen=True)
class OtraceEquals(Event):
    """``view(otrace) == observation``; ``view`` defaults to the identity."""

    observation: object
    observables: frozenset
    view: Callable | None = None

    def __post_init__(self):
        object.__setattr__(self, "observables", frozenset(label(a) for a in self.observables))

    def holds(self, trace):
        o = otrace(trace, self.observables)
        if self.view is not None:
            o = self.view(o)
        return o == self.observation

    def __str__(self):
        obs = self.observation
        if isinstance(obs, tuple):
            obs = " ".join(map(str, obs))
        return f"otrace={obs}"


@dataclass(frozen=True)
class And(Event):
    parts: tuple

    def __init__(self, *parts):
        object.__setattr__(self, "parts", tuple(parts))

    def holds(self, trace):
        return all(p.holds(trace) for p in self.parts)

    def __str__(self):
        return "(" + " & ".join(map(str, self.parts)) + ")"


@dataclass(frozen=True)
class Or(Event):
    parts: tuple

    def __init__(self, *parts):
        object.__setattr__(self, "parts", tuple(parts))

    def holds(self, trace):
        return any(p.holds(trace) for p in self.parts)

    def __str__(self):
        return "(" + " | ".join(map(str, self.parts)) + ")"


@dataclass(frozen=True)
class Not(Event):
    part: Event

    def holds(self, trace):
        return not self.part.holds(trace)

    def __str__(self):
        return f"!{self.part}"


# ---------------------------------------------------------------------------
# measure


@dataclass
class MeasureReport:
    value: Fraction
    truncated_mass: Fraction = Fraction(0)
    halt_mass: Fraction = Fraction(0)
    complete_path_count: int = 0

    def to_dict(self) -> dict:
        return {
            "value": str(self.value),
            "truncated_mass": str(self.truncated_mass),
            "halt_mass": str(self.halt_mass),
            "complete_path_count": self.complete_path_count,
        }


@dataclass
class PathTable:
    """Complete paths of an FPA with their probabilities, and the lost mass."""

    paths: list = field(default_factory=list)
    halt_mass: Fraction = Fraction(0)
    truncated_mass: Fraction = Fraction(0)

    def traces(self):
        return ((pi.trace(), p) for pi, p in self.paths)

    def prob(self, event: Event) -> Fraction:
        return sum((p for t, p in self.traces() if event.holds(t)), Fraction(0))


def path_prob(F: FullyProbAutomaton, pi: Path) -> Fraction:
    """Product of step masses along ``pi``; 1 for the empty path."""
    if pi.start != F.initial:
        raise NotAPath("path does not start in the initial state")
    p = Fraction(1)
    s = pi.start
    for a, _, t in pi.steps:
        st = F.step[s]
        q = st.entries.get((a, t), 0) if st is not None else 0
        if q <= 0:
            raise NotAPath(f"no step {s} -{a}-> {t}")
        p *= q
        s = t
    return p


def analyse(F: FullyProbAutomaton, start: Path | None = None) -> PathTable:
    """Enumerate complete paths (or the complete extensions of ``start``)."""
    if F.has_cycle():
        raise CyclicUnsupported("only acyclic fully probabilistic automata are measured")
    out = PathTable()
    if start is None:
        start = Path(F.initial)
    p0 = path_prob(F, start)
    stack = [(start, p0)]
    while stack:
        pi, p = stack.pop()
        s = pi.last
        st = F.step[s]
        if st is None:
            if s in F.cut:
                out.truncated_mass += p
            else:
                out.paths.append((pi, p))
            continue
        if st.halt:
            out.halt_mass += p * st.halt
        for (a, t), q in reversed(list(st.entries.items())):
            stack.append((pi.extend(a, None, t), p * q))
    return out


def complete_paths(F: FullyProbAutomaton) -> list:
    return analyse(F).paths


def event_prob(F: FullyProbAutomaton, E: Event, table: PathTable | None = None) -> MeasureReport:
    table = table or analyse(F)
    return MeasureReport(table.prob(E), table.truncated_mass, table.halt_mass, len(table.paths))


def cond_prob(F: FullyProbAutomaton, E: Event, G: Event, table: PathTable | None = None) -> Fraction:
    table = table or analyse(F)
    pg = table.prob(G)
    if pg == 0:
        raise ConditionNullEvent(f"conditioning event {G} has probability 0")
    return table.prob(And(E, G)) / pg
