"""Schedulers, the automaton-under-scheduler unfolding, and admissibility.

An *admissible* scheduler may only base its decision on what an observer
could know: the observable history of the run and the bisimilarity class
of the current state.  Observability is fixed by an :class:`ObservationMap`;
in the default ``collapse`` mode every non-observable action looks like one
anonymous ``tau``, both in histories and when bisimilarity is computed.
"""

from __future__ import annotations

import random
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Iterator, Mapping

from .bisim import Partition, bisimilarity, block_masses
from .core import (TAU, ActionLabel, FullyProbAutomaton, Path, ProbAutomaton,
                   SubDistribution, label)

COLLAPSE = "collapse"
STRICT = "strict"
MODES = (COLLAPSE, STRICT)

HALT = None

DEFAULT_MAX_SCHEDULERS = 10_000
DEFAULT_MAX_KEYS = 200_000


class CyclicNeedsHorizon(ValueError):
    pass


class ExplosionGuard(RuntimeError):
    """A configured bound on keys or schedulers was exceeded."""

    def __init__(self, what: str, bound: int):
        super().__init__(f"{what} exceeds the configured bound of {bound}")
        self.what = what
        self.bound = bound


@dataclass(frozen=True)
class ObservationMap:
    """What an observer sees of an action label.

    ``collapse`` keeps the labels in ``observables`` and maps everything else
    to ``tau``; ``strict`` is the identity on all labels.
    """

    observables: frozenset = frozenset()
    mode: str = COLLAPSE

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown observation mode {self.mode!r}")
        object.__setattr__(self, "observables", frozenset(label(a) for a in self.observables))

    def __call__(self, a: ActionLabel) -> ActionLabel:
        if self.mode == STRICT or a in self.observables:
            return a
        return TAU

    @classmethod
    def for_automaton(cls, A: ProbAutomaton, mode: str = COLLAPSE) -> "ObservationMap":
        """Observe every non-internal action of ``A``."""
        return cls(frozenset(a for a in A.actions if not a.internal), mode)


@dataclass(frozen=True)
class SchedulerKey:
    history: tuple
    cls: int

    def __str__(self):
        return "[" + ", ".join(map(str, self.history)) + f"] ; {self.cls}"


class SchedulingFrame:
    """Bisimilarity classes and canonical transition choices of ``A`` under ``obs``.

    The choices of a class are the distinct ``(observed action, block
    masses)`` signatures of its smallest state, in transition order.  Every
    other member realises choice ``c`` by its first matching transition,
    ties broken by raw label and then by finer (raw-label) block masses, so
    that strictly bisimilar members resolve to strictly equivalent moves.
    """

    def __init__(self, A: ProbAutomaton, obs: ObservationMap):
        self.A = A
        self.obs = obs
        self.partition: Partition = bisimilarity(A, obs)
        self._strict: Partition | None = None
        P = self.partition
        self.choices: dict = {}
        self.resolve: list = [None] * A.n_states
        for block in P.blocks:
            rep = block[0]
            sigs = []
            for a, mu in A.transitions[rep]:
                sig = (obs(a), block_masses(P, mu))
                if sig not in sigs:
                    sigs.append(sig)
            self.choices[P[rep]] = tuple(sigs)
        for s in A.states:
            self.resolve[s] = tuple(self._match(s, sig) for sig in self.choices[P[s]])

    def _strict_partition(self) -> Partition:
        if self._strict is None:
            self._strict = (self.partition if self.obs.mode == STRICT
                            else bisimilarity(self.A))
        return self._strict

    def _match(self, s: int, sig) -> int:
        P = self.partition
        cands = [k for k, (a, mu) in enumerate(self.A.transitions[s])
                 if (self.obs(a), block_masses(P, mu)) == sig]
        if not cands:
            raise AssertionError(f"state {s} cannot match a choice of its class")
        if len(cands) == 1:
            return cands[0]
        Q = self._strict_partition()
        ts = self.A.transitions[s]
        return min(cands, key=lambda k: (ts[k][0].sort_key(), block_masses(Q, ts[k][1]), k))

    def cls(self, s: int) -> int:
        return self.partition[s]

    def n_choices(self, s: int) -> int:
        return len(self.resolve[s])

    def key(self, s: int, history: tuple) -> SchedulerKey:
        return SchedulerKey(history, self.partition[s])

    def row_signature(self, s: int, row: SubDistribution) -> tuple:
        """The scheduled move as a distribution over (observed action, class), plus halting."""
        acc: dict = {}
        for k, w in row.entries.items():
            a, mu = self.A.transitions[s][k]
            for b, m in block_masses(self.partition, mu):
                key = (self.obs(a).sort_key(), b)
                acc[key] = acc.get(key, Fraction(0)) + w * m
        return tuple(sorted(acc.items())), row.halt


_FRAMES: dict = {}


def frame_for(A: ProbAutomaton, obs: ObservationMap) -> SchedulingFrame:
    key = (id(A), obs)
    hit = _FRAMES.get(key)
    if hit is None or hit.A is not A:
        if len(_FRAMES) > 64:
            _FRAMES.clear()
        hit = _FRAMES[key] = SchedulingFrame(A, obs)
    return hit


# ---------------------------------------------------------------------------
# scheduler kinds


def _as_row(value, n: int) -> SubDistribution:
    if value is HALT or n == 0:
        return SubDistribution.halting()
    if isinstance(value, SubDistribution):
        return value
    if isinstance(value, Mapping):
        total = sum(value.values(), Fraction(0))
        return SubDistribution(value, 1 - total)
    return SubDistribution({int(value): 1})


class Scheduler:
    """Base class; ``decide(path)`` returns a :class:`SubDistribution` over
    transition indices of ``path.last``."""

    kind = "abstract"
    A: ProbAutomaton

    def decide(self, path: Path) -> SubDistribution:  # pragma: no cover - interface
        raise NotImplementedError

    def view(self, path: Path):
        """The part of the history the scheduler's decision depends on."""
        return path


@dataclass(eq=False)
class TabularScheduler(Scheduler):
    """Keyed by (observed history, bisimilarity class); rows name canonical choices.

    A row is a choice index, ``HALT``, or a mapping from choice index to
    mass (the remaining mass halts).  Missing keys halt.
    """

    frame: SchedulingFrame
    table: dict = field(default_factory=dict)

    def __post_init__(self):
        self.A = self.frame.A
        randomized = any(isinstance(v, (Mapping, SubDistribution)) for v in self.table.values())
        self.kind = "tabular-randomized" if randomized else "tabular-deterministic"

    def key(self, path: Path) -> SchedulerKey:
        obs = self.frame.obs
        return SchedulerKey(tuple(obs(a) for a in path.trace()), self.frame.cls(path.last))

    def view(self, path: Path):
        return tuple(self.frame.obs(a) for a in path.trace())

    def decide(self, path: Path) -> SubDistribution:
        s = path.last
        res = self.frame.resolve[s]
        row = _as_row(self.table.get(self.key(path), HALT), len(res))
        return SubDistribution({res[c]: w for c, w in row.entries.items()}, row.halt)

    def well_formed(self) -> bool:
        for key, v in self.table.items():
            if key.cls not in self.frame.choices:
                return False
            m = len(self.frame.choices[key.cls])
            try:
                row = _as_row(v, m)
            except ValueError:
                return False
            if any(not 0 <= c < m for c in row.entries):
                return False
        return True


@dataclass(eq=False)
class MemorylessScheduler(Scheduler):
    """History-independent: one row per state (transition index, HALT, or mapping)."""

    A: ProbAutomaton
    rows: tuple

    kind = "history-independent"

    def view(self, path: Path):
        return None

    def decide(self, path: Path) -> SubDistribution:
        s = path.last
        return _as_row(self.rows[s], len(self.A.transitions[s]))


@dataclass(eq=False)
class TraceScheduler(Scheduler):
    """Keyed by the raw trace; rows name an action label of the current state.

    A row is a label (first transition with that label), ``HALT``, or a
    mapping from label to mass.  Unlisted traces halt, or take the first
    transition when ``fallback == "first"``.
    """

    A: ProbAutomaton
    table: dict
    fallback: str = "halt"

    kind = "unrestricted"

    def view(self, path: Path):
        return path.trace()

    def decide(self, path: Path) -> SubDistribution:
        s = path.last
        ts = self.A.transitions[s]
        if not ts:
            return SubDistribution.halting()
        trace = path.trace()
        if trace not in self.table:
            return SubDistribution({0: 1}) if self.fallback == "first" else SubDistribution.halting()
        v = self.table[trace]
        if v is HALT:
            return SubDistribution.halting()
        if not isinstance(v, Mapping):
            v = {v: 1}
        out = {}
        for a, w in v.items():
            a = label(a)
            ks = [k for k, (b, _) in enumerate(ts) if b == a]
            if not ks:
                raise ValueError(f"no {a} transition after trace {list(map(str, trace))}")
            out[ks[0]] = w
        return SubDistribution(out, 1 - sum(map(Fraction, out.values()), Fraction(0)))


@dataclass(eq=False)
class PathScheduler(Scheduler):
    """Keyed by the full raw path; rows are transition indices.  Unlisted paths halt."""

    A: ProbAutomaton
    table: dict

    kind = "unrestricted"

    def decide(self, path: Path) -> SubDistribution:
        return _as_row(self.table.get(path, HALT), len(self.A.transitions[path.last]))


def priority_scheduler(A: ProbAutomaton, levels: Iterable) -> MemorylessScheduler:
    """History-independent scheduler from priority levels.

    ``levels`` is a sequence of ``(mode, labels)`` with mode ``"first"`` or
    ``"uniform"``.  In each state the highest level with an enabled
    transition decides: ``first`` takes the first such transition,
    ``uniform`` spreads mass evenly over all of them.  Unlisted labels form
    an implicit final ``first`` level.
    """
    levels = [(mode, frozenset(label(a) for a in labs)) for mode, labs in levels]
    rows = []
    for s in A.states:
        ts = A.transitions[s]
        row = HALT
        for mode, labs in levels:
            ks = [k for k, (a, _) in enumerate(ts) if a in labs]
            if ks:
                row = ks[0] if mode == "first" else {k: Fraction(1, len(ks)) for k in ks}
                break
        else:
            if ts:
                listed = frozenset().union(*(l for _, l in levels)) if levels else frozenset()
                ks = [k for k, (a, _) in enumerate(ts) if a not in listed]
                row = ks[0] if ks else HALT
        rows.append(row)
    return MemorylessScheduler(A, tuple(rows))


def always_halt(A: ProbAutomaton) -> MemorylessScheduler:
    return MemorylessScheduler(A, tuple(HALT for _ in A.states))


# ---------------------------------------------------------------------------
# unfolding


def unfold(A: ProbAutomaton, xi: Scheduler, horizon: int | None = None) -> FullyProbAutomaton:
    """The fully probabilistic automaton ``A`` under ``xi``; states are paths of ``A``.

    ``horizon`` bounds the number of scheduler decisions along any path;
    nodes reached at the bound are cut and listed in ``cut``.
    """
    if horizon is None and A.has_cycle():
        raise CyclicNeedsHorizon("automaton has a reachable cycle; give a finite horizon")
    root = Path(A.initial)
    names = [root]
    steps: list = [None]
    cut = set()
    q = deque([0])
    while q:
        i = q.popleft()
        pi = names[i]
        s = pi.last
        if A.is_terminating(s):
            continue
        if horizon is not None and len(pi) >= horizon:
            cut.add(i)
            continue
        row = xi.decide(pi)
        entries = []
        for k, w in row.entries.items():
            a, mu = A.transitions[s][k]
            for t, p in mu.items():
                j = len(names)
                names.append(pi.extend(a, k, t))
                steps.append(None)
                entries.append(((a, j), w * p))
                q.append(j)
        steps[i] = SubDistribution(entries, row.halt)
    return FullyProbAutomaton(tuple(names), tuple(steps), 0, A.actions, frozenset(cut))


def longest_run(A: ProbAutomaton) -> int:
    """Number of steps on the longest path from the initial state (acyclic ``A`` only)."""
    if A.has_cycle():
        raise CyclicNeedsHorizon("automaton has a reachable cycle; give a finite horizon")
    order = [A.initial]
    seen = {A.initial}
    for s in order:
        for _, _, t, _ in A.successors(s):
            if t not in seen:
                seen.add(t)
                order.append(t)
    depth: dict = {}
    for s in reversed(_topo(A, order)):
        depth[s] = max((1 + depth[t] for _, _, t, _ in A.successors(s)), default=0)
    return depth[A.initial]


def _topo(A: ProbAutomaton, nodes) -> list:
    indeg = {s: 0 for s in nodes}
    for s in nodes:
        for _, _, t, _ in A.successors(s):
            indeg[t] += 1
    out = [s for s in nodes if indeg[s] == 0]
    for s in out:
        for _, _, t, _ in A.successors(s):
            indeg[t] -= 1
            if indeg[t] == 0:
                out.append(t)
    return out


# ---------------------------------------------------------------------------
# admissibility


def _row_equiv_groups(frame: SchedulingFrame, items) -> bool:
    groups: dict = {}
    for key, sig in items:
        if groups.setdefault(key, sig) != sig:
            return False
    return True


def is_admissible(A: ProbAutomaton, xi: Scheduler, obs: ObservationMap | None = None,
                  horizon: int | None = None) -> bool:
    """Do paths with equal observed traces and bisimilar last states get equivalent moves?

    Tabular schedulers built over the same observation map are admissible
    by construction; for them only the table is checked.  History-independent
    schedulers are checked on pairs of states reachable by equally observed
    paths.  Anything else is checked on every distinct (state, scheduler
    view, observed trace) summary, which needs an acyclic automaton or a
    horizon.
    """
    obs = obs or ObservationMap.for_automaton(A)
    frame = frame_for(A, obs)
    if isinstance(xi, TabularScheduler) and xi.frame.obs == obs and xi.A is A:
        return xi.well_formed()
    if isinstance(xi, MemorylessScheduler):
        return _memoryless_admissible(A, xi, frame)
    if horizon is None and A.has_cycle():
        raise CyclicNeedsHorizon("admissibility of history-dependent schedulers needs a horizon")
    seen = set()
    items = []
    q = deque([Path(A.initial)])
    while q:
        pi = q.popleft()
        s = pi.last
        hist = tuple(obs(a) for a in pi.trace())
        summ = (s, xi.view(pi), hist)
        if summ in seen:
            continue
        seen.add(summ)
        row = xi.decide(pi) if A.transitions[s] else SubDistribution.halting()
        items.append(((hist, frame.cls(s)), frame.row_signature(s, row)))
        if horizon is not None and len(pi) >= horizon:
            continue
        for k, a, t, _ in A.successors(s):
            q.append(pi.extend(a, k, t))
    return _row_equiv_groups(frame, items)


def _memoryless_admissible(A, xi: MemorylessScheduler, frame: SchedulingFrame) -> bool:
    obs = frame.obs
    sig = {}

    def row_sig(s):
        if s not in sig:
            row = xi.decide(Path(s)) if A.transitions[s] else SubDistribution.halting()
            sig[s] = frame.row_signature(s, row)
        return sig[s]

    start = (A.initial, A.initial)
    seen = {start}
    q = deque([start])
    while q:
        s, t = q.popleft()
        if frame.cls(s) == frame.cls(t) and row_sig(s) != row_sig(t):
            return False
        by_label: dict = {}
        for _, a, u, _ in A.successors(t):
            by_label.setdefault(obs(a), set()).add(u)
        for _, a, u, _ in A.successors(s):
            for v in by_label.get(obs(a), ()):
                if (u, v) not in seen:
                    seen.add((u, v))
                    q.append((u, v))
    return True


# ---------------------------------------------------------------------------
# synthesis, enumeration, sampling


def synthesize_admissible(A: ProbAutomaton, obs: ObservationMap | None = None) -> MemorylessScheduler:
    """A history-independent admissible scheduler: canonical choice 0 of every class.

    Terminating states halt; every other state takes its member of the
    class's first canonical move.  The tie-breaking in
    :class:`SchedulingFrame` makes the result admissible in strict mode too.
    """
    obs = obs or ObservationMap.for_automaton(A)
    frame = frame_for(A, obs)
    rows = tuple(frame.resolve[s][0] if frame.resolve[s] else HALT for s in A.states)
    return MemorylessScheduler(A, rows)


def _key_space(A: ProbAutomaton, frame: SchedulingFrame, horizon: int, max_keys: int) -> int:
    """Number of (observed history, class) keys reachable under some scheduler."""
    obs = frame.obs
    seen = set()
    keys = set()
    start = (A.initial, ())
    seen.add(start)
    q = deque([start])
    while q:
        s, hist = q.popleft()
        if not A.transitions[s] or len(hist) >= horizon:
            continue
        keys.add((hist, frame.cls(s)))
        if len(keys) > max_keys:
            raise ExplosionGuard("admissible key space", max_keys)
        for _, a, t, _ in A.successors(s):
            nxt = (t, hist + (obs(a),))
            if nxt not in seen:
                seen.add(nxt)
                q.append(nxt)
    return len(keys)


class _TabularSpace:
    """Decision points of tabular schedulers: nodes are (state, observed history)."""

    def __init__(self, A: ProbAutomaton, frame: SchedulingFrame, horizon: int):
        self.A, self.frame, self.horizon = A, frame, horizon
        self.root = (A.initial, ())

    def key(self, node):
        s, hist = node
        if not self.A.transitions[s] or len(hist) >= self.horizon:
            return None
        return SchedulerKey(hist, self.frame.cls(s))

    def n_choices(self, node) -> int:
        return len(self.frame.resolve[node[0]])

    def successors(self, node, c: int):
        s, hist = node
        a, mu = self.A.transitions[s][self.frame.resolve[s][c]]
        h2 = hist + (self.frame.obs(a),)
        return [(t, h2) for t in mu]


class _PathSpace:
    """Decision points of schedulers keyed by the full raw path."""

    def __init__(self, A: ProbAutomaton, horizon: int):
        self.A, self.horizon = A, horizon
        self.root = Path(A.initial)

    def key(self, pi: Path):
        if not self.A.transitions[pi.last] or len(pi) >= self.horizon:
            return None
        return pi

    def n_choices(self, pi: Path) -> int:
        return len(self.A.transitions[pi.last])

    def successors(self, pi: Path, k: int):
        a, mu = self.A.transitions[pi.last][k]
        return [pi.extend(a, k, t) for t in mu]


def _lazy_assignments(space, by_deviation: bool = False,
                      max_count: int | None = None) -> Iterator[dict]:
    """Enumerate choice assignments over the keys a run actually reaches.

    Keys are discovered lazily: a key gets a choice only when a node that
    needs it is reached, so two yielded assignments always differ on some
    key reachable under both.  ``by_deviation`` yields assignments in order
    of how many keys deviate from choice 0 (still exhaustive).
    """
    count = 0
    pruned = False

    def go(work: list, seen: set, assign: dict, used: int, budget):
        nonlocal count, pruned
        while work:
            node = work.pop()
            key = space.key(node)
            if key is None:
                continue
            c = assign.get(key)
            if c is None:
                m = space.n_choices(node)
                if budget is not None and used >= budget:
                    pruned = pruned or m > 1
                    options = range(1)
                else:
                    options = range(m)
                for c in options:
                    w2, s2 = list(work), set(seen)
                    for t in space.successors(node, c):
                        if t not in s2:
                            s2.add(t)
                            w2.append(t)
                    yield from go(w2, s2, {**assign, key: c}, used + (c > 0), budget)
                return
            for t in space.successors(node, c):
                if t not in seen:
                    seen.add(t)
                    work.append(t)
        if budget is None or used == budget:
            count += 1
            if max_count is not None and count > max_count:
                raise ExplosionGuard("number of schedulers", max_count)
            yield assign

    root = space.root
    if not by_deviation:
        yield from go([root], {root}, {}, 0, None)
        return
    budget = 0
    while True:
        pruned = False
        yield from go([root], {root}, {}, 0, budget)
        if not pruned:
            return
        budget += 1


def enumerate_admissible(A: ProbAutomaton, obs: ObservationMap | None = None, horizon: int = 1,
                         max_schedulers: int | None = DEFAULT_MAX_SCHEDULERS,
                         max_keys: int | None = DEFAULT_MAX_KEYS) -> Iterator[TabularScheduler]:
    """All non-halting deterministic tabular schedulers up to ``horizon`` decisions.

    Only keys reachable under a scheduler are part of its table, so distinct
    yielded schedulers behave differently.  The key space is measured first
    and :class:`ExplosionGuard` raised if it exceeds ``max_keys``; the guard
    also trips once more than ``max_schedulers`` schedulers were produced.
    """
    obs = obs or ObservationMap.for_automaton(A)
    frame = frame_for(A, obs)
    if max_keys is not None:
        _key_space(A, frame, horizon, max_keys)
    for assign in _lazy_assignments(_TabularSpace(A, frame, horizon), max_count=max_schedulers):
        yield TabularScheduler(frame, dict(assign))


def count_admissible(A, obs=None, horizon: int = 1, **guards) -> int:
    return sum(1 for _ in enumerate_admissible(A, obs, horizon, **guards))


def _random_assignment(space, seed: int) -> dict:
    """One uniformly random choice per key reached under the choices made so far."""
    rng = random.Random(seed)
    assign: dict = {}
    work = deque([space.root])
    seen = {space.root}
    while work:
        node = work.popleft()
        key = space.key(node)
        if key is None:
            continue
        if key not in assign:
            assign[key] = rng.randrange(space.n_choices(node))
        for t in space.successors(node, assign[key]):
            if t not in seen:
                seen.add(t)
                work.append(t)
    return assign


def sample_admissible(A: ProbAutomaton, obs: ObservationMap | None = None, horizon: int = 1,
                      seed: int = 0) -> TabularScheduler:
    """A deterministic tabular scheduler with a uniformly random choice per reached key."""
    obs = obs or ObservationMap.for_automaton(A)
    frame = frame_for(A, obs)
    return TabularScheduler(frame, _random_assignment(_TabularSpace(A, frame, horizon), seed))


def sample_unrestricted(A: ProbAutomaton, horizon: int, seed: int = 0) -> PathScheduler:
    """A deterministic scheduler with a uniformly random choice per reached raw path."""
    return PathScheduler(A, _random_assignment(_PathSpace(A, horizon), seed))


def enumerate_unrestricted(A: ProbAutomaton, horizon: int, max_schedulers: int | None = None,
                           by_deviation: bool = True) -> Iterator[PathScheduler]:
    """Deterministic non-halting schedulers keyed by the full raw path."""
    for assign in _lazy_assignments(_PathSpace(A, horizon), by_deviation=by_deviation,
                                    max_count=max_schedulers):
        yield PathScheduler(A, dict(assign))
