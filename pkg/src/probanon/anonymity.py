"""Anonymity systems and their checks.

A system is anonymous when, given that some hidden user event happened,
the observation (the observable part of the trace) is independent of which
user it was.  For automata with nondeterminism this must hold under every
admissible scheduler; :func:`check_pa` checks a stated class of them, and
:func:`prove_by_automorphism` proves it for all of them via a symmetry.
"""

from __future__ import annotations

import itertools
import time
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Mapping

from .bisim import bisimilarity
from .core import FullyProbAutomaton, ProbAutomaton, label
from .measure import (And, Event, Not, Occurs, Or, OtraceEquals, PathTable, analyse,
                      otrace)
from .sched import (COLLAPSE, DEFAULT_MAX_KEYS, DEFAULT_MAX_SCHEDULERS, ObservationMap,
                    Scheduler, count_admissible, enumerate_admissible, enumerate_unrestricted,
                    sample_admissible, sample_unrestricted, unfold)

ANONYMOUS = "ANONYMOUS"
PROVED = "ANONYMOUS-PROVED"
CHECKED = "ANONYMOUS-ON-CHECKED-CLASS"
VIOLATION = "VIOLATION"
INCONCLUSIVE = "INCONCLUSIVE"


ORDERED = "ordered"
UNORDERED = "unordered"
VIEWS = (ORDERED, UNORDERED)


def unordered(o: tuple) -> tuple:
    """Forget the order of an observation (keep it as a sorted multiset)."""
    return tuple(sorted(o, key=lambda a: a.sort_key()))


@dataclass(frozen=True)
class AnonymitySpec:
    """Users, one hidden event per user, and the observable actions."""

    users: tuple
    events: Mapping
    observables: frozenset
    view: str = ORDERED

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        object.__setattr__(self, "events", dict(self.events))
        object.__setattr__(self, "observables", frozenset(label(a) for a in self.observables))
        missing = [u for u in self.users if u not in self.events]
        if missing:
            raise ValueError(f"no event for users {missing}")
        if self.view not in VIEWS:
            raise ValueError(f"unknown view {self.view!r}; expected one of {VIEWS}")

    @classmethod
    def with_markers(cls, markers: Mapping, observables, view: str = ORDERED) -> "AnonymitySpec":
        """Users ``markers.keys()``; user ``i``'s event is that its marker label occurs."""
        return cls(tuple(markers), {u: Occurs(label(m)) for u, m in markers.items()}, observables,
                   view)

    @property
    def view_fn(self) -> Callable | None:
        return unordered if self.view == UNORDERED else None

    @property
    def any_user(self) -> Event:
        return Or(*(self.events[u] for u in self.users))

    def observation_map(self, mode: str = COLLAPSE) -> ObservationMap:
        return ObservationMap(self.observables, mode)

    def overlaps_in(self, A: ProbAutomaton) -> list | None:
        """Pairs of users whose events share a complete path of ``A``.

        Works on occurrence events (the only kind the model format writes);
        returns ``None`` if some event is of another kind.
        """
        rel: set = set()
        for u in self.users:
            labs = _occurs_labels(self.events[u])
            if labs is None:
                return None
            rel |= labs
        start = (A.initial, frozenset())
        seen = {start}
        q = deque([start])
        bad = set()
        while q:
            s, fired = q.popleft()
            if not A.transitions[s]:
                hit = [u for u in self.users if self.events[u].holds(tuple(fired))]
                bad.update(itertools.combinations(hit, 2))
            for _, a, t, _ in A.successors(s):
                nxt = (t, fired | ({a} & rel))
                if nxt not in seen:
                    seen.add(nxt)
                    q.append(nxt)
        return sorted(bad, key=str)

    def overlaps(self, table: PathTable) -> list:
        """Pairs of users whose events share a complete path of positive probability."""
        bad = set()
        for trace, _ in table.traces():
            hit = [u for u in self.users if self.events[u].holds(trace)]
            for i, j in itertools.combinations(hit, 2):
                bad.add((i, j))
        return sorted(bad, key=str)


@dataclass
class Witness:
    """Why a check failed.  ``lhs``/``rhs`` are the two unequal probabilities."""

    user: object
    observation: tuple
    lhs: Fraction
    rhs: Fraction
    form: str = "independence"
    other_user: object = None
    scheduler: Scheduler | None = None
    other_scheduler: Scheduler | None = None

    def to_dict(self) -> dict:
        from .dsl import format_scheduler

        d = {
            "form": self.form,
            "user": str(self.user),
            "observation": _obs_str(self.observation),
            "lhs": str(self.lhs),
            "rhs": str(self.rhs),
        }
        if self.other_user is not None:
            d["other_user"] = str(self.other_user)
        if self.scheduler is not None:
            d["scheduler"] = format_scheduler(self.scheduler)
        if self.other_scheduler is not None:
            d["other_scheduler"] = format_scheduler(self.other_scheduler)
        return d


@dataclass
class Verdict:
    status: str
    witness: Witness | None = None
    coverage: str = ""
    schedulers_checked: int = 0
    notes: list = field(default_factory=list)

    @property
    def anonymous(self) -> bool:
        return self.status in (ANONYMOUS, PROVED, CHECKED)

    def to_dict(self) -> dict:
        d = {"status": self.status, "coverage": self.coverage,
             "schedulers_checked": self.schedulers_checked}
        if self.witness is not None:
            d["witness"] = self.witness.to_dict()
        if self.notes:
            d["notes"] = list(self.notes)
        return d


def _obs_str(o) -> str:
    if isinstance(o, tuple):
        return " ".join(map(str, o)) if o else "<empty>"
    return str(o)


def _obs_key(o):
    if isinstance(o, tuple):
        return (0, tuple(a.sort_key() if hasattr(a, "sort_key") else (str(a),) for a in o))
    return (1, repr(o))


def observation_event(o, spec: AnonymitySpec, view: Callable | None = None) -> OtraceEquals:
    return OtraceEquals(o, spec.observables, view)


# ---------------------------------------------------------------------------
# fully probabilistic systems


class _Stats:
    """Joint masses of (observation, user) over the complete paths of one FPA."""

    def __init__(self, table: PathTable, spec: AnonymitySpec, view: Callable | None):
        self.p_user = {u: Fraction(0) for u in spec.users}
        self.p_any = Fraction(0)
        self.p_obs_any: dict = {}
        self.p_obs_user: dict = {}
        observed = set()
        for trace, p in table.traces():
            o = otrace(trace, spec.observables)
            if view is not None:
                o = view(o)
            observed.add(o)
            hit = [u for u in spec.users if spec.events[u].holds(trace)]
            if not hit:
                continue
            self.p_any += p
            self.p_obs_any[o] = self.p_obs_any.get(o, Fraction(0)) + p
            for u in hit:
                self.p_user[u] += p
                self.p_obs_user[o, u] = self.p_obs_user.get((o, u), Fraction(0)) + p
        self.observations = sorted(observed, key=_obs_key)

    def obs_user(self, o, u) -> Fraction:
        return self.p_obs_user.get((o, u), Fraction(0))


def check_fpa(F: FullyProbAutomaton, spec: AnonymitySpec, view: Callable | None = None,
              table: PathTable | None = None) -> Verdict:
    """Exact independence of observation and user, given that some user event happened.

    ``view`` post-processes observations (for example to forget their order).
    """
    table = table or analyse(F)
    st = _Stats(table, spec, view or spec.view_fn)
    if st.p_any == 0:
        return Verdict(ANONYMOUS, coverage="vacuous: no user event has positive probability")
    pa = st.p_any
    for u in spec.users:
        for o in st.observations:
            lhs = st.obs_user(o, u) / pa
            rhs = (st.p_obs_any.get(o, Fraction(0)) / pa) * (st.p_user[u] / pa)
            if lhs != rhs:
                return Verdict(VIOLATION, Witness(u, o, lhs, rhs), coverage="single FPA")
    return Verdict(ANONYMOUS, coverage="single FPA")


def check_fpa_bp(F: FullyProbAutomaton, spec: AnonymitySpec, view: Callable | None = None,
                 table: PathTable | None = None) -> Verdict:
    """Pairwise form: P[o | A_i] = P[o | A_j] for all users with positive probability."""
    table = table or analyse(F)
    st = _Stats(table, spec, view or spec.view_fn)
    live = [u for u in spec.users if st.p_user[u] > 0]
    if not live:
        return Verdict(ANONYMOUS, coverage="vacuous: no user event has positive probability")
    for i, j in itertools.combinations(live, 2):
        for o in st.observations:
            pi = st.obs_user(o, i) / st.p_user[i]
            pj = st.obs_user(o, j) / st.p_user[j]
            if pi != pj:
                return Verdict(VIOLATION, Witness(i, o, pi, pj, "pairwise", other_user=j),
                               coverage="single FPA")
    return Verdict(ANONYMOUS, coverage="single FPA")


def replay_witness(F: FullyProbAutomaton, spec: AnonymitySpec, w: Witness,
                   view: Callable | None = None) -> tuple:
    """Recompute a witness's two numbers with :func:`cond_prob`."""
    from .measure import cond_prob

    table = analyse(F)
    o = observation_event(w.observation, spec, view or spec.view_fn)
    Ai = spec.events[w.user]
    if w.form == "independence":
        A = spec.any_user
        lhs = cond_prob(F, And(o, Ai), A, table)
        rhs = cond_prob(F, o, A, table) * cond_prob(F, Ai, A, table)
        return lhs, rhs
    return cond_prob(F, o, Ai, table), cond_prob(F, o, spec.events[w.other_user], table)


# ---------------------------------------------------------------------------
# systems with nondeterminism


@dataclass(frozen=True)
class Enumerate:
    horizon: int
    mode: str = COLLAPSE
    max_schedulers: int | None = DEFAULT_MAX_SCHEDULERS
    max_keys: int | None = DEFAULT_MAX_KEYS


@dataclass(frozen=True)
class Sample:
    n: int
    seed: int = 0
    horizon: int = 64
    mode: str = COLLAPSE


@dataclass(frozen=True)
class Automorphism:
    maps: Mapping


def check_pa(A: ProbAutomaton, spec: AnonymitySpec, strategy, view: Callable | None = None) -> Verdict:
    """Anonymity of ``A`` over a scheduler class chosen by ``strategy``.

    ``Enumerate`` checks every deterministic admissible scheduler up to the
    horizon, ``Sample`` only tries to falsify, and ``Automorphism`` proves
    anonymity for all admissible schedulers from user-swapping maps.
    """
    if isinstance(strategy, Automorphism):
        return prove_by_automorphism(A, spec, strategy.maps)
    if not isinstance(strategy, (Enumerate, Sample)):
        raise TypeError(f"unknown strategy {strategy!r}")
    obs = spec.observation_map(strategy.mode)
    if isinstance(strategy, Enumerate):
        # counting is much cheaper than checking, so an oversized class trips the guard early
        count_admissible(A, obs, strategy.horizon, max_schedulers=strategy.max_schedulers,
                         max_keys=strategy.max_keys)
        scheds = enumerate_admissible(A, obs, strategy.horizon, strategy.max_schedulers,
                                      strategy.max_keys)
        cls = (f"deterministic tabular admissible schedulers ({strategy.mode} mode), "
               f"horizon {strategy.horizon}")
    else:
        scheds = (sample_admissible(A, obs, strategy.horizon, strategy.seed + k)
                  for k in range(strategy.n))
        cls = (f"{strategy.n} sampled deterministic admissible schedulers ({strategy.mode} mode), "
               f"horizon {strategy.horizon}, seed {strategy.seed}")
    return _check_class(A, spec, scheds, strategy, cls, view)


def _check_class(A, spec, scheds, strategy, cls: str, view) -> Verdict:
    n = 0
    vacuous = True
    truncated = False
    for xi in scheds:
        n += 1
        F = unfold(A, xi, strategy.horizon)
        table = analyse(F)
        truncated = truncated or table.truncated_mass > 0
        v = check_fpa(F, spec, view, table)
        if v.status == VIOLATION:
            v.witness.scheduler = xi
            return Verdict(VIOLATION, v.witness, cls, n)
        vacuous = vacuous and v.coverage.startswith("vacuous")
    notes = []
    if vacuous:
        notes.append("vacuous: no user event had positive probability under any checked scheduler")
    if truncated:
        notes.append("some runs were cut by the horizon")
    status = CHECKED if isinstance(strategy, Enumerate) else INCONCLUSIVE
    return Verdict(status, None, f"{cls}: {n} checked", n, notes)


def find_interfering(A: ProbAutomaton, spec: AnonymitySpec, horizon: int,
                     max_schedulers: int | None = DEFAULT_MAX_SCHEDULERS,
                     view: Callable | None = None,
                     where: Callable[[FullyProbAutomaton], bool] | None = None,
                     order: str = "deviation", seed: int = 0):
    """Search deterministic schedulers that see the whole raw history for a leak.

    With ``order="deviation"`` schedulers are tried exhaustively in order of
    how many decisions deviate from the first-listed transition, so small
    interferences are found first; more than ``max_schedulers`` trips the
    guard.  With ``order="random"`` up to ``max_schedulers`` random
    schedulers (seeds ``seed, seed+1, ...``) are tried instead, which finds
    leaks that need many coordinated deviations.
    ``where`` narrows the search to unfoldings it accepts.
    Returns ``(scheduler, witness, tried)`` or ``None`` once exhausted.
    """
    if order == "deviation":
        scheds = enumerate_unrestricted(A, horizon, max_schedulers)
    elif order == "random":
        n = max_schedulers if max_schedulers is not None else DEFAULT_MAX_SCHEDULERS
        scheds = (sample_unrestricted(A, horizon, seed + k) for k in range(n))
    else:
        raise ValueError(f"unknown search order {order!r}")
    tried = 0
    for xi in scheds:
        tried += 1
        F = unfold(A, xi, horizon)
        if where is not None and not where(F):
            continue
        v = check_fpa(F, spec, view)
        if v.status == VIOLATION:
            v.witness.scheduler = xi
            return xi, v.witness, tried
    return None


def bp_cross_check(A: ProbAutomaton, spec: AnonymitySpec, schedulers, horizon: int | None = None,
                   view: Callable | None = None) -> Verdict:
    """Diagnostic: compare P[o | A_i] across *pairs* of schedulers.

    Flags any two schedulers and users with positive probability whose
    observation distributions differ.  This is deliberately stricter than
    the anonymity definition used elsewhere in the package.
    """
    stats = []
    for xi in schedulers:
        F = unfold(A, xi, horizon)
        stats.append((xi, _Stats(analyse(F), spec, view or spec.view_fn)))
    for (z, sz), (x, sx) in itertools.product(stats, repeat=2):
        for i in spec.users:
            if sz.p_user[i] == 0:
                continue
            for j in spec.users:
                if sx.p_user[j] == 0:
                    continue
                obs = sorted(set(sz.observations) | set(sx.observations), key=_obs_key)
                for o in obs:
                    pz = sz.obs_user(o, i) / sz.p_user[i]
                    px = sx.obs_user(o, j) / sx.p_user[j]
                    if pz != px:
                        w = Witness(i, o, pz, px, "cross-scheduler", other_user=j,
                                    scheduler=z, other_scheduler=x)
                        return Verdict(VIOLATION, w, "pairs of given schedulers", len(stats))
    return Verdict(CHECKED, None, "pairs of given schedulers", len(stats))


# ---------------------------------------------------------------------------
# automorphisms


@dataclass(frozen=True)
class StateMap:
    """A map on the state ids of one automaton."""

    mapping: tuple

    @classmethod
    def identity(cls, n: int) -> "StateMap":
        return cls(tuple(range(n)))

    @classmethod
    def from_names(cls, A: ProbAutomaton, pairs: Mapping) -> "StateMap":
        """Map named states as given; every other state is fixed.  Unknown names raise KeyError."""
        m = list(range(A.n_states))
        for src, dst in pairs.items():
            m[A.index(src)] = A.index(dst)
        return cls(tuple(m))

    def __call__(self, s: int) -> int:
        return self.mapping[s]

    def is_bijection(self, n: int) -> bool:
        return len(self.mapping) == n and sorted(self.mapping) == list(range(n))


def component_map(A: ProbAutomaton, component_maps) -> StateMap | None:
    """Product of per-component name maps on a composed automaton.

    ``A``'s state names are tuples with one entry per component;
    ``component_maps[k]`` maps names of component ``k`` (missing names are
    fixed).  Returns ``None`` if some image tuple is not a state of ``A``.
    """
    index = {nm: s for s, nm in enumerate(A.names)}
    out = []
    for nm in A.names:
        img = tuple(cm.get(x, x) if cm else x for cm, x in zip(component_maps, nm))
        if img not in index:
            return None
        out.append(index[img])
    return StateMap(tuple(out))


def check_automorphism(A: ProbAutomaton, m: StateMap, observables) -> bool:
    """Is ``m`` an automorphism of ``A`` once unobservable labels are renamed to ``tau``?"""
    n = A.n_states
    if m is None or not m.is_bijection(n) or m(A.initial) != A.initial:
        return False
    obs = ObservationMap(frozenset(observables))
    for s in A.states:
        image = {(obs(a), mu.map(m)) for a, mu in A.transitions[s]}
        target = {(obs(a), mu) for a, mu in A.transitions[m(s)]}
        if image != target:
            return False
    return True


def _occurs_labels(e: Event):
    """Labels an Occurs-only event depends on, or None if it uses anything else."""
    if isinstance(e, Occurs):
        return {e.label}
    if isinstance(e, (And, Or)):
        out = set()
        for p in e.parts:
            sub = _occurs_labels(p)
            if sub is None:
                return None
            out |= sub
        return out
    if isinstance(e, Not):
        return _occurs_labels(e.part)
    return None


def maps_event(A: ProbAutomaton, m: StateMap, observables, Ei: Event, Ej: Event) -> bool:
    """Does the path map induced by ``m`` carry exactly the paths in ``Ei`` onto ``Ej``?

    Explores pairs (path, image path) through their last states, tracking
    which relevant labels each has seen; at terminating states the two
    events must agree.  When several transitions could be the image of a
    move, all of them are required to agree.
    """
    li, lj = _occurs_labels(Ei), _occurs_labels(Ej)
    if li is None or lj is None:
        return False
    rel = frozenset(li | lj)
    obs = ObservationMap(frozenset(observables))
    start = (A.initial, frozenset(), frozenset())
    seen = {start}
    q = deque([start])
    while q:
        s, seen_src, seen_img = q.popleft()
        ts = A.transitions[s]
        if not ts:
            if Ei.holds(tuple(seen_src)) != Ej.holds(tuple(seen_img)):
                return False
            continue
        img_ts = A.transitions[m(s)]
        for a, mu in ts:
            mapped = mu.map(m)
            cands = [b for b, nu in img_ts if obs(b) == obs(a) and nu == mapped]
            if not cands:
                return False
            src2 = seen_src | ({a} & rel)
            for b in cands:
                img2 = seen_img | ({b} & rel)
                for t in mu:
                    nxt = (t, src2, img2)
                    if nxt not in seen:
                        seen.add(nxt)
                        q.append(nxt)
    return True


class SearchBudget(RuntimeError):
    pass


def _dist_matchings(mu, nu, m: dict, inv: dict, cls):
    """Extensions of ``m`` under which ``mu`` is carried onto ``nu``."""
    if len(mu) != len(nu):
        return
    items = sorted(mu.items(), key=lambda kv: (kv[0] not in m, kv[0]))

    def go(k, ext, used):
        if k == len(items):
            yield dict(ext)
            return
        u, p = items[k]
        if u in m or u in ext:
            v = m[u] if u in m else ext[u]
            if nu.get(v, 0) == p and v not in used:
                yield from go(k + 1, ext, used | {v})
            return
        for v, q in nu.items():
            if q == p and v not in used and v not in inv and cls[v] == cls[u] \
                    and v not in ext.values():
                ext[u] = v
                yield from go(k + 1, ext, used | {v})
                del ext[u]

    yield from go(0, {}, frozenset())


def _state_matchings(A, obs, s: int, t: int, m: dict, inv: dict, cls):
    """Extensions of ``m`` that match the moves of ``s`` with those of ``t`` one to one."""
    ts = [(obs(a), mu) for a, mu in A.transitions[s]]
    tt = [(obs(a), mu) for a, mu in A.transitions[t]]
    if len(ts) != len(tt) or sorted(a.sort_key() for a, _ in ts) != \
            sorted(a.sort_key() for a, _ in tt):
        return

    def go(k, m2, inv2, used):
        if k == len(ts):
            yield m2, inv2
            return
        a, mu = ts[k]
        for x, (b, nu) in enumerate(tt):
            if x in used or b != a:
                continue
            for ext in _dist_matchings(mu, nu, m2, inv2, cls):
                if ext:
                    m3, inv3 = dict(m2), dict(inv2)
                    m3.update(ext)
                    inv3.update((v, u) for u, v in ext.items())
                else:
                    m3, inv3 = m2, inv2
                yield from go(k + 1, m3, inv3, used | {x})

    yield from go(0, m, inv, frozenset())


def find_automorphisms(A: ProbAutomaton, observables, max_nodes: int = 100_000):
    """Yield automorphisms of ``A`` modulo unobservable actions, identity first.

    Backtracking from the initial state; a state may only go to a state
    bisimilar to it (modulo the same renaming), which prunes most choices.
    States not reached that way are guessed afterwards.  Raises
    :class:`SearchBudget` after ``max_nodes`` search nodes.
    """
    obs = ObservationMap(frozenset(label(a) for a in observables))
    cls = bisimilarity(A, obs).block_of
    m0 = {A.initial: A.initial}
    stack = [(m0, dict(m0), [A.initial], set())]
    nodes = 0
    while stack:
        m, inv, pending, done = stack.pop()
        nodes += 1
        if nodes > max_nodes:
            raise SearchBudget(f"automorphism search exceeded {max_nodes} nodes")
        while pending and pending[-1] in done:
            pending = pending[:-1]
        if not pending:
            free = [u for u in A.states if u not in m]
            if not free:
                yield StateMap(tuple(m[u] for u in A.states))
                continue
            # an unreachable state: guess its image and carry on from there
            u = free[0]
            for t in reversed([t for t in A.states if t not in inv and cls[t] == cls[u]]):
                stack.append(({**m, u: t}, {**inv, t: u}, [u], done))
            continue
        s = pending[-1]
        children = []
        for m2, inv2 in _state_matchings(A, obs, s, m[s], m, inv, cls):
            fresh = [u for u in m2 if u not in m]
            children.append((m2, inv2, pending[:-1] + sorted(fresh, reverse=True), done | {s}))
        stack.extend(reversed(children))


def search_maps(A: ProbAutomaton, spec: "AnonymitySpec", max_nodes: int = 100_000):
    """User-exchanging automorphisms found by search, as ``({(i, j): map}, notes)``."""
    maps, notes = {}, []
    for i, j in itertools.combinations(spec.users, 2):
        try:
            for m in find_automorphisms(A, spec.observables, max_nodes):
                if maps_event(A, m, spec.observables, spec.events[i], spec.events[j]):
                    maps[(i, j)] = m
                    break
            else:
                notes.append(f"no automorphism exchanges users {i} and {j}")
        except SearchBudget as e:
            notes.append(f"users {i}, {j}: {e}")
    return maps, notes


def _pair_key(i, j):
    return frozenset((i, j))


def prove_by_automorphism(A: ProbAutomaton, spec: AnonymitySpec, maps: Mapping) -> Verdict:
    """Anonymity for every admissible scheduler from user-exchanging automorphisms.

    ``maps`` is keyed by unordered user pairs (``frozenset({i, j})`` or a
    tuple ``(i, j)``, meaning the map carries ``A_i`` onto ``A_j``).  Any
    missing or failing map gives ``INCONCLUSIVE``; the technique is a
    sufficient condition only.
    """
    norm = {}
    for k, v in maps.items():
        if isinstance(k, tuple):
            norm[_pair_key(*k)] = (k, v)
        else:
            i, j = sorted(k, key=str)
            norm[_pair_key(i, j)] = ((i, j), v)
    notes = []
    for i, j in itertools.combinations(spec.users, 2):
        entry = norm.get(_pair_key(i, j))
        if entry is None:
            notes.append(f"no map for users {i}, {j}")
            continue
        (a, b), m = entry
        if not check_automorphism(A, m, spec.observables):
            notes.append(f"map for {a}, {b} is not an automorphism modulo unobservable actions")
        elif not maps_event(A, m, spec.observables, spec.events[a], spec.events[b]):
            notes.append(f"map for {a}, {b} does not carry user {a}'s event onto user {b}'s")
    cov = "all admissible schedulers (collapse mode), by exchanging users"
    if notes:
        return Verdict(INCONCLUSIVE, None, cov, 0, notes)
    return Verdict(PROVED, None, cov, 0)
