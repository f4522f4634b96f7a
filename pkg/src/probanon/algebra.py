"""Parallel composition, restriction, hiding and reachability pruning."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .core import INPUT, OUTPUT, ActionLabel, Distribution, ProbAutomaton, label, marker


@dataclass(frozen=True)
class CommFunction:
    """A partial, commutative communication function on action labels.

    Keys are unordered pairs, so ``gamma(b, c) == gamma(c, b)`` holds by
    construction.  Associativity is not checked.
    """

    table: Mapping = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for pair, result in dict(self.table).items():
            pair = frozenset(label(x) for x in pair)
            if not 1 <= len(pair) <= 2:
                raise ValueError("communication keys are pairs of labels")
            norm[pair] = label(result)
        object.__setattr__(self, "table", norm)

    def __call__(self, b: ActionLabel, c: ActionLabel) -> ActionLabel | None:
        return self.table.get(frozenset((b, c)))

    @property
    def results(self) -> frozenset:
        return frozenset(self.table.values())

    def __or__(self, other: "CommFunction") -> "CommFunction":
        return CommFunction({**self.table, **other.table})


def handshake(channels: Iterable[str]) -> CommFunction:
    """``c? . c! = tau[c]`` for every channel name, undefined elsewhere."""
    return CommFunction({
        (ActionLabel(c, INPUT), ActionLabel(c, OUTPUT)): marker(c) for c in channels
    })


def channel_halves(channels: Iterable[str]) -> frozenset:
    """The ``c?``/``c!`` labels of the given channels (the usual restriction set)."""
    out = set()
    for c in channels:
        out.add(ActionLabel(c, INPUT))
        out.add(ActionLabel(c, OUTPUT))
    return frozenset(out)


def _flat(name) -> tuple:
    return name if isinstance(name, tuple) else (name,)


def _product(mu1: Distribution, mu2: Distribution, pair) -> Distribution:
    return Distribution([(pair(t1, t2), p1 * p2) for t1, p1 in mu1.items() for t2, p2 in mu2.items()])


def _joint_moves(ts1, ts2, s1, s2, gamma, pair):
    """The three clauses of parallel composition at ``s1 || s2``.

    Order: synchronous moves, then moves of the left side, then of the right.
    """
    out = []
    for b, mu1 in ts1:
        for c, mu2 in ts2:
            a = gamma(b, c)
            if a is not None:
                out.append((a, _product(mu1, mu2, pair)))
    for a, mu1 in ts1:
        out.append((a, mu1.map(lambda t1: pair(t1, s2))))
    for a, mu2 in ts2:
        out.append((a, mu2.map(lambda t2: pair(s1, t2))))
    return out


def compose(A1: ProbAutomaton, A2: ProbAutomaton, gamma: CommFunction | None = None) -> ProbAutomaton:
    """Full product ``A1 || A2``; state ``(i, j)`` gets id ``i * |S2| + j``.

    Names are flattened tuples, so nested compositions read as n-tuples.
    Use :func:`compose_all` for large systems: it only builds the reachable
    part and applies restriction on the fly.
    """
    gamma = gamma or CommFunction()
    n2 = A2.n_states

    def pair(i, j):
        return i * n2 + j

    names = []
    trans = []
    for i in A1.states:
        for j in A2.states:
            names.append(_flat(A1.names[i]) + _flat(A2.names[j]))
            trans.append(tuple(_joint_moves(A1.transitions[i], A2.transitions[j], i, j, gamma, pair)))
    actions = A1.actions | A2.actions | gamma.results
    return ProbAutomaton(tuple(names), tuple(trans), pair(A1.initial, A2.initial), actions)


def restrict(A: ProbAutomaton, I: Iterable) -> ProbAutomaton:
    """Drop every transition whose label is in ``I``; states are unchanged."""
    I = frozenset(label(a) for a in I)
    trans = tuple(tuple((a, mu) for a, mu in ts if a not in I) for ts in A.transitions)
    return ProbAutomaton(A.names, trans, A.initial, A.actions - I)


def hide(A: ProbAutomaton, H: Iterable) -> ProbAutomaton:
    """Rename every label in ``H`` to the marker ``tau[<label>]``.

    Already internal labels are left alone.
    """
    H = frozenset(label(a) for a in H)

    def ren(a):
        return marker(str(a)) if a in H and not a.internal else a

    trans = tuple(tuple((ren(a), mu) for a, mu in ts) for ts in A.transitions)
    return ProbAutomaton(A.names, trans, A.initial, frozenset(ren(a) for a in A.actions))


def reachable(A: ProbAutomaton) -> ProbAutomaton:
    """Keep the states reachable from the initial state, renumbered in BFS order."""
    order = [A.initial]
    new = {A.initial: 0}
    q = deque([A.initial])
    while q:
        s = q.popleft()
        for _, _, t, _ in A.successors(s):
            if t not in new:
                new[t] = len(order)
                order.append(t)
                q.append(t)
    names = tuple(A.names[s] for s in order)
    trans = tuple(
        tuple((a, mu.map(new.__getitem__)) for a, mu in A.transitions[s]) for s in order
    )
    return ProbAutomaton(names, trans, 0, A.actions)


def compose_all(automata: Sequence[ProbAutomaton], gamma: CommFunction | None = None,
                restrict_to: Iterable = (), hide_labels: Iterable = ()) -> ProbAutomaton:
    """Reachable part of ``hide(restrict(A1 || ... || An, R), H)``.

    The product is left-nested and explored from the initial tuple, so only
    reachable tuples are built.  The result is identical (up to state
    numbering) to composing the full products, restricting, hiding and then
    calling :func:`reachable`.
    """
    if not automata:
        raise ValueError("nothing to compose")
    gamma = gamma or CommFunction()
    R = frozenset(label(a) for a in restrict_to)
    memo: dict = {}

    def pair(left, right):
        return left + (right,)

    def moves(prefix: tuple):
        # Transitions of A1 || ... || Ak at the tuple ``prefix`` (k = len(prefix)).
        if prefix in memo:
            return memo[prefix]
        k = len(prefix)
        if k == 1:
            res = [(a, mu.map(lambda t: (t,))) for a, mu in automata[0].transitions[prefix[0]]]
        else:
            left, right = prefix[:-1], prefix[-1]
            res = _joint_moves(moves(left), automata[k - 1].transitions[right], left, right,
                               gamma, pair)
        memo[prefix] = res
        return res

    init = tuple(A.initial for A in automata)
    ids = {init: 0}
    order = [init]
    trans: list = []
    q = deque([init])
    while q:
        s = q.popleft()
        ts = [(a, mu) for a, mu in moves(s) if a not in R]
        for _, mu in ts:
            for t in mu:
                if t not in ids:
                    ids[t] = len(order)
                    order.append(t)
                    q.append(t)
        trans.append(ts)
    names = tuple(
        tuple(x for i, A in enumerate(automata) for x in _flat(A.names[s[i]])) for s in order
    )
    trans = tuple(tuple((a, mu.map(ids.__getitem__)) for a, mu in ts) for ts in trans)
    actions = frozenset().union(*(A.actions for A in automata)) | gamma.results
    B = ProbAutomaton(names, trans, 0, actions - R)
    H = tuple(hide_labels)
    return hide(B, H) if H else B
