"""Relation lifting and probabilistic bisimilarity by signature refinement."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterable, Sequence

from .core import Distribution, ProbAutomaton


@dataclass(frozen=True)
class Partition:
    """A partition of ``range(n)``; blocks are ordered by their smallest state."""

    block_of: tuple

    def __post_init__(self):
        # Renumber so that block ids follow first occurrence.
        ren: dict = {}
        canon = []
        for b in self.block_of:
            if b not in ren:
                ren[b] = len(ren)
            canon.append(ren[b])
        object.__setattr__(self, "block_of", tuple(canon))

    @classmethod
    def from_blocks(cls, blocks: Iterable[Iterable[int]], n: int | None = None) -> "Partition":
        blocks = [sorted(b) for b in blocks]
        n = n if n is not None else sum(len(b) for b in blocks)
        block_of = [None] * n
        for i, b in enumerate(blocks):
            if not b:
                raise ValueError("empty block")
            for s in b:
                if block_of[s] is not None:
                    raise ValueError(f"state {s} in two blocks")
                block_of[s] = i
        if any(b is None for b in block_of):
            raise ValueError("blocks do not cover all states")
        return cls(tuple(block_of))

    @classmethod
    def discrete(cls, n: int) -> "Partition":
        return cls(tuple(range(n)))

    @classmethod
    def trivial(cls, n: int) -> "Partition":
        return cls((0,) * n)

    @property
    def n_states(self) -> int:
        return len(self.block_of)

    @property
    def blocks(self) -> tuple:
        out: list = [[] for _ in range(len(self))]
        for s, b in enumerate(self.block_of):
            out[b].append(s)
        return tuple(tuple(b) for b in out)

    def __len__(self) -> int:
        return max(self.block_of) + 1 if self.block_of else 0

    def __getitem__(self, s: int) -> int:
        return self.block_of[s]

    def same(self, s: int, t: int) -> bool:
        return self.block_of[s] == self.block_of[t]

    def refines(self, other: "Partition") -> bool:
        """True when every block of ``self`` lies inside a block of ``other``."""
        seen: dict = {}
        for b, c in zip(self.block_of, other.block_of):
            if seen.setdefault(b, c) != c:
                return False
        return True


def block_masses(P: Partition, mu: Distribution) -> tuple:
    """Per-block mass vector of ``mu`` as a sorted tuple of ``(block, mass)``."""
    acc: dict = {}
    for s, p in mu.items():
        b = P.block_of[s]
        acc[b] = acc.get(b, Fraction(0)) + p
    return tuple(sorted(acc.items()))


def lift_equiv(P: Partition, mu: Distribution, nu: Distribution) -> bool:
    """Do ``mu`` and ``nu`` put the same mass on every block of ``P``?"""
    return block_masses(P, mu) == block_masses(P, nu)


def _identity(a):
    return a


def signature(A: ProbAutomaton, P: Partition, s: int, relabel: Callable = _identity) -> frozenset:
    return frozenset((relabel(a), block_masses(P, mu)) for a, mu in A.transitions[s])


def bisimilarity(A: ProbAutomaton, relabel: Callable = _identity, return_rounds: bool = False):
    """Coarsest bisimulation of ``A`` as a :class:`Partition`.

    Blocks are split by signatures (the set of ``(action, block masses)``
    pairs a state offers) until nothing changes.  ``relabel`` is applied to
    every action first, which is how bisimilarity modulo an observation map
    is computed.
    """
    n = A.n_states
    P = Partition.trivial(n)
    rounds = 0
    while True:
        rounds += 1
        keys: dict = {}
        new = []
        for s in range(n):
            k = (P.block_of[s], signature(A, P, s, relabel))
            if k not in keys:
                keys[k] = len(keys)
            new.append(keys[k])
        Q = Partition(tuple(new))
        if len(Q) == len(P):
            return (Q, rounds) if return_rounds else Q
        P = Q


def is_bisimulation(A: ProbAutomaton, P: Partition, relabel: Callable = _identity) -> bool:
    """Check the transfer condition pairwise, in both directions, for every block."""
    for block in P.blocks:
        for s in block:
            for t in block:
                if s == t:
                    continue
                for a, mu in A.transitions[s]:
                    ra = relabel(a)
                    if not any(relabel(b) == ra and lift_equiv(P, mu, nu)
                               for b, nu in A.transitions[t]):
                        return False
    return True


def disjoint_union(automata: Sequence[ProbAutomaton]) -> tuple[ProbAutomaton, list]:
    """Place automata side by side; returns the union and each part's state offset.

    The initial state of the union is that of the first part.
    """
    names, trans, offsets = [], [], []
    off = 0
    for i, A in enumerate(automata):
        offsets.append(off)
        names.extend((i, nm) for nm in A.names)
        for ts in A.transitions:
            trans.append(tuple((a, mu.map(lambda t, o=off: t + o)) for a, mu in ts))
        off += A.n_states
    acts = frozenset().union(*(A.actions for A in automata))
    return ProbAutomaton(tuple(names), tuple(trans), offsets[0], acts), offsets


def bisimilar_states(A: ProbAutomaton, s: int, B: ProbAutomaton, t: int,
                     relabel: Callable = _identity) -> bool:
    U, (oa, ob) = disjoint_union([A, B])
    return bisimilarity(U, relabel).same(s + oa, t + ob)
