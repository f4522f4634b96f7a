"""Independent reference computations, deliberately naive."""

from __future__ import annotations

from fractions import Fraction
from functools import lru_cache


def set_partitions(items):
    """All set partitions of ``items`` (a list)."""
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1:]
        yield [[first]] + part


def _masses(blocks, mu):
    return tuple(sum((p for t, p in mu.items() if t in b), Fraction(0)) for b in blocks)


def naive_is_bisimulation(A, blocks, relabel=lambda a: a) -> bool:
    """Every move of s is matched by a move of t with equal block masses, both ways."""
    bsets = [frozenset(b) for b in blocks]
    for b in blocks:
        for s in b:
            for t in b:
                for a, mu in A.transitions[s]:
                    want = (relabel(a), _masses(bsets, mu))
                    if not any((relabel(c), _masses(bsets, nu)) == want
                               for c, nu in A.transitions[t]):
                        return False
    return True


def brute_bisimilarity(A, relabel=lambda a: a):
    """The coarsest bisimulation, as a set of frozenset blocks, by trying every partition."""
    found = [p for p in set_partitions(list(A.states)) if naive_is_bisimulation(A, p, relabel)]
    best = min(found, key=len)
    return frozenset(frozenset(b) for b in best), found


def path_table(F):
    """``[(trace, prob)]`` for complete paths and the halted / cut mass, recursively."""
    out = []
    lost = [Fraction(0), Fraction(0)]

    def walk(s, trace, p):
        st = F.step[s]
        if st is None:
            if s in F.cut:
                lost[1] += p
            else:
                out.append((trace, p))
            return
        lost[0] += p * st.halt
        for (a, t), q in st.entries.items():
            walk(t, trace + (a,), p * q)

    walk(F.initial, (), Fraction(1))
    return out, lost[0], lost[1]


def anonymity_oracle(F, users, markers, observables, view=None):
    """Independence check from the definition, using only the path table.

    Returns True if anonymous (or vacuous), otherwise False.
    """
    paths, _, _ = path_table(F)

    def user_of(trace):
        hit = [u for u in users if markers[u] in trace]
        return hit[0] if hit else None

    def obs(trace):
        o = tuple(a for a in trace if a in observables)
        return view(o) if view else o

    pa = sum((p for t, p in paths if user_of(t) is not None), Fraction(0))
    if pa == 0:
        return True
    for u in users:
        pu = sum((p for t, p in paths if user_of(t) == u), Fraction(0)) / pa
        for o in {obs(t) for t, p in paths if p > 0}:
            po = sum((p for t, p in paths if user_of(t) is not None and obs(t) == o),
                     Fraction(0)) / pa
            pou = sum((p for t, p in paths if user_of(t) == u and obs(t) == o),
                      Fraction(0)) / pa
            if pou != po * pu:
                return False
    return True


def reachable_paths(A, horizon):
    """Every path of ``A`` with at most ``horizon`` steps, as ``(start, ((k, a, t), ...))``."""
    out = []

    @lru_cache(maxsize=None)
    def ext(s, h):
        res = [()]
        if h == 0:
            return res
        for k, (a, mu) in enumerate(A.transitions[s]):
            for t in mu:
                for rest in ext(t, h - 1):
                    res.append(((k, a, t),) + rest)
        return res

    for steps in ext(A.initial, horizon):
        out.append(steps)
    return out
