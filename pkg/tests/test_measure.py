import random
from collections import Counter
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from probanon.core import FullyProbAutomaton, NotAPath, Path, label
from probanon.measure import (All, And, ConditionNullEvent, CyclicUnsupported, Not, Occurs, Or,
                              OtraceEquals, analyse, complete_paths, cond_prob, event_prob,
                              otrace, path_prob)
from probanon.models import hidden_branch, leaking_scheduler
from probanon.sched import unfold

from gen import OBS, random_fpa
from oracles import path_table

F = Fraction


def random_prefix(rng, G):
    pi = Path(G.initial)
    for _ in range(rng.randint(0, 6)):
        st_ = G.step[pi.last]
        if st_ is None or not st_.entries:
            break
        (a, t), _ = rng.choice(list(st_.entries.items()))
        pi = pi.extend(a, None, t)
    return pi


def random_event(rng, depth=2):
    if depth == 0 or rng.random() < 0.4:
        if rng.random() < 0.5:
            return Occurs(rng.choice(OBS))
        o = tuple(label(rng.choice(OBS)) for _ in range(rng.randint(0, 2)))
        return OtraceEquals(o, OBS)
    op = rng.randrange(3)
    if op == 0:
        return random_event(rng, depth - 1) & random_event(rng, depth - 1)
    if op == 1:
        return random_event(rng, depth - 1) | random_event(rng, depth - 1)
    return ~random_event(rng, depth - 1)


COIN = FullyProbAutomaton.build("r", {"r": {("h", "H"): F(1, 2), ("t", "T"): F(1, 2)}})


class TestBasics:
    def test_single_state(self):
        G = FullyProbAutomaton(("s",), (None,))
        (pi, p), = complete_paths(G)
        assert len(pi) == 0 and p == 1
        assert path_prob(G, Path(0)) == 1

    def test_fair_coin(self):
        tab = analyse(COIN)
        assert sorted((str(t[0]), p) for t, p in tab.traces()) == [("h", F(1, 2)), ("t", F(1, 2))]
        assert event_prob(COIN, Occurs("h")).value == F(1, 2)
        assert event_prob(COIN, All()).value == 1

    def test_path_prob_rejects_non_paths(self):
        with pytest.raises(NotAPath):
            path_prob(COIN, Path(1))
        with pytest.raises(NotAPath):
            path_prob(COIN, Path(0).extend(label("h"), None, 2))

    def test_halt_mass(self):
        from probanon.core import SubDistribution
        G = FullyProbAutomaton(("r", "a"), (SubDistribution({(label("x"), 1): F(1, 3)}, F(2, 3)),
                                            None))
        rep = event_prob(G, All())
        assert rep.value == F(1, 3) and rep.halt_mass == F(2, 3)
        assert rep.complete_path_count == 1

    def test_cyclic(self):
        from probanon.core import SubDistribution
        G = FullyProbAutomaton(("r",), (SubDistribution({(label("x"), 0): 1}),))
        with pytest.raises(CyclicUnsupported):
            analyse(G)

    def test_cond_null(self):
        with pytest.raises(ConditionNullEvent):
            cond_prob(COIN, All(), Occurs("zz"))

    def test_otrace(self):
        tr = (label("tau"), label("x"), label("tau[a]"), label("y"))
        assert otrace(tr, {label("x"), label("y")}) == (label("x"), label("y"))

    def test_leak_conditionals(self):
        M = hidden_branch()
        G = unfold(M, leaking_scheduler(M))
        x1 = OtraceEquals((label("x1"),), ("x1", "x2"))
        assert cond_prob(G, x1, Occurs("tau[a1]")) == 1
        assert cond_prob(G, x1, Occurs("tau[a2]")) == 0

    def test_event_strings(self):
        e = (Occurs("x") & ~Occurs("y")) | All()
        assert str(e) == "((occurs(x) & !occurs(y)) | all)"


@given(st.integers(0, 10_000))
def test_matches_recursive_oracle(seed):
    G = random_fpa(random.Random(seed))
    tab = analyse(G)
    paths, halt, cut = path_table(G)
    mine, theirs = Counter(), Counter()
    for t, p in tab.traces():
        mine[t] += p
    for t, p in paths:
        theirs[t] += p
    assert mine == theirs
    assert (tab.halt_mass, tab.truncated_mass) == (halt, cut)
    assert sum(mine.values()) + halt + cut == 1


@given(st.integers(0, 10_000))
def test_event_algebra(seed):
    rng = random.Random(seed)
    G = random_fpa(rng)
    tab = analyse(G)
    total = tab.prob(All())
    for _ in range(5):
        E, H = random_event(rng), random_event(rng)
        pe, ph = tab.prob(E), tab.prob(H)
        assert 0 <= pe <= total
        # complement and additivity
        assert pe + tab.prob(Not(E)) == total
        assert tab.prob(Or(E, H)) == pe + ph - tab.prob(And(E, H))
        assert tab.prob(And(E, Not(H))) + tab.prob(And(E, H)) == pe
        # monotonicity
        assert tab.prob(And(E, H)) <= min(pe, ph) <= max(pe, ph) <= tab.prob(Or(E, H))
        if ph:
            assert cond_prob(G, E, H, tab) == tab.prob(And(E, H)) / ph


@given(st.integers(0, 10_000))
def test_disjoint_observations_partition(seed):
    G = random_fpa(random.Random(seed))
    tab = analyse(G)
    obs = {otrace(t, map(label, OBS)) for t, _ in tab.traces()}
    assert sum(tab.prob(OtraceEquals(o, OBS)) for o in obs) == tab.prob(All())


def test_cone_consistency_1000_prefixes():
    rng = random.Random(2024)
    checked = 0
    while checked < 1000:
        G = random_fpa(rng)
        for _ in range(10):
            pi = random_prefix(rng, G)
            ext = analyse(G, pi)
            # the cone of a prefix is split among its complete, halted and cut extensions
            assert sum(p for _, p in ext.paths) + ext.halt_mass + ext.truncated_mass \
                == path_prob(G, pi)
            assert all(pi <= rho for rho, _ in ext.paths)
            checked += 1
