import random
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from probanon.core import (INPUT, INTERNAL, OUTPUT, TAU, ActionLabel, Distribution,
                           FullyProbAutomaton, ModelError, NegativeMass, NotAPath, Path,
                           ProbAutomaton, SubDistribution, SumNotOne, check_path, dist_new,
                           label, marker, pa_validate, path_trace)
from probanon.models import dc_system, hidden_branch

from gen import random_fpa, random_masses

F = Fraction


class TestLabels:
    def test_parse_kinds(self):
        assert label("c?") == ActionLabel("c", INPUT)
        assert label("c!") == ActionLabel("c", OUTPUT)
        assert label("tau") == TAU
        assert label("tau[p1]") == marker("p1")
        assert label("tau[p1]").is_marker

    def test_identity_is_name_kind_tag(self):
        assert label("c?") != label("c!")
        assert marker("a") != marker("b")
        assert marker("a") != TAU

    def test_roundtrip_text(self):
        for text in ("x", "c?", "c!", "tau", "tau[h1_2]"):
            assert str(label(text)) == text

    def test_bad(self):
        with pytest.raises(ModelError):
            label("1x")
        with pytest.raises(ModelError):
            ActionLabel("x", "weird")
        with pytest.raises(ModelError):
            ActionLabel("x", OUTPUT, "t")


class TestDistribution:
    def test_point(self):
        d = dist_new({"s": 1})
        assert d.support == {"s"} and d["s"] == 1

    def test_fair_coin(self):
        d = dist_new({"h": F(1, 2), "t": F(1, 2)})
        assert d == Distribution.uniform(["t", "h"])

    def test_sum_not_one(self):
        with pytest.raises(SumNotOne):
            dist_new({"a": F(1, 3), "b": F(1, 3)})

    def test_negative(self):
        with pytest.raises(NegativeMass):
            dist_new({"a": F(3, 2), "b": F(-1, 2)})

    def test_empty(self):
        with pytest.raises(SumNotOne):
            dist_new({})

    def test_floats_rejected(self):
        with pytest.raises(ModelError):
            dist_new({"a": 0.5, "b": 0.5})

    def test_zero_entries_dropped(self):
        d = dist_new({"a": 1, "b": 0})
        assert d.support == {"a"} and len(d) == 1

    def test_lowest_terms(self):
        d = dist_new({"a": F(2, 4), "b": F(3, 6)})
        assert all(p.denominator == 2 for _, p in d.items())

    @given(st.integers(1, 8), st.integers(0, 10_000))
    def test_random_sum_exactly_one(self, k, seed):
        ps = random_masses(random.Random(seed), k)
        d = Distribution(dict(enumerate(ps)))
        assert sum(p for _, p in d.items()) == 1

    def test_map_merges(self):
        d = Distribution({1: F(1, 4), 2: F(1, 4), 3: F(1, 2)})
        assert d.map(lambda x: x % 2) == Distribution({1: F(3, 4), 0: F(1, 4)})


class TestSubDistribution:
    def test_halt(self):
        s = SubDistribution({"a": F(1, 3)}, F(2, 3))
        assert s.halt == F(2, 3)
        assert SubDistribution.halting().halt == 1

    def test_must_sum(self):
        with pytest.raises(SumNotOne):
            SubDistribution({"a": F(1, 3)}, F(1, 3))
        with pytest.raises(NegativeMass):
            SubDistribution({"a": F(4, 3)}, F(-1, 3))


class TestValidate:
    def test_single_state(self):
        A = ProbAutomaton(("s",), ((),))
        rep = pa_validate(A)
        assert rep.ok and rep.n_terminating == 1

    def test_dangling(self):
        A = ProbAutomaton(("s",), (((label("a"), Distribution.point(5)),),))
        rep = pa_validate(A)
        assert not rep.ok
        assert any("dangling target" in p for p in rep.problems)

    def test_dc_valid(self):
        assert pa_validate(dc_system(3)).ok


class TestPaths:
    def test_empty(self):
        assert path_trace(Path(0)) == ()

    def test_hidden_branch_trace(self):
        M = hidden_branch()
        pi = Path(0).extend(TAU, 0, 1).extend(marker("a1"), 0, 3)
        check_path(M, pi)
        assert path_trace(pi) == (TAU, marker("a1"))
        assert len(path_trace(pi)) == len(pi) == 2

    def test_not_a_path(self):
        M = hidden_branch()
        with pytest.raises(NotAPath):
            check_path(M, Path(0).extend(TAU, 0, 3))

    def test_fpa_path_steps_positive(self):
        rng = random.Random(3)
        for _ in range(50):
            G = random_fpa(rng, 10)
            pi = Path(G.initial)
            while G.step[pi.last] is not None and G.step[pi.last].entries:
                (a, t), p = rng.choice(list(G.step[pi.last].entries.items()))
                assert p > 0
                pi = pi.extend(a, None, t)
                check_path(G, pi)

    @given(st.lists(st.integers(0, 3), max_size=6), st.integers(0, 6))
    def test_prefix_order_and_trace_concat(self, choices, cut):
        steps = tuple((label("abcd"[c]), None, i + 1) for i, c in enumerate(choices))
        pi = Path(0, steps)
        pre = pi.prefix(min(cut, len(pi)))
        assert pre <= pi
        assert (pre < pi) == (len(pre) < len(pi))
        suffix = steps[len(pre):]
        assert pi.trace() == pre.trace() + tuple(a for a, _, _ in suffix)
        assert not (Path(1, steps) <= pi) or not steps

    def test_fpa_build(self):
        G = FullyProbAutomaton.build("r", {"r": {("h", "H"): F(1, 2), ("t", "T"): F(1, 2)}})
        assert G.n_states == 3
        assert G.is_terminating(G.names.index("H"))
        assert {a for a, _, _ in G.successors(0)} == {label("h"), label("t")}


def test_internal_only_tagged_by_hiding():
    assert marker("c").kind == INTERNAL
    assert not TAU.is_marker
