import random
from fractions import Fraction

import pytest

from probanon.anonymity import ANONYMOUS, check_automorphism, check_fpa
from probanon.core import TAU, label, pa_validate
from probanon.measure import Occurs, OtraceEquals, analyse, cond_prob, otrace
from probanon.models import (BadN, announcement_view, choice, dc_components, dc_maps,
                             dc_order_scheduler, dc_spec, dc_system, disagree_count, fpa_to_pa,
                             odd_observations, race_system, rename, toy_system, uniform_prior)
from probanon.sched import longest_run, synthesize_admissible, unfold

from gen import random_fpa

F = Fraction


@pytest.fixture(scope="module")
def dc_table():
    D = dc_system(3, uniform_prior(3))
    return analyse(unfold(D, dc_order_scheduler(D)))


def test_sizes():
    assert dc_system(3).n_states == 1538
    assert dc_system(3).n_transitions() == 3573
    assert dc_system(3, uniform_prior(3)).n_states == 1646
    assert len(dc_components(4)) == 9


def test_bad_n():
    with pytest.raises(BadN):
        dc_components(2)
    with pytest.raises(BadN):
        dc_system(3, [F(1, 2), F(1, 2)])


def test_valid():
    assert pa_validate(dc_system(3)).ok
    assert pa_validate(race_system()).ok


def test_parity(dc_table):
    spec = dc_spec(3)
    for trace, p in dc_table.traces():
        o = otrace(trace, spec.observables)
        assert len(o) == 3
        paid = any(spec.events[u].holds(trace) for u in spec.users)
        assert disagree_count(o) % 2 == (1 if paid else 0)


def test_each_payer_sees_uniform_odd_vectors(dc_table):
    spec = dc_spec(3)
    D = dc_system(3, uniform_prior(3))
    G = unfold(D, dc_order_scheduler(D))
    odd = odd_observations(3)
    assert len(odd) == 4
    for u in spec.users:
        assert dc_table.prob(spec.events[u]) == F(1, 4)
        for o in odd:
            e = OtraceEquals(o, spec.observables, announcement_view)
            assert cond_prob(G, e, spec.events[u], dc_table) == F(1, 4)
    assert check_fpa(G, spec, announcement_view, dc_table).status == ANONYMOUS


def test_announcement_view():
    o = (label("d3!"), label("a1!"), label("a2!"))
    assert announcement_view(o) == (label("a1!"), label("a2!"), label("d3!"))


def test_dc_maps_are_not_automorphisms():
    # free interleaving breaks the product maps; see the notes in the README
    D = dc_system(3)
    spec = dc_spec(3)
    maps = dc_maps(D, 3)
    assert set(maps) == {(1, 2), (1, 3), (2, 3)}
    assert not any(m is not None and check_automorphism(D, m, spec.observables)
                   for m in maps.values())


def test_fpa_to_pa_preserves_traces():
    rng = random.Random(4)
    for _ in range(30):
        G = random_fpa(rng, 8)
        if any(G.step[s] is not None and G.step[s].halt for s in G.states):
            with pytest.raises(ValueError):
                fpa_to_pa(G)
            continue
        P = fpa_to_pa(G)
        H = unfold(P, synthesize_admissible(P), longest_run(P))

        def visible(tab):
            out = {}
            for t, p in tab.traces():
                # fan-out states add plain tau steps
                k = tuple(a for a in t if a != TAU)
                out[k] = out.get(k, 0) + p
            return out

        assert visible(analyse(H)) == visible(analyse(G))


def test_rename_and_choice():
    A = race_system()
    B = rename(A, {"x1": "y1"})
    assert label("y1") in B.actions and label("x1") not in B.actions
    C = choice(A, B)
    assert C.n_states == 1 + 2 * A.n_states
    assert len(C.transitions[0]) == 2


def test_toys():
    A, spec, maps = toy_system(random.Random(0), users=3)
    assert spec.users == (1, 2, 3)
    assert set(maps) == {(1, 2), (1, 3), (2, 3)}
    assert all(check_automorphism(A, m, spec.observables) for m in maps.values())


def test_race_depth():
    assert longest_run(race_system()) == 6
    assert Occurs("tau[a1]").holds((label("tau[a1]"),))
