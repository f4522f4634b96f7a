import random
from fractions import Fraction

from hypothesis import given, strategies as st

from probanon.algebra import (CommFunction, channel_halves, compose, compose_all, handshake,
                              hide, reachable, restrict)
from probanon.core import Distribution, ProbAutomaton, label, marker
from probanon.models import dc_components, dc_channels, dc_system, race_components, race_system

from gen import random_pa

F = Fraction


def same_up_to(A, B, f) -> bool:
    """Is ``f`` (state ids of A -> state ids of B) an isomorphism?"""
    if A.n_states != B.n_states or sorted(f(s) for s in A.states) != list(B.states):
        return False
    if f(A.initial) != B.initial:
        return False
    for s in A.states:
        mine = sorted(((a.sort_key(), tuple(mu.map(f).items())) for a, mu in A.transitions[s]))
        theirs = sorted(((a.sort_key(), tuple(mu.items())) for a, mu in B.transitions[f(s)]))
        if mine != theirs:
            return False
    return True


def by_names(A, B):
    index = {nm: s for s, nm in enumerate(B.names)}
    return lambda s: index[A.names[s]]


def auto(init, rows):
    return ProbAutomaton.build(init, rows)


SEND = auto("p", {"p": [("c!", {"p1": 1})], "p1": []})
RECV = auto("q", {"q": [("c?", {"q1": 1})], "q1": []})
STOP = auto("z", {"z": []})


def test_commutative_handshake():
    g = handshake(["c"])
    assert g(label("c?"), label("c!")) == marker("c")
    assert g(label("c!"), label("c?")) == marker("c")
    assert g(label("c?"), label("c?")) is None


def test_compose_with_stop_is_a_copy():
    A = random_pa(random.Random(1), 4)
    P = compose(A, STOP)
    assert same_up_to(A, P, lambda s: s)
    assert P.names[0] == ("q0", "z")


def test_handshake_pair():
    P = compose(SEND, RECV, handshake(["c"]))
    moves = {str(a) for a, _ in P.transitions[P.initial]}
    assert moves == {"c!", "c?", "tau[c]"}
    sync = [mu for a, mu in P.transitions[P.initial] if a == marker("c")]
    assert sync == [Distribution.point(P.names.index(("p1", "q1")))]


def test_synchronous_product_distribution():
    A = auto("a", {"a": [("c!", {"h": F(1, 2), "t": F(1, 2)})]})
    B = auto("b", {"b": [("c?", {"x": F(1, 3), "y": F(2, 3)})]})
    P = compose(A, B, handshake(["c"]))
    (mu,) = [mu for a, mu in P.transitions[P.initial] if a == marker("c")]
    assert mu[P.names.index(("h", "y"))] == F(1, 3)
    assert sum(p for _, p in mu.items()) == 1


def test_restrict():
    P = compose(SEND, RECV, handshake(["c"]))
    assert restrict(P, []) == P
    R = reachable(restrict(P, channel_halves(["c"])))
    assert R.n_states == 2
    assert [str(a) for a, _ in R.transitions[0]] == ["tau[c]"]
    everything = restrict(P, P.actions)
    assert all(not ts for ts in everything.transitions)


def test_hide():
    A = auto("s", {"s": [("p1", {"t": 1}), ("x", {"t": 1})], "t": []})
    assert hide(A, []) == A
    H = hide(A, [label("p1")])
    assert [str(a) for a, _ in H.transitions[0]] == ["tau[p1]", "x"]
    assert H.n_states == A.n_states and H.n_transitions() == A.n_transitions()
    assert [mu for _, mu in H.transitions[0]] == [mu for _, mu in A.transitions[0]]


def test_reachable():
    A = auto("s", {"s": [("a", {"t": 1})], "t": [], "lost": [("a", {"s": 1})]})
    R = reachable(A)
    assert R.n_states == 2 and "lost" not in R.names
    assert reachable(R) == R


@given(st.integers(0, 10_000))
def test_compose_commutes(seed):
    rng = random.Random(seed)
    A = random_pa(rng, 3, labels=("a", "c!"))
    B = random_pa(rng, 3, labels=("b", "c?"))
    g = handshake(["c"])
    AB, BA = compose(A, B, g), compose(B, A, g)
    index = {nm: s for s, nm in enumerate(BA.names)}
    assert same_up_to(AB, BA, lambda s: index[AB.names[s][1:] + AB.names[s][:1]])


def test_race_example_matches_hand_built():
    R = race_system()
    rows = {
        ("r", "q", "q"): [("tau", {("u1", "q", "q"): F(1, 2), ("u2", "q", "q"): F(1, 2)})],
        ("u1", "q", "q"): [("tau[a1]", {("w", "q", "q"): 1})],
        ("u2", "q", "q"): [("tau[a2]", {("w", "q", "q"): 1})],
        ("w", "q", "q"): [("tau[c]", {("w1", "q1", "q"): 1}), ("tau[c]", {("w1", "q", "q1"): 1})],
        ("w1", "q1", "q"): [("x1", {("w1", "q2", "q"): 1}), ("tau[c]", {("w2", "q1", "q1"): 1})],
        ("w1", "q", "q1"): [("x2", {("w1", "q", "q2"): 1}), ("tau[c]", {("w2", "q1", "q1"): 1})],
        ("w1", "q2", "q"): [("tau[c]", {("w2", "q2", "q1"): 1})],
        ("w1", "q", "q2"): [("tau[c]", {("w2", "q1", "q2"): 1})],
        ("w2", "q1", "q1"): [("x1", {("w2", "q2", "q1"): 1}), ("x2", {("w2", "q1", "q2"): 1})],
        ("w2", "q2", "q1"): [("x2", {("w2", "q2", "q2"): 1})],
        ("w2", "q1", "q2"): [("x1", {("w2", "q2", "q2"): 1})],
        ("w2", "q2", "q2"): [],
    }
    expected = auto(("r", "q", "q"), rows)
    assert same_up_to(R, expected, by_names(R, expected))


def test_compose_all_equals_full_pipeline():
    comps = [A for _, A in race_components()]
    g = handshake(["c"])
    full = compose(compose(comps[0], comps[1], g), comps[2], g)
    slow = reachable(restrict(full, channel_halves(["c"])))
    fast = race_system()
    assert same_up_to(fast, slow, by_names(fast, slow))


def test_dc_observable_alphabet():
    chans = dc_channels(3)
    D = compose_all([A for _, A in dc_components(3)], handshake(chans),
                    restrict_to=channel_halves(chans))
    assert len(dc_components(3)) == 7
    visible = {a for a in D.actions if not a.internal}
    assert visible == {label(f"{k}{i}!") for k in "ad" for i in (1, 2, 3)}
    # hiding the remaining (already internal) labels changes nothing
    assert hide(D, [a for a in D.actions if a.internal]) == D
    assert D == dc_system(3)


def test_comm_function_keys():
    g = CommFunction({("a", "b"): "c"}) | handshake(["d"])
    assert g(label("b"), label("a")) == label("c")
    assert g(label("d!"), label("d?")) == marker("d")
