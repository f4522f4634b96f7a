"""Built-in models: dining cryptographers, the hidden-branch example, the race
example, the renamed-copy choice, and random symmetric toys."""

from __future__ import annotations

import random
from fractions import Fraction
from typing import Sequence

from .algebra import channel_halves, compose_all, handshake
from .anonymity import AnonymitySpec, StateMap, component_map
from .core import (TAU, ActionLabel, Distribution, FullyProbAutomaton, ProbAutomaton,
                   as_fraction, label, marker)
from .sched import HALT, MemorylessScheduler, TraceScheduler, priority_scheduler


class BadN(ValueError):
    pass


def _auto(initial, rows: dict) -> ProbAutomaton:
    return ProbAutomaton.build(initial, rows)


# ---------------------------------------------------------------------------
# dining cryptographers


def _prev(i: int, n: int) -> int:
    return (i - 2) % n + 1


def _next(i: int, n: int) -> int:
    return i % n + 1


def dc_master(n: int, prior: Sequence | None = None) -> ProbAutomaton:
    """Branch ``k`` (1..n) tells crypt ``k`` to pay; branch ``n + 1`` is the NSA.

    Without a prior the root chooses the branch nondeterministically by its
    first message.  With a prior (``n + 1`` masses) the root first draws the
    branch with a ``tau`` step.
    """
    rows: dict = {}

    def msg(k, j):
        return f"p{j}!" if k == j else f"n{j}!"

    for k in range(1, n + 2):
        for j in range(1, n):
            rows[f"b{k}_{j}"] = [(msg(k, j + 1), {f"b{k}_{j + 1}" if j + 1 < n else "done": 1})]
    rows["done"] = []
    if prior is None:
        rows["m"] = [(msg(k, 1), {f"b{k}_1": 1}) for k in range(1, n + 2)]
    else:
        prior = [as_fraction(p) for p in prior]
        if len(prior) != n + 1:
            raise BadN(f"prior needs {n + 1} masses")
        rows["m"] = [("tau", {f"h{k}": p for k, p in enumerate(prior, 1) if p})]
        for k in range(1, n + 2):
            rows[f"h{k}"] = [(msg(k, 1), {f"b{k}_1": 1})]
    return _auto("m", rows)


def dc_coin(i: int, n: int) -> ProbAutomaton:
    j = _prev(i, n)
    return _auto("c", {
        "c": [("tau", {"H": Fraction(1, 2), "T": Fraction(1, 2)})],
        "H": [(f"h{i}_{i}!", {"H1": 1})],
        "T": [(f"t{i}_{i}!", {"T1": 1})],
        "H1": [(f"h{i}_{j}!", {"e": 1})],
        "T1": [(f"t{i}_{j}!", {"e": 1})],
        "e": [],
    })


def dc_crypt(i: int, n: int) -> ProbAutomaton:
    """Bit = paid xor own coin xor next coin; announce ``d`` on 1, ``a`` on 0."""
    k = _next(i, n)
    rows = {
        "r": [(f"p{i}?", {"P": 1}), (f"n{i}?", {"N": 1})],
        "y1": [(f"d{i}!", {"e": 1})],
        "y0": [(f"a{i}!", {"e": 1})],
        "e": [],
    }
    for st, bit in (("P", 1), ("N", 0)):
        rows[st] = [(f"h{i}_{i}?", {f"x{bit}": 1}), (f"t{i}_{i}?", {f"x{1 - bit}": 1})]
    for bit in (0, 1):
        rows[f"x{bit}"] = [(f"h{k}_{i}?", {f"y{bit}": 1}), (f"t{k}_{i}?", {f"y{1 - bit}": 1})]
    return _auto("r", rows)


def dc_channels(n: int) -> list:
    chans = [f"p{i}" for i in range(1, n + 1)] + [f"n{i}" for i in range(1, n + 1)]
    for i in range(1, n + 1):
        for j in (i, _prev(i, n)):
            chans += [f"h{i}_{j}", f"t{i}_{j}"]
    return chans


def dc_components(n: int, prior: Sequence | None = None) -> list:
    """Named components in composition order: Master, Coin1..n, Crypt1..n."""
    if n < 3:
        raise BadN("need at least 3 cryptographers")
    comps = [("Master", dc_master(n, prior))]
    comps += [(f"Coin{i}", dc_coin(i, n)) for i in range(1, n + 1)]
    comps += [(f"Crypt{i}", dc_crypt(i, n)) for i in range(1, n + 1)]
    return comps


def dc_system(n: int = 3, prior: Sequence | None = None) -> ProbAutomaton:
    chans = dc_channels(n)
    return compose_all([A for _, A in dc_components(n, prior)], handshake(chans),
                       restrict_to=channel_halves(chans))


def dc_spec(n: int = 3) -> AnonymitySpec:
    obs = [f"a{i}!" for i in range(1, n + 1)] + [f"d{i}!" for i in range(1, n + 1)]
    return AnonymitySpec.with_markers({i: f"tau[p{i}]" for i in range(1, n + 1)}, obs)


def uniform_prior(n: int) -> list:
    return [Fraction(1, n + 1)] * (n + 1)


def dc_order_levels(n: int) -> list:
    """Master first (uniformly over its branches), then coins, then crypts in order."""
    levels = [("uniform", ["tau[p1]", "tau[n1]"])]
    levels += [("first", [f"tau[p{i}]", f"tau[n{i}]"]) for i in range(2, n + 1)]
    levels.append(("first", ["tau"]))
    for i in range(1, n + 1):
        levels.append(("first", [f"tau[{c}{i}_{j}]" for j in (i, _prev(i, n)) for c in "ht"]))
    for i in range(1, n + 1):
        levels.append(("first", [f"a{i}!", f"d{i}!"]))
    return levels


def dc_order_scheduler(A: ProbAutomaton, n: int = 3) -> MemorylessScheduler:
    return priority_scheduler(A, dc_order_levels(n))


def announcement_view(o: tuple) -> tuple:
    """Forget the order of announcements: sort them by cryptographer."""
    return tuple(sorted(o, key=lambda a: (int(a.name[1:]), a.name[0])))


def disagree_count(o: tuple) -> int:
    return sum(1 for a in o if a.name.startswith("d"))


def odd_observations(n: int = 3) -> list:
    """All announcement vectors (sorted by cryptographer) with an odd number of ``d``."""
    out = []
    for bits in range(2 ** n):
        o = tuple(ActionLabel(("d" if bits >> (i - 1) & 1 else "a") + str(i), "output")
                  for i in range(1, n + 1))
        if disagree_count(o) % 2 == 1:
            out.append(o)
    return out


def dc_state_map(A: ProbAutomaton, n: int, i: int, j: int, complete: bool = True) -> StateMap | None:
    """Product of component maps that exchanges payers ``i`` and ``j`` (``i < j``).

    Master: branches ``i`` and ``j`` swap.  Coins ``i+1 .. j`` flip heads and
    tails, so every crypt strictly between keeps its bit and crypts ``i``
    and ``j`` see one flipped coin each.  With ``complete`` the crypts
    ``i .. j`` are mapped too: ``i`` and ``j`` swap their paid/not-paid
    branches and the crypts ``i .. j-1`` swap their intermediate bit.
    Without it the map is the bare master-and-coin product.
    """
    comps = dc_components(n)
    cmaps: list = [None] * len(comps)
    master: dict = {f"h{i}": f"h{j}", f"h{j}": f"h{i}"}
    for st in range(1, n):
        master[f"b{i}_{st}"] = f"b{j}_{st}"
        master[f"b{j}_{st}"] = f"b{i}_{st}"
    cmaps[0] = master
    for c in range(i + 1, j + 1):
        cmaps[c] = {"H": "T", "T": "H", "H1": "T1", "T1": "H1"}
    if complete:
        for k in range(i, j + 1):
            cm = {"P": "N", "N": "P"} if k in (i, j) else {}
            if k != j:
                # exactly one of (paid, own coin) flips, so the first bit does too
                cm.update({"x0": "x1", "x1": "x0"})
            cmaps[n + k] = cm
    return component_map(A, cmaps)


def dc_maps(A: ProbAutomaton, n: int = 3, complete: bool = True) -> dict:
    return {(i, j): dc_state_map(A, n, i, j, complete)
            for i in range(1, n + 1) for j in range(i + 1, n + 1)}


# ---------------------------------------------------------------------------
# hidden branch and race examples


def hidden_branch() -> ProbAutomaton:
    """A fair hidden choice of user, then a free choice between two observables."""
    return _auto("s0", {
        "s0": [("tau", {"s1": Fraction(1, 2), "s2": Fraction(1, 2)})],
        "s1": [("tau[a1]", {"s3": 1})],
        "s2": [("tau[a2]", {"s3": 1})],
        "s3": [("x1", {"s4": 1}), ("x2", {"s4": 1})],
        "s4": [],
    })


def two_user_spec(observables=("x1", "x2")) -> AnonymitySpec:
    return AnonymitySpec.with_markers({1: "tau[a1]", 2: "tau[a2]"}, observables)


def leaking_scheduler(A: ProbAutomaton) -> TraceScheduler:
    """Emit ``x1`` after user 1 and ``x2`` after user 2."""
    return TraceScheduler(A, {
        (TAU, marker("a1")): label("x1"),
        (TAU, marker("a2")): label("x2"),
    }, fallback="first")


def race_components() -> list:
    user = _auto("r", {
        "r": [("tau", {"u1": Fraction(1, 2), "u2": Fraction(1, 2)})],
        "u1": [("tau[a1]", {"w": 1})],
        "u2": [("tau[a2]", {"w": 1})],
        "w": [("c?", {"w1": 1})],
        "w1": [("c?", {"w2": 1})],
        "w2": [],
    })
    s1 = _auto("q", {"q": [("c!", {"q1": 1})], "q1": [("x1", {"q2": 1})], "q2": []})
    s2 = _auto("q", {"q": [("c!", {"q1": 1})], "q1": [("x2", {"q2": 1})], "q2": []})
    return [("User", user), ("Send1", s1), ("Send2", s2)]


def race_system() -> ProbAutomaton:
    return compose_all([A for _, A in race_components()], handshake(["c"]),
                       restrict_to=channel_halves(["c"]))


# ---------------------------------------------------------------------------
# renamed-copy choice


def fpa_to_pa(F: FullyProbAutomaton, prefix: str = "") -> ProbAutomaton:
    """A fully probabilistic automaton as a probabilistic automaton.

    A step whose entries share one label becomes one transition; a step
    mixing labels becomes a ``tau`` draw into intermediate states, each with
    a single labelled move.  Halting mass is not representable and raises.
    """
    names: list = []
    rows: list = []
    index: dict = {}

    def node(nm):
        if nm not in index:
            index[nm] = len(names)
            names.append(nm)
            rows.append(())
        return index[nm]

    for s in F.states:
        node(f"{prefix}{s}")
    for s in F.states:
        st = F.step[s]
        if st is None or not st.entries:
            continue
        if st.halt:
            raise ValueError(f"state {s} halts with mass {st.halt}")
        labels = {a for a, _ in st.entries}
        if len(labels) == 1:
            (a,) = labels
            mu = Distribution([(index[f"{prefix}{t}"], p) for (_, t), p in st.entries.items()])
            rows[s] = ((a, mu),)
            continue
        mids = []
        for k, ((a, t), p) in enumerate(st.entries.items()):
            m = node(f"{prefix}{s}.{k}")
            rows[m] = ((a, Distribution.point(index[f"{prefix}{t}"])),)
            mids.append((m, p))
        rows[s] = ((TAU, Distribution(mids)),)
    return ProbAutomaton(tuple(names), tuple(rows), F.initial)


def rename(A: ProbAutomaton, ren: dict) -> ProbAutomaton:
    ren = {label(k): label(v) for k, v in ren.items()}
    trans = tuple(tuple((ren.get(a, a), mu) for a, mu in ts) for ts in A.transitions)
    return ProbAutomaton(A.names, trans, A.initial)


def choice(left: ProbAutomaton, right: ProbAutomaton) -> ProbAutomaton:
    """A fresh root with one ``tau`` move into each operand."""
    nl = left.n_states
    names = (("root",),) + tuple(("L", x) for x in left.names) + tuple(("R", x) for x in right.names)
    trans = [((TAU, Distribution.point(1 + left.initial)),
              (TAU, Distribution.point(1 + nl + right.initial)))]
    trans += [tuple((a, mu.map(lambda t: t + 1)) for a, mu in ts) for ts in left.transitions]
    trans += [tuple((a, mu.map(lambda t: t + 1 + nl)) for a, mu in ts) for ts in right.transitions]
    return ProbAutomaton(names, tuple(trans), 0)


def renamed_choice(n: int = 3) -> tuple:
    """``(M, spec)``: a choice between fixed-order DC and a copy with renamed announcements."""
    from .sched import unfold

    D = dc_system(n, uniform_prior(n))
    P = fpa_to_pa(unfold(D, dc_order_scheduler(D, n)))
    ren = {}
    for i in range(1, n + 1):
        ren[f"a{i}!"] = f"e{i}!"
        ren[f"d{i}!"] = f"u{i}!"
    M = choice(P, rename(P, ren))
    base = dc_spec(n)
    spec = AnonymitySpec(base.users, base.events, base.observables | {label(v) for v in ren.values()})
    return M, spec


# ---------------------------------------------------------------------------
# random label-symmetric toys


def random_template(rng: random.Random, n_states: int = 4, labels=("x", "y")) -> list:
    """A random acyclic template: ``rows[s]`` is a list of ``(label, {target: p})``.

    State 0 is the entry; targets are always larger states; the last state
    terminates.  Some states offer two transitions (nondeterminism).
    """
    rows = []
    for s in range(n_states):
        later = list(range(s + 1, n_states))
        if not later:
            rows.append([])
            continue
        ts = []
        for _ in range(rng.choice((1, 1, 2))):
            a = rng.choice(labels + ("tau",))
            k = min(len(later), rng.choice((1, 2)))
            tgt = rng.sample(later, k)
            if k == 1:
                mu = {tgt[0]: Fraction(1)}
            else:
                p = Fraction(rng.randint(1, 3), 4)
                mu = {tgt[0]: p, tgt[1]: 1 - p}
            ts.append((a, mu))
        rows.append(ts)
    return rows


def _mutate(rng: random.Random, rows: list, labels) -> list:
    rows = [list(ts) for ts in rows]
    cand = [s for s, ts in enumerate(rows) if ts]
    s = rng.choice(cand)
    k = rng.randrange(len(rows[s]))
    a, mu = rows[s][k]
    others = [b for b in labels if b != a] or [a]
    rows[s][k] = (rng.choice(others), mu)
    return rows


def toy_system(rng: random.Random, users: int = 2, n_states: int = 4, symmetric: bool = True):
    """``(A, spec, maps)``: a fair hidden choice of user, then a copy of one template per user.

    Copies are identical unless ``symmetric`` is false, in which case the
    last copy gets one relabelled transition.  ``maps`` swaps the copies of
    each user pair and is only meaningful for symmetric systems.
    """
    labels = ("x", "y")
    tmpl = random_template(rng, n_states, labels)
    copies = [tmpl] * users
    if not symmetric:
        copies = copies[:-1] + [_mutate(rng, tmpl, labels + ("tau",))]
    rows: dict = {"root": [("tau", {f"u{i}": Fraction(1, users) for i in range(1, users + 1)})]}
    for i, cp in enumerate(copies, 1):
        rows[f"u{i}"] = [(f"tau[m{i}]", {f"c{i}_0": 1})]
        for s, ts in enumerate(cp):
            rows[f"c{i}_{s}"] = [(a, {f"c{i}_{t}": p for t, p in mu.items()}) for a, mu in ts]
    A = _auto("root", rows)
    spec = AnonymitySpec.with_markers({i: f"tau[m{i}]" for i in range(1, users + 1)}, labels)
    maps = {}
    for i in range(1, users + 1):
        for j in range(i + 1, users + 1):
            pairs = {f"u{i}": f"u{j}", f"u{j}": f"u{i}"}
            for s in range(n_states):
                pairs[f"c{i}_{s}"] = f"c{j}_{s}"
                pairs[f"c{j}_{s}"] = f"c{i}_{s}"
            maps[(i, j)] = StateMap.from_names(A, pairs)
    return A, spec, maps


__all__ = [
    "BadN", "HALT", "dc_master", "dc_coin", "dc_crypt", "dc_channels", "dc_components",
    "dc_system", "dc_spec", "uniform_prior", "dc_order_levels", "dc_order_scheduler",
    "announcement_view", "disagree_count", "odd_observations", "dc_state_map", "dc_maps",
    "hidden_branch", "two_user_spec", "leaking_scheduler", "race_components", "race_system",
    "fpa_to_pa", "rename", "choice", "renamed_choice", "random_template", "toy_system",
    "dc_bundle", "hidden_branch_bundle",
]


# ---------------------------------------------------------------------------
# bundles


def dc_bundle(n: int = 3, prior: Sequence | None = None):
    """The dining cryptographers as a model bundle with the fixed-order scheduler."""
    from .dsl import ModelBundle, Par, Ref, Restrict, SchedulerDef

    comps = dc_components(n, prior)
    chans = tuple(label(c) for c in dc_channels(n))
    levels = tuple((mode, tuple(label(a) for a in labs)) for mode, labs in dc_order_levels(n))
    return ModelBundle(
        automata=dict(comps),
        system_name="DC",
        system_expr=Restrict(Par(tuple(Ref(nm) for nm, _ in comps)), chans),
        spec=dc_spec(n),
        schedulers={f"order{''.join(map(str, range(1, n + 1)))}":
                    SchedulerDef(f"order{''.join(map(str, range(1, n + 1)))}", "priority",
                                 None, levels)},
    )


def hidden_branch_bundle():
    from .dsl import ModelBundle, SchedulerDef, scheduler_def

    A = hidden_branch()
    leak = scheduler_def(leaking_scheduler(A), "leak")
    return ModelBundle(automata={"M": A}, spec=two_user_spec(), schedulers={"leak": leak})
