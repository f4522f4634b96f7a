"""Graphviz DOT rendering of automata."""

from __future__ import annotations

from fractions import Fraction

from ..core import FullyProbAutomaton, ProbAutomaton
from .model import state_text


def _q(text) -> str:
    return '"' + str(text).replace("\\", "\\\\").replace('"', '\\"') + '"'


def _frac(p) -> str:
    p = Fraction(p)
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


def render_dot(A, name: str = "M") -> str:
    """A deterministic DOT digraph.

    A transition with a single target is one labelled edge.  Otherwise the
    action edge ends in a point node that fans out with one edge per
    target, labelled with its probability.
    """
    lines = [f"digraph {_q(name)} {{", "  node [shape=circle];",
             "  __start [shape=point, style=invis];"]
    if isinstance(A, FullyProbAutomaton):
        labels = [str(s) for s in A.states]
    else:
        labels = [state_text(nm) for nm in A.names]
    for s in A.states:
        extra = ", shape=doublecircle" if isinstance(A, FullyProbAutomaton) and s in A.cut else ""
        lines.append(f"  s{s} [label={_q(labels[s])}{extra}];")
    lines.append(f"  __start -> s{A.initial};")
    if isinstance(A, ProbAutomaton):
        for s in A.states:
            for k, (a, mu) in enumerate(A.transitions[s]):
                if len(mu) == 1:
                    (t,) = mu.support
                    lines.append(f"  s{s} -> s{t} [label={_q(a)}];")
                    continue
                pt = f"p{s}_{k}"
                lines.append(f"  {pt} [shape=point];")
                lines.append(f"  s{s} -> {pt} [label={_q(a)}, arrowhead=none];")
                for t, p in mu.items():
                    lines.append(f"  {pt} -> s{t} [label={_q(_frac(p))}];")
    else:
        for s in A.states:
            st = A.step[s]
            if st is None or not st.entries:
                continue
            items = list(st.entries.items())
            if len(items) == 1 and not st.halt:
                (a, t), _ = items[0]
                lines.append(f"  s{s} -> s{t} [label={_q(a)}];")
                continue
            pt = f"p{s}"
            lines.append(f"  {pt} [shape=point];")
            lines.append(f"  s{s} -> {pt} [arrowhead=none];")
            for (a, t), p in items:
                lines.append(f"  {pt} -> s{t} [label={_q(f'{a} {_frac(p)}')}];")
            if st.halt:
                lines.append(f"  {pt} -> __halt{s} [label={_q(f'halt {_frac(st.halt)}')}];")
                lines.append(f"  __halt{s} [shape=plaintext, label=\"halt\"];")
    lines.append("}")
    return "\n".join(lines) + "\n"
