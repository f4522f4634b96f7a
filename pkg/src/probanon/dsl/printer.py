"""Canonical ``.pam`` text for bundles, automata and schedulers."""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping

from ..core import ProbAutomaton, SubDistribution
from ..sched import (HALT, MemorylessScheduler, PathScheduler, Scheduler, TabularScheduler,
                     TraceScheduler)
from .model import (FORMAT_VERSION, Hide, ModelBundle, Par, Ref, Restrict, SchedulerDef,
                    state_text)


def _frac(p) -> str:
    p = Fraction(p)
    return str(p.numerator) if p.denominator == 1 else f"{p.numerator}/{p.denominator}"


def _labels(labels) -> str:
    return "{" + ", ".join(map(str, labels)) + "}"


def _trace(trace) -> str:
    return "[" + ", ".join(map(str, trace)) + "]"


def print_automaton(name: str, A: ProbAutomaton) -> str:
    out = [f"automaton {name} {{"]
    names = [state_text(nm) for nm in A.names]
    out.append("  states " + ", ".join(names) + ";")
    out.append(f"  init {names[A.initial]};")
    for s in A.states:
        for a, mu in A.transitions[s]:
            body = ", ".join(f"{names[t]}: {_frac(p)}" for t, p in mu.items())
            out.append(f"  {names[s]} -{a}-> {{ {body} }};")
    out.append("}")
    return "\n".join(out)


def print_expr(e) -> str:
    if isinstance(e, Ref):
        return e.name
    if isinstance(e, Par):
        text = " || ".join(print_expr(p) if not isinstance(p, Par) else f"({print_expr(p)})"
                           for p in e.parts)
        return text + (f" sync {_labels(e.sync)}" if e.sync else "")
    if isinstance(e, Restrict):
        return f"restrict({print_expr(e.expr)}, {_labels(e.labels)})"
    if isinstance(e, Hide):
        return f"hide({print_expr(e.expr)}, {_labels(e.labels)})"
    raise TypeError(e)


def _choice(c) -> str:
    if c is HALT:
        return "halt"
    if isinstance(c, tuple):
        return "{" + ", ".join(f"{k}: {_frac(p)}" for k, p in c) + "}"
    return str(c)


def print_scheduler_def(d: SchedulerDef) -> str:
    head = f"scheduler {d.name} {d.kind}" + (f" {d.mode}" if d.mode else "") + " {"
    out = [head]
    if d.option:
        out.append(f"  {'default' if d.kind == 'memoryless' else 'fallback'} {d.option};")
    for key, c in d.rows:
        if d.kind == "priority":
            out.append(f"  {key} {_labels(c)};")
        elif d.kind == "memoryless":
            out.append(f"  {key} -> {_choice(c)};")
        elif d.kind == "history":
            out.append(f"  {_trace(key)} -> {_choice(c)};")
        elif d.kind == "table":
            hist, st = key
            out.append(f"  {_trace(hist)} @ {st} -> {_choice(c)};")
        else:
            start, steps = key
            body = ", ".join([start] + [f"{a} > {t}" for a, t in steps])
            out.append(f"  path [{body}] -> {_choice(c)};")
    out.append("}")
    return "\n".join(out)


def print_model(b: ModelBundle) -> str:
    parts = [f"format {FORMAT_VERSION}"]
    for name, A in b.automata.items():
        parts.append(print_automaton(name, A))
    if b.system_expr is not None:
        parts.append(f"system {b.system_name} = {print_expr(b.system_expr)};")
    if b.spec is not None:
        sp = b.spec
        lines = ["spec {", "  users {" + ", ".join(map(str, sp.users)) + "};"]
        for u in sp.users:
            lines.append(f"  marker {u} = {sp.events[u].label};")
        lines.append(f"  observe {_labels(sorted(sp.observables))};")
        if sp.view != "ordered":
            lines.append(f"  view {sp.view};")
        lines.append("}")
        parts.append("\n".join(lines))
    for d in b.schedulers.values():
        parts.append(print_scheduler_def(d))
    return "\n\n".join(parts) + "\n"


def _row_choice(row) -> object:
    """A decision row (index, HALT, mapping or SubDistribution) as a written choice."""
    if row is HALT:
        return HALT
    if isinstance(row, SubDistribution):
        if not row.entries:
            return HALT
        if row.halt == 0 and len(row.entries) == 1:
            return next(iter(row.entries))
        return tuple(sorted(row.entries.items()))
    if isinstance(row, Mapping):
        return tuple(sorted(row.items()))
    return row


def scheduler_def(xi: Scheduler, name: str = "witness") -> SchedulerDef:
    """The written form of a scheduler over its automaton."""
    A = xi.A
    if isinstance(xi, MemorylessScheduler):
        rows = tuple((state_text(A.names[s]), _row_choice(r)) for s, r in enumerate(xi.rows)
                     if A.transitions[s])
        return SchedulerDef(name, "memoryless", None, rows, "halt")
    if isinstance(xi, TraceScheduler):
        rows = []
        for trace, v in xi.table.items():
            if isinstance(v, Mapping):
                v = tuple(v.items())
            rows.append((tuple(trace), v))
        return SchedulerDef(name, "history", None, tuple(rows), xi.fallback)
    if isinstance(xi, TabularScheduler):
        fr = xi.frame
        rows = []
        for key, v in sorted(xi.table.items(), key=lambda kv: (len(kv[0].history),
                                                                [a.sort_key() for a in kv[0].history],
                                                                kv[0].cls)):
            rep = fr.partition.blocks[key.cls][0]
            rows.append(((key.history, state_text(A.names[rep])), _row_choice(v)))
        return SchedulerDef(name, "table", fr.obs.mode, tuple(rows))
    if isinstance(xi, PathScheduler):
        rows = []
        for pi, v in sorted(xi.table.items(), key=lambda kv: (len(kv[0]), str(kv[0]))):
            steps = tuple((a, state_text(A.names[t])) for a, _, t in pi.steps)
            rows.append(((state_text(A.names[pi.start]), steps), _row_choice(v)))
        return SchedulerDef(name, "paths", None, tuple(rows))
    raise TypeError(f"cannot print a {type(xi).__name__}")


def format_scheduler(xi: Scheduler, name: str = "witness") -> str:
    return print_scheduler_def(scheduler_def(xi, name))
