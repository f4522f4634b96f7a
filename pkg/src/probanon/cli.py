"""Command-line front end: ``probanon <command> ...``.

Exit codes: 0 anonymous, proved or valid; 1 violation found; 2 inconclusive;
3 input error; 4 a resource guard tripped.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from fractions import Fraction

from . import __version__
from .anonymity import (ANONYMOUS, CHECKED, INCONCLUSIVE, PROVED, VIOLATION,
                        Enumerate, Sample, SearchBudget, check_pa, prove_by_automorphism,
                        observation_event, search_maps, find_interfering, _obs_key, _obs_str)
from .bisim import bisimilarity
from .core import ModelError, pa_validate
from .dsl import (DslError, ModelBundle, load_model, print_automaton, print_model, render_dot,
                  state_text)
from .measure import CyclicUnsupported, ConditionNullEvent, analyse
from .models import BadN, dc_bundle, dc_components, dc_maps
from .sched import (COLLAPSE, DEFAULT_MAX_SCHEDULERS, MODES, CyclicNeedsHorizon,
                    ExplosionGuard, longest_run, unfold)

REPORT_VERSION = 1

EXIT_OK, EXIT_VIOLATION, EXIT_INCONCLUSIVE, EXIT_INPUT, EXIT_GUARD = 0, 1, 2, 3, 4

_STATUS_EXIT = {ANONYMOUS: EXIT_OK, PROVED: EXIT_OK, CHECKED: EXIT_OK,
                VIOLATION: EXIT_VIOLATION, INCONCLUSIVE: EXIT_INCONCLUSIVE}


class InputError(ValueError):
    pass


def generate_dc(n: int, prior=None) -> ModelBundle:
    """The dining cryptographers with ``n`` diners as a model bundle."""
    return dc_bundle(n, prior)


def parse_prior(text: str, n: int) -> list:
    if text == "uniform":
        return [Fraction(1, n + 1)] * (n + 1)
    try:
        ps = [Fraction(p.strip()) for p in text.split(",")]
    except (ValueError, ZeroDivisionError):
        raise InputError(f"bad prior {text!r}: expected comma-separated fractions") from None
    if len(ps) != n + 1:
        raise InputError(f"prior needs {n + 1} entries (one per payer and one for nobody)")
    if any(p < 0 for p in ps) or sum(ps) != 1:
        raise InputError("prior must be non-negative and sum to 1")
    return ps


def dc_size(b: ModelBundle) -> int | None:
    """``n`` if the bundle's components are the generated dining cryptographers, else None."""
    names = list(b.automata)
    n = (len(names) - 1) // 2
    if n < 3 or names != [nm for nm, _ in dc_components(n)]:
        return None
    gen = dict(dc_components(n))
    if any(b.automata[nm] != gen[nm] for nm in names[1:]):
        return None
    return n


# ---------------------------------------------------------------------------
# commands


def _load(args) -> ModelBundle:
    b = load_model(args.file)
    b.system  # elaborate now so errors surface as input errors
    return b


def _need_spec(b: ModelBundle):
    if b.spec is None:
        raise InputError("the model has no spec block")
    return b.spec


def _horizon(args, A) -> int:
    return args.horizon if args.horizon is not None else longest_run(A)


def cmd_validate(args):
    b = _load(args)
    A = b.system
    rep = pa_validate(A)
    problems = list(rep.problems)
    res = {"states": A.n_states, "transitions": A.n_transitions(),
           "terminating": rep.n_terminating, "automata": sorted(b.automata),
           "schedulers": sorted(b.schedulers)}
    if b.spec is not None:
        res["users"] = [str(u) for u in b.spec.users]
        bad = b.spec.overlaps_in(A)
        if bad:
            problems += [f"events of users {i} and {j} share a complete path" for i, j in bad]
    for name in b.schedulers:
        b.scheduler(name)
    res["problems"] = problems
    lines = [f"{args.file}: {A.n_states} states, {res['transitions']} transitions"]
    lines += [f"problem: {p}" for p in problems]
    lines.append("invalid" if problems else "valid")
    return (EXIT_INPUT if problems else EXIT_OK), res, None, lines


def cmd_compose(args):
    b = _load(args)
    A = b.system
    name = b.system_name or next(iter(b.automata))
    text = render_dot(A, name) if args.emit == "dot" else "format 1\n\n" + print_automaton(name, A) + "\n"
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        lines = [f"wrote {args.output}"]
    else:
        lines = [text.rstrip("\n")]
    res = {"states": A.n_states, "emit": args.emit, "output": args.output}
    return EXIT_OK, res, None, lines


def cmd_bisim(args):
    b = _load(args)
    A = b.system
    if args.obs_mode is None:
        P = bisimilarity(A)
    else:
        obs = _need_spec(b).observation_map(args.obs_mode)
        P = bisimilarity(A, obs)
    blocks = [[state_text(A.names[s]) for s in blk] for blk in P.blocks]
    lines = [f"{len(blocks)} classes"] + ["{" + ", ".join(blk) + "}" for blk in blocks]
    return EXIT_OK, {"classes": len(blocks), "blocks": blocks}, None, lines


def cmd_measure(args):
    b = _load(args)
    spec = _need_spec(b)
    if args.master_prior is not None:
        n = dc_size(b)
        if n is None:
            raise InputError("--master-prior applies to generated dining-cryptographers models")
        b = ModelBundle(dict(dc_components(n, parse_prior(args.master_prior, n))), b.system_name,
                        b.system_expr, spec, b.schedulers)
    A = b.system
    xi = b.scheduler(args.scheduler)
    F = unfold(A, xi, args.horizon)
    table = analyse(F)
    view = spec.view_fn
    any_user = table.prob(spec.any_user)
    users = {}
    cond = {}
    observations = sorted({(view(o) if view else o) for o in
                           (tuple(a for a in t if a in spec.observables)
                            for t, p in table.traces() if p > 0)}, key=_obs_key)
    lines = [f"P[A] = {any_user}"]
    for u in spec.users:
        pu = table.prob(spec.events[u])
        users[str(u)] = str(pu)
        lines.append(f"P[user {u}] = {pu}")
    obs_p = {}
    for o in observations:
        ev = observation_event(o, spec, view)
        obs_p[_obs_str(o)] = str(table.prob(ev))
        lines.append(f"P[o = {_obs_str(o)}] = {obs_p[_obs_str(o)]}")
    for u in spec.users:
        pu = table.prob(spec.events[u])
        row = {}
        for o in observations:
            if pu == 0:
                continue
            ev = observation_event(o, spec, view)
            row[_obs_str(o)] = str(table.prob(ev & spec.events[u]) / pu)
            lines.append(f"P[o = {_obs_str(o)} | user {u}] = {row[_obs_str(o)]}")
        cond[str(u)] = row
    res = {"scheduler": args.scheduler, "any_user": str(any_user), "users": users,
           "observations": obs_p, "conditional": cond,
           "halt_mass": str(table.halt_mass), "truncated_mass": str(table.truncated_mass),
           "complete_paths": len(table.paths)}
    cov = f"scheduler {args.scheduler}" + (f", horizon {args.horizon}" if args.horizon else "")
    return EXIT_OK, res, cov, lines


def cmd_check(args):
    b = _load(args)
    spec = _need_spec(b)
    A = b.system
    if args.strategy == "automorphism":
        n = dc_size(b)
        if n is not None:
            maps, notes = dc_maps(A, n), []
        else:
            maps, notes = search_maps(A, spec, args.max_nodes)
        v = prove_by_automorphism(A, spec, maps)
        v.notes = notes + v.notes
    else:
        h = _horizon(args, A)
        if args.strategy == "enumerate":
            strat = Enumerate(h, args.obs_mode, args.max_schedulers)
        else:
            strat = Sample(args.samples, args.seed, h, args.obs_mode)
        v = check_pa(A, spec, strat)
    lines = [v.status, f"coverage: {v.coverage}"] + [f"note: {x}" for x in v.notes]
    if v.witness is not None:
        lines += _witness_lines(v.witness)
    return _STATUS_EXIT[v.status], v.to_dict(), v.coverage, lines


def _witness_lines(w) -> list:
    d = w.to_dict()
    out = [f"witness: user {d['user']}, observation {d['observation']}, "
           f"{d['lhs']} != {d['rhs']} ({d['form']})"]
    if "scheduler" in d:
        out.append(d["scheduler"])
    return out


def cmd_counterexample(args):
    b = _load(args)
    spec = _need_spec(b)
    A = b.system
    h = _horizon(args, A)
    found = find_interfering(A, spec, h, args.max_schedulers, order=args.order, seed=args.seed)
    cov = f"deterministic schedulers seeing the full history, horizon {h}, {args.order} order"
    if found is None:
        return EXIT_OK, {"status": "NONE", "horizon": h}, cov, ["no interfering scheduler", cov]
    xi, w, tried = found
    res = {"status": VIOLATION, "horizon": h, "tried": tried, "witness": w.to_dict()}
    return EXIT_VIOLATION, res, cov, [VIOLATION, f"after {tried} schedulers"] + _witness_lines(w)


def cmd_gen(args):
    prior = parse_prior(args.prior, args.n) if args.prior else None
    text = print_model(generate_dc(args.n, prior))
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text)
        lines = [f"wrote {args.output}"]
    else:
        lines = [text.rstrip("\n")]
    return EXIT_OK, {"model": args.model, "n": args.n, "output": args.output}, None, lines


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="probanon",
                                description="Anonymity checking for probabilistic automata.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print a JSON report")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, with_file=True):
        sp = sub.add_parser(name, parents=[common], help=help_)
        if with_file:
            sp.add_argument("file")
        sp.set_defaults(fn=fn)
        return sp

    add("validate", cmd_validate, "parse and check a model file")

    sp = add("compose", cmd_compose, "print the elaborated system")
    sp.add_argument("--emit", choices=("pam", "dot"), default="pam")
    sp.add_argument("-o", "--output")

    sp = add("bisim", cmd_bisim, "print the bisimilarity classes of the system")
    sp.add_argument("--obs-mode", choices=MODES, default=None,
                    help="relabel with the spec's observation map first")

    sp = add("measure", cmd_measure, "probability tables under a named scheduler")
    sp.add_argument("--scheduler", required=True)
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--master-prior", help="'uniform' or n+1 fractions, last for nobody")

    sp = add("check", cmd_check, "check anonymity over a class of schedulers")
    sp.add_argument("--strategy", choices=("enumerate", "sample", "automorphism"),
                    default="enumerate")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--samples", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--obs-mode", choices=MODES, default=COLLAPSE)
    sp.add_argument("--max-schedulers", type=int, default=DEFAULT_MAX_SCHEDULERS)
    sp.add_argument("--max-nodes", type=int, default=100_000,
                    help="search bound for automorphisms")

    sp = add("counterexample", cmd_counterexample, "search for an interfering scheduler")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--max-schedulers", type=int, default=DEFAULT_MAX_SCHEDULERS)
    sp.add_argument("--order", choices=("deviation", "random"), default="deviation",
                    help="fewest deviations first (exhaustive) or random sampling")
    sp.add_argument("--seed", type=int, default=0)

    sp = add("gen", cmd_gen, "generate a built-in model", with_file=False)
    sp.add_argument("model", choices=("dc",))
    sp.add_argument("--n", type=int, default=3)
    sp.add_argument("--prior", help="replace the master's choice by this prior")
    sp.add_argument("-o", "--output")
    return p


def _inputs(args) -> dict:
    skip = {"fn", "json", "command"}
    return {k: v for k, v in sorted(vars(args).items()) if k not in skip}


def run(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    t0 = time.perf_counter()
    try:
        code, results, coverage, lines = args.fn(args)
    except (ExplosionGuard, SearchBudget) as e:
        print(f"probanon: resource guard: {e}", file=stderr)
        return EXIT_GUARD
    except (DslError, ModelError, InputError, BadN, OSError, CyclicUnsupported,
            CyclicNeedsHorizon, ConditionNullEvent, ValueError) as e:
        print(f"probanon: {e}", file=stderr)
        return EXIT_INPUT
    if args.json:
        report = {
            "report_version": REPORT_VERSION,
            "tool": "probanon",
            "version": __version__,
            "command": args.command,
            "inputs": _inputs(args),
            "results": results,
            "coverage": coverage,
            "exit_code": code,
            "timing": {"seconds": round(time.perf_counter() - t0, 6)},
        }
        stdout.write(json.dumps(report, indent=2, sort_keys=True) + "\n")
    else:
        stdout.write("\n".join(lines) + "\n")
    return code


def main() -> None:
    try:
        code = run()
        sys.stdout.flush()
    except BrokenPipeError:
        # output piped into e.g. head; nothing more to say
        sys.stderr.close()
        code = EXIT_OK
    sys.exit(code)


if __name__ == "__main__":  # pragma: no cover
    main()
