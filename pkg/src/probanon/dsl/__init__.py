"""The ``.pam`` model format: parser, printer and DOT export."""

from .dot import render_dot
from .model import (FORMAT_VERSION, BadDistribution, BadFraction, DslError, DslSyntaxError,
                    Hide, ModelBundle, Par, Ref, Restrict, SchedulerDef, UnknownName, elaborate,
                    load_model, parse_model, resolve_scheduler, shipped_model, state_text)
from .printer import format_scheduler, print_automaton, print_model, scheduler_def

__all__ = [
    "FORMAT_VERSION", "BadDistribution", "BadFraction", "DslError", "DslSyntaxError", "Hide",
    "ModelBundle", "Par", "Ref", "Restrict", "SchedulerDef", "UnknownName", "elaborate",
    "format_scheduler", "load_model", "parse_model", "print_automaton", "print_model",
    "render_dot", "resolve_scheduler", "scheduler_def", "shipped_model", "state_text",
]
