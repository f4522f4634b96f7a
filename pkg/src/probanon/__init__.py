"""Exact anonymity analysis of probabilistic automata under restricted schedulers."""

__version__ = "0.1.0"
