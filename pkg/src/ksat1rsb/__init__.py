"""Cavity-method toolkit for random k-SAT: population dynamics for the
frozen-variable recursion, the 1-RSB free energy and its zero, cluster
enumeration oracles, exact tree BP for the color model, and preprocessing
utilities."""

__version__ = "0.1.0"
