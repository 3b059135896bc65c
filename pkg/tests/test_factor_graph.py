import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksat1rsb.factor_graph import (DimacsError, FactorGraph, drop_tautologies, emit_dimacs,
                                   generate_instance, neighborhood, parse_dimacs, sample_pgw_tree)


def test_generate_is_deterministic_and_poisson():
    a = generate_instance(50, 2.0, 3, seed=4)
    b = generate_instance(50, 2.0, 3, seed=4)
    assert a == b
    ms = [generate_instance(100, 3.0, 3, seed=s).m for s in range(200)]
    assert abs(np.mean(ms) - 300) < 5


def test_fixed_m_mode():
    g = generate_instance(5, None, 4, mode="fixed_m", m=7, seed=1)
    assert g.m == 7 and g.k == 4
    with pytest.raises(ValueError):
        generate_instance(5, 1.0, 3, mode="poisson", m=3)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 30), st.floats(0.01, 5), st.integers(2, 5), st.integers(0, 10 ** 6))
def test_dimacs_round_trip(n, alpha, k, seed):
    g = generate_instance(n, alpha, k, seed=seed)
    h = parse_dimacs(emit_dimacs(g), k)
    assert h.clauses == g.clauses and h.n == g.n
    assert h.meta["seed"] == seed


@pytest.mark.parametrize("text", [
    "1 2 0\n",
    "p cnf 2 1\n1 3 0\n",
    "p cnf 2 2\n1 2 0\n",
    "p cnf 2 1\n1 2\n",
    "p cnf 2 1\n1 x 0\n",
    "p dnf 2 1\n1 2 0\n",
])
def test_dimacs_errors(text):
    with pytest.raises(DimacsError):
        parse_dimacs(text)


def test_dimacs_width_mismatch():
    with pytest.raises(DimacsError, match="width"):
        parse_dimacs("p cnf 3 2\n1 2 0\n1 2 3 0\n")


def test_bad_literal_rejected():
    with pytest.raises(ValueError):
        FactorGraph(2, 2, (((1, 1), (3, 1)),))


def test_drop_tautologies():
    g = FactorGraph(2, 2, (((1, 1), (1, -1)), ((1, 1), (2, 1))))
    assert drop_tautologies(g).clauses == (((1, 1), (2, 1)),)


def test_neighborhood_radius_and_cycles():
    path = FactorGraph(3, 2, (((1, 1), (2, 1)), ((2, 1), (3, -1))))
    b = neighborhood(path, 1, 1.0)
    assert b.variables == [1, 2] and b.clauses == [0] and not b.cyclic
    assert neighborhood(path, 1, 0.5).variables == [1]
    loop = FactorGraph(2, 2, (((1, 1), (2, 1)), ((1, -1), (2, 1))))
    assert neighborhood(loop, 1, 2.0).cyclic


def test_pgw_tree_depth():
    t = sample_pgw_tree(1.0, 3, 2.0, seed=3)
    assert max(t.var_depth.values()) <= 2.0
    assert all(d <= 1.5 for d in t.clause_depth)
    assert not neighborhood(t.graph, t.root, 10).cyclic
    with pytest.raises(ValueError):
        sample_pgw_tree(1.0, 3, 0.3)
