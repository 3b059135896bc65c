"""Tree recursions for the frozen model and BP for the weighted color model.

Colors are indexed r, y, g, b = 0, 1, 2, 3 and variable spins +, -, f are
indexed 0, 1, 2 in weight arrays. Edges of a factor graph are numbered
clause-major (``e = a*k + j``).

Leaf variables of a tree (degree one) are treated as open boundary: their
factor is ``lam_v[ev(sigma, L)] * lam_e(sigma)`` with no validity check,
which is the single-edge form of the variable factor. With the boundary
weight ``lam_v(f) = 0`` this reproduces i.i.d. rigid balanced input.

Arithmetic is written over plain Python numbers, so the same functions run
in floating point or, given ``Fraction`` inputs, exactly.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .factor_graph import FactorGraph, neighborhood
from .cluster_models import R, Y, G, B, clause_factor, variable_factor, ev_edge

__all__ = [
    "TreeError", "ZeroNormalizer", "EtaSet", "MessageSet", "WeightSet",
    "eta_recursion", "eta_measure", "tree_etas", "tree_frozen_marginal",
    "frozen_marginal_bruteforce",
    "bp_variable", "bp_leaf", "bp_clause", "solve_tree_bp", "edge_marginal",
    "vertex_marginal", "gibbs_marginals", "bp_residual", "z_identity_gap",
    "unit_weights", "boundary_weights", "random_weights", "redistribute_weights",
    "coloring_weight", "eta_to_messages",
    "canonical_messages", "coherence_check", "fit_clause_weights",
    "random_factor_tree", "parse_tree_fixture", "emit_tree_fixture", "check_tree",
]


class TreeError(ValueError):
    pass


class ZeroNormalizer(ArithmeticError):
    """All-zero weighted sum: the conditioned ensemble is empty."""


SPIN_INDEX = {1: 0, -1: 1, 0: 2}


def _normalize(vals):
    z = sum(vals)
    if z == 0:
        raise ZeroNormalizer("normalizer vanished")
    return [v / z for v in vals], z


def _prod(it, one=1):
    out = one
    for x in it:
        out = out * x
    return out


# -- trees ---------------------------------------------------------------------

class _Tree:
    def __init__(self, g: FactorGraph, open_leaves=True):
        self.g = g
        self.k = g.k
        self.var = g.var_array.ravel()
        self.sign = g.sign_array.ravel()
        self.E = self.var.size
        self.at_var = [[] for _ in range(g.n)]
        for e in range(self.E):
            self.at_var[self.var[e]].append(e)
        self.open_leaves = open_leaves

    def slots(self, a):
        return range(a * self.k, (a + 1) * self.k)

    def is_leaf(self, v):
        return self.open_leaves and len(self.at_var[v]) == 1


def check_tree(g: FactorGraph) -> None:
    """Raise unless ``g`` is a connected bipartite factor tree."""
    V = g.n + g.m
    if g.m * g.k != V - 1:
        raise TreeError("edge count is not vertices - 1")
    parent = list(range(V))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, j, v, s in g.edges():
        ra, rv = find(g.n + a), find(v - 1)
        if ra == rv:
            raise TreeError("graph has a cycle")
        parent[ra] = rv


def random_factor_tree(k: int, n_clauses: int, seed: int = 0, max_degree: int | None = None) -> FactorGraph:
    """Random factor tree grown by attaching clauses to random existing variables."""
    from ._rng import substream
    rng = substream(seed, "factor_tree")
    nvar = 1
    deg = {1: 0}
    clauses = []
    for _ in range(n_clauses):
        choices = [v for v in range(1, nvar + 1) if max_degree is None or deg[v] < max_degree]
        v = choices[int(rng.integers(len(choices)))]
        pos = int(rng.integers(k))
        lits = []
        for j in range(k):
            s = 1 if rng.random() < 0.5 else -1
            if j == pos:
                lits.append((v, s))
            else:
                nvar += 1
                deg[nvar] = 0
                lits.append((nvar, s))
            deg[lits[-1][0]] += 1
        clauses.append(tuple(lits))
    return FactorGraph(nvar, k, tuple(clauses))


# -- frozen model recursions -----------------------------------------------------

def eta_measure(plus, minus):
    """(R(+), R(-), R(f)) from child clause data.

    ``plus`` / ``minus`` list, for each child clause on the same / opposite
    side, the etas of its other variables.
    """
    one = _one_like(plus, minus)
    Pp = _prod((one - _prod(c, one) for c in plus), one)
    Pm = _prod((one - _prod(c, one) for c in minus), one)
    D = Pp + Pm - Pp * Pm
    return ((one - Pp) * Pm / D, (one - Pm) * Pp / D, Pp * Pm / D)


def _one_like(*groups):
    for gr in groups:
        for c in gr:
            for x in c:
                if isinstance(x, Fraction):
                    return Fraction(1)
    return 1.0


def eta_recursion(plus, minus, leaf: bool = False):
    """eta_{va}: probability that v negates the literal on the outgoing edge."""
    if leaf:
        return 0.5
    return eta_measure(plus, minus)[1]


@dataclass
class EtaSet:
    """Per-edge frozen-model messages on a tree (edge index clause-major).

    ``eta[e]`` is the scalar toward the clause, ``bold[e]`` the measure
    (+, -, f) toward the clause and ``uhat[e]`` the clause-to-variable
    probability of a forcing warning.
    """

    eta: dict
    bold: dict
    uhat: dict


def tree_etas(g: FactorGraph, exact: bool = False) -> EtaSet:
    T = _Tree(g)
    half = Fraction(1, 2) if exact else 0.5
    bold = {}

    def up(e):
        if e in bold:
            return bold[e]
        v = T.var[e]
        a = e // T.k
        others = [f for f in T.at_var[v] if f != e]
        if not others:
            bold[e] = (half, half, 0 * half)
            return bold[e]
        plus, minus = [], []
        for f in others:
            b = f // T.k
            if b == a:
                raise TreeError("variable repeated inside a clause")
            kids = [up(h)[1] for h in T.slots(b) if h != f]
            (plus if T.sign[f] == T.sign[e] else minus).append(kids)
        bold[e] = eta_measure(plus, minus)
        return bold[e]

    for e in range(T.E):
        up(e)
    eta = {e: bold[e][1] for e in bold}
    one = Fraction(1) if exact else 1.0
    uhat = {e: _prod((eta[h] for h in T.slots(e // T.k) if h != e), one) for e in range(T.E)}
    return EtaSet(eta, bold, uhat)


def tree_frozen_marginal(g: FactorGraph, edge: int, exact: bool = False):
    """(bold eta toward the clause, uhat toward the variable) on ``edge``."""
    es = tree_etas(g, exact)
    return es.bold[edge], es.uhat[edge]


def frozen_marginal_bruteforce(g: FactorGraph, edge: int, direction: str = "va", max_leaves: int = 14):
    """Law of the warning across ``edge`` by enumerating rigid boundary inputs.

    ``direction='va'`` returns the law of mdot over (+, -, f); ``'av'``
    returns the law of mhat over (+, f). Exact Fractions, conditioned on
    the completion being well defined.
    """
    T = _Tree(g)
    e0 = edge
    a0 = e0 // T.k
    v0 = T.var[e0]

    # subtree T_yz: everything reachable from y without passing through z
    def leaves_from_var(e, acc):
        v = T.var[e]
        others = [f for f in T.at_var[v] if f != e]
        if not others:
            acc.append(e)
        for f in others:
            for h in T.slots(f // T.k):
                if h != f:
                    leaves_from_var(h, acc)
        return acc

    if direction == "va":
        leaves = leaves_from_var(e0, [])
    elif direction == "av":
        leaves = []
        for h in T.slots(a0):
            if h != e0:
                leaves_from_var(h, leaves)
    else:
        raise ValueError("direction must be 'va' or 'av'")
    if len(leaves) > max_leaves:
        raise TreeError(f"{len(leaves)} boundary leaves exceed the budget {max_leaves}")
    leaf_pos = {e: i for i, e in enumerate(leaves)}

    class Invalid(Exception):
        pass

    def mdot(e, inp):
        if e in leaf_pos:
            return inp[leaf_pos[e]]
        v = T.var[e]
        same = opp = False
        for f in T.at_var[v]:
            if f == e:
                continue
            if mhat(f, inp) == 1:
                if T.sign[f] == T.sign[e]:
                    same = True
                else:
                    opp = True
        if same and opp:
            raise Invalid
        return 1 if same else (-1 if opp else 0)

    def mhat(f, inp):
        return 1 if all(mdot(h, inp) == -1 for h in T.slots(f // T.k) if h != f) else 0

    counts = {}
    valid = 0
    for inp in itertools.product((1, -1), repeat=len(leaves)):
        try:
            w = mdot(e0, inp) if direction == "va" else mhat(e0, inp)
        except Invalid:
            continue
        valid += 1
        counts[w] = counts.get(w, 0) + 1
    if valid == 0:
        raise TreeError("no boundary input has a valid completion")
    if direction == "va":
        return tuple(Fraction(counts.get(s, 0), valid) for s in (1, -1, 0))
    return tuple(Fraction(counts.get(s, 0), valid) for s in (1, 0))


# -- weights -------------------------------------------------------------------------

@dataclass
class WeightSet:
    """gamma: (E, 4) clause-side edge weights with gamma(y) = 1.
    lam_v: (n, 3) variable-spin weights over (+, -, f) with lam_v(+) = 1.
    lam_r: (E,) variable-side edge weight on color r (other colors 1)."""

    gamma: list
    lam_v: list
    lam_r: list

    def copy(self):
        return WeightSet([list(x) for x in self.gamma], [list(x) for x in self.lam_v], list(self.lam_r))


def unit_weights(g: FactorGraph, one=1.0) -> WeightSet:
    E = g.m * g.k
    return WeightSet([[one] * 4 for _ in range(E)], [[one] * 3 for _ in range(g.n)], [one] * E)


def boundary_weights(g: FactorGraph, one=1.0) -> WeightSet:
    """Unit weights except lam_v(f) = 0 at leaf variables."""
    w = unit_weights(g, one)
    T = _Tree(g)
    for v in range(g.n):
        if len(T.at_var[v]) == 1:
            w.lam_v[v][2] = 0 * one
    return w


def random_weights(g: FactorGraph, seed: int = 0, spread: float = 1.0) -> WeightSet:
    """Every free weight log-uniform in [e^-spread, e^spread]."""
    from ._rng import substream
    rng = substream(seed, "weights")
    E = g.m * g.k
    lu = lambda *shape: np.exp(rng.uniform(-spread, spread, size=shape))
    gam = lu(E, 4)
    gam[:, Y] = 1.0
    lv = lu(g.n, 3)
    lv[:, 0] = 1.0
    return WeightSet(gam.tolist(), lv.tolist(), lu(E).tolist())


def redistribute_weights(g: FactorGraph, w: WeightSet) -> WeightSet:
    """Move every clause-side weight onto its variable.

    The result has gamma = 1 and reweights each coloring by one global
    constant, so the Gibbs measure is unchanged.
    """
    T = _Tree(g)
    out = w.copy()
    one = w.gamma[0][Y] if w.gamma else 1.0
    for e in range(T.E):
        out.gamma[e] = [one, one, one, one]
    for v in range(g.n):
        m_minus = one
        m_free = one
        for e in T.at_var[v]:
            gm = w.gamma[e]
            if T.sign[e] == 1:
                m_minus = m_minus * gm[Y] / gm[B]
                m_free = m_free * gm[G] / gm[B]
            else:
                m_minus = m_minus * gm[B] / gm[Y]
                m_free = m_free * gm[G] / gm[Y]
            out.lam_r[e] = w.lam_r[e] * gm[R] / gm[B]
        out.lam_v[v] = [w.lam_v[v][0], w.lam_v[v][1] * m_minus, w.lam_v[v][2] * m_free]
    return out


# -- BP --------------------------------------------------------------------------------

def bp_variable(signs_in, qhat_in, sign_out, lam_v, lam_r_in, lam_r_out):
    """Variable-to-clause message for an internal variable.

    ``signs_in`` / ``qhat_in`` / ``lam_r_in`` describe the other incident
    edges. Returns ``(q, z)``.
    """
    one = lam_v[0] * 0 + 1
    w = [[q[c] * (lr if c == R else one) for c in range(4)] for q, lr in zip(qhat_in, lam_r_in)]
    out = [0 * one] * 4
    for x, xi in ((1, 0), (-1, 1)):
        same = [wi for wi, s in zip(w, signs_in) if s == x]
        opp = [wi for wi, s in zip(w, signs_in) if s != x]
        p_all = _prod((wi[R] + wi[B] for wi in same), one)
        b_all = _prod((wi[B] for wi in same), one)
        y_all = _prod((wi[Y] for wi in opp), one)
        if sign_out == x:
            out[R] += lam_v[xi] * lam_r_out * p_all * y_all
            out[B] += lam_v[xi] * (p_all - b_all) * y_all
        else:
            out[Y] += lam_v[xi] * (p_all - b_all) * y_all
    out[G] += lam_v[2] * _prod((wi[G] for wi in w), one)
    return _normalize(out)


def bp_leaf(sign, lam_v, lam_r):
    """Message out of an open-boundary leaf variable."""
    one = lam_v[0] * 0 + 1
    vals = []
    for c in range(4):
        spin = ev_edge(c, sign)
        vals.append(lam_v[SPIN_INDEX[spin]] * (lam_r if c == R else one))
    return _normalize(vals)


def bp_clause(qdot_in, gamma_in, gamma_out):
    """Clause-to-variable message. Returns ``(q, z)``."""
    one = gamma_out[Y] * 0 + 1
    u = [[q[c] * gm[c] for c in range(4)] for q, gm in zip(qdot_in, gamma_in)]
    ys = [ui[Y] for ui in u]
    cs = [ui[G] + ui[B] for ui in u]
    y_all = _prod(ys, one)
    tot = _prod((ui[Y] + ui[G] + ui[B] for ui in u), one)
    n = len(u)
    excl = [_prod((ys[l] for l in range(n) if l != i), one) for i in range(n)]
    force_else = sum((u[i][R] * excl[i] for i in range(n)), 0 * one)
    one_c = sum((cs[i] * excl[i] for i in range(n)), 0 * one)
    out = [0 * one] * 4
    out[R] = gamma_out[R] * y_all
    out[Y] = gamma_out[Y] * (force_else + tot - y_all - one_c)
    out[G] = gamma_out[G] * (tot - y_all)
    out[B] = gamma_out[B] * (tot - y_all)
    return _normalize(out)


@dataclass
class MessageSet:
    qdot: dict
    qhat: dict
    zdot_e: dict = field(default_factory=dict)
    zhat_e: dict = field(default_factory=dict)
    zbar: dict = field(default_factory=dict)
    zdot_v: dict = field(default_factory=dict)
    zhat_a: dict = field(default_factory=dict)


def solve_tree_bp(g: FactorGraph, w: WeightSet | None = None, open_leaves: bool = True) -> MessageSet:
    """Exact BP fixed point on a factor tree by memoized recursion from the leaves."""
    check_tree(g)
    w = w or unit_weights(g)
    T = _Tree(g, open_leaves)
    qd, qh, zd, zh = {}, {}, {}, {}

    def out_var(e):
        if e in qd:
            return qd[e]
        v = T.var[e]
        if T.is_leaf(v):
            q, z = bp_leaf(T.sign[e], w.lam_v[v], w.lam_r[e])
        else:
            others = [f for f in T.at_var[v] if f != e]
            q, z = bp_variable([T.sign[f] for f in others], [out_clause(f) for f in others],
                               T.sign[e], w.lam_v[v], [w.lam_r[f] for f in others], w.lam_r[e])
        qd[e], zd[e] = q, z
        return q

    def out_clause(e):
        if e in qh:
            return qh[e]
        others = [h for h in T.slots(e // T.k) if h != e]
        q, z = bp_clause([out_var(h) for h in others], [w.gamma[h] for h in others], w.gamma[e])
        qh[e], zh[e] = q, z
        return q

    import sys
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 20 * (T.E + 10)))
    try:
        for e in range(T.E):
            out_var(e)
            out_clause(e)
    finally:
        sys.setrecursionlimit(old)
    ms = MessageSet(qd, qh, zd, zh)
    for e in range(T.E):
        ms.zbar[e] = sum(qd[e][c] * qh[e][c] for c in range(4))
    for v in range(g.n):
        if T.at_var[v]:
            e = T.at_var[v][0]
            ms.zdot_v[v] = zd[e] * ms.zbar[e]
    for a in range(g.m):
        e = a * T.k
        ms.zhat_a[a] = zh[e] * ms.zbar[e]
    return ms


def edge_marginal(qdot, qhat):
    return _normalize([qdot[c] * qhat[c] for c in range(4)])[0]


def _var_patterns(signs, leaf):
    if leaf:
        return [(c,) for c in range(4)]
    return [p for p in _signed_var_patterns(signs)]


def _signed_var_patterns(signs):
    n = len(signs)
    yield tuple([G] * n)
    for x in (1, -1):
        same = [i for i in range(n) if signs[i] == x]
        for choice in itertools.product((R, B), repeat=len(same)):
            if R not in choice:
                continue
            p = [Y] * n
            for i, c in zip(same, choice):
                p[i] = c
            yield tuple(p)


def _var_weight(p, signs, lam_v, lam_r, leaf):
    one = lam_v[0] * 0 + 1
    if leaf:
        spin = ev_edge(p[0], signs[0])
    else:
        ok, spin = variable_factor(p, signs)
        if not ok:
            return 0 * one
    out = lam_v[SPIN_INDEX[spin]]
    for c, lr in zip(p, lam_r):
        if c == R:
            out = out * lr
    return out


def _clause_patterns(k):
    return [p for p in itertools.product(range(4), repeat=k) if clause_factor(p)]


def vertex_marginal(g: FactorGraph, w: WeightSet, ms: MessageSet, vertex, open_leaves: bool = True):
    """Marginal over the incident half-edges of ``vertex`` = ('v', v) or ('a', a).

    Returns a dict mapping color tuples (in incidence order) to probabilities.
    """
    T = _Tree(g, open_leaves)
    kind, x = vertex
    vals = {}
    if kind == "v":
        es = T.at_var[x]
        signs = [T.sign[e] for e in es]
        leaf = T.is_leaf(x)
        for p in _var_patterns(signs, leaf):
            wt = _var_weight(p, signs, w.lam_v[x], [w.lam_r[e] for e in es], leaf)
            for c, e in zip(p, es):
                wt = wt * ms.qhat[e][c]
            vals[p] = wt
    else:
        es = list(T.slots(x))
        for p in _clause_patterns(T.k):
            wt = 1
            for c, e in zip(p, es):
                wt = wt * w.gamma[e][c] * ms.qdot[e][c]
            vals[p] = wt
    z = sum(vals.values())
    if z == 0:
        raise ZeroNormalizer("vertex marginal has no mass")
    return {p: v / z for p, v in vals.items() if v != 0}


def coloring_weight(g: FactorGraph, w: WeightSet, sigma, open_leaves: bool = True):
    """Total weight of a full coloring (0 when invalid)."""
    T = _Tree(g, open_leaves)
    out = 1.0
    for a in range(g.m):
        p = [sigma[e] for e in T.slots(a)]
        if not clause_factor(p):
            return 0.0
        for e in T.slots(a):
            out *= w.gamma[e][sigma[e]]
    for v in range(g.n):
        es = T.at_var[v]
        p = [sigma[e] for e in es]
        out *= _var_weight(p, [T.sign[e] for e in es], w.lam_v[v], [w.lam_r[e] for e in es], T.is_leaf(v))
        if out == 0:
            return 0.0
    return out


def gibbs_marginals(g: FactorGraph, w: WeightSet, open_leaves: bool = True, max_rows: int = 4_000_000):
    """Brute-force Gibbs measure on valid colorings.

    Every valid coloring is materialized by a breadth-first join of the
    local pattern tables (each new vertex shares exactly one edge with the
    part already placed, since the graph is a tree). Returns
    ``(edge_marginals, vertex_marginals, count, Z)``; vertex marginals are
    dicts keyed by color tuples as in :func:`vertex_marginal`.
    """
    check_tree(g)
    T = _Tree(g, open_leaves)
    E = T.E
    # BFS order over vertices starting from variable 0
    order, seen = [("v", 0)], {("v", 0)}
    i = 0
    while i < len(order):
        kind, x = order[i]
        i += 1
        nbrs = [("a", e // T.k) for e in T.at_var[x]] if kind == "v" else [("v", T.var[e]) for e in T.slots(x)]
        for y in nbrs:
            if y not in seen:
                seen.add(y)
                order.append(y)
    rows = np.full((1, E), -1, dtype=np.int8)
    wts = np.ones(1)
    for kind, x in order:
        if kind == "v":
            es = T.at_var[x]
            signs = [T.sign[e] for e in es]
            leaf = T.is_leaf(x)
            pats = [(p, _var_weight(p, signs, w.lam_v[x], [w.lam_r[e] for e in es], leaf))
                    for p in _var_patterns(signs, leaf)]
        else:
            es = list(T.slots(x))
            pats = []
            for p in _clause_patterns(T.k):
                wt = 1.0
                for c, e in zip(p, es):
                    wt *= w.gamma[e][c]
                pats.append((p, wt))
        pats = [(p, float(wt)) for p, wt in pats if wt != 0]
        P = np.array([p for p, _ in pats], dtype=np.int8).reshape(len(pats), len(es))
        PW = np.array([wt for _, wt in pats])
        assigned = [t for t, e in enumerate(es) if rows[0, e] >= 0]
        if not assigned:
            if rows.shape[0] * len(P) > max_rows:
                raise MemoryError(f"enumeration exceeded {max_rows} partial colorings")
            new_rows = np.repeat(rows, len(P), axis=0)
            new_rows[:, es] = np.tile(P, (rows.shape[0], 1))
            new_w = np.repeat(wts, len(P)) * np.tile(PW, rows.shape[0])
        else:
            t = assigned[0]
            key_rows = rows[:, es[t]]
            size = sum(int((key_rows == c).sum()) * int((P[:, t] == c).sum()) for c in range(4))
            if size > max_rows:
                raise MemoryError(f"enumeration exceeded {max_rows} partial colorings")
            parts_r, parts_w = [], []
            for c in range(4):
                ri = np.nonzero(key_rows == c)[0]
                pi = np.nonzero(P[:, t] == c)[0]
                if ri.size == 0 or pi.size == 0:
                    continue
                nr = np.repeat(rows[ri], pi.size, axis=0)
                nr[:, es] = np.tile(P[pi], (ri.size, 1))
                parts_r.append(nr)
                parts_w.append(np.repeat(wts[ri], pi.size) * np.tile(PW[pi], ri.size))
            if not parts_r:
                raise ZeroNormalizer("no valid coloring")
            new_rows = np.concatenate(parts_r)
            new_w = np.concatenate(parts_w)
        if new_rows.shape[0] > max_rows:
            raise MemoryError(f"enumeration exceeded {max_rows} partial colorings")
        rows, wts = new_rows, new_w
    Z = wts.sum()
    if Z == 0:
        raise ZeroNormalizer("no valid coloring")
    p = wts / Z
    edge = {e: np.bincount(rows[:, e], weights=p, minlength=4).tolist() for e in range(E)}
    verts = {}
    for v in range(g.n):
        verts[("v", v)] = _tuple_marginal(rows, p, T.at_var[v])
    for a in range(g.m):
        verts[("a", a)] = _tuple_marginal(rows, p, list(T.slots(a)))
    return edge, verts, rows.shape[0], Z


def _tuple_marginal(rows, p, es):
    if not es:
        return {(): 1.0}
    code = np.zeros(rows.shape[0], dtype=np.int64)
    for e in es:
        code = code * 4 + rows[:, e]
    if len(es) <= 10:
        tot = np.bincount(code, weights=p, minlength=4 ** len(es))
        u = np.nonzero(tot)[0]
        vals = tot[u]
    else:
        u, inv = np.unique(code, return_inverse=True)
        vals = np.bincount(inv, weights=p)
    out = {}
    for c, val in zip(u.tolist(), vals.tolist()):
        digits = []
        for _ in es:
            digits.append(c % 4)
            c //= 4
        out[tuple(reversed(digits))] = val
    return out


def bp_residual(g: FactorGraph, w: WeightSet, ms: MessageSet, open_leaves: bool = True) -> float:
    """Largest absolute violation of the BP equations by ``ms``."""
    T = _Tree(g, open_leaves)
    worst = 0.0
    for e in range(T.E):
        v = T.var[e]
        if T.is_leaf(v):
            q, _ = bp_leaf(T.sign[e], w.lam_v[v], w.lam_r[e])
        else:
            others = [f for f in T.at_var[v] if f != e]
            q, _ = bp_variable([T.sign[f] for f in others], [ms.qhat[f] for f in others], T.sign[e],
                               w.lam_v[v], [w.lam_r[f] for f in others], w.lam_r[e])
        worst = max(worst, max(abs(float(x - y)) for x, y in zip(q, ms.qdot[e])))
        others = [h for h in T.slots(e // T.k) if h != e]
        q, _ = bp_clause([ms.qdot[h] for h in others], [w.gamma[h] for h in others], w.gamma[e])
        worst = max(worst, max(abs(float(x - y)) for x, y in zip(q, ms.qhat[e])))
    return worst


def z_identity_gap(g: FactorGraph, ms: MessageSet) -> float:
    """max |zbar - zdot_v/zdot_va| and |zbar - zhat_a/zhat_av| over edges."""
    k = g.k
    var = g.var_array.ravel()
    gap = 0.0
    for e, zb in ms.zbar.items():
        v, a = var[e], e // k
        gap = max(gap, abs(zb - ms.zdot_v[v] / ms.zdot_e[e]), abs(zb - ms.zhat_a[a] / ms.zhat_e[e]))
    return gap


# -- correspondence --------------------------------------------------------------------

def eta_to_messages(es: EtaSet) -> MessageSet:
    """Color messages from frozen-model etas via the correspondence table."""
    qd, qh = {}, {}
    for e, (bp, bm, bf) in es.bold.items():
        one = bp * 0 + 1
        z = 2 * one - bm
        qd[e] = [(one - bm) / z, bm / z, bf / z, bp / z]
    for e, u in es.uhat.items():
        one = u * 0 + 1
        z = 3 * one - 2 * u
        qh[e] = [u / z, (one - u) / z, (one - u) / z, (one - u) / z]
    return MessageSet(qd, qh)


# -- canonical messages and coherence ------------------------------------------------------

def _ball_eta(ball_edges, k):
    """Frozen recursion restricted to an edge set (a tree). Returns a function
    ``eta(v, a)`` for the message from variable v toward clause a."""
    vadj, cadj = {}, {}
    for a, j, v, s in ball_edges:
        vadj.setdefault(v, []).append((a, j, s))
        cadj.setdefault(a, []).append((j, v, s))
    memo = {}

    def bold(v, a, j, s):
        key = (v, a, j)
        if key in memo:
            return memo[key]
        others = [(b, i, t) for b, i, t in vadj[v] if (b, i) != (a, j)]
        if not others:
            memo[key] = (0.5, 0.5, 0.0)
            return memo[key]
        plus, minus = [], []
        for b, i, t in others:
            kids = [bold(u, b, jj, ss)[1] for jj, u, ss in cadj[b] if jj != i]
            (plus if t == s else minus).append(kids)
        memo[key] = eta_measure(plus, minus)
        return memo[key]

    return bold, cadj


def canonical_messages(g: FactorGraph, edge: int, r: float):
    """Canonical (qdot, qhat, pi) on ``edge`` computed from the r-ball of its variable."""
    k = g.k
    a0, j0 = divmod(edge, k)
    v0, s0 = g.clauses[a0][j0]
    ball = neighborhood(g, v0, r)
    if ball.cyclic:
        raise TreeError("ball around the edge's variable is cyclic")
    if a0 not in ball.clause_dist:
        raise TreeError("radius too small to contain the clause")
    full = [e for e in ball.edges]
    cl_edges = [e for e in full if e[0] == a0]
    if len(cl_edges) < k:
        raise TreeError("radius must reach every variable of the clause (use r >= 1)")
    bold, cadj = _ball_eta(full, k)
    b_eta = bold(v0, a0, j0, s0)
    u = 1.0
    for jj, uu, ss in cadj[a0]:
        if jj != j0:
            u *= bold(uu, a0, jj, ss)[1]
    es = EtaSet({0: b_eta[1]}, {0: b_eta}, {0: u})
    ms = eta_to_messages(es)
    qd, qh = ms.qdot[0], ms.qhat[0]
    return qd, qh, edge_marginal(qd, qh)


@dataclass
class Coherence:
    ok: bool
    red_slack: list
    cyan_slack: list
    marginals: list

    def __bool__(self):
        return self.ok


def coherence_check(g: FactorGraph, clause: int, r: float) -> Coherence:
    k = g.k
    pis = [canonical_messages(g, clause * k + j, r)[2] for j in range(k)]
    red, cyan = [], []
    for j in range(k):
        others = [pis[i] for i in range(k) if i != j]
        red.append(pis[j][Y] - sum(p[R] for p in others))
        cyan.append(sum(p[G] + p[B] for p in others) - (pis[j][G] + pis[j][B]))
    ok = min(red) >= 0 and min(cyan) >= 0
    return Coherence(ok, red, cyan, pis)


def fit_clause_weights(g: FactorGraph, targets: dict, tol: float = 1e-8, max_iter: int = 20000):
    """Clause-side weights gamma whose Gibbs edge marginals match ``targets``.

    Iterative proportional fitting on the edge marginals, with BP on the tree
    supplying the current marginals. Returns ``(weights, max_error, iters)``.
    """
    w = unit_weights(g)
    err = math.inf
    for it in range(1, max_iter + 1):
        ms = solve_tree_bp(g, w)
        err = 0.0
        for e, pi in targets.items():
            nu = edge_marginal(ms.qdot[e], ms.qhat[e])
            err = max(err, max(abs(a - b) for a, b in zip(nu, pi)))
        if err < tol:
            return w, err, it
        # update one clause at a time so that each step matches that clause exactly
        for a in range(g.m):
            ms = solve_tree_bp(g, w)
            for e in range(a * g.k, (a + 1) * g.k):
                if e not in targets:
                    continue
                nu = edge_marginal(ms.qdot[e], ms.qhat[e])
                gm = [w.gamma[e][c] * (targets[e][c] / nu[c] if nu[c] > 0 else 1.0) for c in range(4)]
                w.gamma[e] = [x / gm[Y] for x in gm]
    return w, err, max_iter


# -- fixture format -------------------------------------------------------------------------

def parse_tree_fixture(text: str):
    """Parse the line-oriented tree format; returns ``(graph, weights)``.

    Lines (ids 1-based, '#' starts a comment)::

        k 3
        var 1
        clause 1 parent 1 pos 2 sign +
        var 2 parent 1 pos 1 sign -
        gamma 1:1 r=1.5 g=0.7 b=1.1      # clause:pos, 1-based
        lamr 1:1 2.0
        lamv 2 minus=0.5 free=0.0
    """
    k = None
    cl_slots = {}
    nvar = 0
    wlines = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        head = tok[0]
        try:
            if head == "k":
                k = int(tok[1])
            elif head == "var":
                v = int(tok[1])
                nvar = max(nvar, v)
                if len(tok) > 2:
                    kv = dict(zip(tok[2::2], tok[3::2]))
                    a, pos = int(kv["parent"]), int(kv["pos"])
                    cl_slots.setdefault(a, {})[pos] = (v, 1 if kv["sign"] == "+" else -1)
            elif head == "clause":
                a = int(tok[1])
                kv = dict(zip(tok[2::2], tok[3::2]))
                v, pos = int(kv["parent"]), int(kv["pos"])
                cl_slots.setdefault(a, {})[pos] = (v, 1 if kv["sign"] == "+" else -1)
            elif head in ("gamma", "lamr", "lamv"):
                wlines.append((lineno, tok))
            else:
                raise TreeError(f"line {lineno}: unknown record {head!r}")
        except (KeyError, IndexError, ValueError) as exc:
            raise TreeError(f"line {lineno}: malformed record ({exc})") from None
    if k is None:
        raise TreeError("missing 'k' record")
    clauses = []
    for a in sorted(cl_slots):
        slots = cl_slots[a]
        if sorted(slots) != list(range(1, k + 1)):
            raise TreeError(f"clause {a} does not fill positions 1..{k}")
        clauses.append(tuple(slots[j] for j in range(1, k + 1)))
    if sorted(cl_slots) != list(range(1, len(clauses) + 1)):
        raise TreeError("clause ids must be 1..m")
    g = FactorGraph(nvar, k, tuple(clauses))
    check_tree(g)
    w = unit_weights(g)
    for lineno, tok in wlines:
        try:
            if tok[0] in ("gamma", "lamr"):
                a, pos = (int(x) for x in tok[1].split(":"))
                e = (a - 1) * k + (pos - 1)
                if tok[0] == "lamr":
                    w.lam_r[e] = float(tok[2])
                else:
                    for kv in tok[2:]:
                        name, val = kv.split("=")
                        w.gamma[e]["rygb".index(name)] = float(val)
            else:
                v = int(tok[1]) - 1
                for kv in tok[2:]:
                    name, val = kv.split("=")
                    w.lam_v[v][{"minus": 1, "free": 2}[name]] = float(val)
        except (KeyError, IndexError, ValueError) as exc:
            raise TreeError(f"line {lineno}: malformed weight ({exc})") from None
    return g, w


def emit_tree_fixture(g: FactorGraph, w: WeightSet | None = None) -> str:
    """Inverse of :func:`parse_tree_fixture` (root = variable 1)."""
    check_tree(g)
    T = _Tree(g)
    lines = [f"k {g.k}", "var 1"]
    seen_v, seen_a = {0}, set()
    stack = [0]
    while stack:
        v = stack.pop()
        for e in T.at_var[v]:
            a = e // g.k
            if a in seen_a:
                continue
            seen_a.add(a)
            lines.append(f"clause {a + 1} parent {v + 1} pos {e % g.k + 1} sign {'+' if T.sign[e] > 0 else '-'}")
            for h in T.slots(a):
                u = T.var[h]
                if u in seen_v:
                    continue
                seen_v.add(u)
                lines.append(f"var {u + 1} parent {a + 1} pos {h % g.k + 1} sign {'+' if T.sign[h] > 0 else '-'}")
                stack.append(u)
    if w is not None:
        for e in range(T.E):
            a, j = divmod(e, g.k)
            gm = w.gamma[e]
            if any(gm[c] != 1 for c in (R, G, B)):
                lines.append(f"gamma {a + 1}:{j + 1} r={gm[R]!r} g={gm[G]!r} b={gm[B]!r}")
            if w.lam_r[e] != 1:
                lines.append(f"lamr {a + 1}:{j + 1} {w.lam_r[e]!r}")
        for v in range(g.n):
            lv = w.lam_v[v]
            if lv[1] != 1 or lv[2] != 1:
                lines.append(f"lamv {v + 1} minus={lv[1]!r} free={lv[2]!r}")
    return "\n".join(lines) + "\n"
