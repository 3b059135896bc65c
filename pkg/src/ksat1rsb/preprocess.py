"""Bootstrap percolation, iterated ball removal and simple types.

Neighbouring variables are hypergraph neighbours: distinct variables sharing
a clause. The degree of a clause in a partially deleted graph is its number
of surviving edges.
"""
from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .factor_graph import FactorGraph, neighborhood
from .tree_bp import TreeError

__all__ = [
    "bsp", "bsp_prime", "BspPrimeResult", "PartialGraph", "trigger_set",
    "simple_type", "SimpleType", "random_labels", "improper_variables",
    "spanning_forest_bound_check", "write_removal_log", "REMOVAL_FIELDS",
]


def _neighbours(g: FactorGraph):
    nb = [set() for _ in range(g.n + 1)]
    for c in g.clauses:
        vs = {v for v, _ in c}
        for v in vs:
            nb[v] |= vs - {v}
    return nb


def bsp(D0, g: FactorGraph) -> set:
    """Least superset of D0 closed under adding variables with two neighbours inside."""
    nb = _neighbours(g)
    D = set(int(v) for v in D0)
    for v in D:
        if not 1 <= v <= g.n:
            raise ValueError(f"variable {v} not in graph")
    hits = [0] * (g.n + 1)
    queue = deque(D)
    while queue:
        u = queue.popleft()
        for w in nb[u]:
            if w in D:
                continue
            hits[w] += 1
            if hits[w] >= 2:
                D.add(w)
                queue.append(w)
    return D


# -- iterated removal ------------------------------------------------------------

class PartialGraph:
    """A factor graph with some variables and clauses deleted."""

    def __init__(self, g: FactorGraph):
        self.g = g
        self.alive_v = np.ones(g.n + 1, dtype=bool)
        self.alive_v[0] = False
        self.alive_c = np.ones(g.m, dtype=bool)
        self.vadj = [[] for _ in range(g.n + 1)]
        for a, j, v, s in g.edges():
            self.vadj[v].append(a)

    def edges(self):
        for a, j, v, s in self.g.edges():
            if self.alive_c[a] and self.alive_v[v]:
                yield a, j, v, s

    def degree(self, a) -> int:
        return sum(1 for v, _ in self.g.clauses[a] if self.alive_v[v])

    def ball(self, v, radius):
        """(variables, clauses) within ``radius`` of v in the current graph."""
        h = int(math.floor(2 * radius + 1e-9))
        vd, cd = {v: 0}, {}
        q = deque([(v, True)])
        while q:
            x, is_var = q.popleft()
            d = vd[x] if is_var else cd[x]
            if d == h:
                continue
            if is_var:
                for a in self.vadj[x]:
                    if self.alive_c[a] and a not in cd:
                        cd[a] = d + 1
                        q.append((a, False))
            else:
                for u, _ in self.g.clauses[x]:
                    if self.alive_v[u] and u not in vd:
                        vd[u] = d + 1
                        q.append((u, True))
        return set(vd), set(cd)


def trigger_set(pg: PartialGraph, radius: float) -> set:
    """Variables whose ``radius``-ball holds two clauses of degree k-1 or one
    of degree at most k-2 (clauses with no surviving edge are ignored)."""
    k = pg.g.k
    light, heavy = {}, {}
    for a in np.nonzero(pg.alive_c)[0].tolist():
        d = pg.degree(a)
        if d == 0 or d == k:
            continue
        # every variable within radius of v sees a within radius, and vice versa
        starts = [u for u, _ in pg.g.clauses[a] if pg.alive_v[u]]
        h = int(math.floor(2 * radius + 1e-9))
        if h < 1:
            continue
        seen = set()
        for u in starts:
            for w in pg.ball(u, (h - 1) / 2)[0]:
                seen.add(w)
        target = light if d == k - 1 else heavy
        for w in seen:
            target[w] = target.get(w, 0) + 1
    out = {w for w, c in light.items() if c >= 2}
    out |= set(heavy)
    return out


REMOVAL_FIELDS = ["round", "trigger_variable", "ball_size", "clauses_removed"]


@dataclass
class BspPrimeResult:
    removed: set
    graph: PartialGraph
    log: list = field(default_factory=list)
    rounds: int = 0


def bsp_prime(A, g: FactorGraph, R: float, trigger_radius: float | None = None,
              max_rounds: int | None = None) -> BspPrimeResult:
    """Delete B_R(v) for v in A, then repeatedly for every triggered variable.

    Balls are taken in the current graph and a round removes the union of
    its balls. ``trigger_radius`` defaults to 3R/10 (rounded down to the
    half-integer grid).
    """
    if R <= 0 or abs(2 * R - round(2 * R)) > 1e-12:
        raise ValueError("R must be a positive multiple of 1/2")
    rho = 0.3 * R if trigger_radius is None else trigger_radius
    pg = PartialGraph(g)
    removed = set()
    log = []
    current = sorted(set(int(v) for v in A))
    t = 0
    while current:
        kill_v, kill_c = set(), set()
        for v in current:
            bv, bc = pg.ball(v, R)
            log.append({"round": t, "trigger_variable": v, "ball_size": len(bv), "clauses_removed": len(bc)})
            kill_v |= bv
            kill_c |= bc
        for v in kill_v:
            pg.alive_v[v] = False
        for a in kill_c:
            pg.alive_c[a] = False
        removed |= kill_v
        t += 1
        if max_rounds is not None and t >= max_rounds:
            break
        current = sorted(v for v in trigger_set(pg, rho) if pg.alive_v[v])
    return BspPrimeResult(removed, pg, log, t)


def write_removal_log(log, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, REMOVAL_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in log:
            w.writerow(row)


# -- simple types -------------------------------------------------------------------

def random_labels(n: int, seed: int = 0, l_max: int | None = None) -> np.ndarray:
    """Labels for variables 1..n (index 0 unused), uniform on [0, l_max).

    The default range is 2^64, so the chance of any collision among n labels
    is about n^2 / 2^65.
    """
    rng = substream(seed, "labels")
    if l_max is None:
        lab = rng.integers(0, 2 ** 64, size=n + 1, dtype=np.uint64)
    else:
        lab = rng.integers(0, l_max, size=n + 1)
    lab[0] = 0
    return lab


@dataclass(frozen=True)
class SimpleType:
    code: str | None
    acyclic: bool
    proper: bool


def simple_type(g: FactorGraph, edge, R: float, labels=None) -> SimpleType:
    """Canonical code of the R-ball around the edge's variable, rooted at the edge.

    ``edge`` is ``(a, j)`` or the clause-major index. The code records edge
    signs, slot positions and (when given) variable labels; two edge-rooted
    balls get equal codes exactly when they are isomorphic.
    """
    a0, j0 = divmod(edge, g.k) if isinstance(edge, (int, np.integer)) else edge
    v0, s0 = g.clauses[a0][j0]
    ball = neighborhood(g, v0, math.floor(2 * R + 1e-9) / 2)
    if ball.cyclic:
        return SimpleType(None, False, False)
    keep = set(ball.edges)
    lab = (lambda v: int(labels[v])) if labels is not None else (lambda v: 0)
    proper = True
    if labels is not None:
        ls = [lab(v) for v in ball.var_dist]
        proper = len(set(ls)) == len(ls)
    by_clause = {}
    by_var = {}
    for a, j, v, s in keep:
        by_clause.setdefault(a, []).append((j, v, s))
        by_var.setdefault(v, []).append((a, j, s))

    def var_code(v, from_edge):
        kids = sorted(clause_code(a, j) for a, j, s in by_var.get(v, []) if (a, j) != from_edge)
        return "v%d[%s]" % (lab(v), ",".join(kids))

    def clause_code(a, j_in):
        slots = sorted(by_clause[a])
        s_in = next(s for j, v, s in slots if j == j_in)
        parts = ["%d%s:%s" % (j, "+" if s > 0 else "-", var_code(v, (a, j))) for j, v, s in slots if j != j_in]
        return "c%d%s(%s)" % (j_in, "+" if s_in > 0 else "-", ";".join(parts))

    code = "e%d%s|%s|%s" % (j0, "+" if s0 > 0 else "-", var_code(v0, (a0, j0)), clause_code(a0, j0))
    return SimpleType(code, True, proper)


def improper_variables(g: FactorGraph, R: float, labels) -> set:
    """Variables whose R-ball is cyclic or repeats a label."""
    pg = PartialGraph(g)
    out = set()
    for v in range(1, g.n + 1):
        bv, bc = pg.ball(v, R)
        n_edges = sum(1 for a in bc for u, _ in g.clauses[a] if u in bv)
        if n_edges > len(bv) + len(bc) - 1:
            out.add(v)
            continue
        ls = {int(labels[u]) for u in bv}
        if len(ls) != len(bv):
            out.add(v)
    return out


def spanning_forest_bound_check(tree: FactorGraph, A):
    """Return ``(lhs, rhs, ok)`` for |A| >= 1 + (|BSP(A;T)| - 1) / (2(k-1)).

    The empty set is reported as trivially fine (both sides describe an
    empty percolation) with rhs set to 0.
    """
    if _has_cycle(tree):
        raise TreeError("input graph has a cycle")
    A = set(int(v) for v in A)
    if not A:
        return 0, 0.0, True
    closure = bsp(A, tree)
    lhs = len(A)
    rhs = 1 + (len(closure) - 1) / (2 * (tree.k - 1))
    return lhs, rhs, lhs >= rhs - 1e-12 and lhs >= len(closure) / (2 * tree.k) - 1e-12


def _has_cycle(g: FactorGraph) -> bool:
    parent = list(range(g.n + g.m))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, j, v, s in g.edges():
        ra, rv = find(g.n + a), find(v - 1)
        if ra == rv:
            return True
        parent[ra] = rv
    return False
