"""Exact small-instance cluster laboratory.

Encodings (edges are numbered clause-major, ``e = a*k + j``):

* frozen configuration: int array over variables, values +1, -1, 0 (0 is f);
* warning configuration: two int arrays over edges, ``mdot`` in {+1,-1,0}
  and ``mhat`` in {+1,0}. Warnings are stated relative to the edge literal,
  i.e. they concern the value of ``L_e * x_v``;
* coloring: int array over edges with R, Y, G, B = 0, 1, 2, 3.

Everything is edge based, so a variable appearing twice in a clause is two
distinct half-edges and "the other variables of a" means the other slots.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .factor_graph import FactorGraph, drop_tautologies, generate_instance

__all__ = [
    "R", "Y", "G", "B", "COLORS", "EMPTY",
    "BudgetExceeded", "InvalidConfig",
    "WarningConfig", "Witness",
    "enumerate_solutions", "clusters", "solutions_to_x",
    "co_step", "coarsen", "cube", "is_valid_frozen",
    "frozen_to_wp", "wp_to_frozen", "wp_to_coloring", "coloring_to_wp",
    "frozen_to_coloring", "coloring_to_frozen", "is_valid_wp", "is_valid_coloring",
    "clause_factor", "variable_factor", "ev_edge",
    "enumerate_frozen", "enumerate_warnings", "enumerate_colorings",
    "pinning_gadget", "cube_coarsen_gadget", "census", "write_census",
    "coarsen_consistent", "CENSUS_FIELDS",
]

R, Y, G, B = 0, 1, 2, 3
COLORS = "rygb"
EMPTY = None  # the invalid variable-rule output


class BudgetExceeded(RuntimeError):
    pass


class InvalidConfig(ValueError):
    pass


@dataclass(frozen=True)
class WarningConfig:
    mdot: tuple
    mhat: tuple

    def pairs(self):
        return tuple(zip(self.mdot, self.mhat))


@dataclass(frozen=True)
class Witness:
    ok: bool
    kind: str = ""
    index: int = -1

    def __bool__(self):
        return self.ok


# -- helpers -----------------------------------------------------------------

class _Layout:
    """Edge bookkeeping shared by the converters."""

    def __init__(self, g: FactorGraph):
        self.g = g
        self.k = g.k
        self.var = g.var_array.ravel()  # 0-based
        self.sign = g.sign_array.ravel()
        self.E = self.var.size
        self.at_var = [[] for _ in range(g.n)]
        for e in range(self.E):
            self.at_var[self.var[e]].append(e)

    def clause_of(self, e):
        return e // self.k

    def others_in_clause(self, e):
        a = e // self.k
        return [f for f in range(a * self.k, (a + 1) * self.k) if f != e]


_LAYOUTS: dict = {}


def _layout(g):
    key = id(g)
    lay = _LAYOUTS.get(key)
    if lay is None or lay.g is not g:
        lay = _Layout(g)
        if len(_LAYOUTS) > 64:
            _LAYOUTS.clear()
        _LAYOUTS[key] = lay
    return lay


def _lits(x, lay):
    """Literal value of every edge: L_e x_v in {+1,-1,0}."""
    return lay.sign * np.asarray(x)[lay.var]


# -- solutions and clusters ----------------------------------------------------------

def enumerate_solutions(g: FactorGraph, max_n: int = 26, chunk: int = 1 << 20) -> np.ndarray:
    """All satisfying assignments as sorted integers; bit v-1 set means x_v = +."""
    if g.n > max_n:
        raise BudgetExceeded(f"n={g.n} exceeds enumeration budget {max_n}")
    var, sign = g.var_array, g.sign_array
    out = []
    total = 1 << g.n
    for start in range(0, total, chunk):
        xs = np.arange(start, min(total, start + chunk), dtype=np.int64)
        ok = np.ones(xs.size, dtype=bool)
        for a in range(g.m):
            sat = np.zeros(xs.size, dtype=bool)
            for j in range(g.k):
                bit = (xs >> var[a, j]) & 1
                sat |= bit == (1 if sign[a, j] > 0 else 0)
            ok &= sat
        out.append(xs[ok])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def solutions_to_x(sols, n: int) -> np.ndarray:
    """Integer-coded assignments to a (len, n) array of +-1."""
    sols = np.asarray(sols, dtype=np.int64)
    bits = (sols[:, None] >> np.arange(n)[None, :]) & 1
    return np.where(bits == 1, 1, -1)


def clusters(sols, n: int) -> list:
    """Connected components of the Hamming-1 graph on the solution set.

    Blocks are sorted arrays, ordered by their smallest element.
    """
    sols = np.unique(np.asarray(sols, dtype=np.int64))
    N = sols.size
    if N == 0:
        return []
    rows, cols = [], []
    for i in range(n):
        nb = sols ^ (1 << i)
        idx = np.searchsorted(sols, nb)
        idx[idx == N] = 0
        hit = sols[idx] == nb
        rows.append(np.nonzero(hit)[0])
        cols.append(idx[hit])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    adj = coo_matrix((np.ones(r.size), (r, c)), shape=(N, N))
    _, lab = connected_components(adj, directed=False)
    blocks = {}
    for i, l in enumerate(lab):
        blocks.setdefault(l, []).append(sols[i])
    return sorted((np.array(b, dtype=np.int64) for b in blocks.values()), key=lambda b: b[0])


# -- coarsening ------------------------------------------------------------------

def _blocked(x, lay):
    lit = _lits(x, lay).reshape(-1, lay.k)
    neg = lit == -1
    nneg = neg.sum(axis=1, keepdims=True)
    # edge e is blocked when every other slot of its clause is rigidly false
    others_false = (nneg - neg) == lay.k - 1
    blocked = np.zeros(lay.g.n, dtype=bool)
    np.logical_or.at(blocked, lay.var, others_false.ravel())
    return blocked, nneg.ravel()


def co_step(x, g: FactorGraph) -> np.ndarray:
    lay = _layout(g)
    x = np.asarray(x, dtype=np.int64)
    blocked, nneg = _blocked(x, lay)
    if np.any(nneg == lay.k):
        a = int(np.nonzero(nneg == lay.k)[0][0])
        raise InvalidConfig(f"clause {a} is violated")
    return np.where(blocked, x, 0)


def coarsen(x, g: FactorGraph) -> np.ndarray:
    y = np.asarray(x, dtype=np.int64)
    while True:
        z = co_step(y, g)
        if np.array_equal(z, y):
            return z
        y = z


def cube(cluster_x) -> np.ndarray:
    """Minimal subcube label of a cluster given as a (size, n) array of +-1."""
    X = np.asarray(cluster_x)
    if X.shape[0] == 0:
        raise ValueError("empty cluster")
    const = np.all(X == X[0], axis=0)
    return np.where(const, X[0], 0)


def is_valid_frozen(x, g: FactorGraph) -> Witness:
    lay = _layout(g)
    x = np.asarray(x, dtype=np.int64)
    forced, nneg = _blocked(x, lay)
    bad = np.nonzero(nneg == lay.k)[0]
    if bad.size:
        return Witness(False, "violated_clause", int(bad[0]))
    mism = np.nonzero((x != 0) != forced)[0]
    if mism.size:
        return Witness(False, "forcing_mismatch", int(mism[0]) + 1)
    return Witness(True)


# -- warnings and colors -------------------------------------------------------------

def _wp_var(mhat_others_same, mhat_others_opp):
    """Variable rule: output given incoming clause warnings split by relative sign."""
    same = any(m == 1 for m in mhat_others_same)
    opp = any(m == 1 for m in mhat_others_opp)
    if same and not opp:
        return 1
    if opp and not same:
        return -1
    if not same and not opp:
        return 0
    return EMPTY


def _wp_var_edge(e, mhat, lay):
    s = lay.sign[e]
    same, opp = [], []
    for f in lay.at_var[lay.var[e]]:
        if f == e:
            continue
        (same if lay.sign[f] == s else opp).append(mhat[f])
    return _wp_var(same, opp)


def _wp_clause_edge(e, mdot, lay):
    return 1 if all(mdot[f] == -1 for f in lay.others_in_clause(e)) else 0


def frozen_to_wp(x, g: FactorGraph) -> WarningConfig:
    lay = _layout(g)
    if not is_valid_frozen(x, g):
        raise InvalidConfig("frozen configuration is not valid")
    lit = _lits(x, lay)
    mhat = [1 if all(lit[f] == -1 for f in lay.others_in_clause(e)) else 0 for e in range(lay.E)]
    mdot = [_wp_var_edge(e, mhat, lay) for e in range(lay.E)]
    return WarningConfig(tuple(int(v) for v in mdot), tuple(mhat))


def is_valid_wp(m: WarningConfig, g: FactorGraph) -> Witness:
    lay = _layout(g)
    if len(m.mdot) != lay.E or len(m.mhat) != lay.E:
        return Witness(False, "length", -1)
    for e in range(lay.E):
        if m.mhat[e] != _wp_clause_edge(e, m.mdot, lay):
            return Witness(False, "clause_rule", e)
        out = _wp_var_edge(e, m.mhat, lay)
        if out is EMPTY or out != m.mdot[e]:
            return Witness(False, "variable_rule", e)
    return Witness(True)


def wp_to_frozen(m: WarningConfig, g: FactorGraph) -> np.ndarray:
    lay = _layout(g)
    if not is_valid_wp(m, g):
        raise InvalidConfig("warning configuration is not valid")
    x = np.zeros(g.n, dtype=np.int64)
    for e in range(lay.E):
        if m.mhat[e] == 1:
            x[lay.var[e]] = lay.sign[e]
    return x


_PROJ = {(1, 1): R, (0, 1): R, (-1, 0): Y, (0, 0): G, (1, 0): B}


def wp_to_coloring(m: WarningConfig, g: FactorGraph) -> np.ndarray:
    if not is_valid_wp(m, g):
        raise InvalidConfig("warning configuration is not valid")
    return np.array([_PROJ[p] for p in m.pairs()], dtype=np.int64)


def coloring_to_wp(sigma, g: FactorGraph) -> WarningConfig:
    lay = _layout(g)
    sigma = np.asarray(sigma, dtype=np.int64)
    if not is_valid_coloring(sigma, g):
        raise InvalidConfig("coloring is not valid")
    mhat = [1 if c == R else 0 for c in sigma]
    mdot = [_wp_var_edge(e, mhat, lay) for e in range(lay.E)]
    m = WarningConfig(tuple(int(v) for v in mdot), tuple(mhat))
    if not is_valid_wp(m, g) or not np.array_equal(wp_to_coloring(m, g), sigma):
        raise InvalidConfig("coloring does not lift to a warning configuration")
    return m


def frozen_to_coloring(x, g):
    return wp_to_coloring(frozen_to_wp(x, g), g)


def ev_edge(color: int, sign: int):
    """Variable spin read off a single half-edge."""
    if color == G:
        return 0
    if color in (R, B):
        return sign
    return -sign


def clause_factor(sig) -> int:
    sig = list(sig)
    nr = sum(c == R for c in sig)
    if nr == 1 and all(c in (R, Y) for c in sig):
        return 1
    if nr == 0 and sum(c in (G, B) for c in sig) >= 2:
        return 1
    return 0


def variable_factor(sig, signs):
    """Returns ``(factor, ev)`` with ev in {+1, -1, 0, None}."""
    sig, signs = list(sig), list(signs)
    if all(c == G for c in sig):
        return 1, 0
    for x in (1, -1):
        opp = [c for c, s in zip(sig, signs) if s == -x]
        same = [c for c, s in zip(sig, signs) if s == x]
        if all(c == Y for c in opp) and all(c in (R, B) for c in same) and any(c == R for c in same):
            return 1, x
    return 0, EMPTY


def is_valid_coloring(sigma, g: FactorGraph) -> Witness:
    lay = _layout(g)
    sigma = np.asarray(sigma)
    if sigma.size != lay.E:
        return Witness(False, "length", -1)
    for a in range(g.m):
        if not clause_factor(sigma[a * g.k:(a + 1) * g.k]):
            return Witness(False, "clause", a)
    for v in range(g.n):
        es = lay.at_var[v]
        if not variable_factor(sigma[es], lay.sign[es])[0]:
            return Witness(False, "variable", v + 1)
    return Witness(True)


def coloring_to_frozen(sigma, g: FactorGraph) -> np.ndarray:
    lay = _layout(g)
    if not is_valid_coloring(sigma, g):
        raise InvalidConfig("coloring is not valid")
    sigma = np.asarray(sigma)
    return np.array([variable_factor(sigma[lay.at_var[v]], lay.sign[lay.at_var[v]])[1]
                     for v in range(g.n)], dtype=np.int64)


# -- exhaustive enumeration ----------------------------------------------------------

def enumerate_frozen(g: FactorGraph, max_n: int = 12) -> np.ndarray:
    """All valid frozen configurations by filtering {+,-,f}^n."""
    if g.n > max_n:
        raise BudgetExceeded(f"n={g.n} exceeds 3^n budget {max_n}")
    lay = _layout(g)
    X = np.array(list(itertools.product((1, -1, 0), repeat=g.n)), dtype=np.int64).reshape(-1, g.n)
    if lay.E == 0:
        return X[np.all(X == 0, axis=1)]
    lit = (lay.sign[None, :] * X[:, lay.var]).reshape(X.shape[0], g.m, g.k)
    neg = lit == -1
    nneg = neg.sum(axis=2, keepdims=True)
    ok = np.all(nneg[:, :, 0] < g.k, axis=1)
    others = ((nneg - neg) == g.k - 1).reshape(X.shape[0], -1)
    forced = np.zeros(X.shape, dtype=bool)
    for e in range(lay.E):
        forced[:, lay.var[e]] |= others[:, e]
    ok &= np.all((X != 0) == forced, axis=1)
    return X[ok]


def _color_extendable(cols, signs, free_plus, free_minus):
    """Can a partial color pattern at a variable be completed validly?

    ``cols``/``signs`` cover the assigned half-edges; ``free_plus`` and
    ``free_minus`` count the unassigned ones by sign.
    """
    if all(c == G for c in cols):
        return True
    for x, free_same in ((1, free_plus), (-1, free_minus)):
        ok = True
        has_r = False
        for c, s in zip(cols, signs):
            if s == x:
                if c == R:
                    has_r = True
                elif c != B:
                    ok = False
                    break
            elif c != Y:
                ok = False
                break
        if ok and (has_r or free_same > 0):
            return True
    return False


def _wp_extendable(pairs, signs, free_plus, free_minus):
    """Can partial (mdot, mhat) pairs at a variable be completed validly?

    The variable rule only sees whether the other forcing half-edges of each
    sign are present, so it is enough to try 0, 1 or 2 extra forcing
    half-edges per sign among the unassigned ones.
    """
    a_plus = sum(1 for (d, h), s in zip(pairs, signs) if h == 1 and s == 1)
    a_minus = sum(1 for (d, h), s in zip(pairs, signs) if h == 1 and s == -1)

    def rule(s, h, cp, cm):
        same = (cp if s == 1 else cm) - h
        opp = cm if s == 1 else cp
        if same and opp:
            return EMPTY
        return 1 if same else (-1 if opp else 0)

    for tp in range(min(free_plus, 2) + 1):
        for tm in range(min(free_minus, 2) + 1):
            cp, cm = a_plus + tp, a_minus + tm
            if any(rule(s, h, cp, cm) != d for (d, h), s in zip(pairs, signs)):
                continue
            # unassigned half-edges: forcing and non-forcing representatives
            reps = []
            if tp:
                reps.append((1, 1))
            if tp < free_plus:
                reps.append((1, 0))
            if tm:
                reps.append((-1, 1))
            if tm < free_minus:
                reps.append((-1, 0))
            if all(rule(s, h, cp, cm) is not EMPTY for s, h in reps):
                return True
    return False


def _join_clauses(g, clause_patterns, extendable, budget):
    """Backtracking over clauses, each taking one of its admissible local
    patterns, pruned by a per-variable extendability test."""
    lay = _layout(g)
    k = g.k
    E = lay.E
    # clause order: breadth-first through shared variables
    seq, seen = [], set()
    for a0 in range(g.m):
        if a0 in seen:
            continue
        queue = [a0]
        seen.add(a0)
        while queue:
            a = queue.pop(0)
            seq.append(a)
            for e in range(a * k, (a + 1) * k):
                for f in lay.at_var[lay.var[e]]:
                    b = f // k
                    if b not in seen:
                        seen.add(b)
                        queue.append(b)
    val = [None] * E
    sign = lay.sign.tolist()
    var = lay.var.tolist()
    free = [[0, 0] for _ in range(g.n)]  # unassigned (+, -) counts
    for e in range(E):
        free[var[e]][0 if sign[e] == 1 else 1] += 1
    out = []
    nodes = [0]

    def var_ok(v):
        es = [e for e in lay.at_var[v] if val[e] is not None]
        return extendable([val[e] for e in es], [sign[e] for e in es], free[v][0], free[v][1])

    def rec(i):
        nodes[0] += 1
        if nodes[0] > budget:
            raise BudgetExceeded(f"search exceeded {budget} nodes")
        if i == len(seq):
            out.append(list(val))
            return
        a = seq[i]
        es = range(a * k, (a + 1) * k)
        vs = sorted({var[e] for e in es})
        for e in es:
            free[var[e]][0 if sign[e] == 1 else 1] -= 1
        for pat in clause_patterns:
            for e, c in zip(es, pat):
                val[e] = c
            if all(var_ok(v) for v in vs):
                rec(i + 1)
        for e in es:
            val[e] = None
            free[var[e]][0 if sign[e] == 1 else 1] += 1

    rec(0)
    return out


def _clause_wp_patterns(k):
    pats = []
    for md in itertools.product((1, -1, 0), repeat=k):
        mh = [1 if all(md[i] == -1 for i in range(k) if i != j) else 0 for j in range(k)]
        pats.append(tuple(zip(md, mh)))
    return pats


def enumerate_warnings(g: FactorGraph, budget: int = 5 * 10 ** 6) -> list:
    """All valid warning configurations.

    Clauses take every (mdot, mhat) pattern allowed by the clause rule; the
    variable rule is enforced incrementally.
    """
    rows = _join_clauses(g, _clause_wp_patterns(g.k), _wp_extendable, budget)
    out = [WarningConfig(tuple(d for d, _ in r), tuple(h for _, h in r)) for r in rows]
    return out


def enumerate_colorings(g: FactorGraph, budget: int = 5 * 10 ** 6) -> list:
    cpat = [p for p in itertools.product(range(4), repeat=g.k) if clause_factor(p)]
    rows = _join_clauses(g, cpat, _color_extendable, budget)
    return [np.array(r, dtype=np.int64) for r in rows]


# -- gadgets -----------------------------------------------------------------------

def pinning_gadget(k: int = 3):
    """Clauses (not z) or (+-u_1) ... over all 2^(k-1) sign patterns of the
    auxiliaries; every solution has z = -. Variable 1 is z."""
    clauses = []
    for signs in itertools.product((1, -1), repeat=k - 1):
        clauses.append(((1, -1),) + tuple((2 + i, s) for i, s in enumerate(signs)))
    return FactorGraph(k, k, tuple(clauses))


def cube_coarsen_gadget(k: int = 3):
    """Cycle u-a-v-b-w-c-u over a pinned base in which cube and coarsen differ at u.

    Returns ``(graph, names)`` where ``names`` maps 'u','v','w' and 'z' (list)
    to variable indices. Each of a, b, c takes k-2 pinned z variables with
    sign +, and the cycle signs are + except L_bv = L_cw = -.
    """
    if k < 3:
        raise ValueError("gadget needs k >= 3")
    nz = 3 * (k - 2)
    clauses = []
    nvar = 0
    zs = []
    for _ in range(nz):
        z = nvar + 1
        zs.append(z)
        aux = list(range(nvar + 2, nvar + k + 1))
        for signs in itertools.product((1, -1), repeat=k - 1):
            clauses.append(((z, -1),) + tuple((u, s) for u, s in zip(aux, signs)))
        nvar += k
    u, v, w = nvar + 1, nvar + 2, nvar + 3
    nvar += 3
    zi = iter(zs)
    pad = lambda: tuple((next(zi), 1) for _ in range(k - 2))
    clauses.append(((u, 1), (v, 1)) + pad())   # a
    clauses.append(((v, -1), (w, 1)) + pad())  # b
    clauses.append(((w, -1), (u, 1)) + pad())  # c
    return FactorGraph(nvar, k, tuple(clauses)), {"u": u, "v": v, "w": w, "z": zs}


# -- census ------------------------------------------------------------------------

def coarsen_consistent(g: FactorGraph, sols=None) -> bool:
    """True when coarsen is constant and valid on every cluster of ``g``.

    Tautological clauses should be removed first (see ``drop_tautologies``):
    under the half-edge rule a variable can block itself through one.
    """
    if sols is None:
        sols = enumerate_solutions(g)
    for cl in clusters(sols, g.n):
        ys = {tuple(coarsen(x, g)) for x in solutions_to_x(cl, g.n)}
        if len(ys) != 1 or not is_valid_frozen(np.array(ys.pop()), g):
            return False
    return True


def census(g: FactorGraph, instance_id=0) -> dict:
    """Counts for one instance. Cluster-level fields use the tautology-free graph."""
    red = drop_tautologies(g)
    sols = enumerate_solutions(red)
    return {
        "instance_id": instance_id, "n": g.n, "m": g.m, "k": g.k,
        "solutions": int(sols.size),
        "clusters": len(clusters(sols, g.n)),
        "frozen": int(enumerate_frozen(g).shape[0]),
        "warnings": len(enumerate_warnings(g)),
        "colorings": len(enumerate_colorings(g)),
        "tautologies": g.m - red.m,
        "coarsen_ok": int(coarsen_consistent(red, sols)),
    }


CENSUS_FIELDS = ["instance_id", "n", "m", "k", "solutions", "clusters", "frozen", "warnings", "colorings",
                 "tautologies", "coarsen_ok"]


def write_census(rows, path, header: str | None = None):
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        w = csv.DictWriter(fh, CENSUS_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({f: r[f] for f in CENSUS_FIELDS})
