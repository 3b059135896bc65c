"""k-SAT instances as bipartite factor graphs with signed, position-indexed edges.

Variables are numbered 1..n (DIMACS style). Clause ``a`` is an ordered
k-tuple of literals ``(v, s)`` with ``s`` in {+1, -1}; the edge identity is
``(a, j)`` so a variable repeated inside one clause still gives distinct
edges. Distances count 1/2 per variable-clause edge.
"""
from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream

__all__ = [
    "FactorGraph",
    "PgwTree",
    "Ball",
    "DimacsError",
    "generate_instance",
    "sample_pgw_tree",
    "parse_dimacs",
    "emit_dimacs",
    "neighborhood",
    "random_assignment",
    "drop_tautologies",
]


class DimacsError(ValueError):
    pass


@dataclass(frozen=True)
class FactorGraph:
    n: int
    k: int
    clauses: tuple  # tuple of k-tuples of (var, sign)
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n < 0 or self.k < 1:
            raise ValueError("need n >= 0 and k >= 1")
        cl = tuple(tuple((int(v), int(s)) for v, s in c) for c in self.clauses)
        for a, c in enumerate(cl):
            if len(c) != self.k:
                raise ValueError(f"clause {a} has {len(c)} literals, expected {self.k}")
            for v, s in c:
                if not 1 <= v <= self.n or s not in (1, -1):
                    raise ValueError(f"bad literal {(v, s)} in clause {a}")
        object.__setattr__(self, "clauses", cl)

    @property
    def m(self) -> int:
        return len(self.clauses)

    @property
    def var_array(self) -> np.ndarray:
        """(m, k) array of 0-based variable indices."""
        a = np.array([[v - 1 for v, _ in c] for c in self.clauses], dtype=np.int64)
        return a.reshape(self.m, self.k)

    @property
    def sign_array(self) -> np.ndarray:
        a = np.array([[s for _, s in c] for c in self.clauses], dtype=np.int64)
        return a.reshape(self.m, self.k)

    def edges(self):
        """Yield ``(a, j, v, s)`` for every edge, clause-major."""
        for a, c in enumerate(self.clauses):
            for j, (v, s) in enumerate(c):
                yield a, j, v, s

    def var_edges(self) -> dict:
        """Map variable -> list of incident edges ``(a, j, s)``."""
        out = {v: [] for v in range(1, self.n + 1)}
        for a, j, v, s in self.edges():
            out[v].append((a, j, s))
        return out

    def with_meta(self, **kw) -> "FactorGraph":
        return FactorGraph(self.n, self.k, self.clauses, {**self.meta, **kw})


@dataclass(frozen=True)
class PgwTree:
    """A Poisson Galton-Watson factor tree.

    ``graph`` holds the tree as an ordinary factor graph (every clause has
    exactly k literals); ``root`` is a variable; ``var_depth`` and
    ``clause_depth`` are in the half-integer metric; ``parent_pos[a]`` is the
    slot of clause ``a`` occupied by its parent variable.
    """

    graph: FactorGraph
    root: int
    var_depth: dict
    clause_depth: list
    clause_parent: list
    parent_pos: list


@dataclass(frozen=True)
class Ball:
    """Induced ball ``B_r(root)``.

    ``var_dist`` / ``clause_dist`` map vertices to distances (multiples of
    1/2). ``edges`` lists ``(a, j, v, s)`` with both endpoints inside.
    """

    root: int
    radius: float
    var_dist: dict
    clause_dist: dict
    edges: tuple
    cyclic: bool

    @property
    def variables(self):
        return sorted(self.var_dist)

    @property
    def clauses(self):
        return sorted(self.clause_dist)


def _check_alpha(alpha):
    if not alpha > 0:
        raise ValueError("alpha must be positive")


def generate_instance(n: int, alpha: float | None, k: int, mode: str = "poisson",
                      m: int | None = None, seed: int = 0) -> FactorGraph:
    """Random k-SAT: Pois(n alpha) clauses (or exactly m), each literal i.i.d.
    uniform over the 2n signed variables."""
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    if mode == "poisson":
        if m is not None:
            raise ValueError("m is only allowed with mode='fixed_m'")
        _check_alpha(alpha)
    elif mode == "fixed_m":
        if m is None or m < 0:
            raise ValueError("mode='fixed_m' needs a nonnegative m")
        if alpha is not None:
            _check_alpha(alpha)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    rng = substream(seed, "instance")
    M = int(rng.poisson(n * alpha)) if mode == "poisson" else int(m)
    vs = rng.integers(1, n + 1, size=(M, k))
    ss = np.where(rng.random((M, k)) < 0.5, 1, -1)
    clauses = tuple(tuple(zip(vs[a].tolist(), ss[a].tolist())) for a in range(M))
    a_meta = alpha if alpha is not None else (m / n)
    return FactorGraph(n, k, clauses, {"seed": int(seed), "alpha": float(a_meta), "mode": mode})


def sample_pgw_tree(alpha: float, k: int, depth: float, seed: int = 0) -> PgwTree:
    """PGW tree truncated at ``depth`` (half-integer metric).

    Each variable spawns Pois(alpha k) child clauses and each clause k-1 child
    variables. A clause is kept only if its children fit under the depth, so
    leaves are always variables and a half-integer depth rounds down.
    """
    _check_alpha(alpha)
    if depth < 0 or abs(2 * depth - round(2 * depth)) > 1e-12:
        raise ValueError("depth must be a nonnegative multiple of 1/2")
    if k < 2:
        raise ValueError("need k >= 2")
    rng = substream(seed, "pgw")
    half = int(round(2 * depth))
    var_depth = {1: 0.0}
    clauses, cdepth, cparent, ppos = [], [], [], []
    nvar = 1
    frontier = deque([1])
    while frontier:
        v = frontier.popleft()
        dv = int(round(2 * var_depth[v]))
        if dv + 2 > half:
            continue
        for _ in range(int(rng.poisson(alpha * k))):
            pos = int(rng.integers(k))
            signs = np.where(rng.random(k) < 0.5, 1, -1).tolist()
            lits = []
            for j in range(k):
                if j == pos:
                    lits.append((v, signs[j]))
                else:
                    nvar += 1
                    var_depth[nvar] = (dv + 2) / 2
                    lits.append((nvar, signs[j]))
                    frontier.append(nvar)
            clauses.append(tuple(lits))
            cdepth.append((dv + 1) / 2)
            cparent.append(v)
            ppos.append(pos)
    g = FactorGraph(nvar, k, tuple(clauses), {"alpha": float(alpha), "seed": int(seed), "mode": "pgw"})
    return PgwTree(g, 1, var_depth, cdepth, cparent, ppos)


def drop_tautologies(g: FactorGraph) -> FactorGraph:
    """Remove clauses containing both v and not v; they hold for every assignment."""
    keep = tuple(c for c in g.clauses if not any((v, -s) in c for v, s in c))
    return FactorGraph(g.n, g.k, keep, dict(g.meta))


def random_assignment(n: int, seed: int = 0) -> np.ndarray:
    rng = substream(seed, "assignment")
    return np.where(rng.random(n) < 0.5, 1, -1)


# -- DIMACS ------------------------------------------------------------------

_META = re.compile(r"^c\s+seed=(\d+)\s+alpha=(\S+)\s+mode=(\w+)\s*$")


def parse_dimacs(text: str, k: int | None = None) -> FactorGraph:
    n = m = None
    meta = {}
    clauses, cur = [], []
    cur_line = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("%"):
            continue
        if line.startswith("c"):
            mm = _META.match(line)
            if mm:
                meta = {"seed": int(mm.group(1)), "alpha": float(mm.group(2)), "mode": mm.group(3)}
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise DimacsError(f"line {lineno}: malformed header {line!r}")
            try:
                n, m = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(f"line {lineno}: non-integer header fields") from None
            continue
        if n is None:
            raise DimacsError(f"line {lineno}: clause before 'p cnf' header")
        for tok in line.split():
            try:
                lit = int(tok)
            except ValueError:
                raise DimacsError(f"line {lineno}: bad token {tok!r}") from None
            if cur_line is None:
                cur_line = lineno
            if lit == 0:
                if k is None:
                    k = len(cur)
                if len(cur) != k:
                    raise DimacsError(f"line {cur_line}: clause width {len(cur)}, expected {k}")
                clauses.append(tuple(cur))
                cur, cur_line = [], None
                continue
            if abs(lit) > n:
                raise DimacsError(f"line {lineno}: variable {abs(lit)} exceeds n={n}")
            cur.append((abs(lit), 1 if lit > 0 else -1))
    if n is None:
        raise DimacsError("missing 'p cnf' header")
    if cur:
        raise DimacsError(f"line {cur_line}: unterminated clause")
    if len(clauses) != m:
        raise DimacsError(f"header declares {m} clauses, found {len(clauses)}")
    if k is None:
        raise DimacsError("cannot infer clause width from an empty formula; pass k")
    return FactorGraph(n, k, tuple(clauses), meta)


def emit_dimacs(g: FactorGraph) -> str:
    lines = []
    if {"seed", "alpha", "mode"} <= set(g.meta):
        lines.append(f"c seed={int(g.meta['seed'])} alpha={float(g.meta['alpha'])!r} mode={g.meta['mode']}")
    lines.append(f"p cnf {g.n} {g.m}")
    for c in g.clauses:
        lines.append(" ".join(str(v * s) for v, s in c) + " 0")
    return "\n".join(lines) + "\n"


# -- neighborhoods -------------------------------------------------------------

def _adjacency(edges):
    vadj, cadj = {}, {}
    for a, j, v, s in edges:
        vadj.setdefault(v, []).append((a, j, s))
        cadj.setdefault(a, []).append((j, v, s))
    return vadj, cadj


def neighborhood(g, v: int, radius: float) -> Ball:
    """Ball of the given radius around variable ``v``.

    ``g`` is a FactorGraph or any iterable of ``(a, j, v, s)`` edges (useful
    for partially deleted graphs). Cyclic means the induced subgraph,
    counted with edge multiplicity, is not a tree.
    """
    edges = list(g.edges()) if isinstance(g, FactorGraph) else list(g)
    vadj, cadj = _adjacency(edges)
    h = int(round(2 * radius))
    vd, cd = {v: 0}, {}
    q = deque([("v", v)])
    while q:
        kind, x = q.popleft()
        d = vd[x] if kind == "v" else cd[x]
        if d == h:
            continue
        if kind == "v":
            for a, _, _ in vadj.get(x, []):
                if a not in cd:
                    cd[a] = d + 1
                    q.append(("c", a))
        else:
            for _, u, _ in cadj.get(x, []):
                if u not in vd:
                    vd[u] = d + 1
                    q.append(("v", u))
    inside = tuple(e for e in edges if e[0] in cd and e[2] in vd)
    cyclic = len(inside) > len(vd) + len(cd) - 1
    return Ball(v, h / 2, {x: d / 2 for x, d in vd.items()},
                {x: d / 2 for x, d in cd.items()}, inside, cyclic)
