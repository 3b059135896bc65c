"""First and second moment exponents for random k-SAT and NAE-SAT.

All logs are natural. ``z`` is the overlap: the fraction of coordinates on
which two assignments agree.
"""
from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

__all__ = [
    "H", "phi1", "psi1", "phi_z", "psi_z", "alpha1_root", "alpha1_bisect",
    "exact_pair_moment", "brute_force_pair_moment", "MomentCurve",
    "moment_curve", "emit_curve", "curve_csv", "local_maxima", "BudgetExceeded",
]


class BudgetExceeded(RuntimeError):
    pass


def H(z):
    """Binary entropy in nats, with H(0) = H(1) = 0."""
    z = np.asarray(z, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -z * np.log(z) - (1 - z) * np.log1p(-z)
    h = np.where((z <= 0) | (z >= 1), 0.0, h)
    return h if h.ndim else float(h)


def phi1(k: int, alpha):
    return math.log(2) + np.asarray(alpha, float) * math.log1p(-2.0 ** -k)


def psi1(k: int, alpha):
    return math.log(2) + np.asarray(alpha, float) * math.log1p(-2.0 * 2.0 ** -k)


def phi_z(k: int, alpha, z):
    z = np.asarray(z, dtype=float)
    p = 1 - 2 * 2.0 ** -k + z ** k * 2.0 ** -k
    return math.log(2) + H(z) + alpha * np.log(p)


def psi_z(k: int, alpha, z):
    z = np.asarray(z, dtype=float)
    p = 1 - 4 * 2.0 ** -k + (z ** k + (1 - z) ** k) * 2 * 2.0 ** -k
    return math.log(2) + H(z) + alpha * np.log(p)


def alpha1_root(k: int) -> float:
    """Root of phi1 in alpha."""
    if k < 2:
        raise ValueError("need k >= 2")
    return -math.log(2) / math.log1p(-2.0 ** -k)


def alpha1_bisect(k: int, tol: float = 1e-13) -> float:
    lo, hi = 0.0, 2.0 ** k
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if phi1(k, mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _overlap_count(n, z):
    t = n * Fraction(z) if not isinstance(z, float) else n * z
    r = round(t)
    if abs(t - r) > 1e-9:
        raise ValueError(f"n*z = {t} is not an integer")
    return int(r)


def exact_pair_moment(n: int, m: int, k: int, z, exact: bool = False):
    """E Z^2[z] under the fixed-m model: 2^n C(n, nz) (1 - 2/2^k + (z/2)^k)^m.

    ``exact=True`` returns a Fraction; otherwise a float, with the binomial
    in log space once n is large.
    """
    j = _overlap_count(n, z)
    if exact:
        zf = Fraction(j, n) if n else Fraction(0)
        p = 1 - Fraction(2, 2 ** k) + zf ** k / 2 ** k
        return 2 ** n * math.comb(n, j) * p ** m
    zf = j / n if n else 0.0
    p = 1 - 2 * 2.0 ** -k + zf ** k * 2.0 ** -k
    if n <= 30:
        return float(2 ** n * math.comb(n, j)) * p ** m
    logc = math.lgamma(n + 1) - math.lgamma(j + 1) - math.lgamma(n - j + 1)
    return math.exp(n * math.log(2) + logc + m * math.log(p))


def brute_force_pair_moment(n: int, m: int, k: int, z, literal: bool = False,
                            budget: int = 5 * 10 ** 7) -> Fraction:
    """Average over every clause tuple of the number of assignment pairs at
    overlap z that satisfy all clauses. Exact rational arithmetic.

    The default path enumerates every single clause in ([n] x {+,-})^k and,
    for each assignment pair, counts the satisfying clauses c; the number of
    satisfying m-tuples is then c^m. ``literal=True`` loops over the tuples
    themselves (tiny cases only).
    """
    j = _overlap_count(n, z)
    lits = [(v, s) for v in range(n) for s in (1, -1)]
    clause_list = list(itertools.product(lits, repeat=k))
    n_tuples = len(clause_list) ** m
    assigns = list(itertools.product((1, -1), repeat=n))
    pairs = [(x, y) for x in assigns for y in assigns
             if sum(a == b for a, b in zip(x, y)) == j]
    cost = len(pairs) * (n_tuples * m if literal else len(clause_list))
    if cost > budget:
        raise BudgetExceeded(f"enumeration cost {cost} exceeds budget {budget}")

    def sat(c, x):
        return any(s * x[v] == 1 for v, s in c)

    total = 0
    for x, y in pairs:
        ok = [sat(c, x) and sat(c, y) for c in clause_list]
        if literal:
            total += sum(all(ok[i] for i in tup)
                         for tup in itertools.product(range(len(clause_list)), repeat=m))
        else:
            total += sum(ok) ** m
    return Fraction(total, n_tuples)


# -- curves ----------------------------------------------------------------------

_FUNCS = {
    "phi": lambda k, a, z: phi_z(k, a, z),
    "psi": lambda k, a, z: psi_z(k, a, z),
    "phi_minus_2phi1": lambda k, a, z: phi_z(k, a, z) - 2 * phi1(k, a),
    "psi_minus_2psi1": lambda k, a, z: psi_z(k, a, z) - 2 * psi1(k, a),
}


@dataclass
class MomentCurve:
    z: np.ndarray
    values: np.ndarray
    k: int
    alpha: float
    function: str
    flags: dict = field(default_factory=dict)


def local_maxima(z, v):
    """Interior grid points that beat both neighbours."""
    v = np.asarray(v)
    i = np.nonzero((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:]))[0] + 1
    return [float(z[t]) for t in i]


def moment_curve(k: int, alpha: float, function: str = "phi", grid: int = 1001) -> MomentCurve:
    if function not in _FUNCS:
        raise ValueError(f"unknown function {function!r}; choose from {sorted(_FUNCS)}")
    if grid < 2:
        raise ValueError("grid needs at least two points")
    z = np.linspace(0.0, 1.0, grid)
    v = np.asarray(_FUNCS[function](k, alpha, z), dtype=float)
    return MomentCurve(z, v, k, float(alpha), function, {"local_maxima": local_maxima(z, v)})


def curve_csv(curve: MomentCurve, header: str | None = None) -> str:
    if np.any(np.diff(curve.z) <= 0):
        raise ValueError("grid must be strictly increasing")
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["z", "value", "k", "alpha", "function"])
    for z, v in zip(curve.z, curve.values):
        w.writerow([repr(float(z)), repr(float(v)), curve.k, repr(curve.alpha), curve.function])
    return buf.getvalue()


def emit_curve(curve: MomentCurve, path, header: str | None = None) -> None:
    text = curve_csv(curve, header)
    with open(path, "w", newline="") as fh:
        fh.write(text)
