"""Free energy Phi(alpha), its color decomposition, the threshold search and
the interpolation bound.

    Phi(alpha) = E log(P+ + P- - P+ P-) - alpha (k-1) E log(1 - prod_{j<=k} eta_j)

with d+, d- ~ Pois(alpha k / 2) and P = prod over child clauses of
(1 - prod_{j<k} eta_j). The default estimator subtracts (S+ + S-)/2 from the
first log and adds its mean back exactly: E S = lam E log(1 - prod_{j<k} eta)
is a moment series of the population. The same series gives the clause term,
so only the variable term carries Monte Carlo noise.
"""
from __future__ import annotations

import csv
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .cluster_models import BudgetExceeded, B, G, R, Y, clause_factor, variable_factor
from .popdyn import (BLOCK, Population, RecursionDraw, _map, _nblocks, check_alpha,
                     draw_sigmas, run_to_stationarity)

__all__ = [
    "FreeEnergyEstimate", "phi_integrand", "phi_estimate", "phi_coupled", "log_clause_mean",
    "ColTerms", "col_terms", "qhat_from_uhat", "qdot_from_bold", "col_term_oracle",
    "clause_term_oracle", "edge_term_oracle",
    "ThresholdConfig", "ThresholdResult", "ProbeRecord", "BracketFailure", "find_threshold",
    "write_audit", "AUDIT_FIELDS",
    "InterpolationConfig", "InterpEstimate", "interp_u", "interp_u_enum", "interp_bound",
    "bold_pool",
]

TINY = 2.0 ** -53
LOG_TINY = math.log(TINY)


@dataclass(frozen=True)
class FreeEnergyEstimate:
    mean: float
    stderr: float
    samples: int
    alpha: float
    k: int
    clamp_count: int = 0
    method: str = "control"


def _log_d(sp, sm):
    """log(P+ + P- - P+ P-) from log P+, log P-."""
    sp, sm = np.asarray(sp, float), np.asarray(sm, float)
    out = np.empty(np.broadcast(sp, sm).shape)
    mx = np.maximum(sp, sm)
    near = mx > -1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        out[near] = np.log1p(-np.expm1(sp[near]) * np.expm1(sm[near]))
        lse = np.logaddexp(sp[~near], sm[~near])
        out[~near] = lse + np.log1p(-np.exp(sp[~near] + sm[~near] - lse))
    return out


def _clamp(x):
    low = x < LOG_TINY
    n = int(low.sum())
    if n:
        x = np.where(low, LOG_TINY, x)
    return x, n


def phi_integrand(draw: RecursionDraw, eta_clause, alpha: float, k: int) -> float:
    """One sample of the direct integrand, from explicit child etas."""
    def big_s(group):
        return sum(math.log1p(-math.prod(c)) for c in group)
    logd = float(_log_d(np.array([big_s(draw.eta_plus)]), np.array([big_s(draw.eta_minus)]))[0])
    logd = max(logd, LOG_TINY)
    clause = max(math.log1p(-math.prod(eta_clause)), LOG_TINY)
    return logd - alpha * (k - 1) * clause


def log_clause_mean(samples, p: int, nmax: int = 4000):
    """E log(1 - prod of p draws) = -sum_n m_n^p / n with m_n the n-th moment.

    Returns None when the series has not converged by ``nmax`` terms.
    """
    x = np.asarray(samples, float)
    pw = np.ones_like(x)
    total = 0.0
    for n in range(1, nmax + 1):
        pw *= x
        m = pw.mean()
        t = m ** p / n
        total += t
        if t < 1e-18:
            return -total
    return None


def _sigmas_for(pops, lams, k, samples, seed, method, pool_factor, workers):
    return draw_sigmas([p.samples for p in pops], lams, k, seed, "phi", method,
                       pool_factor, workers, n_out=samples)


def _clause_draws(pop, samples, k, seed, workers):
    def one(b):
        size = min(BLOCK, samples - b * BLOCK)
        idx = substream(seed, "phi-clause", b).integers(0, pop.N, size=(size, k))
        return np.log1p(-pop.samples[idx].prod(axis=1))
    return np.concatenate(_map(one, _nblocks(samples), workers))


def _finish(vals, extra, alpha, k, clamps, method, extra_var=0.0):
    n = vals.size
    sd = float(vals.std(ddof=1)) if n > 1 else 0.0
    return FreeEnergyEstimate(float(vals.mean() + extra), math.sqrt(sd * sd / n + extra_var),
                              n, float(alpha), k, clamps, method)


def phi_estimate(pop: Population, alpha: float | None = None, samples: int | None = None,
                 seed: int = 0, method: str = "control", sampler: str = "auto",
                 pool_factor: int = 10, workers: int = 1) -> FreeEnergyEstimate:
    """Monte Carlo estimate of Phi at ``alpha`` (default pop.alpha).

    ``method='direct'`` averages the raw integrand with one fresh k-tuple of
    etas per sample. ``'control'`` evaluates both expectations of
    log(1 - prod eta) exactly from the population moments; if the series
    does not converge it falls back to direct sampling of those terms.
    """
    alpha = pop.alpha if alpha is None else float(alpha)
    k = pop.k
    check_alpha(alpha, k)
    samples = pop.N if samples is None else int(samples)
    if samples < 1:
        raise ValueError("need at least one sample")
    lam = alpha * k / 2
    ((sp, sm),) = _sigmas_for([pop], [lam], k, samples, seed, sampler, pool_factor, workers)
    logd, clamps = _clamp(_log_d(sp, sm))
    if method == "direct":
        cl, c2 = _clamp(_clause_draws(pop, samples, k, seed, workers))
        return _finish(logd - alpha * (k - 1) * cl, 0.0, alpha, k, clamps + c2, "direct")
    if method != "control":
        raise ValueError(f"unknown method {method!r}")
    e_var = log_clause_mean(pop.samples, k - 1)
    e_cl = log_clause_mean(pop.samples, k)
    if e_var is None or e_cl is None:
        cl, c2 = _clamp(_clause_draws(pop, samples, k, seed, workers))
        vals = logd - alpha * (k - 1) * cl
        return _finish(vals, 0.0, alpha, k, clamps + c2, "direct")
    return _finish(logd - 0.5 * (sp + sm), lam * e_var - alpha * (k - 1) * e_cl,
                   alpha, k, clamps, "control")


def phi_coupled(pops, alphas, samples: int | None = None, seed: int = 0,
                sampler: str = "pooled", pool_factor: int = 10, workers: int = 1):
    """Control-variate estimates at nondecreasing alphas from shared draws.

    The populations should come from a coupled run; degrees are nested and
    the clause indices shared, so estimates at nearby densities are
    strongly positively correlated.
    """
    k = pops[0].k
    samples = pops[0].N if samples is None else int(samples)
    lams = [a * k / 2 for a in alphas]
    out = []
    sig = _sigmas_for(pops, lams, k, samples, seed, sampler, pool_factor, workers)
    for pop, alpha, lam, (sp, sm) in zip(pops, alphas, lams, sig):
        logd, clamps = _clamp(_log_d(sp, sm))
        e_var = log_clause_mean(pop.samples, k - 1)
        e_cl = log_clause_mean(pop.samples, k)
        if e_var is None or e_cl is None:
            raise ArithmeticError("moment series did not converge")
        out.append(_finish(logd - 0.5 * (sp + sm), lam * e_var - alpha * (k - 1) * e_cl,
                           alpha, k, clamps, "control"))
    return out


# -- color decomposition -------------------------------------------------------------

@dataclass(frozen=True)
class ColTerms:
    z_dot: float
    z_hat: float
    z_bar: float

    def __post_init__(self):
        if not (self.z_dot > 0 and self.z_hat > 0 and self.z_bar > 0):
            raise ValueError("color terms must be positive")


def _rows(a, d, width, name):
    a = np.asarray(a, float).reshape(-1, width) if d else np.zeros((0, width))
    if a.shape[0] != d:
        raise ValueError(f"{name} needs {d} rows of {width} etas")
    if np.any(a < 0) or np.any(a >= 1):
        raise ValueError("etas must lie in [0, 1)")
    return a


def col_terms(d_plus: int, d_minus: int, eta_plus, eta_minus, eta_clause) -> ColTerms:
    """Variable, clause and edge terms of the color free energy.

    eta_plus / eta_minus hold k-1 child etas per clause on each side; the
    clause term uses the k etas of ``eta_clause`` (these are bold eta(-)
    values, which is what the population stores), and the edge term treats
    its last entry as the edge and the rest as the clause's other slots.
    """
    eta_clause = np.asarray(eta_clause, float)
    k = eta_clause.size
    ep = _rows(eta_plus, d_plus, k - 1, "eta_plus")
    em = _rows(eta_minus, d_minus, k - 1, "eta_minus")
    if np.any(eta_clause < 0) or np.any(eta_clause >= 1):
        raise ValueError("etas must lie in [0, 1)")
    up, um = ep.prod(axis=1), em.prod(axis=1)
    pp, pm = np.prod(1 - up), np.prod(1 - um)
    z_dot = (pp + pm - pp * pm) / (np.prod(3 - 2 * up) * np.prod(3 - 2 * um))
    z_hat = (1 - np.prod(eta_clause)) / np.prod(2 - eta_clause)
    u = np.prod(eta_clause[:-1])
    e = eta_clause[-1]
    z_bar = (1 - u * e) / ((3 - 2 * u) * (2 - e))
    return ColTerms(float(z_dot), float(z_hat), float(z_bar))


def qhat_from_uhat(u):
    """Clause-to-variable color message, entries ordered r, y, g, b."""
    z = 3 - 2 * u
    return [u / z, (1 - u) / z, (1 - u) / z, (1 - u) / z]


def qdot_from_bold(bp, bm, bf):
    """Variable-to-clause color message from the frozen marginal (+, -, f)."""
    z = 2 - bm
    return [(1 - bm) / z, bm / z, bf / z, bp / z]


def _var_patterns(signs):
    """Valid color patterns at a variable, generated rather than filtered."""
    d = len(signs)
    if d <= 8:
        for sig in itertools.product(range(4), repeat=d):
            if variable_factor(sig, signs)[0]:
                yield sig
        return
    yield (G,) * d
    for x in (1, -1):
        same = [i for i, s in enumerate(signs) if s == x]
        for choice in itertools.product((R, B), repeat=len(same)):
            if R not in choice:
                continue
            sig = [Y] * d
            for i, c in zip(same, choice):
                sig[i] = c
            yield tuple(sig)


def col_term_oracle(d_plus: int, d_minus: int, q_hat_messages, budget: int = 4 * 10 ** 6) -> float:
    """Sum over valid colorings of a variable's half-edges of prod q_hat.

    ``q_hat_messages`` lists one (r, y, g, b) vector per half-edge, the
    d_plus positive ones first.
    """
    d = d_plus + d_minus
    qs = [list(q) for q in q_hat_messages]
    if len(qs) != d:
        raise ValueError("one message per half-edge")
    if d > 20:
        raise BudgetExceeded("degree too large to enumerate")
    cost = 4 ** d if d <= 8 else 1 + 2 ** (max(d_plus, d_minus) + 1)
    if cost > budget:
        raise BudgetExceeded(f"{cost} patterns exceed budget {budget}")
    signs = [1] * d_plus + [-1] * d_minus
    total = 0.0
    for sig in _var_patterns(signs):
        total += math.prod(q[c] for q, c in zip(qs, sig))
    return total


def clause_term_oracle(q_dot_messages) -> float:
    """Sum over the 4^k clause colorings of clause_factor times prod q_dot."""
    qs = [list(q) for q in q_dot_messages]
    total = 0.0
    for sig in itertools.product(range(4), repeat=len(qs)):
        if clause_factor(sig):
            total += math.prod(q[c] for q, c in zip(qs, sig))
    return total


def edge_term_oracle(q_dot, q_hat) -> float:
    return float(sum(a * b for a, b in zip(q_dot, q_hat)))


# -- threshold search -------------------------------------------------------------------

AUDIT_FIELDS = ["probe", "alpha", "phi_mean", "phi_stderr", "pop_size", "iters", "seed"]


class BracketFailure(RuntimeError):
    def __init__(self, message, estimates):
        super().__init__(message)
        self.estimates = estimates


@dataclass
class ThresholdConfig:
    k: int
    tol: float = 0.05
    pop_size: int = 10 ** 6
    samples: int | None = None
    seed: int = 0
    max_retries: int = 3
    min_iters: int = 10
    max_iters: int | None = None
    ratio_stop: float = 0.9
    method: str = "auto"
    pool_factor: int = 10
    workers: int = 1
    alpha_lbd: float | None = None
    alpha_ubd: float | None = None

    def __post_init__(self):
        if self.k < 3:
            raise ValueError("threshold search needs k >= 3")
        if self.alpha_lbd is None:
            self.alpha_lbd = 2.0 ** self.k * math.log(2) - 2
        if self.alpha_ubd is None:
            self.alpha_ubd = 2.0 ** self.k * math.log(2)
        if not self.alpha_lbd < self.alpha_ubd:
            raise ValueError("need alpha_lbd < alpha_ubd")
        if self.tol <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(frozen=True)
class ProbeRecord:
    probe: int
    alpha: float
    phi_mean: float
    phi_stderr: float
    pop_size: int
    iters: int
    seed: int
    samples: int
    decided: bool


@dataclass
class ThresholdResult:
    alpha_star: float
    lo: float
    hi: float
    audit: list = field(default_factory=list)
    endpoints: dict = field(default_factory=dict)
    undecided: list = field(default_factory=list)

    def __iter__(self):
        return iter((self.alpha_star, self.audit))


def _probe(cfg: ThresholdConfig, alpha, probe_id, audit, log=None):
    """Sign of Phi at alpha with a 3-sigma test; returns (sign, estimate, decided)."""
    pop = run_to_stationarity(cfg.k, alpha, cfg.pop_size, cfg.seed, cfg.min_iters, cfg.max_iters,
                              cfg.ratio_stop, cfg.method, cfg.pool_factor, cfg.workers)
    n = cfg.samples or cfg.pop_size
    for attempt in range(cfg.max_retries + 1):
        est = phi_estimate(pop, alpha, n, cfg.seed, "control", cfg.method, cfg.pool_factor, cfg.workers)
        decided = abs(est.mean) > 3 * est.stderr
        audit.append(ProbeRecord(probe_id, alpha, est.mean, est.stderr, pop.N, pop.iteration,
                                 cfg.seed, n, decided))
        if log:
            log(f"probe {probe_id}: alpha={alpha:.6f} phi={est.mean:.3e} +- {est.stderr:.1e} "
                f"iters={pop.iteration} samples={n}{'' if decided else ' (undecided)'}")
        if decided:
            break
        n *= 2
    return (1 if est.mean > 0 else -1), est, decided


def find_threshold(cfg: ThresholdConfig, log=None) -> ThresholdResult:
    """Sign-test bisection for the zero of Phi on [alpha_lbd, alpha_ubd].

    Every probe reuses cfg.seed, so populations and integrand draws at
    different densities are coupled. A probe still undecided after
    ``max_retries`` doublings of the sample budget moves the bracket by the
    sign of its mean and is listed in ``undecided``. The endpoints must
    pass the test with the expected signs, otherwise BracketFailure.
    """
    audit, undecided = [], []
    s_lo, e_lo, ok_lo = _probe(cfg, cfg.alpha_lbd, 0, audit, log)
    s_hi, e_hi, ok_hi = _probe(cfg, cfg.alpha_ubd, 1, audit, log)
    ends = {"lbd": e_lo, "ubd": e_hi}
    if not (ok_lo and s_lo > 0 and ok_hi and s_hi < 0):
        raise BracketFailure(
            f"endpoint sign test failed: Phi(lbd)={e_lo.mean:.3e}+-{e_lo.stderr:.1e}, "
            f"Phi(ubd)={e_hi.mean:.3e}+-{e_hi.stderr:.1e}", ends)
    lo, hi = cfg.alpha_lbd, cfg.alpha_ubd
    pid = 2
    while hi - lo > cfg.tol:
        mid = 0.5 * (lo + hi)
        s, est, ok = _probe(cfg, mid, pid, audit, log)
        if not ok:
            undecided.append(pid)
        if s > 0:
            lo = mid
        else:
            hi = mid
        pid += 1
    return ThresholdResult(0.5 * (lo + hi), lo, hi, audit, ends, undecided)


def write_audit(result: ThresholdResult, path, header: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header:
            for line in header.splitlines():
                fh.write(f"# {line}\n")
        for pid in result.undecided:
            fh.write(f"# undecided probe {pid}: bracket moved by sign of the mean\n")
        fh.write(f"# alpha_star {result.alpha_star!r} bracket {result.lo!r} {result.hi!r}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AUDIT_FIELDS)
        for r in result.audit:
            w.writerow([r.probe, repr(r.alpha), repr(r.phi_mean), repr(r.phi_stderr),
                        r.pop_size, r.iters, r.seed])


# -- interpolation bound --------------------------------------------------------------------

@dataclass
class InterpolationConfig:
    k: int
    alpha: float
    beta: float
    m: float | None = None
    inner_samples: int = 1000
    outer_samples: int = 10000
    seed: int = 0
    pool_size: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be nonnegative")
        if self.m is None:
            self.m = self.beta ** -0.5 if self.beta > 1 else 0.5
        if not 0 < self.m < 1:
            raise ValueError("m must lie in (0, 1)")
        if self.inner_samples < 1 or self.outer_samples < 2:
            raise ValueError("need inner >= 1 and outer >= 2 samples")


@dataclass(frozen=True)
class InterpEstimate:
    value: float
    stderr: float
    variable_term: float
    clause_term: float
    outer_samples: int
    inner_samples: int


def _spin_weight(y, rho):
    """e^{rho y} / (2 cosh rho), computed stably."""
    return math.exp(rho * y - np.logaddexp(rho, -rho))


def interp_u(theta_signs, rho, beta: float):
    """(u(+), u(-), u_total) for one clause with literal signs L and fields rho.

    The penalty exp(-beta theta) differs from 1 on a single pattern, the one
    violating every literal, so each sum collapses to one product.
    """
    L = [int(s) for s in theta_signs]
    rho = [float(r) for r in rho]
    k = len(L)
    if len(rho) != k or any(s not in (1, -1) for s in L):
        raise ValueError("need k signs in {+1,-1} and k fields")
    pen = -math.expm1(-beta)
    viol = [_spin_weight(-s, r) for s, r in zip(L, rho)]
    head = math.prod(viol[:-1])
    u = {x: (1 - pen * head if L[-1] * x == -1 else 1.0) for x in (1, -1)}
    return u[1], u[-1], 1 - pen * head * viol[-1]


def interp_u_enum(theta_signs, rho, beta: float):
    """The same three sums as interp_u, by enumerating {+,-}^k."""
    L = np.asarray(theta_signs, int)
    rho = np.asarray(rho, float)
    k = L.size
    xs = np.array(list(itertools.product((1, -1), repeat=k)))
    w = np.exp(rho * xs - np.logaddexp(rho, -rho))
    theta = np.all(L * xs == -1, axis=1)
    pen = np.exp(-beta * theta)
    head = pen * w[:, :-1].prod(axis=1)
    total = float((head * w[:, -1]).sum())
    return float(head[xs[:, -1] == 1].sum()), float(head[xs[:, -1] == -1].sum()), total


def bold_pool(pop: Population, alpha: float, size: int, seed: int, workers: int = 1) -> np.ndarray:
    """Samples of the frozen marginal (bold eta(+), bold eta(-), bold eta(f)).

    One recursion draw each: bold eta(-) = (1-P-)P+/D, bold eta(+) = (1-P+)P-/D
    and bold eta(f) = P+P-/D. Columns are relative to the edge literal.
    """
    lam = alpha * pop.k / 2
    ((sp, sm),) = draw_sigmas([pop.samples], [lam], pop.k, seed, "bold", "auto", 10, workers, n_out=size)
    pp, pm = np.exp(sp), np.exp(sm)
    d = pp + pm - pp * pm
    return np.column_stack([(1 - pp) * pm / d, (1 - pm) * pp / d, pp * pm / d])


_NEGLIGIBLE = 2.0 ** -60


def _categories(width, beta):
    """Spin-count classes (n+, n-, nf) of ``width`` slots and log w per class."""
    cats = [(a, width - a - f, f) for a in range(width + 1) for f in range(width + 1 - a)]
    lc = float(np.logaddexp(beta, -beta))
    pen = -math.expm1(-beta)
    logw = []
    for npl, nmi, nf in cats:
        logt = npl * (-beta - lc) + nmi * (beta - lc) - nf * math.log(2)
        logw.append(math.log1p(-pen * math.exp(logt)))
    return cats, np.array(logw)


def _category_probs(bold, cats):
    """P(class) for each clause: rows of ``bold`` are (clause, slot, spin)."""
    n, width, _ = bold.shape
    P = np.zeros((n, width + 1, width + 1))  # index (n+, nf)
    P[:, 0, 0] = 1.0
    for j in range(width):
        bp, bm, bf = bold[:, j, 0, None, None], bold[:, j, 1, None, None], bold[:, j, 2, None, None]
        Q = P * bm
        Q[:, 1:, :] += P[:, :-1, :] * bp
        Q[:, :, 1:] += P[:, :, :-1] * bf
        P = Q
    return np.stack([P[:, a, f] for a, _, f in cats], axis=1)


def _inner_logs(probs, logw, relevant, n_inner, rng):
    """n_inner draws of sum over clauses of log w, as an array.

    Classes whose |log w| is below 2^-60 are treated as contributing zero.
    One uniform per (draw, clause) picks the class by inversion over the
    relevant classes only.
    """
    if probs.shape[0] == 0 or not relevant.any():
        return np.zeros(n_inner)
    pr = probs[:, relevant]
    cdf = np.cumsum(pr, axis=1)
    q = cdf[:, -1]
    u = rng.random((n_inner, probs.shape[0]))
    hit_i, hit_a = np.nonzero(u < q)
    out = np.zeros(n_inner)
    if hit_i.size:
        cls = (u[hit_i, hit_a, None] >= cdf[hit_a]).sum(axis=1)
        cls = np.minimum(cls, pr.shape[1] - 1)
        np.add.at(out, hit_i, logw[relevant][cls])
    return out


def _log_mean_exp(x):
    mx = float(np.max(x))
    return mx + math.log(float(np.mean(np.exp(x - mx))))


def interp_bound(cfg: InterpolationConfig, pop: Population) -> InterpEstimate:
    """Nested Monte Carlo estimate of the interpolation bound Phi_1(zeta, m).

    Outer draws fix the degrees, literal signs and one frozen marginal per
    slot (from ``bold_pool``); inner draws sample the spins, i.e. the fields
    rho in {beta, -beta, 0}, and average the m-th powers. The root appears
    in d ~ Pois(alpha k) clauses, half of each sign in law. The variable
    term is reported as its excess over ln 2, so beta = 0 returns ln 2
    exactly.
    """
    k, alpha, beta, m = cfg.k, float(cfg.alpha), float(cfg.beta), float(cfg.m)
    check_alpha(alpha, k)
    size = cfg.pool_size or pop.N
    pool = bold_pool(pop, alpha, size, cfg.seed, cfg.workers)
    cats_v, logw_v = _categories(k - 1, beta)
    cats_c, logw_c = _categories(k, beta)
    rel_v = np.abs(logw_v) >= _NEGLIGIBLE
    rel_c = np.abs(logw_c) >= _NEGLIGIBLE
    lam = alpha * k / 2
    n_in = cfg.inner_samples
    chunk = 256

    def one(b):
        rng = substream(cfg.seed, "interp", b)
        lo = b * chunk
        n = min(chunk, cfg.outer_samples - lo)
        var_vals, cl_vals = np.empty(n), np.empty(n)
        for i in range(n):
            dp, dm = rng.poisson(lam, size=2)
            side = []
            for d in (dp, dm):
                bold = pool[rng.integers(0, size, size=(d, k - 1))]
                side.append(_inner_logs(_category_probs(bold, cats_v), logw_v, rel_v, n_in, rng))
            # root + satisfies the dp clauses where it appears positively
            lv = np.logaddexp(side[0], side[1]) - math.log(2)
            var_vals[i] = _log_mean_exp(m * lv) / m
            bold = pool[rng.integers(0, size, size=(1, k))]
            lc = _inner_logs(_category_probs(bold, cats_c), logw_c, rel_c, n_in, rng)
            cl_vals[i] = _log_mean_exp(m * lc) / m
        return var_vals, cl_vals

    parts = _map(one, -(-cfg.outer_samples // chunk), cfg.workers)
    var_vals = np.concatenate([p[0] for p in parts])
    cl_vals = np.concatenate([p[1] for p in parts])
    if not np.all(np.isfinite(cl_vals)):
        raise ArithmeticError("inner clause average is not positive")
    c = (k - 1) * alpha
    vt = math.log(2) + float(var_vals.mean())
    ct = float(cl_vals.mean())
    n = var_vals.size
    se = math.sqrt(float(var_vals.var(ddof=1)) / n + c * c * float(cl_vals.var(ddof=1)) / n)
    return InterpEstimate(math.log(2) + float(var_vals.mean()) - c * ct, se, vt, ct, n, n_in)
