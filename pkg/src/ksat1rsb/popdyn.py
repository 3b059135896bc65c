"""Population dynamics for the distributional recursion eta -> R(d, eta).

One new sample draws d+, d- ~ Pois(alpha k / 2) and, for each of the d+ + d-
child clauses, k-1 etas from the current population, and returns

    R = (1 - P-) P+ / (P+ + P- - P+ P-),   P = prod_clauses (1 - prod_j eta_j).

Two samplers are provided. ``exact`` draws every slot independently.
``pooled`` first builds a pool of L clause values log(1 - prod eta) from
uniform resampling and gives each new sample a window of d consecutive pool
entries at a uniform offset (wrapping at L). Each window has the right law;
windows of different samples overlap, which is the price for handling
alpha k / 2 in the thousands at N = 10^6. ``auto`` picks exact when the
per-sample slot count is small.

Randomness is drawn in fixed blocks of 2^16 positions, each from its own
substream keyed by (seed, purpose, iteration, block), so results do not
depend on the number of worker threads. Poisson draws use exact inversion
of separate uniform streams, which keeps them monotone in alpha for common
random numbers across densities.
"""
from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import special, stats

from ._rng import poisson_inv, substream

__all__ = [
    "Population", "RecursionDraw", "SnapshotError", "recursion_sample", "evolve",
    "evolve_step", "draw_sigmas", "coupled_evolve", "wasserstein1", "tail_diagnostics", "TailReport",
    "run_to_stationarity", "contraction_profile", "snapshot_save", "snapshot_load", "snapshot_dumps",
    "check_alpha", "ONE_MINUS",
]

BLOCK = 1 << 16
ONE_MINUS = 1.0 - 2.0 ** -53  # largest double below 1
_FIRST_STEP = 2 ** 32 - 1  # iteration tag of the step that seeds the second chain


class SnapshotError(ValueError):
    pass


def check_alpha(alpha: float, k: int) -> None:
    if not (0 <= alpha <= 2.0 ** (k + 2)):
        raise ValueError(f"alpha={alpha} outside the sanity window [0, 2^(k+2)]")


@dataclass
class Population:
    samples: np.ndarray
    k: int
    alpha: float
    iteration: int = 0
    seed: int = 0
    clamps: int = 0
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 1 or self.samples.size < 1:
            raise ValueError("population needs at least one sample")
        if np.any(self.samples < 0) or np.any(self.samples >= 1):
            raise ValueError("population samples must lie in [0, 1)")

    @property
    def N(self) -> int:
        return self.samples.size

    @classmethod
    def constant(cls, N: int, k: int, alpha: float, value: float = 0.5, seed: int = 0):
        return cls(np.full(int(N), float(value)), k, float(alpha), 0, seed)


# -- single draw ---------------------------------------------------------------------

@dataclass(frozen=True)
class RecursionDraw:
    """Degrees and the child etas, one (k-1)-tuple per child clause."""

    d_plus: int
    d_minus: int
    eta_plus: tuple
    eta_minus: tuple

    def __post_init__(self):
        if self.d_plus < 0 or self.d_minus < 0:
            raise ValueError("degrees must be nonnegative")
        if len(self.eta_plus) != self.d_plus or len(self.eta_minus) != self.d_minus:
            raise ValueError("one eta tuple per child clause is required")
        for group in (self.eta_plus, self.eta_minus):
            for c in group:
                for x in c:
                    if not 0 <= x < 1:
                        raise ValueError("eta entries must lie in [0, 1)")

    @classmethod
    def uniform(cls, d_plus: int, d_minus: int, k: int, value=0.5):
        row = tuple([value] * (k - 1))
        return cls(d_plus, d_minus, (row,) * d_plus, (row,) * d_minus)


def recursion_sample(draw: RecursionDraw):
    """R(d, eta). Plain arithmetic, so Fraction inputs give exact output."""
    def big_pi(group):
        out = 1
        for c in group:
            p = 1
            for x in c:
                p = p * x
            out = out * (1 - p)
        return out

    pp, pm = big_pi(draw.eta_plus), big_pi(draw.eta_minus)
    num, den = (1 - pm) * pp, pp + pm - pp * pm
    if isinstance(num, int) and isinstance(den, int):
        # no factors at all: keep int / int exact
        return Fraction(num, den)
    return num / den


# -- vectorised machinery ----------------------------------------------------------------

def _eta_from_sigmas(sp, sm):
    """R from log P+ and log P-, via its log-odds log(1-P-) + S+ - S-."""
    with np.errstate(divide="ignore", invalid="ignore"):
        g = sm - np.log(-np.expm1(sm)) - sp
    eta = special.expit(-g)
    eta[sm == 0] = 0.0
    hi = eta > ONE_MINUS
    n_clamp = int(hi.sum())
    if n_clamp:
        eta[hi] = ONE_MINUS
    return eta, n_clamp


def _nblocks(n):
    return max(1, -(-n // BLOCK))


def _map(fn, nb, workers):
    if workers <= 1 or nb == 1:
        return [fn(b) for b in range(nb)]
    with ThreadPoolExecutor(workers) as ex:
        return list(ex.map(fn, range(nb)))


def _degree_draws(n, lams, seed, it, tag, workers):
    """Nested degrees d_0 <= d_1 <= ... with d_i ~ Pois(lams[i])."""
    def one(b):
        size = min(BLOCK, n - b * BLOCK)
        u = substream(seed, tag, it, b).random(size)
        ds = [poisson_inv(u, lams[0])]
        for i in range(1, len(lams)):
            ui = substream(seed, tag + "inc", i, it, b).random(size)
            ds.append(ds[-1] + poisson_inv(ui, lams[i] - lams[i - 1]))
        return ds

    parts = _map(one, _nblocks(n), workers)
    return [np.concatenate([p[i] for p in parts]) for i in range(len(lams))]


def _pool_indices(L, npop, k, seed, it, workers):
    def one(b):
        size = min(BLOCK, L - b * BLOCK)
        return substream(seed, "pool", it, b).integers(0, npop, size=(size, k - 1))
    return _map(one, _nblocks(L), workers)


def _offsets(n, L, seed, tag, it, workers):
    def one(b):
        size = min(BLOCK, n - b * BLOCK)
        return substream(seed, tag, it, b).integers(0, L, size=size)
    return np.concatenate(_map(one, _nblocks(n), workers))


def _clause_logs(samples, idx_blocks, workers):
    def one(b):
        u = samples[idx_blocks[b]].prod(axis=1)
        return np.log1p(-u)
    return np.concatenate(_map(one, len(idx_blocks), workers))


def _window_sums(X, starts, lengths):
    C = np.concatenate([[0.0], np.cumsum(X)])
    return C[starts + lengths] - C[starts]


def _auto_method(lam, k):
    return "exact" if 2 * lam * (k - 1) <= 256 else "pooled"


def draw_sigmas(samples_list, lams, k, seed, it, method="auto", pool_factor=10, workers=1, n_out=None):
    """Log products (S+, S-) for ``n_out`` fresh draws per population.

    Population i uses degrees d_i (nested across i, nondecreasing lams) and
    the same clause indices, so the window of population i+1 extends that
    of population i. Returns a list of ``(S+, S-)`` pairs.
    """
    samples_list = [np.asarray(s, dtype=float) for s in samples_list]
    npop = samples_list[0].size
    if any(s.size != npop for s in samples_list):
        raise ValueError("coupled populations need equal sizes")
    if any(b < a for a, b in zip(lams, lams[1:])):
        raise ValueError("lams must be nondecreasing")
    n = npop if n_out is None else int(n_out)
    if method == "auto":
        method = _auto_method(lams[-1], k)
    d_plus = _degree_draws(n, lams, seed, it, "d+", workers)
    d_minus = _degree_draws(n, lams, seed, it, "d-", workers)
    out = []
    if method == "pooled":
        lam = lams[-1]
        L = max(int(pool_factor * npop), int(lam + 12 * math.sqrt(lam) + 100))
        dmax = max(int(d_plus[-1].max()), int(d_minus[-1].max()))
        if dmax > L:
            raise RuntimeError(f"degree {dmax} exceeds pool size {L}")
        idx = _pool_indices(L, npop, k, seed, it, workers)
        op = _offsets(n, L, seed, "o+", it, workers)
        om = _offsets(n, L, seed, "o-", it, workers)
        for s, dp, dm in zip(samples_list, d_plus, d_minus):
            X = _clause_logs(s, idx, workers)
            XX = np.concatenate([X, X])
            out.append((_window_sums(XX, op, dp), _window_sums(XX, om, dm)))
        return out
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    # exact: every slot of the largest population gets its own indices
    dp_last, dm_last = d_plus[-1], d_minus[-1]
    tot = dp_last + dm_last
    starts_p = np.concatenate([[0], np.cumsum(tot)[:-1]]).astype(np.int64)
    starts_m = starts_p + dp_last
    T = int(tot.sum())
    idx = _pool_indices(T, npop, k, seed, it, workers) if T else []
    for s, dp, dm in zip(samples_list, d_plus, d_minus):
        X = _clause_logs(s, idx, workers) if T else np.zeros(0)
        out.append((_window_sums(X, starts_p, dp), _window_sums(X, starts_m, dm)))
    return out


def evolve_step(samples_list, lams, k, seed, it, method="auto", pool_factor=10, workers=1):
    """One synchronous recursion step for coupled populations.

    Returns ``(list of new sample arrays, list of clamp counts)``.
    """
    outs, clamps = [], []
    for sp, sm in draw_sigmas(samples_list, lams, k, seed, it, method, pool_factor, workers):
        eta, c = _eta_from_sigmas(sp, sm)
        outs.append(eta)
        clamps.append(c)
    return outs, clamps


def evolve(pop: Population, iters: int, seed: int | None = None, method: str = "auto",
           pool_factor: int = 10, workers: int = 1) -> Population:
    """Apply the recursion ``iters`` times. Iteration numbers continue from
    ``pop.iteration`` so that evolve(evolve(p, a), b) == evolve(p, a+b)."""
    check_alpha(pop.alpha, pop.k)
    seed = pop.seed if seed is None else seed
    lam = pop.alpha * pop.k / 2
    x = pop.samples
    clamps = pop.clamps
    for t in range(iters):
        (x,), (c,) = evolve_step([x], [lam], pop.k, seed, pop.iteration + t, method, pool_factor, workers)
        clamps += c
    return Population(x, pop.k, pop.alpha, pop.iteration + iters, seed, clamps)


def coupled_evolve(pop_low: Population, pop_high: Population, alpha_low: float, alpha_high: float,
                   iters: int, seed: int, method: str = "auto", pool_factor: int = 10, workers: int = 1):
    """Evolve two densities with shared randomness (clause thinning coupling).

    The high-density sample has d = d_low + delta with delta Poisson of the
    excess mean, and its first d_low child clauses reuse the low sample's.
    """
    if alpha_low > alpha_high:
        raise ValueError("need alpha_low <= alpha_high")
    k = pop_low.k
    if pop_high.k != k:
        raise ValueError("populations disagree on k")
    check_alpha(alpha_high, k)
    lams = [alpha_low * k / 2, alpha_high * k / 2]
    a, b = pop_low.samples, pop_high.samples
    ca, cb = pop_low.clamps, pop_high.clamps
    for t in range(iters):
        (a, b), (c1, c2) = evolve_step([a, b], lams, k, seed, pop_low.iteration + t, method, pool_factor, workers)
        ca += c1
        cb += c2
    it = pop_low.iteration + iters
    return (Population(a, k, alpha_low, it, seed, ca), Population(b, k, alpha_high, it, seed, cb))


# -- diagnostics -------------------------------------------------------------------------

def wasserstein1(a, b) -> float:
    """W1 between two empirical laws (samples arrays or Populations)."""
    a = a.samples if isinstance(a, Population) else np.asarray(a, float)
    b = b.samples if isinstance(b, Population) else np.asarray(b, float)
    if a.size == 0 or b.size == 0:
        raise ValueError("empty population")
    if a.size == b.size:
        return float(np.mean(np.abs(np.sort(a) - np.sort(b))))
    return float(stats.wasserstein_distance(a, b))


@dataclass
class TailReport:
    s: np.ndarray
    envelope: np.ndarray
    logodds_frac: np.ndarray   # fraction with log(eta/(1-eta)) >= s
    low_frac: np.ndarray       # fraction with eta <= 1/2 - s
    tolerance: float

    @property
    def excess(self) -> float:
        return float(max(np.max(self.logodds_frac - self.envelope), np.max(self.low_frac - self.envelope)))

    @property
    def ok(self) -> bool:
        return self.excess <= self.tolerance

    @property
    def violations(self) -> list:
        out = []
        for name, f in (("logodds", self.logodds_frac), ("low", self.low_frac)):
            for s, v, e in zip(self.s, f, self.envelope):
                if v - e > self.tolerance:
                    out.append((name, float(s), float(v), float(e)))
        return out


def tail_diagnostics(pop, k: int | None = None, s_grid=None, tolerance: float | None = None) -> TailReport:
    """Empirical tails against the envelopes exp(-s 2^(k/4)) for s >= 2^(-k/4)."""
    x = pop.samples if isinstance(pop, Population) else np.asarray(pop, float)
    k = pop.k if k is None else k
    base = 2.0 ** (-k / 4)
    s = np.asarray(s_grid if s_grid is not None else base * np.array([1, 1.25, 1.5, 2, 3, 4, 6, 8, 12, 16]), float)
    if np.any(s < base * (1 - 1e-12)):
        raise ValueError("grid points must satisfy s >= 2^(-k/4)")
    with np.errstate(divide="ignore"):
        lo = np.sort(np.log(x) - np.log1p(-x))
    xs = np.sort(x)
    n = x.size
    logodds = 1 - np.searchsorted(lo, s, side="left") / n
    low = np.searchsorted(xs, 0.5 - s, side="right") / n
    env = np.exp(-s / base)
    tol = 5 / math.sqrt(n) if tolerance is None else tolerance
    return TailReport(s, env, logodds, low, tol)


def run_to_stationarity(k: int, alpha: float, N: int, seed: int, min_iters: int = 10,
                        max_iters: int | None = None, ratio_stop: float = 0.9,
                        method: str = "auto", pool_factor: int = 10, workers: int = 1) -> Population:
    """Iterate from delta_{1/2} until successive W1 stops shrinking.

    After ``min_iters`` steps the run stops at the first step whose W1 to the
    previous population exceeds ``ratio_stop`` times the previous W1: the
    distance has reached the 1/sqrt(N) sampling floor. ``max_iters``
    defaults to 20 k. ``history`` holds the successive W1 values.
    """
    check_alpha(alpha, k)
    max_iters = 20 * k if max_iters is None else max_iters
    pop = Population.constant(N, k, alpha, 0.5, seed)
    hist = []
    while pop.iteration < max_iters:
        new = evolve(pop, 1, seed, method, pool_factor, workers)
        hist.append(wasserstein1(new, pop))
        pop = new
        if pop.iteration >= min_iters and len(hist) >= 2 and hist[-1] > ratio_stop * hist[-2]:
            break
    pop.history = hist
    return pop


def contraction_profile(k: int, alpha: float, N: int, iters: int, seed: int,
                        pool_factor: int = 10, workers: int = 1) -> np.ndarray:
    """Coupling distances D_l = mean |B_l - A_l| with A_l ~ mu_l, B_l ~ mu_{l+1}.

    Both chains are driven by the same random maps; the difference is
    carried explicitly through the recursion with cancellation-free
    formulas, so D_l stays accurate far below machine epsilon. D_l bounds
    W1(mu_l, mu_{l+1}) of the empirical laws from above. Returns
    D_0, ..., D_{iters-1}.
    """
    check_alpha(alpha, k)
    lam = alpha * k / 2
    A = np.full(N, 0.5)
    (B,), _ = evolve_step([A], [lam], k, seed, _FIRST_STEP, "pooled", pool_factor, workers)
    delta = B - A
    out = []
    for it in range(iters):
        out.append(float(np.mean(np.abs(delta))))
        A, delta = _coupled_delta_step(A, delta, lam, k, seed, it, pool_factor, workers)
    return np.array(out)


def _coupled_delta_step(A, delta, lam, k, seed, it, pool_factor, workers):
    n = A.size
    L = max(int(pool_factor * n), int(lam + 12 * math.sqrt(lam) + 100))
    (dp,) = _degree_draws(n, [lam], seed, it, "d+", workers)
    (dm,) = _degree_draws(n, [lam], seed, it, "d-", workers)
    idx = np.concatenate(_pool_indices(L, n, k, seed, it, workers))
    B = A + delta
    a = A[idx]
    b = B[idx]
    dl = delta[idx]
    # prod B - prod A telescoped: sum_j (prod_{i<j} B_i) dl_j (prod_{i>j} A_i)
    pre = np.cumprod(np.concatenate([np.ones((L, 1)), b[:, :-1]], axis=1), axis=1)
    tail = np.cumprod(a[:, ::-1], axis=1)[:, ::-1]  # prod_{i>=j} a_i
    suf = np.concatenate([tail[:, 1:], np.ones((L, 1))], axis=1)
    du = np.sum(pre * dl * suf, axis=1)
    uA = a.prod(axis=1)
    XA = np.log1p(-uA)
    dX = np.log1p(-du / (1 - uA))
    op = _offsets(n, L, seed, "o+", it, workers)
    om = _offsets(n, L, seed, "o-", it, workers)
    XX, dXX = np.concatenate([XA, XA]), np.concatenate([dX, dX])
    sp, sm = _window_sums(XX, op, dp), _window_sums(XX, om, dm)
    dsp, dsm = _window_sums(dXX, op, dp), _window_sums(dXX, om, dm)
    etaA, _ = _eta_from_sigmas(sp, sm)
    etaB, _ = _eta_from_sigmas(sp + dsp, sm + dsm)
    with np.errstate(divide="ignore", invalid="ignore"):
        pA = np.exp(sm)
        dlog1m = np.log1p(-pA * np.expm1(dsm) / (1 - pA))
        dg = dsm - dlog1m - dsp
        d_eta = -np.expm1(dg) * etaB * (1 - etaA)
    bad = ~np.isfinite(d_eta)
    d_eta[bad] = (etaB - etaA)[bad]
    d_eta[(sm == 0) & (sm + dsm == 0)] = 0.0
    return etaA, d_eta


# -- snapshots ------------------------------------------------------------------------------

def snapshot_dumps(pop: Population, header: str | None = None) -> str:
    """Snapshot text; optional ``header`` lines go first as '#' comments."""
    buf = io.StringIO()
    if header:
        for line in header.splitlines():
            buf.write(f"# {line}\n")
    buf.write(f"POPDYN v1 k={pop.k} alpha={pop.alpha:.17g} iter={pop.iteration} "
              f"seed={pop.seed} N={pop.N}\n")
    np.savetxt(buf, pop.samples, fmt="%.17g", newline="\n")
    return buf.getvalue()


def snapshot_save(pop: Population, path, header: str | None = None) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(snapshot_dumps(pop, header))


def snapshot_load(path) -> Population:
    with open(path, "r", newline="") as fh:
        text = fh.read()
    while text.startswith("#"):
        text = text.partition("\n")[2]
    head, _, body = text.partition("\n")
    tok = head.split()
    if len(tok) != 7 or tok[0] != "POPDYN":
        raise SnapshotError("not a population snapshot")
    if tok[1] != "v1":
        raise SnapshotError(f"unsupported snapshot version {tok[1]!r}")
    try:
        kv = dict(t.split("=", 1) for t in tok[2:])
        k, alpha = int(kv["k"]), float(kv["alpha"])
        it, seed, N = int(kv["iter"]), int(kv["seed"]), int(kv["N"])
    except (KeyError, ValueError) as exc:
        raise SnapshotError(f"malformed header: {exc}") from None
    vals = body.split()
    if len(vals) != N:
        raise SnapshotError(f"header declares N={N} but the body holds {len(vals)} samples")
    try:
        x = np.array(vals, dtype=float)
    except ValueError as exc:
        raise SnapshotError(f"bad sample value: {exc}") from None
    return Population(x, k, alpha, it, seed)
