"""Seeded substreams.

Every stochastic routine asks for a generator keyed by ``(seed, *stream)``.
The bit generator is Philox-4x64 (counter based) fed through
``SeedSequence``, so a given key produces the same numbers on every
platform and independently of how work is split across threads.
"""
from __future__ import annotations

import numpy as np
from scipy import special

__all__ = ["substream", "poisson_inv", "resolve_seed"]


def _tag(x) -> int:
    if isinstance(x, str):
        return int.from_bytes(x.encode()[:8].ljust(8, b"\0"), "little")
    return int(x)


def substream(seed: int, *stream) -> np.random.Generator:
    key = tuple(_tag(s) for s in stream)
    ss = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def resolve_seed(seed) -> int:
    """Integer seeds pass through; ``"auto"`` draws one from OS entropy."""
    if isinstance(seed, str):
        if seed != "auto":
            return int(seed)
        return int(np.random.SeedSequence().entropy % (2**63))
    return int(seed)


def poisson_inv(u: np.ndarray, lam: float) -> np.ndarray:
    """Poisson(lam) quantiles of the uniforms ``u`` by exact inversion.

    Inversion makes the draw a monotone function of ``lam`` for fixed ``u``,
    which is what common random numbers across densities need. Small means
    walk the CDF from zero; large means start from a Cornish-Fisher guess
    and walk a few steps using the regularized gamma CDF.
    """
    u = np.asarray(u, dtype=float)
    out = np.zeros(u.shape, dtype=np.int64)
    if lam <= 0 or u.size == 0:
        return out
    if lam <= 30.0:
        p = np.full(u.shape, np.exp(-lam))
        c = p.copy()
        x = np.zeros(u.shape, dtype=np.int64)
        act = u > c
        while act.any():
            i = np.nonzero(act)[0]
            x[i] += 1
            p[i] *= lam / x[i]
            c[i] += p[i]
            act[i] = (u[i] > c[i]) & (p[i] > 0)
        return x
    z = special.ndtri(np.clip(u, 1e-300, 1 - 1e-16))
    x = np.floor(lam + np.sqrt(lam) * z + (z * z - 1.0) / 6.0)
    x = np.maximum(x, 0.0)
    c = special.pdtr(x, lam)
    p = np.exp(x * np.log(lam) - lam - special.gammaln(x + 1.0))
    up = u > c
    while up.any():
        i = np.nonzero(up)[0]
        x[i] += 1
        p[i] *= lam / x[i]
        c[i] += p[i]
        up[i] = u[i] > c[i]
    down = (x > 0) & (u <= c - p)
    while down.any():
        i = np.nonzero(down)[0]
        c[i] -= p[i]
        p[i] *= x[i] / lam
        x[i] -= 1
        down[i] = (x[i] > 0) & (u[i] <= c[i] - p[i])
    return x.astype(np.int64)
