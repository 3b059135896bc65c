"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``. The population
dynamics and threshold criteria take several minutes.
"""
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from ksat1rsb import cluster_models as cm
from ksat1rsb import free_energy as fe
from ksat1rsb import moments as mo
from ksat1rsb import popdyn as pd
from ksat1rsb import preprocess as pp
from ksat1rsb import tree_bp as tb
from ksat1rsb.factor_graph import drop_tautologies, generate_instance


def _wp_equal(a, b):
    return np.array_equal(a.mdot, b.mdot) and np.array_equal(a.mhat, b.mhat)


def test_moment_identities(criterion):
    t0 = time.time()
    rng = np.random.default_rng(1)
    worst = 0.0
    dpsi, dphi_min = 0.0, np.inf
    h = 1e-6
    for _ in range(100):
        k = int(rng.integers(2, 13))
        a = float(rng.uniform(0, 1) * mo.alpha1_root(k)) or mo.alpha1_root(k)
        p1, s1 = mo.phi1(k, a), mo.psi1(k, a)
        worst = max(worst, abs(mo.phi_z(k, a, 0.5) - 2 * p1), abs(mo.phi_z(k, a, 1.0) - p1),
                    abs(mo.phi_z(k, a, 0.0) - s1))
        dpsi = max(dpsi, abs(mo.psi_z(k, a, 0.5 + h) - mo.psi_z(k, a, 0.5 - h)) / (2 * h))
        dphi_min = min(dphi_min, (mo.phi_z(k, a, 0.5 + h) - mo.phi_z(k, a, 0.5 - h)) / (2 * h))
    dt = time.time() - t0
    ok = worst <= 1e-12 and dpsi <= 1e-8 and dphi_min > 0 and dt < 1
    criterion(1, ok, f"identity gap {worst:.1e}, |psi'(1/2)| {dpsi:.1e}, min phi'(1/2) {dphi_min:.1e}, {dt:.2f}s")
    assert ok


def test_exact_pair_moment(criterion):
    t0 = time.time()
    cases = bad = 0
    for n in range(1, 5):
        for m in range(0, 4):
            for k in range(1, 4):
                for j in range(n + 1):
                    z = Fraction(j, n)
                    cases += 1
                    if mo.exact_pair_moment(n, m, k, z, exact=True) != mo.brute_force_pair_moment(n, m, k, z):
                        bad += 1
    dt = time.time() - t0
    ok = bad == 0 and dt < 60
    criterion(2, ok, f"{cases} cases, {bad} mismatches, {dt:.1f}s")
    assert ok


def test_first_moment_root(criterion):
    a3 = mo.alpha1_root(3)
    gap = abs(mo.alpha1_bisect(3) - a3)
    closed = -math.log(2) / math.log(7 / 8)
    below = all(mo.alpha1_root(k) < 2 ** k * math.log(2) for k in range(2, 41))
    ok = gap <= 1e-9 and abs(a3 - closed) <= 1e-12 and below
    criterion(3, ok, f"alpha1(3)={a3:.12f}, bisection gap {gap:.1e}, below 2^k ln2 for k<=40: {below}")
    assert ok


def _instances():
    for i in range(500):
        rng = np.random.default_rng(i)
        n = int(rng.integers(1, 11))
        m = int(rng.integers(0, 13))
        yield i, generate_instance(n, None, 3, mode="fixed_m", m=m, seed=i)


def test_bijection_suite(criterion):
    t0 = time.time()
    bad_count = bad_trip = 0
    for i, g in _instances():
        F, W, C = cm.enumerate_frozen(g), cm.enumerate_warnings(g), cm.enumerate_colorings(g)
        if not len(F) == len(W) == len(C):
            bad_count += 1
        for x in F:
            if not np.array_equal(cm.wp_to_frozen(cm.frozen_to_wp(x, g), g), x):
                bad_trip += 1
        for w in W:
            if not _wp_equal(cm.frozen_to_wp(cm.wp_to_frozen(w, g), g), w):
                bad_trip += 1
            if not _wp_equal(cm.coloring_to_wp(cm.wp_to_coloring(w, g), g), w):
                bad_trip += 1
        for s in C:
            if not np.array_equal(cm.wp_to_coloring(cm.coloring_to_wp(s, g), g), s):
                bad_trip += 1
    dt = time.time() - t0
    ok = bad_count == 0 and bad_trip == 0 and dt < 300
    criterion(4, ok, f"500 instances: {bad_count} count mismatches, {bad_trip} round-trip failures, {dt:.0f}s")
    assert ok


def test_coarsen_cluster_suite(criterion):
    t0 = time.time()
    bad = taut = 0
    for i, g in _instances():
        red = drop_tautologies(g)
        taut += red.m < g.m
        if not cm.coarsen_consistent(red):
            bad += 1
    gad, names = cm.cube_coarsen_gadget(3)
    sols = cm.enumerate_solutions(gad)
    u = names["u"] - 1
    gadget_ok = True
    for cl in cm.clusters(sols, gad.n):
        xs = cm.solutions_to_x(cl, gad.n)
        co = {int(cm.coarsen(x, gad)[u]) for x in xs}
        cu = int(cm.cube(xs)[u])
        gadget_ok &= co == {0} and cu == 1
    dt = time.time() - t0
    ok = bad == 0 and gadget_ok and dt < 300
    criterion(5, ok, f"{bad} inconsistent instances ({taut} had tautologies removed), "
                     f"gadget coarsen_u=f cube_u=+: {gadget_ok}, {dt:.0f}s")
    assert ok


def _tree_cases(n):
    rng = np.random.default_rng(6)
    caps = {2: 15, 3: 8, 4: 5}
    for i in range(n):
        k = int(rng.choice([2, 3, 4]))
        yield i, k, int(rng.integers(1, caps[k] + 1))


def test_tree_bp_exactness(criterion):
    t0 = time.time()
    err_m = err_z = err_r = 0.0
    for i, k, nc in _tree_cases(200):
        g = tb.random_factor_tree(k, nc, seed=i)
        w = tb.random_weights(g, seed=i)
        ms = tb.solve_tree_bp(g, w)
        edge, verts, _, _ = tb.gibbs_marginals(g, w)
        for e in edge:
            err_m = max(err_m, max(abs(a - b) for a, b in zip(tb.edge_marginal(ms.qdot[e], ms.qhat[e]), edge[e])))
        for vx, gm in verts.items():
            bm = tb.vertex_marginal(g, w, ms, vx)
            err_m = max(err_m, max(abs(bm.get(p, 0) - gm.get(p, 0)) for p in set(bm) | set(gm)))
        err_z = max(err_z, tb.z_identity_gap(g, ms))
        w2 = tb.redistribute_weights(g, w)
        edge2, verts2, _, _ = tb.gibbs_marginals(g, w2)
        for e in edge:
            err_r = max(err_r, max(abs(a - b) for a, b in zip(edge2[e], edge[e])))
        for vx, gm in verts.items():
            g2 = verts2[vx]
            err_r = max(err_r, max(abs(g2.get(p, 0) - gm.get(p, 0)) for p in set(g2) | set(gm)))
    dt = time.time() - t0
    ok = err_m <= 1e-10 and err_z <= 1e-12 and err_r <= 1e-10 and dt < 120
    criterion(6, ok, f"200 trees: marginal err {err_m:.1e}, z gap {err_z:.1e}, "
                     f"redistribution err {err_r:.1e}, {dt:.0f}s")
    assert ok


def test_correspondence_suite(criterion):
    rel_ok = True
    worst_res = 0.0
    for i in range(100):
        k = 2 + i % 3
        g = tb.random_factor_tree(k, 1 + i % 6, seed=100 + i)
        ms = tb.eta_to_messages(tb.tree_etas(g, exact=True))
        for q in ms.qhat.values():
            rel_ok &= q[cm.B] == q[cm.G] == q[cm.Y]
        for q in ms.qdot.values():
            rel_ok &= q[cm.R] == q[cm.B] + q[cm.G]
        exact = tb.bp_residual(g, tb.boundary_weights(g, Fraction(1)), ms)
        rel_ok &= exact == 0
        fl = tb.eta_to_messages(tb.tree_etas(g))
        worst_res = max(worst_res, tb.bp_residual(g, tb.boundary_weights(g), fl))
    leaf = [tb.bp_leaf(s, [1, 1, 0], 1)[0] for s in (1, -1)]
    third = Fraction(1, 3)
    leaf_ok = all(list(q) == [third, third, 0, third] for q in
                  ([tb.bp_leaf(s, [Fraction(1), Fraction(1), Fraction(0)], Fraction(1))[0] for s in (1, -1)]))
    leaf_ok &= all(abs(a - b) < 1e-15 for q in leaf for a, b in zip(q, [1 / 3, 1 / 3, 0, 1 / 3]))
    ok = rel_ok and worst_res <= 1e-13 and leaf_ok
    criterion(7, ok, f"relations exact: {rel_ok}, float residual {worst_res:.1e}, leaf uniform on r,y,b: {leaf_ok}")
    assert ok


@pytest.mark.slow
def test_population_dynamics(criterion):
    t0 = time.time()
    p0 = pd.Population.constant(1000, 8, 170.0, 0.0)
    delta0 = bool(np.all(pd.evolve(p0, 3, seed=1).samples == 0))
    F = Fraction
    hand = [pd.recursion_sample(pd.RecursionDraw.uniform(dp, dm, 3, F(1, 2))) for dp, dm in ((0, 0), (0, 1), (1, 1))]
    hand_ok = hand == [0, F(1, 4), F(1, 5)]
    worst_ratio, worst_tail = 0.0, -np.inf
    tail_ok = True
    N = 10 ** 5
    for k in (8, 10):
        for alpha in (2 ** k * math.log(2) - 2, 2 ** k * math.log(2)):
            for seed in range(10):
                D = pd.contraction_profile(k, alpha, N, 31, seed)
                worst_ratio = max(worst_ratio, float(np.median(D[6:31] / D[5:30])))
                pop = pd.run_to_stationarity(k, alpha, N, seed)
                rep = pd.tail_diagnostics(pop)
                worst_tail = max(worst_tail, rep.excess)
                tail_ok &= rep.ok
    dt = time.time() - t0
    ok = delta0 and hand_ok and worst_ratio <= 0.9 and tail_ok
    criterion(8, ok, f"delta0 fixed: {delta0}, hand cases {[str(h) for h in hand]}, worst median ratio "
                     f"{worst_ratio:.3f}, worst tail excess {worst_tail:.1e} (tol {5 / math.sqrt(N):.1e}), {dt:.0f}s")
    assert ok


@pytest.mark.slow
def test_threshold(criterion):
    t0 = time.time()
    k = 10
    cfg = fe.ThresholdConfig(k, tol=0.05, pop_size=10 ** 6, seed=7)
    res = fe.find_threshold(cfg)
    lo, hi = res.endpoints["lbd"], res.endpoints["ubd"]
    sep = lo.mean > 3 * lo.stderr and hi.mean < -3 * hi.stderr
    inside = cfg.alpha_lbd < res.alpha_star < cfg.alpha_ubd
    ref = 2 ** k * math.log(2) - (1 + math.log(2)) / 2
    dt = time.time() - t0
    ok = sep and inside and abs(res.alpha_star - ref) <= 0.2 and dt <= 1800
    criterion(9, ok, f"Phi(lbd)={lo.mean:.3e}+-{lo.stderr:.1e}, Phi(ubd)={hi.mean:.3e}+-{hi.stderr:.1e}, "
                     f"alpha*={res.alpha_star:.4f} (ref {ref:.4f}), {len(res.audit)} estimates, {dt:.0f}s")
    assert ok


def test_color_terms(criterion):
    rng = np.random.default_rng(10)
    worst = 0.0
    for t in range(500):
        k = int(rng.integers(2, 5))
        dp, dm = (int(x) for x in rng.integers(0, 6, 2))
        ep, em = rng.random((dp, k - 1)) * 0.999, rng.random((dm, k - 1)) * 0.999
        bold = []
        for _ in range(k):
            b = rng.dirichlet([1, 1, 1])
            bold.append(b)
        ec = np.array([b[1] for b in bold])
        c = fe.col_terms(dp, dm, ep, em, ec)
        qh = [fe.qhat_from_uhat(float(np.prod(r))) for r in list(ep) + list(em)]
        worst = max(worst, abs(fe.col_term_oracle(dp, dm, qh) - c.z_dot))
        worst = max(worst, abs(fe.clause_term_oracle([fe.qdot_from_bold(*b) for b in bold]) - c.z_hat))
    ok = worst <= 1e-12
    criterion(10, ok, f"500 cases, worst |closed - enumeration| {worst:.1e}")
    assert ok


@pytest.mark.slow
def test_interpolation_bound(criterion):
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(500):
        k = int(rng.integers(1, 13))
        L = rng.choice([1, -1], k)
        rho = rng.normal(0, 2, k)
        beta = float(rng.exponential(3))
        a, b = fe.interp_u(L, rho, beta), fe.interp_u_enum(L, rho, beta)
        worst = max(worst, max(abs(x - y) for x, y in zip(a, b)))
    k = 6
    alpha = 2 ** k * math.log(2)
    pop = pd.run_to_stationarity(k, alpha, 10 ** 5, 3)
    zero = fe.interp_bound(fe.InterpolationConfig(k, alpha, 0.0, 1 / 6, 1000, 200, 1), pop).value
    ests = [fe.interp_bound(fe.InterpolationConfig(k, alpha, 36.0, 1 / 6, 1000, 10 ** 4, s), pop) for s in (1, 2)]
    diff = abs(ests[0].value - ests[1].value)
    sig = math.hypot(ests[0].stderr, ests[1].stderr)
    finite = all(math.isfinite(e.value) for e in ests)
    ok = worst <= 1e-12 and zero == math.log(2) and finite and diff <= 3 * sig
    criterion(11, ok, f"interp_u worst {worst:.1e}, beta=0 value exact: {zero == math.log(2)}, "
                      f"seeds {ests[0].value:.4f}+-{ests[0].stderr:.3f} vs {ests[1].value:.4f}+-{ests[1].stderr:.3f}")
    assert ok


def test_preprocessing(criterion):
    t0 = time.time()
    rng = np.random.default_rng(12)
    bound_ok = True
    for i in range(1000):
        k = int(rng.integers(2, 5))
        tree = tb.random_factor_tree(k, int(rng.integers(1, 15)), seed=i)
        size = int(rng.integers(1, tree.n + 1))
        A = rng.choice(np.arange(1, tree.n + 1), size=size, replace=False).tolist()
        bound_ok &= pp.spanning_forest_bound_check(tree, A)[2]
    prop_ok = True
    for i in range(200):
        g = generate_instance(int(rng.integers(5, 60)), float(rng.uniform(0.2, 3)), 3, seed=i)
        A = set(rng.choice(np.arange(1, g.n + 1), size=int(rng.integers(0, 4)), replace=False).tolist())
        Bx = A | set(rng.choice(np.arange(1, g.n + 1), size=int(rng.integers(0, 4))).tolist())
        cA, cB = pp.bsp(A, g), pp.bsp(Bx, g)
        prop_ok &= A <= cA and cA <= cB and pp.bsp(cA, g) == cA
    term_ok = True
    for s in range(100):
        g = generate_instance(1000, 2 ** 3 * math.log(2) - 2, 3, seed=s)
        labels = pp.random_labels(g.n, s, l_max=10 ** 6)
        A = pp.improper_variables(g, 2.0, labels) or {1}
        res = pp.bsp_prime(A, g, 2.0)
        rest = [v for v in pp.trigger_set(res.graph, 0.6) if res.graph.alive_v[v]]
        term_ok &= not rest
    dt = time.time() - t0
    ok = bound_ok and prop_ok and term_ok
    criterion(12, ok, f"forest bound on 1000 trees: {bound_ok}, bsp monotone/idempotent: {prop_ok}, "
                      f"bsp_prime ends with no trigger on 100 graphs: {term_ok}, {dt:.0f}s")
    assert ok
