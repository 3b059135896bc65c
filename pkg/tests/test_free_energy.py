import math

import numpy as np
import pytest

from ksat1rsb import free_energy as fe
from ksat1rsb import popdyn as pd


def test_delta_zero_gives_zero():
    est = fe.phi_estimate(pd.Population.constant(1000, 3, 4.0, 0.0), 4.0, 5000, seed=1)
    assert est.mean == 0 and est.stderr == 0


def test_hand_integrand():
    v = fe.phi_integrand(pd.RecursionDraw.uniform(0, 0, 3), [0.5] * 3, 4.0, 3)
    assert v == pytest.approx(-8 * math.log(7 / 8), abs=1e-15)


def test_seed_consistency_half_population():
    pop = pd.Population.constant(10 ** 5, 3, 4.0, 0.5)
    a = fe.phi_estimate(pop, 4.0, 10 ** 6, seed=1)
    b = fe.phi_estimate(pop, 4.0, 10 ** 6, seed=2)
    assert abs(a.mean - b.mean) <= 3 * (a.stderr + b.stderr)


def test_control_and_direct_agree():
    pop = pd.run_to_stationarity(3, 4.0, 20000, seed=1)
    c = fe.phi_estimate(pop, 4.0, 2 * 10 ** 5, seed=3)
    d = fe.phi_estimate(pop, 4.0, 2 * 10 ** 5, seed=3, method="direct")
    assert c.method == "control" and d.method == "direct"
    assert abs(c.mean - d.mean) <= 4 * math.hypot(c.stderr, d.stderr)
    assert c.stderr < d.stderr


def test_moment_series():
    x = np.random.default_rng(0).random(2000) * 0.9
    direct = np.mean(np.log1p(-x[np.random.default_rng(1).integers(0, 2000, (400000, 2))].prod(1)))
    assert fe.log_clause_mean(x, 2) == pytest.approx(direct, abs=3e-3)
    assert fe.log_clause_mean(np.full(3, 1 - 1e-9), 1, nmax=50) is None


def test_coupled_estimates_decrease():
    k = 8
    a1, a2 = 2 ** k * math.log(2) - 2, 2 ** k * math.log(2) - 1
    lo, hi = pd.Population.constant(20000, k, a1), pd.Population.constant(20000, k, a2)
    lo, hi = pd.coupled_evolve(lo, hi, a1, a2, 12, seed=2)
    e1, e2 = fe.phi_coupled([lo, hi], [a1, a2], 50000, seed=2)
    assert e1.mean > e2.mean


def test_col_terms_examples():
    c = fe.col_terms(0, 0, [], [], [0.5, 0.5, 0.5])
    assert c.z_dot == 1 and c.z_hat == pytest.approx(7 / 27, abs=1e-15)
    assert fe.col_terms(0, 0, [], [], [0.0, 0.0, 0.0]).z_bar == pytest.approx(1 / 6)
    with pytest.raises(ValueError):
        fe.col_terms(1, 0, [], [], [0.5, 0.5, 0.5])


def test_col_oracle_examples():
    q = fe.qhat_from_uhat(0.3)
    assert fe.col_term_oracle(1, 0, [q]) == pytest.approx(fe.col_terms(1, 0, [[0.3]], [], [0.1, 0.1]).z_dot, abs=1e-12)
    assert fe.col_term_oracle(1, 1, [q, q]) == pytest.approx(
        fe.col_terms(1, 1, [[0.3]], [[0.3]], [0.1, 0.1]).z_dot, abs=1e-12)
    yellow = [0.0, 1.0, 0.0, 0.0]
    assert fe.col_term_oracle(2, 0, [yellow, yellow]) == 0
    with pytest.raises(fe.BudgetExceeded):
        fe.col_term_oracle(21, 0, [q] * 21)


def test_edge_oracle():
    bold = (0.3, 0.5, 0.2)
    u = 0.4
    z = fe.edge_term_oracle(fe.qdot_from_bold(*bold), fe.qhat_from_uhat(u))
    assert z == pytest.approx((1 - u * 0.5) / ((3 - 2 * u) * (2 - 0.5)), abs=1e-15)


def test_interp_u_examples():
    _, _, tot = fe.interp_u([1, -1, 1], [0, 0, 0], 2.0)
    assert tot == pytest.approx(1 - (1 - math.exp(-2)) / 8, abs=1e-15)
    assert fe.interp_u([1, 1], [0.3, -1], 0.0) == (1.0, 1.0, 1.0)
    for a, b in zip(fe.interp_u([-1, -1], [1, 1], 1), fe.interp_u_enum([-1, -1], [1, 1], 1)):
        assert a == pytest.approx(b, abs=1e-12)


def test_interp_bound_degenerate_and_reproducible():
    pop = pd.run_to_stationarity(4, 10.0, 5000, seed=1)
    cfg = fe.InterpolationConfig(4, 10.0, 0.0, 0.5, 100, 20, seed=1)
    assert fe.interp_bound(cfg, pop).value == math.log(2)
    cfg = fe.InterpolationConfig(4, 10.0, 3.0, None, 200, 300, seed=4)
    a, b = fe.interp_bound(cfg, pop), fe.interp_bound(cfg, pop)
    assert a == b and math.isfinite(a.value)
    with pytest.raises(ValueError):
        fe.InterpolationConfig(4, 10.0, 3.0, 1.5)


def test_threshold_config_and_audit(tmp_path):
    cfg = fe.ThresholdConfig(3)
    assert cfg.alpha_lbd == pytest.approx(8 * math.log(2) - 2)
    with pytest.raises(ValueError):
        fe.ThresholdConfig(2)
    with pytest.raises(ValueError):
        fe.ThresholdConfig(5, alpha_lbd=30, alpha_ubd=20)
    res = fe.ThresholdResult(1.5, 1.0, 2.0, [fe.ProbeRecord(0, 1.0, 0.1, 0.01, 10, 12, 7, 10, True)], {}, [2])
    path = tmp_path / "a.csv"
    fe.write_audit(res, path, "hdr")
    lines = path.read_text().splitlines()
    assert lines[0] == "# hdr" and "undecided probe 2" in lines[1]
    assert "probe,alpha,phi_mean,phi_stderr,pop_size,iters,seed" in lines


def test_small_threshold_bracket():
    cfg = fe.ThresholdConfig(5, tol=0.2, pop_size=20000, seed=3)
    res = fe.find_threshold(cfg)
    assert cfg.alpha_lbd < res.alpha_star < cfg.alpha_ubd
    assert res.endpoints["lbd"].mean > 0 > res.endpoints["ubd"].mean


def test_bracket_failure():
    cfg = fe.ThresholdConfig(5, pop_size=5000, seed=1, alpha_lbd=2.0, alpha_ubd=3.0)
    with pytest.raises(fe.BracketFailure) as exc:
        fe.find_threshold(cfg)
    assert set(exc.value.estimates) == {"lbd", "ubd"}
