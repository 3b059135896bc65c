import math
from fractions import Fraction

import numpy as np
import pytest

from ksat1rsb import moments as mo


def test_entropy_endpoints():
    assert mo.H(0.0) == 0 and mo.H(1.0) == 0
    assert mo.H(0.5) == pytest.approx(math.log(2))


def test_phi1_zero_density():
    for k in range(2, 8):
        assert mo.phi1(k, 0) == math.log(2)


def test_alpha1_k3():
    assert mo.alpha1_root(3) == pytest.approx(-math.log(2) / math.log(7 / 8), abs=1e-12)
    assert abs(mo.alpha1_root(3) - 5.19089307) < 1e-8


def test_psi_below_phi():
    for k in range(2, 10):
        for a in (0.5, 2.0, 10.0):
            assert mo.psi1(k, a) < mo.phi1(k, a)


def test_psi_symmetric():
    z = np.linspace(0, 1, 101)
    assert np.allclose(mo.psi_z(5, 10.0, z), mo.psi_z(5, 10.0, 1 - z), atol=1e-14)


def test_exact_vs_brute_small():
    assert mo.exact_pair_moment(2, 1, 2, Fraction(1, 2), exact=True) == mo.brute_force_pair_moment(2, 1, 2, Fraction(1, 2))
    assert mo.brute_force_pair_moment(1, 2, 1, 1, literal=True) == mo.brute_force_pair_moment(1, 2, 1, 1)


def test_overlap_must_be_integral():
    with pytest.raises(ValueError):
        mo.exact_pair_moment(3, 1, 2, 0.5)


def test_budget():
    with pytest.raises(mo.BudgetExceeded):
        mo.brute_force_pair_moment(4, 3, 3, Fraction(1, 2), budget=10)


def test_curve_shape_and_csv(tmp_path):
    k = 6
    a = 0.9 * mo.alpha1_root(k)
    c = mo.moment_curve(k, a, "phi_minus_2phi1", 1001)
    assert c.values[500] == pytest.approx(0, abs=1e-12)
    # phi'(1/2) > 0, so the maximum sits to the right of 1/2
    assert min(c.flags["local_maxima"]) > 0.5
    assert 0.5 in mo.moment_curve(k, 10.0, "psi", 1001).flags["local_maxima"]
    p = tmp_path / "c.csv"
    mo.emit_curve(c, p, "hdr")
    lines = p.read_text().splitlines()
    assert lines[0] == "# hdr" and lines[1].startswith("z,value") and len(lines) == 1003
    with pytest.raises(ValueError):
        mo.moment_curve(k, a, "nope")
