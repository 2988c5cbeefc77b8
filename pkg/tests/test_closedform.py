import math

import numpy as np
import pytest
from scipy.special import gammainc, gammaln

from submonolayer.closedform import (I1, I2, S3, S4, ApplicabilityError, DegenerateGeometryError,
                                     c_tilde, delta_j, j_star, log_sum, poisson_weight_log,
                                     scaling_point, split_sum_total, tau_from_xi)
from submonolayer.kinetics import MonomerTrajectory, TrajectoryRangeError, solve_monomer_bulk
from submonolayer.model import ModelParams, make_explicit, make_power_law, monomer_only


def test_delta_examples():
    assert delta_j(0.0, 17) == 1.0
    d = delta_j(2.0, 4)
    assert d == pytest.approx(0.381966, abs=1e-6)
    tau = 4 * d
    assert tau == pytest.approx(1.527864, abs=1e-6)
    assert tau + 2 * math.sqrt(tau) == pytest.approx(4.0, abs=1e-12)
    d = delta_j(-1.0, 9)
    assert d == pytest.approx(1.393487, abs=1e-6)
    tau = 9 * d
    assert tau == pytest.approx(12.54138, abs=1e-5)
    assert tau - math.sqrt(tau) == pytest.approx(9.0, abs=1e-12)


def test_delta_guard():
    with pytest.raises(DegenerateGeometryError):
        delta_j(10.0, 16, n=2)
    assert delta_j(10.0, 16) > 0  # no guard without n
    assert delta_j(-50.0, 16, n=2) > 1
    with pytest.raises(ValueError):
        delta_j(0.5, 0)


def test_delta_limit_bound():
    for xi in (-3.0, -0.5, 0.7, 2.5):
        for j in (int(4 * xi * xi) + 4, 1000, 10**6):
            assert abs(delta_j(xi, j) - 1) <= (abs(xi) + 1) / math.sqrt(j)


def test_scaling_point():
    sp = scaling_point(1000, 1.5, 2)
    assert sp.tau == pytest.approx(1000 * sp.delta, rel=1e-15)
    assert sp.tau + 1.5 * math.sqrt(sp.tau) == pytest.approx(1000, rel=1e-12)
    assert tau_from_xi(1000, 1.5) == sp.tau


def test_j_star():
    assert j_star(3, 0.0, 2) == 0.0
    assert j_star(102, 0.0, 2) == 90.0
    assert j_star(102, 1.5, 2) == 75.0
    with pytest.raises(ValueError):
        j_star(2, 0.0, 2)


def test_poisson_weight_log():
    assert poisson_weight_log(0, 5.0) == -5.0
    assert poisson_weight_log(10**4, 1e4) == pytest.approx(-0.5 * math.log(2 * math.pi * 1e4), abs=1e-4)
    arr = poisson_weight_log(np.array([0, 1, 2]), 2.0)
    assert arr.shape == (3,)


@pytest.mark.parametrize("tau", [0.3, 7.0, 150.0, 1e4])
def test_poisson_normalization(tau):
    m = np.arange(0, int(tau + 40 * math.sqrt(tau)) + 1)
    total = math.exp(log_sum(poisson_weight_log(m, tau)))
    assert abs(total - 1) <= 1e-12


def test_log_sum_edge_cases():
    assert log_sum(np.array([])) == -math.inf
    assert log_sum(np.array([-math.inf, -math.inf])) == -math.inf
    assert log_sum(np.array([1000.0, 1000.0])) == pytest.approx(1000 + math.log(2))


def test_I1_examples():
    p = ModelParams(2)
    assert I1(7, 3.0, monomer_only(p)) == 0.0
    d = make_explicit([(2, 1.0)], p)
    assert I1(4, 2.0, d) == pytest.approx(math.exp(-2) * 2.0, rel=1e-14)
    assert I1(4, 2.0, d) == pytest.approx(0.2706706, abs=1e-7)
    d = make_power_law(1.0, 1.5, 50, p)
    assert I1(9, 0.0, d) == d.c0(9)
    with pytest.raises(ValueError):
        I1(1, 1.0, d)


def test_I1_large_j_no_overflow():
    d = make_power_law(1.0, 2.0, 10**5, ModelParams(2))
    val = I1(10**5, 1e5, d)
    assert math.isfinite(val) and val > 0


@pytest.mark.parametrize("m", [0, 1, 10, 100, 10**4])
@pytest.mark.parametrize("n", [2, 3])
def test_I2_incomplete_gamma(m, n):
    kappa = 0.37
    for tau in (0.5 * (m + 1), float(m + 1), 2.0 * (m + 1) + 20):
        tr = MonomerTrajectory.constant(kappa, tau)
        expected = kappa ** (n - 1) * gammainc(m + 1, tau)
        assert I2(m + n, tau, tr, n=n) == pytest.approx(expected, rel=1e-8)


def test_I2_simple_values():
    tr = MonomerTrajectory.constant(1.0, 10.0)
    assert I2(2, 1.0, tr, n=2) == pytest.approx(0.6321206, abs=1e-7)
    assert I2(2, 0.0, tr, n=2) == 0.0
    with pytest.raises(ValueError):
        I2(2, 1.0, tr)  # synthetic trajectory carries no n
    with pytest.raises(TrajectoryRangeError):
        I2(2, 11.0, tr, n=2)


def test_c_tilde_tau_zero_and_positive():
    p = ModelParams(2)
    d = make_explicit([(2, 0.4), (6, 0.1)], p, c1_0=0.1)
    tr = solve_monomer_bulk(p, d, 20.0)
    for j in range(2, 10):
        assert c_tilde(j, 0.0, d, tr) == d.c0(j)
    m = monomer_only(p)
    trm = solve_monomer_bulk(p, m, 20.0)
    assert all(c_tilde(2, t, m, trm) > 0 for t in (1e-3, 0.5, 5.0, 20.0))


def test_c_tilde_satisfies_hierarchy():
    p = ModelParams(3)
    d = make_explicit([(3, 0.3), (5, 0.2)], p, c1_0=0.05)
    tr = solve_monomer_bulk(p, d, 60.0)
    h = 1e-3
    for j, tau in [(3, 2.0), (4, 5.0), (8, 7.5), (20, 18.0), (45, 40.0)]:
        deriv = (c_tilde(j, tau + h, d, tr) - c_tilde(j, tau - h, d, tr)) / (2 * h)
        prev = tr.c1(tau) ** (p.n - 1) if j == p.n else c_tilde(j - 1, tau, d, tr)
        rhs = prev - c_tilde(j, tau, d, tr)
        assert abs(deriv - rhs) <= 1e-6 * max(abs(prev), 1e-3)


def test_I1_linearity():
    p = ModelParams(2)
    d1 = make_explicit([(2, 0.4), (5, 0.1)], p)
    d2 = make_explicit([(3, 0.2), (5, 0.3)], p)
    comb = make_explicit([(2, 1.2), (3, 0.2), (5, 0.6)], p)
    for j, tau in [(5, 1.0), (9, 4.0)]:
        assert I1(j, tau, comb) == pytest.approx(3 * I1(j, tau, d1) + I1(j, tau, d2), rel=1e-14)


def test_split_sums_partition():
    p = ModelParams(2)
    d = make_power_law(1.0, 1.0, 2**14, p)
    for j, xi in [(300, 0.0), (2000, 1.0), (2**14, -1.5)]:
        assert S3(j, xi, d, p) + S4(j, xi, d, p) == pytest.approx(split_sum_total(j, xi, d, p), rel=1e-12)


def test_split_sum_rates():
    p = ModelParams(2)
    js = [2**k for k in range(8, 15)]
    for mu in (0.75, 1.0, 2.0):
        d = make_power_law(1.0, mu, 2**14, p)
        r3 = [S3(j, 0.0, d, p) / j ** (0.25 - mu / 2) for j in js]
        assert max(r3) / min(r3) < 2.0
    d = make_power_law(1.0, 2.0, 2**14, p)
    r4 = [S4(j, 0.0, d, p) * j ** 0.25 for j in js]
    assert max(r4) / min(r4) < 1.3
    d = make_power_law(1.0, 1.0, 2**14, p)
    r4 = np.array([S4(j, 0.0, d, p) * j ** 0.25 for j in js])
    steps = np.diff(r4)  # growth per doubling, roughly constant for log j growth
    assert np.all(steps > 0) and steps.max() / steps.min() < 1.5


def test_split_sum_applicability():
    p = ModelParams(2)
    with pytest.raises(ApplicabilityError):
        S3(100, 0.0, monomer_only(p), p)
    with pytest.raises(ApplicabilityError):
        S4(100, 0.0, make_power_law(1, 2, 50, p), p)
