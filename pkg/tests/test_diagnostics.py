import json
import math

import numpy as np
import pytest
from scipy.special import gammaln

from submonolayer.closedform import I2
from submonolayer.diagnostics import (DomainError, J_term, RateFit, check_lemma_rates, log_prefactor_P,
                                      log_prefactor_P_direct,
                                      decomposition, fit_rate, g_bound_point, g_exponent, g_factor,
                                      log_J1_tail, phi_continuous, prefactor_P, final_constant_series)
from submonolayer.model import ModelParams, make_explicit, monomer_only
from submonolayer.profiles import phi2, phi2_at_zero, scaled_observable


def test_prefactor_two_orders():
    direct = math.sqrt(2 * math.pi) * math.exp(-10) * 10 ** 8.5 / math.factorial(8)
    assert prefactor_P(2, 0.0, 10.0) == pytest.approx(direct, rel=1e-12)
    # second order: via gammaln of the integer argument
    alt = math.exp(0.5 * math.log(2 * math.pi) - 10 + 8.5 * math.log(10) - gammaln(9))
    assert prefactor_P(2, 0.0, 10.0) == pytest.approx(alt, rel=1e-12)
    for n, xi, tau in [(2, 0.0, 10.0), (3, -1.0, 50.0), (2, 1.5, 1e3)]:
        assert abs(log_prefactor_P(n, xi, tau) - log_prefactor_P_direct(n, xi, tau)) <= 1e-12


def test_prefactor_zero_xi_rate():
    # at xi = 0 the O(tau^-1/2) term vanishes: log P = (n - n^2)/(2 tau) - 1/(12 tau) + O(tau^-2)
    for n in (2, 3):
        for tau in (1e4, 1e6):
            lead = (n - n * n) / (2 * tau) - 1 / (12 * tau)
            assert log_prefactor_P(n, 0.0, tau) == pytest.approx(lead, rel=1e-3)


def test_prefactor_limits_and_domain():
    assert prefactor_P(2, 0.0, 1e8) == pytest.approx(1.0, abs=1e-7)
    assert prefactor_P(3, 1.0, 1e8) * math.exp(0.5) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(DomainError):
        prefactor_P(3, -5.0, 4.0)


def test_prefactor_slope_half_for_nonzero_xi():
    d4 = abs(prefactor_P(2, 1.0, 1e4) * math.exp(0.5) - 1)
    d6 = abs(prefactor_P(2, 1.0, 1e6) * math.exp(0.5) - 1)
    assert d6 / d4 == pytest.approx(0.1, rel=0.02)


def test_g_zero_and_domain():
    assert g_factor(2, 0.0, 100.0, 0.7) == 0.0
    with pytest.raises(DomainError):
        g_factor(2, 100.0 ** 0.25, 100.0, 0.0)
    with pytest.raises(DomainError):
        g_factor(2, -0.1, 100.0, 0.0)


def test_g_matches_direct_formula():
    n, tau, xi = 3, 400.0, -0.8
    for w in (0.3, 1.0, 1.7, 2.5):
        x = w ** n
        direct = -1 + (1 - x / math.sqrt(tau)) ** (tau + xi * math.sqrt(tau) - n) * \
            math.exp(x * math.sqrt(tau) + xi * x + x * x / 2)
        assert g_factor(n, w, tau, xi) == pytest.approx(direct, rel=1e-9, abs=1e-12)


def test_g_leading_term():
    # q = (n x - x^3/3 - xi x^2/2)/sqrt(tau) + O(1/tau) at fixed x = w^n
    n, xi = 2, 0.5
    for w in (0.5, 1.0, 1.3):
        x = w ** n
        lead = (n * x - x ** 3 / 3 - xi * x * x / 2)
        ratios = [g_factor(n, w, t, xi) * math.sqrt(t) / lead for t in (1e6, 1e8, 1e10)]
        assert abs(ratios[-1] - 1) < 1e-3
        assert abs(ratios[-1] - 1) < abs(ratios[0] - 1)


def test_g_bounded_beyond_root():
    for xi in (-1.0, 0.0, 1.5):
        for n in (2, 3):
            x_star = g_bound_point(n, xi)
            for tau in (1e2, 1e4):
                hi = tau ** 0.5
                xs = np.linspace(x_star, 0.999 * hi, 200)
                xs = xs[xs < hi]
                g = g_factor(n, xs ** (1 / n), tau, xi)
                assert np.all(np.abs(g) <= 1 + 1e-12)


def test_g_exponent_vectorised():
    w = np.array([0.0, 0.5, 1.0])
    q = g_exponent(2, w, 100.0, 0.0)
    assert q.shape == (3,) and q[0] == 0.0


def test_J1_converges_to_profile():
    val = J_term(1, 2, 0.0, 1e4)
    assert val == pytest.approx(phi2_at_zero(2), abs=1e-12)
    assert log_J1_tail(2, 0.0, 100.0) < math.log(1e-20)
    assert log_J1_tail(2, 0.0, 100.0) <= math.log(0.5) - 50


def test_J_argument_checks(traj2):
    with pytest.raises(ValueError):
        J_term(5, 2, 0.0, 10.0, traj2)
    with pytest.raises(ValueError):
        J_term(2, 2, 0.0, 10.0)
    with pytest.raises(DomainError):
        J_term(2, 2, 0.0, 2e6, traj2)


def test_J3_J4_bounded_ratios(traj2):
    r3 = [abs(J_term(3, 2, 0.0, t, traj2)) * math.sqrt(t) for t in (1e2, 1e3, 1e4, 1e5, 1e6)]
    r4 = [abs(J_term(4, 2, 0.0, t, traj2)) * math.sqrt(t) for t in (1e2, 1e3, 1e4, 1e5, 1e6)]
    assert max(r3) / min(r3) < 1.5
    assert max(r4) < 0.1


def test_J2_asymptotic_backend(traj2):
    p = ModelParams(2)
    vals = [2 * t ** 0.25 * J_term(2, 2, 0.0, t, traj2, params=p, fn_backend="asymptotic")
            for t in (1e3, 1e4, 1e5, 1e6)]
    fit = fit_rate(list(zip((1e3, 1e4, 1e5, 1e6), np.abs(vals))), with_log=True)
    assert fit.exponent < 0


def test_phi_integer_consistency(traj2):
    p = ModelParams(2)
    for j in (2, 12, 102):
        phi = phi_continuous(float(j), 50.0, p, traj2)
        ref = scaled_observable(p, j, 50.0, I2(j, 50.0, traj2))
        assert phi == pytest.approx(ref, rel=1e-8)
    with pytest.raises(DomainError):
        phi_continuous(1.0, 50.0, p, traj2)


def test_decomposition_identity(traj2):
    p = ModelParams(2)
    for xi, tau in [(1.0, 1e3), (-1.5, 300.0), (0.0, 1e5)]:
        assert decomposition(xi, tau, p, traj2)["rel_gap"] <= 1e-6


def test_fit_rate_examples():
    s = [10.0, 100.0, 1000.0, 1e4]
    f = fit_rate([(x, 3 * x ** -0.25) for x in s])
    assert f.exponent == pytest.approx(-0.25, abs=1e-12)
    assert f.amplitude == pytest.approx(3.0, rel=1e-10)
    assert f.r_squared == pytest.approx(1.0)
    f = fit_rate([(x, x ** -0.5 * math.log(x)) for x in s], with_log=True)
    assert f.exponent == pytest.approx(-0.5, abs=1e-12)
    f = fit_rate([(x, 2.0) for x in s])
    assert f.exponent == 0.0 and f.r_squared == 1.0
    assert isinstance(f, RateFit) and f.points_used == 4


def test_fit_rate_errors():
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (2.0, 1.0)])
    with pytest.raises(DomainError):
        fit_rate([(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)])
    with pytest.raises(ValueError):
        fit_rate([(1.0, 1.0), (1.0, 2.0), (3.0, 1.0)])
    with pytest.raises(DomainError):
        fit_rate([(0.5, 1.0), (2.0, 2.0), (3.0, 1.0)], with_log=True)


def test_check_lemma_rates_report(traj2):
    rep = check_lemma_rates(2, 1.0, [1e2, 1e3, 1e4, 1e5], traj2)
    json.dumps(rep)
    names = [c["name"] for c in rep["checks"]]
    assert names == ["P", "J1", "J3", "J4", "J2"]
    by = {c["name"]: c for c in rep["checks"]}
    assert by["P"]["verdict"] == "pass"
    assert by["J3"]["verdict"] == "pass"
    assert by["J1"]["verdict"] == "below floor"
    assert rep["fit_scales"] == [1e3, 1e4, 1e5]
    with pytest.raises(ValueError):
        check_lemma_rates(2, 1.0, [1e2, 1e3], traj2)


def test_final_constant_series_monomer_target_zero(traj2):
    p = ModelParams(2)
    rep = final_constant_series(0.0, [1e3, 1e4], p, traj2, monomer_only(p))
    assert rep["target"] == 0.0
    assert rep["nu0"] == 0.0
