import math

import numpy as np
import pytest
from scipy.special import zeta

from submonolayer.model import (Explicit, InitialData, ModelParams, PowerLaw, ValidationError,
                                make_explicit, make_power_law, monomer_only, nu0)


def test_params_validation():
    assert ModelParams(2).alpha == 1.0
    for bad in [dict(n=1), dict(n=2.5), dict(n=2, alpha=0.0), dict(n=2, alpha=-1.0),
                dict(n=3, alpha=float("inf"))]:
        with pytest.raises(ValidationError):
            ModelParams(**bad)


def test_power_law_single_entry():
    p = ModelParams(3)
    d = make_power_law(1.0, 2.0, 3, p)
    k, c = d.support()
    assert k.tolist() == [3]
    assert c[0] == pytest.approx(1 / 9)
    assert d.c1_0 == 0.0


def test_power_law_values():
    p = ModelParams(2)
    d = make_power_law(1.0, 1.0, 10, p)
    assert d.c0(2) == 0.5
    assert d.c0(10) == pytest.approx(0.1)
    assert d.c0(11) == 0.0
    assert d.as_vector(12).tolist()[-2:] == [0.0, 0.0]


def test_power_law_rejects_bad_ranges():
    p = ModelParams(2)
    with pytest.raises(ValidationError):
        make_power_law(0.0, 1.0, 10, p)
    with pytest.raises(ValidationError):
        make_power_law(1.0, -1.0, 10, p)
    with pytest.raises(ValidationError):
        make_power_law(1.0, 1.0, 1, p)


def test_nu0_examples():
    p2, p3 = ModelParams(2), ModelParams(3)
    assert nu0(monomer_only(p2)) == 0.0
    assert nu0(make_explicit([(2, 1.0)], p2)) == 1.0
    assert nu0(make_power_law(1, 2, 100, p2)) == pytest.approx(0.634983, abs=1e-6)


def test_nu0_partial_zeta_sum():
    d = make_power_law(0.5, 1.5, 10**4, ModelParams(3))
    direct = 0.5 * math.fsum(j ** -1.5 for j in range(3, 10**4 + 1))
    assert nu0(d) == pytest.approx(direct, rel=1e-14)
    # the infinite zeta form differs by the tail beyond 1e4, about 0.5 * 2 / sqrt(1e4)
    zeta_form = 0.5 * (zeta(1.5) - 1 - 2 ** -1.5)
    assert zeta_form - nu0(d) == pytest.approx(0.5 * 2 / math.sqrt(10**4), rel=1e-3)


def test_nu0_additive_over_entries():
    p = ModelParams(2)
    a = make_explicit([(2, 0.3), (5, 0.25)], p)
    b = make_explicit([(7, 0.125)], p)
    both = make_explicit([(2, 0.3), (5, 0.25), (7, 0.125)], p)
    assert nu0(both) == nu0(a) + nu0(b)


def test_explicit_validation():
    with pytest.raises(ValidationError):
        InitialData(n=2, tail=Explicit(((1, 0.5),)))
    with pytest.raises(ValidationError):
        InitialData(n=2, tail=Explicit(((3, -0.5),)))
    with pytest.raises(ValidationError):
        InitialData(n=2, tail=Explicit(((3, 0.5), (3, 0.1))))
    with pytest.raises(ValidationError):
        InitialData(n=2, c1_0=-1.0)


def test_support_and_vector():
    d = make_explicit([(4, 0.2), (2, 0.1)], ModelParams(2), c1_0=0.3)
    k, c = d.support()
    assert k.tolist() == [2, 4]
    assert np.allclose(d.as_vector(5), [0.1, 0.0, 0.2, 0.0])
    assert d.j_max == 4
    assert monomer_only(ModelParams(3)).j_max == 2
    assert isinstance(make_power_law(1, 1, 5, ModelParams(2)).tail, PowerLaw)
