import math

import mpmath
import numpy as np
import pytest
import scipy.special as sps
from hypothesis import given, settings
from hypothesis import strategies as st

from paraholo.dtn2d import (
    BesselRangeError,
    bessel_jy,
    check_sign_properties,
    dtn_symbol,
    hankel_h1,
    wronskian_defect,
)


def test_h0_at_one():
    assert hankel_h1(0, 1.0) == pytest.approx(0.7651976866 + 0.0882569642j, abs=1e-10)


def test_h1_at_one():
    assert hankel_h1(1, 1.0) == pytest.approx(0.4400505857 - 0.7812128213j, abs=1e-10)


@pytest.mark.parametrize("n", [0, 1, 2, 7, 30])
@pytest.mark.parametrize("z", [1e-3, 0.37, 5.0, 11.99, 12.01, 47.0, 900.0, 1e4])
def test_hankel_against_scipy(n, z):
    ref = sps.hankel1(n, z)
    if not np.isfinite(ref):
        pytest.skip("reference overflows")
    assert abs(hankel_h1(n, z) - ref) <= 1e-10 * abs(ref)


@pytest.mark.parametrize("n,z", [(0, 2.5), (3, 0.02), (25, 40.0), (120, 80.0)])
def test_hankel_against_mpmath(n, z):
    mpmath.mp.dps = 30
    ref = complex(mpmath.hankel1(n, z))
    assert abs(hankel_h1(n, z) - ref) <= 1e-10 * abs(ref)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 60), st.floats(0.5, 200.0))
def test_wronskian(n, z):
    assert wronskian_defect(n, z) <= 1e-10


def test_hankel_overflow_is_reported():
    with pytest.raises(BesselRangeError):
        hankel_h1(200, 1e-3)


def test_range_checks():
    with pytest.raises(BesselRangeError):
        hankel_h1(201, 1.0)
    with pytest.raises(BesselRangeError):
        dtn_symbol(0, 0.0)
    with pytest.raises(BesselRangeError):
        dtn_symbol(0, 2e4)


def test_scaled_y_recovers_huge_values():
    J, y, scale = bessel_jy(200, 1.0)
    log_y = math.log(abs(y[200])) + scale[200]
    mpmath.mp.dps = 30
    assert log_y == pytest.approx(float(mpmath.log(abs(mpmath.bessely(200, 1.0)))), rel=1e-12)


def test_symbol_n0_z1():
    s = dtn_symbol(0, 1.0)
    h0, h1 = complex(mpmath.hankel1(0, 1)), complex(mpmath.hankel1(1, 1))
    assert s.value == pytest.approx(-h1 / h0, abs=1e-12)
    # the stated 4-significant-figure value
    assert s.value == pytest.approx(-0.4514 + 1.0731j, abs=2e-4)
    assert s.value.imag > 0 and s.value.real <= 0


@pytest.mark.parametrize("n", [1, 4, 49, 150])
@pytest.mark.parametrize("z", [1.0, 10.0, 100.0])
def test_symbol_matches_mpmath(n, z):
    mpmath.mp.dps = 40
    ratio = mpmath.hankel1(n - 1, z) / mpmath.hankel1(n, z) - mpmath.mpf(n) / z
    ref = complex(ratio)
    assert abs(dtn_symbol(n, z).value - ref) <= 1e-10 * abs(ref)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 200), st.floats(1e-3, 1e3))
def test_symbol_even_in_n(n, z):
    assert dtn_symbol(-n, z).value == dtn_symbol(n, z).value


def test_far_field_limit():
    z = 1e3
    assert abs(dtn_symbol(0, z).value - 1j) <= 1 / z
    assert abs(dtn_symbol(3, z).value - 1j) <= 1 / z


def test_evanescent_real_part():
    z = 1.0
    for n in (30, 50, 200):
        s = dtn_symbol(n, z)
        assert s.value.real <= 0
        assert s.value.real == pytest.approx(-n / z, rel=2 * z / n**1)
        assert s.log_imag < 0


def test_evanescent_log_imag_against_mpmath():
    n, z = 150, 2.0
    mpmath.mp.dps = 50
    h = mpmath.hankel1(n, z)
    ref = float(mpmath.log(2 / (mpmath.pi * z)) - 2 * mpmath.log(abs(h)))
    assert dtn_symbol(n, z).log_imag == pytest.approx(ref, rel=1e-12)


def test_sign_properties_standard_set():
    rep = check_sign_properties(50, [1.0, 10.0, 100.0])
    assert rep.ok
    assert rep.max_real <= 0
    assert rep.min_log_imag > -np.inf


def test_sign_properties_extreme_range():
    rep = check_sign_properties(200, [1e-3, 1e4])
    assert rep.ok
