from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emscatter.bounds import DomainError, bounds, default_R, rho2_limit, thresholds

N, ALPHA, B1, B2 = 2, 2.0, 6.095147321538672, 29.165440858035286


def test_zero_beta1_gives_zero_rhos():
    b = bounds(N, ALPHA, 0.0, B2, 100.0, 1.0, 5.0)
    assert b.rho1 == 0 and b.rho2 == 0 and b.rho_T1 == 0 and b.rho_T2 == 0


def test_lambda_relations_to_horizon_zero_constants():
    b = bounds(N, ALPHA, B1, B2, 500.0, 2.0, 50.0, T=0.0)
    l0 = b.lam_T
    np.testing.assert_allclose(b.lam, (2 * l0[0] / (ALPHA + 1), 2 * l0[1] / ALPHA, 2 * l0[2], 2 * l0[3]),
                               rtol=1e-15)


def test_rho2_large_speed_limit():
    xn = 1.5
    b = bounds(N, ALPHA, B1, B2, 1e6, xn, 30.0)
    limit = 2 ** (ALPHA + 2) * math.sqrt(2) * B1 * N / (ALPHA * (1 + xn / math.sqrt(2)) ** ALPHA)
    assert abs(b.rho2 / limit - 1) <= 1e-4
    assert rho2_limit(N, ALPHA, B1, xn) == pytest.approx(limit, rel=1e-15)


def test_domain_errors():
    with pytest.raises(DomainError):
        bounds(N, ALPHA, B1, B2, 10.0, 0.0, 10.0)
    with pytest.raises(DomainError):
        thresholds(N, ALPHA, B1, B2, 0.5 * rho2_limit(N, ALPHA, B1, 1.0), 1.0, 1.0)


def test_threshold_defining_equations():
    R = default_R(N, ALPHA, B1, 1.0)
    z = thresholds(N, ALPHA, B1, B2, R, 1.0, 1.0)
    assert abs(bounds(N, ALPHA, B1, B2, z.z1, 1.0, R).rho1 - 1) <= 1e-10
    assert abs(bounds(N, ALPHA, B1, B2, z.z2, 1.0, R).rho2 / R - 1) <= 1e-10
    assert abs(bounds(N, ALPHA, B1, B2, z.z3, 1.0, R).lambda_ - 1) <= 1e-10


def test_thresholds_grow_with_beta1():
    R = default_R(N, ALPHA, 2 * B1, 1.0)
    z1 = thresholds(N, ALPHA, B1, B2, R, 1.0, 1.0)
    z2 = thresholds(N, ALPHA, 2 * B1, B2, R, 1.0, 1.0)
    assert z2.z1 > z1.z1 and z2.z2 > z1.z2 and z2.z3 > z1.z3


def test_thresholds_fall_with_offset():
    R = default_R(N, ALPHA, B1, 0.0)
    z0 = thresholds(N, ALPHA, B1, B2, R, 1.0, 0.0)
    z4 = thresholds(N, ALPHA, B1, B2, R, 1.0, 4.0)
    assert z4.z1 < z0.z1 and z4.z2 < z0.z2 and z4.z3 < z0.z3


@settings(max_examples=40, deadline=None)
@given(st.floats(0.0, 10.0), st.floats(1.2, 4.0), st.floats(1.5, 50.0))
def test_monotone_in_speed(xn, alpha, factor):
    R = 2.0
    s1 = math.sqrt(2) * R * factor
    s2 = 1.5 * s1
    b1 = bounds(N, alpha, B1, B2, s1, xn, R)
    b2 = bounds(N, alpha, B1, B2, s2, xn, R)
    assert b2.rho1 < b1.rho1 and b2.rho2 < b1.rho2 and b2.lambda_ < b1.lambda_
    for v in (b1.rho1, b1.rho2, b1.lambda_, b1.delta11, b1.delta12, b1.delta21, b1.delta22, *b1.lam):
        assert v >= 0


def test_zeta_xi_decay_in_time():
    b = bounds(N, ALPHA, B1, B2, 500.0, 2.0, 20.0)
    t = np.linspace(0, 10, 50)
    assert np.all(np.diff(b.zeta(t)) < 0) and np.all(np.diff(b.xi(t)) < 0)
    assert b.incoming_deflection == b.xi(0.0)
