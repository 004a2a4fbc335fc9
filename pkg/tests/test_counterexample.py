from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from emscatter.counterexample import (AMPLITUDE, RadialProfile, bump_chi, f_tilde, f_tilde_all, ftilde_profile,
                                      potential_profile, pv_from_nested, radial_from_sinogram, verify_equality)
from emscatter.quadrature import PanelGrid


def test_bump_values():
    assert bump_chi(0.5) == pytest.approx(math.exp(-4.0), rel=1e-15)
    for q in (-1.0, 0.0, 1.0, 1.5):
        assert bump_chi(q) == 0.0
    assert f_tilde(1, 0.5) == pytest.approx(1.0, rel=1e-14)
    assert AMPLITUDE == pytest.approx(math.exp(4.0))


@given(st.floats(-6.0, 6.0))
def test_bump_nonnegative_and_profiles_even(q):
    assert bump_chi(q) >= 0.0
    for i in (1, 2):
        assert f_tilde(i, q) == f_tilde(i, -q)
    assert f_tilde(1, q) ** 2 == pytest.approx(f_tilde(2, q) ** 2, rel=1e-14, abs=1e-300)


def test_profile_derivatives_match_differences():
    q = np.linspace(-4.9, 4.9, 97) + 0.013
    h = 1e-5
    v, d1, d2 = f_tilde_all(2, q)
    fd1 = (f_tilde(2, q + h) - f_tilde(2, q - h)) / (2 * h)
    fd2 = (f_tilde(2, q + h) - 2 * v + f_tilde(2, q - h)) / h ** 2
    assert np.max(np.abs(d1 - fd1)) < 1e-6
    assert np.max(np.abs(d2 - fd2)) < 1e-3


def test_profile_integrals():
    grid = PanelGrid(-5.0, 5.0, 400, 16)
    chi = PanelGrid(0.0, 1.0, 50, 16)
    one = float(chi.integral(bump_chi(chi.t)))
    assert float(grid.integral(f_tilde(1, grid.t))) == pytest.approx(4 * AMPLITUDE * one, rel=1e-12)
    assert abs(float(grid.integral(f_tilde(2, grid.t)))) < 1e-13


def test_abel_gaussian_pair():
    # g(r) = exp(-r^2) has radial transform sqrt(pi) exp(-q^2)
    c = math.sqrt(math.pi)

    def derivs(q):
        e = c * np.exp(-q * q)
        return -2 * q * e, (4 * q * q - 2) * e

    prof = radial_from_sinogram(derivs, 7.0, 701, value=lambda q: c * np.exp(-q * q))
    r = np.linspace(0.0, 3.0, 31)
    np.testing.assert_allclose(prof(r), np.exp(-r * r), atol=1e-8)
    np.testing.assert_allclose(prof.d1(r), -2 * r * np.exp(-r * r), atol=1e-6)
    assert prof.integral_f() == pytest.approx(1.0, rel=1e-8)


def test_abel_zero_profile():
    prof = radial_from_sinogram(lambda q: (np.zeros_like(q), np.zeros_like(q)), 2.0, 51,
                                value=lambda q: np.zeros_like(q))
    assert prof.forward_residual == 0.0
    assert np.all(prof(np.linspace(0, 3, 7)) == 0)


@pytest.mark.parametrize("i", [1, 2])
def test_abel_forward_residual(i):
    assert ftilde_profile(i).forward_residual <= 1e-6


def test_radial_profile_F():
    r = np.linspace(0.0, 2.0, 401)
    prof = RadialProfile(r, np.exp(-r * r), -2 * r * np.exp(-r * r), 2.0)
    # F(r^2) = -int_{r^2}^4 exp(-s) ds
    rr = np.array([0.0, 0.5, 1.3, 2.0, 2.5])
    expect = np.where(rr <= 2, -(np.exp(-rr ** 2) - math.exp(-4.0)), 0.0)
    np.testing.assert_allclose(prof.F(rr), expect, atol=1e-9)


def test_potential_profile_derivatives():
    p1, p2 = ftilde_profile(1, 801), ftilde_profile(2, 801)
    prof = potential_profile(p1, p2)
    r = np.linspace(0.2, 4.8, 24) + 0.0071
    h = 1e-5
    v, d1, _ = prof(r)
    fd1 = (prof(r + h)[0] - prof(r - h)[0]) / (2 * h)
    assert np.max(np.abs(d1 - fd1)) < 1e-5 * max(1.0, np.abs(d1).max())
    assert np.all(prof(np.array([5.2, 8.0]))[0] == 0)


def test_nested_potential_transform_even():
    p1, p2 = ftilde_profile(1, 801), ftilde_profile(2, 801)
    qs = np.linspace(-5.5, 5.5, 23)
    pv = pv_from_nested(p1, p2, qs)
    np.testing.assert_allclose(pv, pv[::-1], atol=1e-10)
    assert np.max(np.abs(pv)) > 1e-3


@pytest.mark.slow
def test_bundle_certificates(cx_bundle):
    c = cx_bundle.certificates
    assert c["B_diff_sup"] > 0.1 * c["B1_sup"]
    assert c["int_f1"] == pytest.approx(c["int_f1_from_ftilde"], rel=1e-6)
    assert abs(c["int_f2"]) < 1e-8
    # V vanishes identically only if both scalar integrals agree
    assert c["int_f1"] ** 2 - c["int_f2"] ** 2 > 0.1
    assert abs(c["FF1"] - c["FF2"]) > 1e-4
    assert c["V_sup"] > 0
    assert c["V_grid_rel_l2"] < 0.1


@pytest.mark.slow
def test_equality_on_small_line_grid(cx_bundle):
    rep = verify_equality(cx_bundle, n_angles=4, n_offsets=12)
    assert rep.n_lines == 48
    assert rep.max_residual <= 1e-6
    assert rep.closed_form_residual <= 1e-6
    assert rep.W21_max <= 1e-12
    assert rep.details["W22_scale"] > 1e-2
