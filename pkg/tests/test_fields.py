from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from emscatter.fields import (Decay, Field, FieldError, bump_field, build_field, check_closure, estimate_decay,
                              eval_field, force, gaussian_field, vector_potential_field, zero_field)

coord = st.floats(-3.0, 3.0, allow_nan=False)


def _vecpot3():
    # A = sum of Gaussian-weighted constant vectors at shifted centres
    return vector_potential_field([(1.0, (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)),
                                   (0.5, (0.5, -0.3, 0.2), (1.0, 0.5, 0.0))], v_amp=0.5)


_VP = _vecpot3()


def vecpot3():
    return _VP


def test_gaussian_potential_at_origin(gauss_v):
    s = eval_field(gauss_v, [0.0, 0.0])
    assert s.value == 1.0
    assert np.all(s.grad == 0.0)


def test_zero_field_sample(zero2):
    s = eval_field(zero2, [0.3, -1.2])
    assert np.all(s.matrix == 0) and np.all(s.gradB == 0)


def test_field_a_at_unit_point(fa):
    s = eval_field(fa, [1.0, 0.0])
    e = math.exp(-1.0)
    np.testing.assert_allclose(s.grad, [-2 * e, 0.0], rtol=1e-15)
    np.testing.assert_allclose(s.gradB[0, 1], [-2 * e, 0.0], rtol=1e-15)
    np.testing.assert_allclose(s.gradB[1, 0], [2 * e, 0.0], rtol=1e-15)


def test_field_a_force_by_hand(fa):
    # x = (0, 1): grad V = (0, -2/e); B v = (B12 v2, -B12 v1) = (0, -1/e)
    e = math.exp(-1.0)
    np.testing.assert_allclose(force(fa, [0.0, 1.0], [1.0, 0.0]), [0.0, 2 * e - e], rtol=1e-15)


def test_force_trivial_cases(zero2, fa):
    assert np.all(force(zero2, [0.1, 0.2], [3.0, 4.0]) == 0)
    x = np.array([0.4, -0.7])
    np.testing.assert_array_equal(force(fa, x, [0.0, 0.0]), -fa.grad_V(x))


def test_non_finite_point_rejected(fa):
    with pytest.raises(FieldError):
        eval_field(fa, [np.nan, 0.0])


@settings(max_examples=40, deadline=None)
@given(coord, coord, coord, coord, coord)
def test_antisymmetry_and_orthogonal_magnetic_force(x1, x2, x3, v1, v2):
    f = vecpot3()
    x = np.array([x1, x2, x3])
    B = f.B(x)
    assert np.all(B + B.T == 0)
    assert np.all(np.diag(B) == 0)
    g = f.grad_B(x)
    assert np.all(g + np.swapaxes(g, 0, 1) == 0)
    v = np.array([v1, v2, x1 - x2])
    assert abs((B @ v) @ v) <= 1e-14 * (1 + v @ v)


@pytest.mark.parametrize("field", [gaussian_field(2, 1.0, 1.0), bump_field(2, 1.0, 0.7), vecpot3()],
                         ids=["gaussian", "bump", "vecpot"])
def test_gradients_match_central_differences(field, rng):
    h = 1e-5
    for _ in range(5):
        x = rng.uniform(-0.8, 0.8, field.n)
        for l in range(field.n):
            e = np.zeros(field.n)
            e[l] = h
            dV = (field.V(x + e) - field.V(x - e)) / (2 * h)
            assert abs(field.grad_V(x)[l] - dV) <= 1e-6 * max(1.0, abs(dV))
            dB = (field.B(x + e) - field.B(x - e)) / (2 * h)
            np.testing.assert_allclose(field.grad_B(x)[..., l], dB, rtol=1e-6, atol=1e-6)
            dG = (field.grad_V(x + e) - field.grad_V(x - e)) / (2 * h)
            np.testing.assert_allclose(field.hess_V(x)[:, l], dG, rtol=1e-6, atol=1e-6)


def test_closure_two_dimensions(fa, rng):
    assert check_closure(fa, rng.normal(size=(50, 2))).residual == 0.0


def test_closure_vector_potential(rng):
    rep = check_closure(vecpot3(), rng.uniform(-2, 2, (200, 3)))
    assert rep.residual <= 1e-12 and rep.passed


class _Corrupted:
    """B_{1,2} of a valid 3-D field scaled by 1 + 0.1 |x_1|."""

    def __init__(self, base):
        self.base = base
        self.n = 3

    def grad_B(self, x):
        x = np.atleast_2d(x)
        B = self.base.B(x)
        g = self.base.grad_B(x).copy()
        w = 1 + 0.1 * np.abs(x[:, 0])
        dw = 0.1 * np.sign(x[:, 0])
        g[:, 0, 1, :] *= w[:, None]
        g[:, 0, 1, 0] += dw * B[:, 0, 1]
        g[:, 1, 0] = -g[:, 0, 1]
        return g


def test_closure_detects_corruption():
    base = vecpot3()
    rep = check_closure(_Corrupted(base), [[1.0, 1.0, 1.0]])
    assert rep.residual > 1e-6 and not rep.passed


def test_decay_zero_field():
    rep = estimate_decay(zero_field(2), 2.0, 8.0, 64)
    o = rep.observed
    assert (o.beta0, o.beta1, o.beta2) == (0.0, 0.0, 0.0)
    assert rep.passed


def test_decay_field_a_passes_and_halved_fails(fa):
    rep = estimate_decay(fa, 2.0, 8.0, 64)
    assert rep.passed
    assert all(np.isfinite([rep.observed.beta0, rep.observed.beta1, rep.observed.beta2]))
    d = fa.decay
    halved = Field(2, fa.potential, fa.magnetic, Decay(2.0, d.beta0 / 2, d.beta1 / 2, d.beta2 / 2), "halved")
    bad = estimate_decay(halved, 2.0, 8.0, 64)
    assert not bad.passed and bad.worst_point is not None and bad.worst_ratio > 1


def test_decay_requires_alpha_above_one(fa):
    with pytest.raises(FieldError):
        estimate_decay(fa, 1.0, 8.0, 16)


def test_build_field_unknown_family():
    with pytest.raises(FieldError):
        build_field("nope")


def test_field_transforms(fa):
    x = np.array([0.3, 0.4])
    np.testing.assert_allclose(fa.scaled(0.1).B(x), 0.1 * fa.B(x))
    np.testing.assert_array_equal(fa.flipped_magnetic().B(x), -fa.B(x))
    assert fa.without_potential().V(x) == 0
    assert np.all(fa.without_magnetic().B(x) == 0)
