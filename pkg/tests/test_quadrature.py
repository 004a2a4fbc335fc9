from __future__ import annotations

import math

import numpy as np
import pytest

from emscatter.quadrature import PanelGrid


@pytest.fixture(scope="module")
def grid():
    return PanelGrid.symmetric(8.0, 0.5, 16)


def test_symmetric_grid_has_zero_edge(grid):
    assert np.any(grid.t == 0.0)
    np.testing.assert_allclose(grid.t, -grid.t[::-1], atol=1e-15)


def test_integral_of_gaussian(grid):
    assert abs(grid.integral(np.exp(-grid.t ** 2)) - math.sqrt(math.pi)) < 1e-14


def test_cumulative_is_erf(grid):
    t = grid.t
    c = grid.cumulative(np.exp(-t ** 2))
    ref = 0.5 * math.sqrt(math.pi) * (1 + np.vectorize(math.erf)(t))
    np.testing.assert_allclose(c, ref, atol=1e-14)


def test_tail_complements_cumulative(grid):
    g = np.exp(-(grid.t - 0.3) ** 2)
    np.testing.assert_allclose(grid.cumulative(g) + grid.tail(g), grid.integral(g), atol=1e-14)


def test_split_equals_minus_first_moment(grid):
    # the two nested half-line integrals collapse to -int t g(t) dt
    t = grid.t
    for g in (t * np.exp(-t ** 2), np.exp(-(t - 0.7) ** 2), np.exp(-t ** 2)):
        assert abs(grid.split(g) + grid.integral(t * g)) < 1e-13
    assert abs(grid.split(t * np.exp(-t ** 2)) + math.sqrt(math.pi) / 2) < 1e-14


def test_vector_valued_axis(grid):
    t = grid.t
    g = np.stack([np.exp(-t ** 2), t * np.exp(-t ** 2)], axis=-1)
    np.testing.assert_allclose(grid.integral(g), [math.sqrt(math.pi), 0.0], atol=1e-14)


def test_interpolate_reproduces_smooth_function(grid):
    s = np.linspace(-7.9, 7.9, 97)
    np.testing.assert_allclose(grid.interpolate(np.sin(grid.t), s), np.sin(s), atol=1e-12)
