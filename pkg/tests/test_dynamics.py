from __future__ import annotations

import math

import numpy as np
import pytest

from emscatter.asymptotics import Line, asymptotic_terms
from emscatter.dynamics import (Controls, energy, integrate_trajectory, max_deflection_angle, orthogonalize,
                                scattering_batch, scattering_datum)
from emscatter.fields import gaussian_field


def test_free_motion(zero2):
    tr = integrate_trajectory(zero2, [3.0, 1.0], [-1.0, 3.0])
    assert np.all(tr.y == 0) and np.all(tr.u == 0)
    assert max_deflection_angle(tr) == 0.0
    d = scattering_datum(zero2, [3.0, 1.0], [-1.0, 3.0])
    assert np.all(d.a_sc == 0) and np.all(d.b_sc == 0)


def test_offset_projected_and_large_correction_rejected():
    x = orthogonalize(np.array([1.0, 0.0]), np.array([1e-13, 1.0]))
    assert x[0] == 0.0
    with pytest.raises(ValueError):
        orthogonalize(np.array([1.0, 0.0]), np.array([0.5, 1.0]))


def test_energy_formula(fa, gauss_v):
    assert energy(gauss_v, np.zeros(2), np.array([2.0, 0.0])) == 3.0
    assert energy(gaussian_field(2, 0.0, 0.0), np.array([5.0, 5.0]), np.array([3.0, 4.0])) == 12.5
    x, v = np.array([0.2, -0.1]), np.array([1.0, 2.0])
    assert energy(fa, x, v) == energy(gauss_v, x, v)


def test_energy_conserved(fa):
    tr = integrate_trajectory(fa, [4.0, 0.0], [0.0, 1.0])
    assert tr.energy_drift <= 1e-9


def test_self_convergence_against_tight_run(fa):
    v, x = [4.0, 0.0], [0.0, 1.0]
    loose = integrate_trajectory(fa, v, x)
    tight = integrate_trajectory(fa, v, x, Controls(rtol=1e-13, atol=1e-15))
    t1 = min(loose.t[-1], tight.t[-1])
    yl, ul = loose.deflection(t1)
    yt, ut = tight.deflection(t1)
    assert np.max(np.abs(yl - yt)) <= 1e-8 and np.max(np.abs(ul - ut)) <= 1e-8


def test_velocity_change_close_to_leading_term(fa):
    line = Line(np.array([1.0, 0.0]), np.array([0.0, 1.0]))
    W = asymptotic_terms(fa, line)
    s = 32.0
    d = scattering_datum(fa, s * line.theta, line.x)
    C = 2 * np.linalg.norm(W.W12)
    assert np.linalg.norm(d.a_sc - W.W11) <= C / s


def test_speed_preserved_random(fa, rng):
    th = rng.uniform(0, 2 * np.pi, 20)
    s = rng.uniform(4, 40, 20)
    q = rng.uniform(-2, 2, 20)
    u = np.stack([np.cos(th), np.sin(th)], axis=-1)
    v = s[:, None] * u
    x = q[:, None] * np.stack([-u[:, 1], u[:, 0]], axis=-1)
    a, b, drift, resid, angle, flagged = scattering_batch(fa, v, x)
    assert not np.any(flagged)
    rel = np.abs(np.linalg.norm(v + a, axis=1) - s) / s
    assert np.max(rel) <= 1e-8


def test_angle_below_quarter_turn_and_decreasing(fa):
    angles = [integrate_trajectory(fa, [s, 0.0], [0.0, 0.5]).max_angle for s in (8, 16, 32, 64)]
    assert all(a2 < a1 for a1, a2 in zip(angles, angles[1:]))
    assert angles[-1] < math.pi / 4


def test_refinement_within_error(fa):
    v, x = np.array([16.0, 0.0]), np.array([0.0, 0.7])
    d1 = scattering_datum(fa, v, x)
    d2 = scattering_datum(fa, v, x, Controls(rtol=5e-11, atol=5e-13))
    d3 = scattering_datum(fa, v, x, Controls(rtol=1e-13, atol=1e-15))
    # the error estimate of the default run is its distance to the tight run
    est = np.linalg.norm(d1.a_sc - d3.a_sc) + np.linalg.norm(d1.b_sc - d3.b_sc)
    assert np.linalg.norm(d1.a_sc - d2.a_sc) + np.linalg.norm(d1.b_sc - d2.b_sc) <= max(2 * est, 1e-12)


def test_volume_preservation(fa):
    v0, x0 = np.array([6.0, 0.0]), np.array([0.0, 0.5])
    z0 = np.concatenate([v0, x0])
    h = 1e-5

    def smap(z):
        # x_- need not be orthogonal here: shift the time origin instead
        v, x = z[:2], z[2:]
        shift = (x @ v) / (v @ v)
        xp = x - shift * v
        a, b, *_ = scattering_batch(fa, v[None], xp[None], Controls(rtol=1e-12, atol=1e-14))
        vp = v + a[0]
        return np.concatenate([vp, xp + b[0] + shift * vp])

    J = np.zeros((4, 4))
    for k in range(4):
        e = np.zeros(4)
        e[k] = h
        J[:, k] = (smap(z0 + e) - smap(z0 - e)) / (2 * h)
    assert abs(np.linalg.det(J) - 1) <= 1e-3
