"""Newton equation integration and scattering-data extraction.

The trajectory is integrated in deflection form: with x(t) = x_- + t v_- + y(t),
the state is (y, u = dy/dt) and

    dy/dt = u,   du/dt = F(x_- + t v_- + y, v_- + u).

The deflection stays small at high energy, so relative tolerances act on
the quantity that carries the scattering data.  A batch of initial
conditions is advanced in lockstep by an embedded Dormand-Prince 5(4) pair,
each member with its own adaptive step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .fields import Field

log = logging.getLogger(__name__)


class IntegrationError(RuntimeError):
    """Step-size underflow or step budget exhausted."""


# Dormand-Prince 5(4) tableau
_C = np.array([0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1, 1])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
_E = np.array([71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40])


@dataclass(frozen=True)
class Controls:
    """Integration and asymptote-window settings."""

    rtol: float = 1e-10
    atol: float = 1e-12
    eps_start: float = 1e-12
    tail_fraction: float = 0.2
    tail_samples: int = 16
    max_steps: int = 200000
    fit_tol: float = 1e-9
    drift_tol: Optional[float] = None

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0 and self.eps_start > 0):
            raise ValueError("tolerances must be positive")
        if not 0 < self.tail_fraction < 1:
            raise ValueError("tail_fraction must lie in (0, 1)")

    @property
    def drift_flag(self) -> float:
        return self.drift_tol if self.drift_tol is not None else 100.0 * self.rtol


def orthogonalize(v, x, tol: float = 1e-9):
    """Project x onto the complement of v; error if the correction is not tiny."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    s2 = np.sum(v * v, axis=-1)
    if np.any(s2 == 0):
        raise ValueError("incoming velocity must be nonzero")
    c = np.sum(v * x, axis=-1) / s2
    corr = c[..., None] * v
    xn = np.linalg.norm(x, axis=-1)
    if np.any(np.linalg.norm(corr, axis=-1) > tol * (1.0 + xn)):
        raise ValueError("offset x_- is not orthogonal to v_- (relative correction above 1e-9)")
    return x - corr


def angle_between(a, b):
    """Angle between rows of ``a`` and ``b``; atan2 keeps small angles accurate."""
    dot = np.sum(a * b, axis=-1)
    cross = np.sqrt(np.maximum(np.sum(a * a, axis=-1) * np.sum(b * b, axis=-1) - dot * dot, 0.0))
    if a.shape[-1] == 2:
        cross = np.abs(a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0])
    return np.arctan2(cross, dot)


def energy(field: Field, x, v):
    """E = |v|^2 / 2 + V(x)."""
    v = np.asarray(v, dtype=float)
    return 0.5 * np.sum(v * v, axis=-1) + field.V(x)


def _window(field: Field, v, x, controls: Controls):
    """Entry time, exit time and final time for each member of a batch."""
    s = np.linalg.norm(v, axis=-1)
    xn = np.linalg.norm(x, axis=-1)
    reach = max(field.reach(controls.eps_start), 1e-3)
    half = np.sqrt(np.maximum(reach ** 2 - xn ** 2, 0.0)) + reach * 0.05 + 1.0 / (1.0 + s)
    t_exit = half / s
    cap = 1e4 / s * (1.0 + xn)
    t_exit = np.minimum(t_exit, cap)
    t0 = -t_exit
    # the exit sits at the start of the field-free tail window
    t1 = t_exit + controls.tail_fraction / (1 - controls.tail_fraction) * (t_exit - t0)
    return t0, t_exit, t1


def _hermite5(h, y0, u0, a0, y1, u1, a1, theta):
    """Quintic Hermite interpolation of y and its derivative on [0, h]."""
    t = theta[:, None]
    t2, t3 = t * t, t * t * t
    h00 = 1 - 10 * t3 + 15 * t3 * t - 6 * t3 * t2
    h10 = t - 6 * t3 + 8 * t3 * t - 3 * t3 * t2
    h20 = 0.5 * t2 - 1.5 * t3 + 1.5 * t3 * t - 0.5 * t3 * t2
    h01 = 10 * t3 - 15 * t3 * t + 6 * t3 * t2
    h11 = -4 * t3 + 7 * t3 * t - 3 * t3 * t2
    h21 = 0.5 * t3 - t3 * t + 0.5 * t3 * t2
    hh = h[:, None]
    y = h00 * y0 + h10 * hh * u0 + h20 * hh * hh * a0 + h01 * y1 + h11 * hh * u1 + h21 * hh * hh * a1
    d00 = -30 * t2 + 60 * t3 - 30 * t3 * t
    d10 = 1 - 18 * t2 + 32 * t3 - 15 * t3 * t
    d20 = t - 4.5 * t2 + 6 * t3 - 2.5 * t3 * t
    d01 = -d00
    d11 = -12 * t2 + 28 * t3 - 15 * t3 * t
    d21 = 1.5 * t2 - 4 * t3 + 2.5 * t3 * t
    u = (d00 * y0 + d01 * y1) / hh + d10 * u0 + d20 * hh * a0 + d11 * u1 + d21 * hh * a1
    return y, u


@dataclass
class BatchResult:
    """Raw per-member output of :func:`integrate_batch`."""

    t0: np.ndarray
    t_exit: np.ndarray
    t1: np.ndarray
    y1: np.ndarray
    u1: np.ndarray
    tail_t: np.ndarray
    tail_y: np.ndarray
    max_angle: np.ndarray
    energy0: np.ndarray
    energy1: np.ndarray
    steps: np.ndarray
    history: Optional[list] = None


def integrate_batch(field: Field, v, x, controls: Controls = Controls(), record: bool = False) -> BatchResult:
    """Advance many incoming asymptotes (v_-, x_-) through the field.

    ``v`` and ``x`` have shape (N, n).  With ``record`` the accepted step
    states are kept (used by single-trajectory dense output).
    """
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    N, n = v.shape
    x = orthogonalize(v, x)
    s = np.linalg.norm(v, axis=-1)
    t0, t_exit, t1 = _window(field, v, x, controls)
    K = controls.tail_samples
    frac = np.linspace(0.0, 1.0, K)
    tail_t = t_exit[:, None] + frac[None, :] * (t1 - t_exit)[:, None]
    tail_y = np.zeros((N, K, n))
    next_tail = np.zeros(N, dtype=int)

    def rhs(t, y, u, idx):
        pos = x[idx] + t[:, None] * v[idx] + y
        return field.force(pos, v[idx] + u)

    t = t0.copy()
    y = np.zeros((N, n))
    u = np.zeros((N, n))
    acc = rhs(t, y, u, np.arange(N))
    e0 = energy(field, x + t0[:, None] * v, v)
    max_angle = np.zeros(N)
    # initial step from the crossing time of the field region
    h = np.minimum((t1 - t0) / 50.0, 0.05 * controls.rtol ** 0.2 * (t1 - t0))
    h = np.maximum(h, 1e-6 * (t1 - t0))
    done = np.zeros(N, dtype=bool)
    steps = np.zeros(N, dtype=int)
    history = [[(t[i], y[i].copy(), u[i].copy(), acc[i].copy())] for i in range(N)] if record else None
    safety, min_fac, max_fac = 0.9, 0.2, 5.0

    it = 0
    while not np.all(done):
        it += 1
        idx = np.nonzero(~done)[0]
        if it > controls.max_steps:
            raise IntegrationError(f"step budget exhausted with {idx.size} trajectories unfinished")
        tt, yy, uu, aa = t[idx], y[idx], u[idx], acc[idx]
        hh = np.minimum(h[idx], t1[idx] - tt)
        ky = [uu]
        ku = [aa]
        for stage in range(1, 7):
            dy = yy + hh[:, None] * sum(a * k for a, k in zip(_A[stage], ky) if a != 0)
            du = uu + hh[:, None] * sum(a * k for a, k in zip(_A[stage], ku) if a != 0)
            ky.append(du)
            ku.append(rhs(tt + _C[stage] * hh, dy, du, idx))
        y_new = yy + hh[:, None] * sum(b * k for b, k in zip(_B, ky) if b != 0)
        u_new = uu + hh[:, None] * sum(b * k for b, k in zip(_B, ku) if b != 0)
        err_y = hh[:, None] * sum(e * k for e, k in zip(_E, ky) if e != 0)
        err_u = hh[:, None] * sum(e * k for e, k in zip(_E, ku) if e != 0)
        sc_y = controls.atol + controls.rtol * np.maximum(np.abs(yy), np.abs(y_new))
        sc_u = controls.atol + controls.rtol * np.maximum(np.abs(uu), np.abs(u_new))
        err = np.sqrt(0.5 * (np.mean((err_y / sc_y) ** 2, axis=1) + np.mean((err_u / sc_u) ** 2, axis=1)))
        accept = err <= 1.0
        fac = np.clip(safety * np.maximum(err, 1e-10) ** -0.2, min_fac, max_fac)
        fac = np.where(accept, fac, np.minimum(fac, 1.0))
        h_next = hh * fac
        span = t1[idx] - t0[idx]
        if np.any(h_next < 1e-14 * np.maximum(span, np.abs(tt))):
            bad = idx[h_next < 1e-14 * np.maximum(span, np.abs(tt))][0]
            raise IntegrationError(f"step size underflow at t={t[bad]:.6g} for trajectory {bad}")
        h[idx] = h_next

        ai = idx[accept]
        if ai.size:
            hA = hh[accept]
            a_new = ku[6][accept]  # FSAL: last stage is the force at the new state
            yA, uA, aA = yy[accept], uu[accept], aa[accept]
            ynA, unA = y_new[accept], u_new[accept]
            # tail samples falling inside this step
            tend = tt[accept] + hA
            while True:
                pend = next_tail[ai] < K
                ts = np.where(pend, tail_t[ai, np.minimum(next_tail[ai], K - 1)], np.inf)
                hit = ts <= tend * (1 + 1e-15) + 1e-300
                if not np.any(hit):
                    break
                j = np.nonzero(hit)[0]
                theta = np.clip((ts[j] - tt[accept][j]) / hA[j], 0.0, 1.0)
                yi, _ = _hermite5(hA[j], yA[j], uA[j], aA[j], ynA[j], unA[j], a_new[j], theta)
                tail_y[ai[j], next_tail[ai[j]]] = yi
                next_tail[ai[j]] += 1
            t[ai] = tend
            y[ai] = ynA
            u[ai] = unA
            acc[ai] = a_new
            steps[ai] += 1
            vel = v[ai] + unA
            max_angle[ai] = np.maximum(max_angle[ai], angle_between(vel, v[ai]))
            if record:
                for k, i in enumerate(ai):
                    history[i].append((t[i], y[i].copy(), u[i].copy(), acc[i].copy()))
            done[ai] = (t1[ai] - t[ai]) <= 1e-13 * (t1[ai] - t0[ai])

    e1 = energy(field, x + t1[:, None] * v + y, v + u)
    return BatchResult(t0, t_exit, t1, y, u, tail_t, tail_y, max_angle, e0, e1, steps, history)


# ---------------------------------------------------------------------------
# single trajectories


@dataclass
class Trajectory:
    """Accepted-step states of one integration with quintic dense output."""

    v_minus: np.ndarray
    x_minus: np.ndarray
    t: np.ndarray
    y: np.ndarray
    u: np.ndarray
    acc: np.ndarray
    controls: Controls
    t_exit: float
    energy_drift: float
    max_angle: float

    def deflection(self, times):
        """(y, dy/dt) at arbitrary times; free asymptotes outside the window."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        n = self.y.shape[1]
        out_y = np.zeros((times.size, n))
        out_u = np.zeros((times.size, n))
        before = times <= self.t[0]
        after = times >= self.t[-1]
        out_y[after] = self.y[-1] + (times[after] - self.t[-1])[:, None] * self.u[-1]
        out_u[after] = self.u[-1]
        mid = ~(before | after)
        if np.any(mid):
            tm = times[mid]
            k = np.clip(np.searchsorted(self.t, tm) - 1, 0, self.t.size - 2)
            h = self.t[k + 1] - self.t[k]
            theta = (tm - self.t[k]) / h
            yi, ui = _hermite5(h, self.y[k], self.u[k], self.acc[k], self.y[k + 1], self.u[k + 1],
                               self.acc[k + 1], theta)
            out_y[mid], out_u[mid] = yi, ui
        return out_y, out_u

    def position(self, times):
        times = np.atleast_1d(np.asarray(times, dtype=float))
        y, u = self.deflection(times)
        return self.x_minus + times[:, None] * self.v_minus + y, self.v_minus + u


def integrate_trajectory(field: Field, v_minus, x_minus, controls: Controls = Controls()) -> Trajectory:
    v = np.asarray(v_minus, dtype=float)
    x = orthogonalize(v, x_minus)
    res = integrate_batch(field, v[None], x[None], controls, record=True)
    hist = res.history[0]
    t = np.array([h[0] for h in hist])
    drift = _drift(res.energy0[0], res.energy1[0])
    if drift > controls.drift_flag:
        log.warning("energy drift %.3g exceeds flag level %.3g", drift, controls.drift_flag)
    return Trajectory(v, x, t, np.array([h[1] for h in hist]), np.array([h[2] for h in hist]),
                      np.array([h[3] for h in hist]), controls, float(res.t_exit[0]), drift,
                      float(res.max_angle[0]))


def _drift(e0, e1):
    return np.abs(e1 - e0) / np.maximum(np.abs(e0), 1e-300)


def max_deflection_angle(traj: Trajectory) -> float:
    """Sup over the step grid of the angle between dx/dt and v_-."""
    vel = traj.v_minus + traj.u
    return float(np.max(angle_between(vel, np.broadcast_to(traj.v_minus, vel.shape))))


# ---------------------------------------------------------------------------
# scattering data


@dataclass
class ScatteringDatum:
    v_minus: np.ndarray
    x_minus: np.ndarray
    a_sc: np.ndarray
    b_sc: np.ndarray
    energy_drift: float
    fit_residual: float
    max_angle: float
    flagged: bool = False
    notes: list = dc_field(default_factory=list)

    @property
    def v_plus(self):
        return self.v_minus + self.a_sc

    @property
    def x_plus(self):
        return self.x_minus + self.b_sc


def _fit_tail(tail_t, tail_y):
    """Least-squares line y = a t + b per member; returns a, b, max residual."""
    tc = tail_t.mean(axis=1, keepdims=True)
    dt = tail_t - tc
    ym = tail_y.mean(axis=1)
    slope = np.einsum("nk,nkd->nd", dt, tail_y - ym[:, None]) / np.sum(dt * dt, axis=1)[:, None]
    intercept = ym - slope * tc
    resid = tail_y - (slope[:, None, :] * tail_t[..., None] + intercept[:, None, :])
    return slope, intercept, np.max(np.abs(resid), axis=(1, 2))


def scattering_batch(field: Field, v, x, controls: Controls = Controls()):
    """Scattering data for a batch; returns arrays (a_sc, b_sc, drift, residual, angle, flagged)."""
    v = np.atleast_2d(np.asarray(v, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    res = integrate_batch(field, v, x, controls)
    a, b, resid = _fit_tail(res.tail_t, res.tail_y)
    drift = _drift(res.energy0, res.energy1)
    scale = 1.0 + np.abs(res.tail_y).max(axis=(1, 2))
    flagged = (resid > controls.fit_tol * scale) | (drift > controls.drift_flag)
    return a, b, drift, resid, res.max_angle, flagged


def scattering_datum(field: Field, v_minus, x_minus, controls: Controls = Controls()) -> ScatteringDatum:
    """Integrate one trajectory and fit its outgoing free asymptote."""
    v = np.asarray(v_minus, dtype=float)
    x = orthogonalize(v, x_minus)
    a, b, drift, resid, angle, flagged = scattering_batch(field, v[None], x[None], controls)
    notes = []
    if flagged[0]:
        notes.append("asymptote fit residual or energy drift above threshold")
    return ScatteringDatum(v, x, a[0], b[0], float(drift[0]), float(resid[0]), float(angle[0]),
                           bool(flagged[0]), notes)
