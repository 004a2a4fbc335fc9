"""Reconstruction of (grad V, B) and V from finite-energy scattering data.

Pipeline for n = 2 on the standard fan of lines (see ``xray``):

1. integrate trajectories on every line for a geometric energy ladder;
2. extract the two leading high-energy terms per line by two-term
   Richardson extrapolation;
3. invert P B_{1,2} (built from W11) by filtered backprojection, evaluate the
   magnetic part of W12 on the recovered B, and invert the remaining
   -P(grad V) component by component.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.ndimage import map_coordinates, spline_filter

from .asymptotics import asymptotic_batch
from .dynamics import Controls, scattering_batch
from .fields import Decay, Field, MagneticTerm
from .xray import GridFunction, Sinogram, invert_fbp, pb_from_w11, sinogram_lines


class CoverageError(RuntimeError):
    pass


@dataclass
class EnergySweep:
    """Scattering data on the fan (J angles x I offsets on [-Q, Q]) for each speed."""

    J: int
    I: int
    Q: float
    ladder: np.ndarray
    a: np.ndarray  # (S, lines, n)
    b: np.ndarray
    flagged: np.ndarray  # (S, lines)
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        self.ladder = np.asarray(self.ladder, dtype=float)
        check_ladder(self.ladder, minimum=1)

    @property
    def lines(self):
        return sinogram_lines(self.J, self.I, self.Q)

    def subset(self, idx) -> "EnergySweep":
        """Sweep restricted to the speeds at positions ``idx``."""
        idx = list(idx)
        return EnergySweep(self.J, self.I, self.Q, self.ladder[idx], self.a[idx], self.b[idx],
                           self.flagged[idx], dict(self.meta))


def check_ladder(ladder, minimum: int = 3, rtol: float = 1e-12):
    ladder = np.asarray(ladder, dtype=float)
    if ladder.ndim != 1 or ladder.size < minimum:
        raise ValueError(f"energy ladder needs at least {minimum} speeds, got {ladder.size}")
    if np.any(ladder <= 0):
        raise ValueError("speeds must be positive")
    if ladder.size > 1:
        r = ladder[1:] / ladder[:-1]
        if np.any(r <= 1) or np.ptp(r) > rtol * r[0]:
            raise ValueError(f"energy ladder {ladder.tolist()} is not strictly geometric")
    return ladder


def run_sweep(field: Field, J: int, I: int, Q: float, ladder, controls: Controls = Controls(),
              chunk: int = 8192, threads: int = 1) -> EnergySweep:
    """Scattering data on every fan line for every ladder speed.

    Chunks are independent; with ``threads > 1`` they run on a thread pool
    and are reassembled in order, so results do not depend on the count.
    """
    ladder = check_ladder(ladder, minimum=1)
    thetas, xs = sinogram_lines(J, I, Q)
    if field.n != 2:
        raise ValueError("the fan sweep is two-dimensional")
    S, Lc = ladder.size, len(thetas)
    a = np.zeros((S, Lc, 2))
    b = np.zeros((S, Lc, 2))
    flagged = np.zeros((S, Lc), dtype=bool)
    jobs = [(si, slice(lo, lo + chunk)) for si in range(S) for lo in range(0, Lc, chunk)]

    def work(job):
        si, sl = job
        return scattering_batch(field, ladder[si] * thetas[sl], xs[sl], controls)

    results = parallel_map(work, jobs, threads)
    for (si, sl), res in zip(jobs, results):
        a[si, sl], b[si, sl], flagged[si, sl] = res[0], res[1], res[5]
    return EnergySweep(J, I, Q, ladder, a, b, flagged, {"field": field.name})


def parallel_map(fn, items, threads: int = 1) -> list:
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


@dataclass
class Limits:
    W11: np.ndarray
    W12: np.ndarray
    W21: np.ndarray
    W22: np.ndarray
    residual: np.ndarray  # (lines, 4): spread of each term across ladder pairs
    flagged: np.ndarray


def richardson_pair(s1: float, s2: float, y1, y2):
    """Exact solution of y = c1 + c2 / s through two points."""
    c1 = (s2 * y2 - s1 * y1) / (s2 - s1)
    c2 = (y1 - y2) / (1.0 / s1 - 1.0 / s2)
    return c1, c2


def extract_limits(sweep: EnergySweep, tol: Optional[float] = None) -> Limits:
    """Two-term extrapolation of a_sc(s) and s b_sc(s) from consecutive ladder pairs.

    The top pair gives the estimate; the spread across all pairs is the residual.
    """
    s = check_ladder(sweep.ladder, minimum=3)
    est = []
    for j in range(s.size - 1):
        s1, s2 = s[j], s[j + 1]
        ca = richardson_pair(s1, s2, sweep.a[j], sweep.a[j + 1])
        cb = richardson_pair(s1, s2, s1 * sweep.b[j], s2 * sweep.b[j + 1])
        est.append(np.stack([ca[0], ca[1], cb[0], cb[1]]))
    est = np.stack(est)  # (pairs, 4, lines, n)
    top = est[-1]
    spread = np.max(np.linalg.norm(est - top[None], axis=-1), axis=0).T
    flagged = np.any(sweep.flagged, axis=0)
    if tol is not None:
        flagged |= np.any(spread > tol, axis=1)
    return Limits(top[0], top[1], top[2], top[3], spread, flagged)


class GridMagnetic2D(MagneticTerm):
    """B_{1,2} from grid values by cubic spline interpolation, zero outside the grid square.

    Derivatives are those of the interpolating bicubic spline at the grid
    nodes, themselves interpolated by cubic splines.
    """

    n = 2

    def __init__(self, grid: GridFunction):
        c = grid.coords
        self.L = grid.L
        self.h = grid.spacing
        vals = grid.values[..., 0]
        spline = RectBivariateSpline(c, c, vals, kx=3, ky=3, s=0)
        dx = spline(c, c, dx=1)
        dy = spline(c, c, dy=1)
        self._coef = [spline_filter(np.ascontiguousarray(a), order=3, mode="mirror") for a in (vals, dx, dy)]
        # piecewise cubic: 16-node panels spanning 8 cells integrate it to ~1e-8
        self._scale = 32.0 * grid.spacing

    def _eval(self, x, which):
        x = np.asarray(x, dtype=float)
        idx = (x + self.L) / self.h
        flat = idx.reshape(-1, 2).T
        out = map_coordinates(self._coef[which], flat, order=3, mode="mirror", prefilter=False)
        out = out.reshape(x.shape[:-1])
        inside = np.all(np.abs(x) <= self.L, axis=-1)
        return np.where(inside, out, 0.0)

    def components(self, x):
        return self._eval(x, 0)[..., None]

    def component_grads(self, x):
        g = np.stack([self._eval(x, 1), self._eval(x, 2)], axis=-1)
        return g[..., None, :]

    def reach(self, eps):
        return self.L * np.sqrt(2.0)

    def feature_scale(self):
        return self._scale


def error_report(truth: dict, recon: dict) -> dict:
    """Per-component relative L2 and relative max errors for matching grids."""
    out = {}
    for key, t in truth.items():
        if key not in recon:
            raise KeyError(f"reconstruction lacks component {key!r}")
        tv = np.asarray(getattr(t, "values", t), dtype=float)
        rv = np.asarray(getattr(recon[key], "values", recon[key]), dtype=float)
        if tv.shape != rv.shape:
            raise ValueError(f"grid mismatch for {key!r}: {tv.shape} vs {rv.shape}")
        d = rv - tv
        nt = np.linalg.norm(tv)
        mt = np.max(np.abs(tv))
        out[key] = {
            "rel_l2": float(np.linalg.norm(d) / nt) if nt > 0 else float(np.linalg.norm(d)),
            "rel_max": float(np.max(np.abs(d)) / mt) if mt > 0 else float(np.max(np.abs(d))),
        }
    return out


@dataclass
class ReconstructionReport:
    recon: dict
    truth: dict
    errors: dict
    residuals: np.ndarray
    notes: list = dc_field(default_factory=list)

    def summary(self) -> dict:
        return {"errors": self.errors, "notes": list(self.notes),
                "max_extrapolation_residual": [float(v) for v in np.max(self.residuals, axis=0)]
                if self.residuals.size else []}


def _sino(sweep, values):
    return Sinogram(sweep.J, sweep.I, sweep.Q, np.asarray(values).reshape(sweep.J, sweep.I, -1))


def _truth_grids(field: Optional[Field], L: float, N: int, keys):
    if field is None:
        return {}
    pts = GridFunction(L, N, np.zeros((N, N))).points()
    out = {}
    if "B12" in keys:
        out["B12"] = GridFunction(L, N, field.B(pts)[..., 0, 1])
    if "gradV" in keys:
        out["gradV"] = GridFunction(L, N, field.grad_V(pts))
    if "V" in keys:
        out["V"] = GridFunction(L, N, field.V(pts))
    return out


def _limits_input(data):
    if isinstance(data, EnergySweep):
        return data, extract_limits(data)
    sweep, lim = data
    return sweep, lim


def reconstruct_from_limits(J: int, I: int, Q: float, W11, W12, L: float, N: int,
                            window: str = "hann"):
    """(B12 grid, grad V grid) from W11 and W12 on the fan."""
    thetas, xs = sinogram_lines(J, I, Q)
    pb = pb_from_w11(thetas, np.asarray(W11), 0, 1)
    B_hat = invert_fbp(Sinogram(J, I, Q, pb.reshape(J, I)), L, N, window)
    if np.any(B_hat.values):
        bfield = Field(2, None, GridMagnetic2D(B_hat), Decay(2.0), "B-hat")
        bpart = asymptotic_batch(bfield, thetas, xs, position=False)["W12"]
    else:
        bpart = np.zeros_like(W12)
    minus_PgradV = np.asarray(W12) - bpart
    gV = invert_fbp(Sinogram(J, I, Q, (-minus_PgradV).reshape(J, I, 2)), L, N, window)
    return B_hat, gV


def reconstruct_from_a(data, L: float, N: int, truth: Optional[Field] = None, window: str = "hann",
                       max_flagged: float = 0.01) -> ReconstructionReport:
    """B and grad V from the velocity data.

    ``data`` is an ``EnergySweep`` or a pair ``(sweep, Limits)``.
    """
    sweep, lim = _limits_input(data)
    frac = float(np.mean(lim.flagged))
    if frac > max_flagged:
        raise CoverageError(f"{frac:.1%} of lines flagged (quota {max_flagged:.1%})")
    B_hat, gV = reconstruct_from_limits(sweep.J, sweep.I, sweep.Q, lim.W11, lim.W12, L, N, window)
    recon = {"B12": B_hat, "gradV": gV}
    tg = _truth_grids(truth, L, N, recon)
    notes = [f"{int(np.sum(lim.flagged))} flagged lines"]
    return ReconstructionReport(recon, tg, error_report(tg, recon) if tg else {}, lim.residual, notes)


def reconstruct_V_from_b(data, known_B: Field, L: float, N: int, truth: Optional[Field] = None,
                         window: str = "hann", max_flagged: float = 0.01) -> ReconstructionReport:
    """V from the position data once B is known.

    Uniqueness holds for n >= 3; in the plane the answer is one member of a
    possibly non-unique family, which the report notes.
    """
    sweep, lim = _limits_input(data)
    frac = float(np.mean(lim.flagged))
    if frac > max_flagged:
        raise CoverageError(f"{frac:.1%} of lines flagged (quota {max_flagged:.1%})")
    thetas, xs = sweep.lines
    bonly = known_B.without_potential()
    bpart = np.zeros_like(lim.W22) if bonly.magnetic is None else asymptotic_batch(bonly, thetas, xs)["W22"]
    minus_PV = np.einsum("li,li->l", lim.W22 - bpart, thetas)
    V_hat = invert_fbp(_sino(sweep, -minus_PV), L, N, window)
    recon = {"V": V_hat}
    tg = _truth_grids(truth, L, N, recon)
    notes = ["n = 2: V is not determined uniquely by b_sc without the true B"]
    return ReconstructionReport(recon, tg, error_report(tg, recon) if tg else {}, lim.residual, notes)
