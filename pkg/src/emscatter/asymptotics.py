"""High-energy limit functionals, finite-energy vectors and Born terms on lines.

All nested integrals along a line share one Chebyshev panel grid in the line
parameter ``tau``.  With ``G1 = int_{-inf}^tau B theta`` and
``G2 = int_{-inf}^tau G1`` every functional is either a full-line integral
or a *split* integral

    split[g] = int_{-inf}^0 int_{-inf}^tau g - int_0^inf int_tau^inf g

of an integrand assembled from node values, so the triple integrals cost
one pass over the grid.  Batches of lines are evaluated in chunks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .fields import Field
from .quadrature import PanelGrid

EPS_NODES, EPS_WEIGHTS = np.polynomial.legendre.leggauss(8)
EPS_NODES = 0.5 * (EPS_NODES + 1.0)
EPS_WEIGHTS = 0.5 * EPS_WEIGHTS


class QuadratureError(RuntimeError):
    pass


@dataclass(frozen=True)
class Line:
    """Oriented line tau -> tau theta + x with |theta| = 1 and theta . x = 0."""

    theta: np.ndarray
    x: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        x = np.asarray(self.x, dtype=float)
        if th.shape != x.shape or th.ndim != 1:
            raise ValueError("theta and x must be vectors of the same dimension")
        if abs(np.linalg.norm(th) - 1.0) > 1e-14:
            raise ValueError(f"|theta| = {np.linalg.norm(th)!r} is not 1")
        if abs(th @ x) > 1e-12 * (1.0 + np.linalg.norm(x)):
            raise ValueError(f"theta . x = {th @ x:.3e} is not 0")
        object.__setattr__(self, "theta", th)
        object.__setattr__(self, "x", x)

    @property
    def n(self) -> int:
        return self.theta.size

    @classmethod
    def from_angle(cls, phi: float, q: float) -> "Line":
        """n = 2 line with theta = (cos phi, sin phi), x = q theta_perp."""
        th = np.array([np.cos(phi), np.sin(phi)])
        return cls(th, q * perp(th))

    @classmethod
    def through(cls, v, x) -> "Line":
        """Line of the velocity direction of ``v`` through the projection of ``x``."""
        v = np.asarray(v, dtype=float)
        th = v / np.linalg.norm(v)
        x = np.asarray(x, dtype=float)
        return cls(th, x - (th @ x) * th)

    def reversed(self) -> "Line":
        return Line(-self.theta, self.x)


def perp(theta):
    """theta_perp = (sin phi, -cos phi) for theta = (cos phi, sin phi)."""
    theta = np.asarray(theta, dtype=float)
    return np.stack([theta[..., 1], -theta[..., 0]], axis=-1)


def line_grid(field: Field, resolution: float = 4.0, order: int = 16, half_length: Optional[float] = None) -> PanelGrid:
    """Symmetric tau grid on which every line through the field region is resolved."""
    half = max(field.reach(), 1e-3) if half_length is None else half_length
    return PanelGrid.symmetric(half, field.feature_scale() / resolution, order)


@dataclass
class AsymptoticTerms:
    W11: np.ndarray
    W12: np.ndarray
    W21: np.ndarray
    W22: np.ndarray
    omega1: np.ndarray
    omega2: np.ndarray
    P_gradV: np.ndarray
    error: Optional[float] = None


@dataclass
class FiniteEnergyTerms:
    s: float
    w1: np.ndarray
    w2: np.ndarray
    born1: np.ndarray
    born2: np.ndarray
    omega3: np.ndarray
    omega4: np.ndarray
    error: Optional[float] = None


@dataclass
class TermBatch:
    """Stacked per-line terms; arrays have a leading line axis."""

    thetas: np.ndarray
    xs: np.ndarray
    values: dict

    def __getitem__(self, key):
        return self.values[key]

    def __len__(self):
        return self.thetas.shape[0]


def _tail_check(field, grid, thetas, xs, tol=1e-12):
    ends = np.concatenate([xs + grid.a * thetas, xs + grid.b * thetas])
    mid = xs
    scale = max(np.max(np.abs(field.B(mid))), np.max(np.abs(field.grad_V(mid))), 1e-300)
    edge = max(np.max(np.abs(field.B(ends))), np.max(np.abs(field.grad_V(ends))))
    if field.is_zero:
        return
    if edge > tol * max(scale, 1.0):
        raise QuadratureError(
            f"field magnitude {edge:.2e} at the grid ends exceeds the tail tolerance; "
            f"extend the tau range beyond {grid.b:g}")


def _matvec(M, v):
    """M[..., i, k] v[..., k] with broadcasting over the leading axes."""
    return np.sum(M * v[..., None, :], axis=-1)


def _chunk_terms(field: Field, grid: PanelGrid, th: np.ndarray, xs: np.ndarray, speeds=None,
                 position: bool = True, leading: bool = False) -> dict:
    tau = grid.t
    pts = xs[:, None, :] + tau[None, :, None] * th[:, None, :]
    Bm = field.B(pts)
    Bth = _matvec(Bm, th[:, None, :])
    mgV = -field.grad_V(pts)
    if leading:
        return {"W11": grid.integral(Bth, axis=1), "P_gradV": -grid.integral(mgV, axis=1)}
    G1 = grid.cumulative(Bth, axis=1)
    G2 = grid.cumulative(G1, axis=1)
    BG1 = _matvec(Bm, G1)
    gB = field.grad_B(pts)
    om = _matvec(gB, G2[:, :, None, :])
    out = {
        "W11": grid.integral(Bth, axis=1),
        "P_gradV": -grid.integral(mgV, axis=1),
        "int_BG1": grid.integral(BG1, axis=1),
        "omega1": grid.integral(om, axis=1),
    }
    out["W12"] = -out["P_gradV"] + out["int_BG1"] + _matvec(out["omega1"], th)
    if position or speeds is not None:
        out["W21"] = grid.split(Bth, axis=1)
        out["split_mgV"] = grid.split(mgV, axis=1)
        out["split_BG1"] = grid.split(BG1, axis=1)
        out["omega2"] = grid.split(om, axis=1)
        out["W22"] = out["split_mgV"] + out["split_BG1"] + _matvec(out["omega2"], th)
    if speeds is not None:
        s = speeds[:, None, None]
        om3 = np.zeros_like(om)
        for e, w in zip(EPS_NODES, EPS_WEIGHTS):
            om3 += w * _matvec(field.grad_B(pts + (e / s) * G2), G2[:, :, None, :])
        out["omega3"] = grid.integral(om3, axis=1)
        out["omega4"] = grid.split(om3, axis=1)
        s1 = speeds[:, None]
        out["born1"] = out["W11"] - out["P_gradV"] / s1
        out["born2"] = out["W21"] / s1 + out["split_mgV"] / s1 ** 2
        out["w1"] = (out["born1"] + out["int_BG1"] / s1
                     + _matvec(out["omega3"], th) / s1)
        out["w2"] = (out["born2"] + out["split_BG1"] / s1 ** 2
                     + _matvec(out["omega4"], th) / s1 ** 2)
    return out


def _evaluate(field: Field, thetas, xs, speeds=None, grid: Optional[PanelGrid] = None,
              chunk: int = 256, position: bool = True, leading: bool = False) -> dict:
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if thetas.shape != xs.shape or thetas.shape[1] != field.n:
        raise ValueError("thetas and offsets must both have shape (lines, n)")
    grid = line_grid(field) if grid is None else grid
    _tail_check(field, grid, thetas, xs)
    if speeds is not None:
        speeds = np.broadcast_to(np.asarray(speeds, dtype=float), thetas.shape[:1])
    parts = []
    for lo in range(0, thetas.shape[0], chunk):
        sl = slice(lo, lo + chunk)
        parts.append(_chunk_terms(field, grid, thetas[sl], xs[sl],
                                  None if speeds is None else speeds[sl], position, leading))
    return {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}


def _coarse(grid: PanelGrid) -> PanelGrid:
    n = max(2, grid.n_panels // 2)
    n += n % 2
    return PanelGrid(grid.a, grid.b, n, grid.order)


def _error(fine: dict, coarse: dict, keys) -> np.ndarray:
    return np.max([np.max(np.abs(fine[k] - coarse[k]).reshape(len(fine[k]), -1), axis=1) for k in keys], axis=0)


LIMIT_KEYS = ("W11", "W12", "W21", "W22")
FINITE_KEYS = ("w1", "w2", "born1", "born2")


def asymptotic_batch(field: Field, thetas, xs, grid: Optional[PanelGrid] = None,
                     estimate_error: bool = False, chunk: int = 256, position: bool = True,
                     leading_only: bool = False) -> TermBatch:
    """Limit functionals on many lines at once.

    ``position=False`` skips W21, W22; ``leading_only`` returns just W11
    and P(grad V).
    """
    grid = line_grid(field) if grid is None else grid
    vals = _evaluate(field, thetas, xs, None, grid, chunk, position, leading_only)
    if estimate_error:
        keys = ("W11",) if leading_only else LIMIT_KEYS if position else LIMIT_KEYS[:2]
        coarse = _evaluate(field, thetas, xs, None, _coarse(grid), chunk, position, leading_only)
        vals["error"] = _error(vals, coarse, keys)
    return TermBatch(np.atleast_2d(thetas), np.atleast_2d(xs), vals)


def asymptotic_terms(field: Field, line: Line, grid: Optional[PanelGrid] = None,
                     estimate_error: bool = True) -> AsymptoticTerms:
    b = asymptotic_batch(field, line.theta[None], line.x[None], grid, estimate_error)
    err = float(b["error"][0]) if estimate_error else None
    return AsymptoticTerms(b["W11"][0], b["W12"][0], b["W21"][0], b["W22"][0],
                           b["omega1"][0], b["omega2"][0], b["P_gradV"][0], err)


def limit_terms_velocity(field: Field, line: Line, grid: Optional[PanelGrid] = None):
    """(W11, W12): limits of a_sc and of s (a_sc - W11)."""
    t = asymptotic_terms(field, line, grid, estimate_error=False)
    return t.W11, t.W12


def limit_terms_position(field: Field, line: Line, grid: Optional[PanelGrid] = None):
    """(W21, W22): limits of s b_sc and of s (s b_sc - W21)."""
    t = asymptotic_terms(field, line, grid, estimate_error=False)
    return t.W21, t.W22


def finite_energy_batch(field: Field, thetas, xs, speeds, grid: Optional[PanelGrid] = None,
                        estimate_error: bool = False, chunk: int = 128) -> TermBatch:
    if np.any(np.asarray(speeds) <= 0):
        raise ValueError("speeds must be positive")
    grid = line_grid(field) if grid is None else grid
    vals = _evaluate(field, thetas, xs, speeds, grid, chunk)
    if estimate_error:
        vals["error"] = _error(vals, _evaluate(field, thetas, xs, speeds, _coarse(grid), chunk), FINITE_KEYS)
    return TermBatch(np.atleast_2d(thetas), np.atleast_2d(xs), vals)


def finite_energy_terms(field: Field, v_minus, x_minus, grid: Optional[PanelGrid] = None,
                        estimate_error: bool = True) -> FiniteEnergyTerms:
    """w1, w2 (and the Born parts) at incoming data (v_-, x_-)."""
    v = np.asarray(v_minus, dtype=float)
    s = float(np.linalg.norm(v))
    if s == 0:
        raise ValueError("v_- must be nonzero")
    line = Line.through(v, x_minus)
    if np.linalg.norm(line.x - np.asarray(x_minus, dtype=float)) > 1e-9 * (1 + np.linalg.norm(line.x)):
        raise ValueError("x_- must be orthogonal to v_-")
    b = finite_energy_batch(field, line.theta[None], line.x[None], [s], grid, estimate_error)
    err = float(b["error"][0]) if estimate_error else None
    return FiniteEnergyTerms(s, b["w1"][0], b["w2"][0], b["born1"][0], b["born2"][0],
                             b["omega3"][0], b["omega4"][0], err)


@dataclass
class BornTerms:
    s: float
    line: Line
    w1: np.ndarray
    w2: np.ndarray


def born_batch(field: Field, s: float, thetas, xs, grid: Optional[PanelGrid] = None, chunk: int = 256):
    """(w~1, w~2) on many lines; only the linear terms are assembled."""
    if not s > 0:
        raise ValueError("s must be positive")
    vals = _evaluate(field, thetas, xs, None, grid, chunk)
    w1 = vals["W11"] - vals["P_gradV"] / s
    w2 = vals["W21"] / s + vals["split_mgV"] / s ** 2
    return w1, w2


def born_leading(field: Field, s: float, line: Line, grid: Optional[PanelGrid] = None) -> BornTerms:
    w1, w2 = born_batch(field, s, line.theta[None], line.x[None], grid)
    return BornTerms(float(s), line, w1[0], w2[0])


@dataclass
class Symmetrized:
    P_gradV: np.ndarray
    W11: np.ndarray
    split_B: np.ndarray
    split_gradV: np.ndarray


def symmetrize(forward: BornTerms, backward: BornTerms, rtol: float = 1e-14) -> Symmetrized:
    """Even/odd combinations of Born terms at (s, theta, x) and (s, -theta, x).

    ``split_gradV`` is the split integral of -grad V.
    """
    s = forward.s
    if abs(backward.s - s) > rtol * s:
        raise ValueError(f"orientations evaluated at different speeds ({s!r} vs {backward.s!r})")
    if not (np.allclose(forward.line.theta, -backward.line.theta, atol=1e-14)
            and np.allclose(forward.line.x, backward.line.x, atol=1e-12)):
        raise ValueError("second line must be the reversal of the first")
    return Symmetrized(
        P_gradV=-0.5 * s * (forward.w1 + backward.w1),
        W11=0.5 * (forward.w1 - backward.w1),
        split_B=0.5 * s * (forward.w2 + backward.w2),
        split_gradV=0.5 * s * s * (forward.w2 - backward.w2),
    )


def fan_lines(n_angles: int, offsets: Sequence[float], full_circle: bool = False):
    """n = 2 line set: angles uniform on [0, pi) (or [0, 2 pi)), offsets x = q theta_perp."""
    span = 2 * np.pi if full_circle else np.pi
    phi = np.arange(n_angles) * span / n_angles
    q = np.asarray(offsets, dtype=float)
    th = np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    P, Q = np.meshgrid(np.arange(n_angles), q, indexing="ij")
    thetas = th[P.ravel()]
    xs = Q.ravel()[:, None] * perp(thetas)
    return phi, thetas, xs
