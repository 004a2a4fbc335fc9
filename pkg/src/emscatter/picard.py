"""Integral-operator form of the scattering problem.

The deflection (f, h) ~ (y_-, dy_-/dt) is a fixed point of

    A2(f, h)(t) = int_{-inf}^t F(x_- + tau v_- + f(tau), v_- + h(tau)) dtau
    A1(f, h)(t) = int_{-inf}^t A2(f, h)(tau) dtau

Paths live on a symmetric Chebyshev panel grid in time covering the region
where the field is non-negligible along the incoming line; outside it the
integrands vanish to working precision, so A2 is constant and A1 affine
beyond the last node.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Optional

import numpy as np

from .bounds import BoundSet, DomainError, bounds, default_R, thresholds
from .dynamics import orthogonalize
from .fields import Field
from .quadrature import PanelGrid


class PicardError(RuntimeError):
    pass


@dataclass
class DeflectionPath:
    """Node values of (f, h) on a time grid."""

    grid: PanelGrid
    f: np.ndarray
    h: np.ndarray

    @property
    def t(self) -> np.ndarray:
        return self.grid.t

    @classmethod
    def zero(cls, grid: PanelGrid, n: int) -> "DeflectionPath":
        return cls(grid, np.zeros((grid.size, n)), np.zeros((grid.size, n)))

    def norm(self) -> float:
        """max(sup |f - t h|, sup |h|); beyond the grid f - t h is constant."""
        return float(max(np.max(np.linalg.norm(self.f - self.t[:, None] * self.h, axis=1)),
                         np.max(np.linalg.norm(self.h, axis=1))))

    def __sub__(self, other: "DeflectionPath") -> "DeflectionPath":
        return DeflectionPath(self.grid, self.f - other.f, self.h - other.h)

    def in_ball(self, R: float, r: float) -> bool:
        """Membership in M_{T,R,r} for T = +inf."""
        return (np.max(np.linalg.norm(self.f - self.t[:, None] * self.h, axis=1)) <= r
                and np.max(np.linalg.norm(self.h, axis=1)) <= R)

    def at(self, times):
        """(f, h) at arbitrary times, extended as free motion outside the grid."""
        times = np.atleast_1d(np.asarray(times, dtype=float))
        f = self.grid.interpolate(self.f, times)
        h = self.grid.interpolate(self.h, times)
        after = times > self.grid.b
        f[after] = self.f[-1] + (times[after] - self.grid.b)[:, None] * self.h[-1]
        before = times < self.grid.a
        f[before] = 0.0
        h[before] = 0.0
        return f, h


def time_grid(field: Field, v, x, order: int = 16, resolution: float = 4.0) -> PanelGrid:
    """Symmetric grid covering the field region along x + t v."""
    s = float(np.linalg.norm(v))
    xn = float(np.linalg.norm(x))
    reach = max(field.reach(), 1e-3)
    half = (math.sqrt(max(reach ** 2 - xn ** 2, 0.0)) + 0.05 * reach + 1.0 / (1.0 + s)) / s
    width = field.feature_scale() / (resolution * s)
    return PanelGrid.symmetric(half, width, order)


def _check_tail(field: Field, v, x, grid: PanelGrid):
    start = np.asarray(x) + grid.a * np.asarray(v)
    if np.linalg.norm(start) < field.reach() * 0.999:
        raise PicardError(
            f"grid starts inside the field region (|x(t0)| = {np.linalg.norm(start):.3g} < "
            f"{field.reach():.3g}); extend the grid to t0 <= {-field.reach() / np.linalg.norm(v):.3g}")


def apply_A(field: Field, v, x, path: DeflectionPath) -> DeflectionPath:
    """One application of the integral operator."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    if not np.any(v):
        raise ValueError("incoming velocity must be nonzero")
    _check_tail(field, v, x, path.grid)
    t = path.t[:, None]
    F = field.force(x + t * v + path.f, v + path.h)
    a2 = path.grid.cumulative(F)
    a1 = path.grid.cumulative(a2)
    return DeflectionPath(path.grid, a1, a2)


def apply_A2(field: Field, v, x, path: DeflectionPath) -> DeflectionPath:
    return apply_A(field, v, x, apply_A(field, v, x, path))


@dataclass
class Certificate:
    bounds: BoundSet
    thresholds: object
    admissible: bool
    a_priori_iterations: Optional[int]


@dataclass
class FixedPoint:
    path: DeflectionPath
    iterations: int
    residuals: list
    certificate: Optional[Certificate]
    warnings: list = dc_field(default_factory=list)


def certify(field: Field, v, x, tol: float, first_step: float, R: Optional[float] = None,
            r: float = 1.0) -> Certificate:
    """Threshold check and a-priori iteration count for the A^2 iteration."""
    n, d = field.n, field.decay
    s, xn = float(np.linalg.norm(v)), float(np.linalg.norm(x))
    R = default_R(n, d.alpha, d.beta1, xn) if R is None else R
    z = thresholds(n, d.alpha, d.beta1, d.beta2, R, r, xn)
    admissible = s >= max(z.z1, z.z2) and s > z.z3
    b = bounds(n, d.alpha, d.beta1, d.beta2, s, xn, R, r) if s > math.sqrt(2) * R else None
    count = None
    if b is not None and admissible and 0 < b.lambda_ < 1 and first_step > 0:
        count = max(1, math.ceil(math.log(tol * (1 - b.lambda_) / first_step) / math.log(b.lambda_)))
    return Certificate(b, z, admissible, count)


def solve_fixed_point(field: Field, v, x, tol: float = 1e-13, max_iter: int = 200,
                      grid: Optional[PanelGrid] = None, R: Optional[float] = None,
                      r: float = 1.0) -> FixedPoint:
    """Iterate (f, h) <- A^2(f, h) from (0, 0) until successive iterates agree to ``tol``."""
    v = np.asarray(v, dtype=float)
    x = orthogonalize(v, x)
    grid = time_grid(field, v, x) if grid is None else grid
    path = DeflectionPath.zero(grid, field.n)
    notes = []
    residuals = []
    cert = None
    for it in range(1, max_iter + 1):
        new = apply_A2(field, v, x, path)
        res = (new - path).norm()
        residuals.append(res)
        path = new
        if it == 1:
            try:
                cert = certify(field, v, x, tol, res, R, r) if res > 0 else None
            except DomainError as exc:
                notes.append(f"no contraction certificate: {exc}")
            if cert is not None and not cert.admissible:
                notes.append("speed below the contraction thresholds; result is uncertified")
                warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)
        if res < tol:
            return FixedPoint(path, it, residuals, cert, notes)
    raise PicardError(f"no convergence in {max_iter} iterations; last residual {residuals[-1]:.3e}")


@dataclass
class PicardDecomposition:
    """[A^2]_1(f, h)(t) = k t + l + H(t) for t >= 0."""

    k: np.ndarray
    l: np.ndarray
    grid: PanelGrid
    H_nodes: np.ndarray
    Hdot_nodes: np.ndarray

    def H(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = self.grid.interpolate(self.H_nodes, t)
        out[t > self.grid.b] = 0.0
        return out

    def Hdot(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = self.grid.interpolate(self.Hdot_nodes, t)
        out[t > self.grid.b] = 0.0
        return out


def decompose_klh(field: Field, v, x, path: DeflectionPath) -> PicardDecomposition:
    """Slope, intercept and decaying remainder of the outgoing deflection."""
    v = np.asarray(v, dtype=float)
    x = np.asarray(x, dtype=float)
    img = apply_A(field, v, x, path)
    g = path.grid
    F = field.force(x + g.t[:, None] * v + img.f, v + img.h)
    k = g.integral(F)
    l = g.split(F)
    tail1 = g.tail(F)
    H = g.tail(tail1)
    return PicardDecomposition(k, l, g, H, -tail1)


def contraction_ratio(field: Field, v, x, p1: DeflectionPath, p2: DeflectionPath) -> float:
    """Observed ||A^2 p1 - A^2 p2|| / ||p1 - p2||."""
    num = (apply_A2(field, v, x, p1) - apply_A2(field, v, x, p2)).norm()
    den = (p1 - p2).norm()
    return num / den


# ---------------------------------------------------------------------------
# small-angle scattering estimates at one incoming datum


@dataclass
class Inequality:
    name: str
    lhs: float
    rhs: float

    @property
    def holds(self) -> bool:
        return bool(self.lhs < self.rhs)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


@dataclass
class TheoremCheck:
    """Every a-priori deflection and scattering-data estimate evaluated at one (v_-, x_-)."""

    v: np.ndarray
    x: np.ndarray
    certificate: Certificate
    inequalities: list
    a_sc: np.ndarray
    b_sc: np.ndarray
    max_angle: float
    notes: list = dc_field(default_factory=list)

    @property
    def admissible(self) -> bool:
        return self.certificate.admissible

    @property
    def passed(self) -> bool:
        return self.admissible and all(q.holds for q in self.inequalities)

    def rows(self) -> list:
        return [{"name": q.name, "lhs": q.lhs, "rhs": q.rhs, "holds": q.holds} for q in self.inequalities]


def check_theorem_estimates(field: Field, v, x, R: Optional[float] = None, r: float = 1.0,
                            tol: float = 1e-13, controls=None) -> TheoremCheck:
    """Evaluate the deflection, remainder and asymptote estimates at one datum.

    The deflection comes from the A^2 fixed point; a_sc, b_sc and the
    remainder h(t) = y_-(t) - t a_sc - b_sc from its slope/intercept
    decomposition. The trajectory integrator supplies the deflection angle
    and an independent a_sc, b_sc reported in the notes.
    """
    from .asymptotics import finite_energy_terms
    from .dynamics import Controls, scattering_datum

    v = np.asarray(v, dtype=float)
    x = orthogonalize(v, x)
    s, xn = float(np.linalg.norm(v)), float(np.linalg.norm(x))
    d = field.decay
    R = default_R(field.n, d.alpha, d.beta1, xn) if R is None else R
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fp = solve_fixed_point(field, v, x, tol=tol, R=R, r=r)
    z = thresholds(field.n, d.alpha, d.beta1, d.beta2, R, r, xn)
    bs = bounds(field.n, d.alpha, d.beta1, d.beta2, s, xn, R, r)
    cert = Certificate(bs, z, s >= max(z.z1, z.z2) and s > z.z3, None)

    path = fp.path
    dec = decompose_klh(field, v, x, path)
    t = path.t
    past = t <= 0
    future = t >= 0
    H = dec.H_nodes[future]
    Hdot = dec.Hdot_nodes[future]
    w = finite_energy_terms(field, v, x, estimate_error=False)
    datum = scattering_datum(field, v, x, controls or Controls())
    ineq = [
        Inequality("incoming velocity deflection", float(np.max(np.linalg.norm(path.h[past], axis=1)
                                                               / bs.zeta(t[past]))), 1.0),
        Inequality("incoming deflection", float(np.max(np.linalg.norm(path.f[past], axis=1))),
                   float(bs.xi(0.0))),
        Inequality("remainder", float(np.max(np.linalg.norm(H, axis=1) / bs.xi(t[future]))), 1.0),
        Inequality("remainder derivative", float(np.max(np.linalg.norm(Hdot, axis=1) / bs.zeta(t[future]))),
                   1.0),
        Inequality("velocity change", float(np.linalg.norm(dec.k)), bs.rho2),
        Inequality("velocity change vs w1", float(np.linalg.norm(dec.k - w.w1)), bs.delta11 + bs.delta12),
        Inequality("position change", float(np.linalg.norm(dec.l)), bs.rho1),
        Inequality("position change vs w2", float(np.linalg.norm(dec.l - w.w2)), bs.delta21 + bs.delta22),
        Inequality("max deflection angle", datum.max_angle, math.pi / 4),
    ]
    notes = list(fp.warnings)
    notes.append(f"fixed point in {fp.iterations} iterations; integrator gap "
                 f"|a| {np.linalg.norm(datum.a_sc - dec.k):.3g}, |b| {np.linalg.norm(datum.b_sc - dec.l):.3g}")
    if not cert.admissible:
        notes.append(f"speed {s:.6g} below thresholds (z1, z2, z3) = ({z.z1:.6g}, {z.z2:.6g}, {z.z3:.6g})")
    return TheoremCheck(v, x, cert, ineq, dec.k, dec.l, datum.max_angle, notes)


def is_admissible(field: Field, speed: float, offset: float, R: Optional[float] = None,
                  r: float = 1.0) -> bool:
    d = field.decay
    R = default_R(field.n, d.alpha, d.beta1, offset) if R is None else R
    try:
        z = thresholds(field.n, d.alpha, d.beta1, d.beta2, R, r, offset)
    except DomainError:
        return False
    return speed >= max(z.z1, z.z2) and speed > z.z3


def smallest_admissible_offset(field: Field, speed: float, r: float = 1.0, hi: float = 1e3,
                               rtol: float = 1e-6) -> float:
    """Smallest |x_-| at which ``speed`` clears the thresholds (default R per offset).

    Thresholds decrease with the offset, so bisection applies.
    """
    if not is_admissible(field, speed, hi, r=r):
        raise DomainError(f"speed {speed:g} is below the thresholds even at |x| = {hi:g}")
    lo = 0.0
    if is_admissible(field, speed, lo, r=r):
        return 0.0
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if is_admissible(field, speed, mid, r=r):
            hi = mid
        else:
            lo = mid
    return hi
