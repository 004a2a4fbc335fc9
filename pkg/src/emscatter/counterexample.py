"""Two radial magnetic fields in the plane with equal second position term.

With even profiles f~_1, f~_2 of equal square and B^i_{1,2}(x) = f_i(|x|^2)
chosen so that P B^i_{1,2}(theta, q theta_perp) = f~_i(q), a radial potential
V makes W22(V, B_1) = W22(0, B_2) on every line although B_1 != B_2 and
V != 0.  Everything here is built from one analytic bump.

Profiles are handled as functions of the radius r (g_i(r) = f_i(r^2)); the
radial X-ray equation is inverted by the Abel formula after the substitution
q = sqrt(r^2 + w^2), which removes the inverse square-root singularity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .asymptotics import asymptotic_batch, line_grid
from .fields import Decay, Field, RadialMagnetic2D, RadialPotential, observed_decay
from .quadrature import PanelGrid
from .xray import GridFunction, Sinogram, invert_fbp

AMPLITUDE = math.exp(4.0)  # max f~_1 = A chi(1/2) = 1
EPSILONS = {1: 1.0, 2: -1.0}


class CounterexampleError(RuntimeError):
    pass


def _chi_all(q):
    """chi, chi', chi'' for chi(q) = exp(-1/(q(1-q))) on (0, 1)."""
    q = np.asarray(q, dtype=float)
    inside = (q > 0) & (q < 1)
    qq = np.where(inside, q, 0.5)
    p = qq * (1 - qq)
    dp = 1 - 2 * qq
    # near the ends exp(-1/p) underflows before the poles in g overflow
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        c = np.where(inside, np.exp(-1.0 / p), 0.0)
        g = dp / p ** 2
        dg = (-2 * p ** 2 - 2 * p * dp * dp) / p ** 4
        c1 = np.where(inside & (c > 0), c * g, 0.0)
        c2 = np.where(inside & (c > 0), c * (g * g + dg), 0.0)
    return c, c1, c2


def bump_chi(q):
    """exp(-1/(q(1-q))) on (0, 1), zero elsewhere."""
    out = _chi_all(q)[0]
    return float(out) if np.ndim(out) == 0 else out


def f_tilde_all(i: int, q):
    """f~_i and its first two derivatives (normalized so max f~_1 = 1)."""
    if i not in EPSILONS:
        raise ValueError("profile index must be 1 or 2")
    e = EPSILONS[i]
    q = np.asarray(q, dtype=float)
    a0, a1, a2 = _chi_all(q)
    b0, b1, b2 = _chi_all(-q)
    c0, c1, c2 = _chi_all(q - 4)
    d0, d1, d2 = _chi_all(-4 - q)
    val = a0 + b0 + e * (c0 + d0)
    d1v = a1 - b1 + e * (c1 - d1)
    d2v = a2 + b2 + e * (c2 + d2)
    return AMPLITUDE * val, AMPLITUDE * d1v, AMPLITUDE * d2v


def f_tilde(i: int, q):
    out = f_tilde_all(i, q)[0]
    return float(out) if np.ndim(out) == 0 else out


@dataclass
class RadialProfile:
    """g(r) = f(r^2) on [0, support] as a C^1 cubic Hermite spline (zero beyond)."""

    r: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    support: float
    forward_residual: float = math.nan

    def __post_init__(self):
        self.spline = CubicHermiteSpline(self.r, self.g, self.dg, extrapolate=False)
        self._d1 = self.spline.derivative(1)
        self._d2 = self.spline.derivative(2)
        # F(r^2) = -int_{r^2}^inf f(s) ds = -int_r^inf 2 rho g(rho) d rho
        h = 2 * self.r * self.g
        dh = 2 * self.g + 2 * self.r * self.dg
        anti = CubicHermiteSpline(self.r, h, dh, extrapolate=False).antiderivative()
        self._anti = anti
        self._total = float(anti(self.r[-1]))

    def _eval(self, fn, r):
        r = np.abs(np.asarray(r, dtype=float))
        out = fn(np.minimum(r, self.support))
        return np.where(r <= self.support, np.nan_to_num(out), 0.0)

    def __call__(self, r):
        return self._eval(self.spline, r)

    def d1(self, r):
        return self._eval(self._d1, r)

    def d2(self, r):
        return self._eval(self._d2, r)

    def F(self, r):
        """F(r^2) with F(s) = -int_s^inf f."""
        r = np.abs(np.asarray(r, dtype=float))
        inside = self._eval(self._anti, r)
        return np.where(r <= self.support, inside - self._total, 0.0)

    def f_of_s(self, s):
        return self(np.sqrt(np.maximum(np.asarray(s, dtype=float), 0.0)))

    def integral_f(self) -> float:
        """int_0^inf f(s) ds = -F(0)."""
        return self._total

    def forward(self, q, nodes: int = 4000):
        """Radial X-ray transform 2 int_0^inf g(sqrt(q^2 + w^2)) dw."""
        q = np.atleast_1d(np.asarray(q, dtype=float))
        grid = PanelGrid(0.0, self.support, max(1, nodes // 16), 16)
        w = grid.t
        vals = self(np.sqrt(q[:, None] ** 2 + w[None, :] ** 2))
        return 2.0 * grid.integral(vals, axis=1)

    def profile(self):
        """(phi, phi', phi'') callable for radial field constructors."""
        def prof(r):
            return self(r), self.d1(r), self.d2(r)
        return prof


def abel_invert(derivs: Callable, r, support: float, width: float = 0.01, order: int = 16,
                chunk: int = 64):
    """g(r) and g'(r) from ``derivs(q) -> (f~'(q), f~''(q))`` of the even sinogram profile.

    g(r) = -(1/pi) int_0^inf f~'(rho) / rho dw with rho = sqrt(r^2 + w^2),
    integrated on one panel grid in w shared by all radii.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    grid = PanelGrid(0.0, support, max(1, int(math.ceil(support / width))), order)
    w = grid.t
    g = np.empty(r.size)
    dg = np.empty(r.size)
    for lo in range(0, r.size, chunk):
        rc = r[lo:lo + chunk, None]
        rho = np.sqrt(rc * rc + w[None, :] ** 2)
        safe = np.where(rho > 0, rho, 1.0)
        p1, p2 = derivs(rho)
        # f~'(rho)/rho -> f~''(0) at rho = 0 for an even profile
        a1 = np.where(rho > 0, p1 / safe, p2)
        a2 = np.where(rho > 0, (p2 / safe - p1 / safe ** 2) * (rc / safe), 0.0)
        g[lo:lo + chunk] = -grid.integral(a1, axis=1) / math.pi
        dg[lo:lo + chunk] = -grid.integral(a2, axis=1) / math.pi
    return g, dg


def radial_from_sinogram(derivs: Callable, support: float, nodes: int = 2001,
                         value: Callable = None, check_tol: float = 1e-6, width: float = 0.01) -> RadialProfile:
    """Radial g with 2 int_{|q|}^inf g(r) r / sqrt(r^2 - q^2) dr = f~(q).

    ``derivs(q)`` returns the first two derivatives of the even profile f~,
    which must vanish for |q| >= ``support``.  When ``value`` (f~ itself) is given
    the forward transform of the result is checked against it.
    """
    r = np.linspace(0.0, support, nodes)
    g, dg = abel_invert(derivs, r, support, width)
    prof = RadialProfile(r, g, dg, support)
    if value is not None:
        qs = np.linspace(0.0, support, 401)
        prof.forward_residual = float(np.max(np.abs(prof.forward(qs) - value(qs))))
        if prof.forward_residual > check_tol:
            raise CounterexampleError(
                f"forward radial transform misses the data by {prof.forward_residual:.2e} (> {check_tol:g})")
    return prof


def ftilde_profile(i: int, nodes: int = 2001) -> RadialProfile:
    return radial_from_sinogram(lambda q: f_tilde_all(i, q)[1:], 5.0, nodes,
                                value=lambda q: f_tilde_all(i, q)[0])


def potential_profile(p1: RadialProfile, p2: RadialProfile):
    """V(r) = (F_2 f_2 - F_1 f_1)(r^2) / 2 with two radial derivatives."""
    def prof(r):
        out = [np.zeros_like(np.asarray(r, dtype=float)) for _ in range(3)]
        for p, sign in ((p2, 0.5), (p1, -0.5)):
            g, g1, g2, F = p(r), p.d1(r), p.d2(r), p.F(r)
            out[0] = out[0] + sign * F * g
            out[1] = out[1] + sign * (2 * r * g * g + F * g1)
            out[2] = out[2] + sign * (2 * g * g + 6 * r * g * g1 + F * g2)
        return tuple(out)
    return prof


def _nested_split(grid: PanelGrid, fvals):
    """split_tau[f(tau) int_{-inf}^tau f] per row of ``fvals`` (rows: offsets)."""
    inner = grid.cumulative(fvals, axis=1)
    return grid.split(fvals * inner, axis=1)


def pv_from_nested(p1: RadialProfile, p2: RadialProfile, qs, order: int = 16, width: float = 0.02):
    """P V(q) from the nested double integrals of f_1 and f_2."""
    qs = np.asarray(qs, dtype=float)
    grid = PanelGrid.symmetric(max(p1.support, p2.support), width, order)
    tau = grid.t
    rr = np.sqrt(tau[None, :] ** 2 + qs[:, None] ** 2)
    return -_nested_split(grid, p1(rr)) + _nested_split(grid, p2(rr))


@dataclass
class CounterexampleBundle:
    profiles: dict
    B1: Field
    B2: Field
    V: Field
    V_sinogram: Sinogram
    V_grid: GridFunction
    V_truth: GridFunction
    certificates: dict = dc_field(default_factory=dict)


def _radial_field(p: RadialProfile, name: str) -> Field:
    mag = RadialMagnetic2D(p.profile(), p.support, scale=0.1)
    f = Field(2, None, mag, Decay(2.0), name)
    return Field(2, None, mag, observed_decay(f, 2.0, p.support * 1.02, 201, pad=1.01), name)


def build_bundle(nodes: int = 2001, J: int = 256, I: int = 321, Q: float = 8.0, L: float = 5.5,
                 resolution: int = 111) -> CounterexampleBundle:
    p1, p2 = ftilde_profile(1, nodes), ftilde_profile(2, nodes)
    B1, B2 = _radial_field(p1, "counterexample-B1"), _radial_field(p2, "counterexample-B2")
    pot = RadialPotential(2, potential_profile(p1, p2), max(p1.support, p2.support), scale=0.1)
    V0 = Field(2, pot, None, Decay(2.0), "counterexample-V")
    V = Field(2, pot, None, observed_decay(V0, 2.0, 5.1, 201, pad=1.01), V0.name)

    qs = np.linspace(-Q, Q, I)
    pv = pv_from_nested(p1, p2, qs)
    sino = Sinogram(J, I, Q, np.tile(pv, (J, 1)))
    V_grid = invert_fbp(sino, L, resolution)
    V_truth = GridFunction.sample(V.V, L, resolution)

    rr = np.linspace(0.0, 5.0, 5001)
    b1, b2 = p1(rr), p2(rr)
    s1 = p1.integral_f()
    s2 = p2.integral_f()
    grid = PanelGrid(0.0, 5.0, 250, 16)
    tau = grid.t
    c1 = float(grid.integral(p1.F(tau) * p1(tau)))
    c2 = float(grid.integral(p2.F(tau) * p2(tau)))
    certs = {
        "B_diff_sup": float(np.max(np.abs(b1 - b2))),
        "B1_sup": float(np.max(np.abs(b1))),
        "int_f1": s1,
        "int_f2": s2,
        "int_f1_from_ftilde": float(_ftilde_integral(1) / math.pi),
        "int_f2_from_ftilde": float(_ftilde_integral(2) / math.pi),
        "FF1": c1,
        "FF2": c2,
        "V_sup": float(np.max(np.abs(V_truth.values))),
        "V_grid_rel_l2": float(np.linalg.norm(V_grid.values - V_truth.values) / np.linalg.norm(V_truth.values)),
        "abel_residual_1": p1.forward_residual,
        "abel_residual_2": p2.forward_residual,
    }
    if not (s1 ** 2 - s2 ** 2 > 1e-6 and abs(c1 - c2) > 1e-8):
        raise CounterexampleError("could not certify V != 0; check the quadrature")
    return CounterexampleBundle({1: p1, 2: p2}, B1, B2, V, sino, V_grid, V_truth, certs)


def _ftilde_integral(i: int) -> float:
    grid = PanelGrid(-5.0, 5.0, 400, 16)
    return float(grid.integral(f_tilde_all(i, grid.t)[0]))


@dataclass
class EqualityReport:
    max_residual: float
    theta_residual: float
    perp_residual: float
    closed_form_residual: float
    W21_max: float
    n_lines: int
    details: dict = dc_field(default_factory=dict)

    def as_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "details"}
        d.update(self.details)
        return d


def verify_equality(bundle: CounterexampleBundle, n_angles: int = 32, n_offsets: int = 64,
                    q_max: float = 5.5, resolution: float = 4.0) -> EqualityReport:
    """Compare W22(V, B1) and W22(0, B2) on an (angle, offset) grid of lines."""
    phi = np.arange(n_angles) * 2 * np.pi / n_angles
    qs = np.linspace(-q_max, q_max, n_offsets)
    P, Qg = np.meshgrid(phi, qs, indexing="ij")
    th = np.stack([np.cos(P.ravel()), np.sin(P.ravel())], axis=-1)
    tp = np.stack([th[:, 1], -th[:, 0]], axis=-1)
    xs = Qg.ravel()[:, None] * tp
    left_field = Field(2, bundle.V.potential, bundle.B1.magnetic, bundle.B1.decay, "V+B1")
    grid = line_grid(left_field, resolution=resolution, half_length=5.2)
    left = asymptotic_batch(left_field, th, xs, grid)
    right = asymptotic_batch(bundle.B2, th, xs, grid)
    d = left["W22"] - right["W22"]
    dth = np.abs(np.sum(d * th, axis=1))
    dperp = np.abs(np.sum(d * tp, axis=1))
    q = Qg.ravel()
    closed = 0.5 * q * f_tilde_all(1, q)[0] ** 2
    cf = np.abs(np.sum(left["W22"] * tp, axis=1) - closed)
    w21 = max(np.max(np.abs(left["W21"])), np.max(np.abs(right["W21"])))
    return EqualityReport(float(np.max(np.abs(d))), float(dth.max()), float(dperp.max()), float(cf.max()),
                          float(w21), len(th), {"W22_scale": float(np.max(np.abs(left["W22"])))})
