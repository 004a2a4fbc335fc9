"""X-ray transform on oriented lines and filtered backprojection in the plane.

Sinogram convention (n = 2): angles phi_j = j pi / J, theta = (cos phi, sin phi),
offsets q_i uniform on [-Q, Q] (both ends included), line x = q theta_perp with
theta_perp = (sin phi, -cos phi).  Grids on [-L, L]^2 include both ends and are
indexed [ix, iy].
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad_vec

from .quadrature import PanelGrid


class CoverageError(ValueError):
    pass


def _tail_length(exponent: float, constant: float, tol: float) -> float:
    """L with int_{|t|>L} C (1+|t|)^-e dt <= tol."""
    return (2.0 * constant / ((exponent - 1.0) * tol)) ** (1.0 / (exponent - 1.0)) - 1.0


def xray_forward(f: Callable, theta, x, decay: float = math.inf, constant: float = 1.0,
                 support: Optional[float] = None, tol: float = 1e-12, breakpoints=None):
    """int f(t theta + x) dt by adaptive quadrature.

    ``decay`` is the exponent of an envelope C (1+|y|)^-decay and ``support``
    a radius outside which f vanishes; the truncation length is chosen so the
    discarded tail is below ``tol`` (relative to ``constant``).
    """
    theta = np.asarray(theta, dtype=float)
    x = np.asarray(x, dtype=float)
    if support is None:
        if not decay > 1:
            raise ValueError(f"decay exponent {decay} must exceed 1 for the line integral to converge")
        half = 60.0 if math.isinf(decay) else _tail_length(decay, constant, tol * constant)
    else:
        half = float(support)
    half = max(half, 1e-12)

    def g(t):
        return np.asarray(f(t * theta + x), dtype=float)

    pts = None if breakpoints is None else [p for p in breakpoints if -half < p < half]
    val, err = quad_vec(g, -half, half, epsabs=tol * 1e-2, epsrel=1e-13, points=pts, limit=20000)
    return val


@dataclass
class Sinogram:
    """Values of P f on a (phi, q) grid; ``values`` has shape (J, I, m)."""

    J: int
    I: int
    Q: float
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[..., None]
        if v.shape[:2] != (self.J, self.I):
            raise ValueError(f"values shape {v.shape} does not match (J, I) = ({self.J}, {self.I})")
        if not np.all(np.isfinite(v)):
            raise ValueError("sinogram contains non-finite values")
        if not self.Q > 0:
            raise ValueError("Q must be positive")
        self.values = v

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @property
    def phis(self) -> np.ndarray:
        return np.arange(self.J) * np.pi / self.J

    @property
    def qs(self) -> np.ndarray:
        return np.linspace(-self.Q, self.Q, self.I)

    @property
    def dq(self) -> float:
        return 2.0 * self.Q / (self.I - 1)

    def lines(self):
        """(thetas, xs) with shape (J*I, 2), angle-major."""
        return sinogram_lines(self.J, self.I, self.Q)

    def component(self, k: int) -> "Sinogram":
        return Sinogram(self.J, self.I, self.Q, self.values[..., k:k + 1], dict(self.meta))

    def __add__(self, other: "Sinogram") -> "Sinogram":
        return Sinogram(self.J, self.I, self.Q, self.values + other.values)

    def __mul__(self, c: float) -> "Sinogram":
        return Sinogram(self.J, self.I, self.Q, self.values * c)

    __rmul__ = __mul__


def sinogram_lines(J: int, I: int, Q: float):
    phis = np.arange(J) * np.pi / J
    qs = np.linspace(-Q, Q, I)
    th = np.stack([np.cos(phis), np.sin(phis)], axis=-1)
    tp = np.stack([np.sin(phis), -np.cos(phis)], axis=-1)
    thetas = np.repeat(th, I, axis=0)
    xs = (tp[:, None, :] * qs[None, :, None]).reshape(-1, 2)
    return thetas, xs


def sinogram_from_lines(J: int, I: int, Q: float, fn: Callable, chunk: int = 4096) -> Sinogram:
    """Sinogram whose value on each line is ``fn(thetas, xs) -> (lines, m)``."""
    if J < 4 or I < 4:
        raise ValueError("need at least 4 angles and 4 offsets")
    thetas, xs = sinogram_lines(J, I, Q)
    parts = [np.asarray(fn(thetas[i:i + chunk], xs[i:i + chunk]), dtype=float)
             for i in range(0, len(thetas), chunk)]
    vals = np.concatenate(parts)
    if vals.ndim == 1:
        vals = vals[:, None]
    return Sinogram(J, I, Q, vals.reshape(J, I, -1))


def build_sinogram(f: Callable, J: int, I: int, Q: float, extent: Optional[float] = None,
                   feature: float = 1.0, order: int = 16, chunk: int = 2048) -> Sinogram:
    """P f on the standard grid by panel quadrature along each line.

    ``f`` maps points of shape (..., 2) to (...) or (..., m) and must be
    negligible beyond radius ``extent`` (default: Q); ``feature`` is the
    smallest length scale to resolve.
    """
    extent = Q if extent is None else extent
    grid = PanelGrid.symmetric(extent, feature / 4.0, order)
    t = grid.t

    def fn(th, xs):
        pts = xs[:, None, :] + t[None, :, None] * th[:, None, :]
        vals = np.asarray(f(pts), dtype=float)
        return grid.integral(vals, axis=1)

    return sinogram_from_lines(J, I, Q, fn, chunk)


@dataclass
class GridFunction:
    """Values on the uniform grid over [-L, L]^2; shape (N, N, m)."""

    L: float
    resolution: int
    values: np.ndarray
    meta: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 2:
            v = v[..., None]
        if v.shape[:2] != (self.resolution, self.resolution):
            raise ValueError(f"values shape {v.shape} does not match resolution {self.resolution}")
        self.values = v

    @property
    def m(self) -> int:
        return self.values.shape[2]

    @property
    def coords(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.resolution)

    @property
    def spacing(self) -> float:
        return 2.0 * self.L / (self.resolution - 1)

    def points(self) -> np.ndarray:
        c = self.coords
        X, Y = np.meshgrid(c, c, indexing="ij")
        return np.stack([X, Y], axis=-1)

    @classmethod
    def sample(cls, f: Callable, L: float, resolution: int) -> "GridFunction":
        c = np.linspace(-L, L, resolution)
        X, Y = np.meshgrid(c, c, indexing="ij")
        return cls(L, resolution, np.asarray(f(np.stack([X, Y], axis=-1)), dtype=float))

    def component(self, k: int) -> "GridFunction":
        return GridFunction(self.L, self.resolution, self.values[..., k])


def _next_pow2(n: int) -> int:
    return 1 << (int(n) - 1).bit_length()


def ramp_filter(I: int, dq: float, window: str = "hann") -> np.ndarray:
    """Frequency response of the band-limited ramp (spatial Ram-Lak kernel) times a window."""
    P = max(64, 2 * _next_pow2(I))
    k = np.arange(P)
    k = np.where(k > P // 2, k - P, k)
    h = np.zeros(P)
    h[0] = 1.0 / (4.0 * dq * dq)
    odd = k % 2 == 1
    h[odd] = -1.0 / (np.pi * np.pi * k[odd] ** 2 * dq * dq)
    H = np.real(np.fft.fft(h))
    nu = np.abs(np.fft.fftfreq(P))  # cycles per sample, in [0, 0.5]
    if window == "hann":
        H = H * 0.5 * (1.0 + np.cos(2.0 * np.pi * nu))
    elif window not in ("none", None):
        raise ValueError(f"unknown apodization {window!r}; use 'none' or 'hann'")
    return H


def filter_sinogram(sino: Sinogram, window: str = "hann") -> np.ndarray:
    H = ramp_filter(sino.I, sino.dq, window)
    P = H.size
    pad = np.zeros((sino.J, P, sino.m))
    pad[:, :sino.I] = sino.values
    out = np.fft.ifft(np.fft.fft(pad, axis=1) * H[None, :, None], axis=1).real
    return out[:, :sino.I] * sino.dq


@dataclass
class Reconstruction(GridFunction):
    undersampled: bool = False


def invert_fbp(sino: Sinogram, L: float, resolution: int, window: str = "hann") -> Reconstruction:
    """Filtered backprojection onto the grid over [-L, L]^2."""
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    filt = filter_sinogram(sino, window)
    c = np.linspace(-L, L, resolution)
    X, Y = np.meshgrid(c, c, indexing="ij")
    out = np.zeros((resolution, resolution, sino.m))
    qs = sino.qs
    for j, phi in enumerate(sino.phis):
        q = X * math.sin(phi) - Y * math.cos(phi)
        for k in range(sino.m):
            out[..., k] += np.interp(q, qs, filt[j, :, k], left=0.0, right=0.0)
    out *= np.pi / sino.J
    spacing = 2 * L / (resolution - 1)
    under = sino.dq > spacing * (1 + 1e-9) or sino.J < 0.5 * np.pi * resolution * min(1.0, L / sino.Q) \
        or sino.Q < L * math.sqrt(2) * 0.999
    if under:
        warnings.warn("sinogram is undersampled for the requested output grid", RuntimeWarning, stacklevel=2)
    return Reconstruction(L, resolution, out, {}, under)


def pb_from_w11(thetas: np.ndarray, W11: np.ndarray, i: int, k: int) -> np.ndarray:
    """P B_{i,k}(theta, x) = theta_k (W11)_i - theta_i (W11)_k on lines whose theta lies in span(e_i, e_k)."""
    return thetas[:, k] * W11[:, i] - thetas[:, i] * W11[:, k]


def _check_coverage(sino: Sinogram):
    if sino.J < 4:
        raise CoverageError(f"only {sino.J} angles; need at least 4 covering [0, pi)")


def recover_B_from_W11(w11: Sinogram, L: float, resolution: int, window: str = "hann",
                       pair=(0, 1)) -> Reconstruction:
    """B_{i,k} on a plane from W11 sampled on the in-plane line family.

    ``w11`` holds, per line of the standard fan, the in-plane components
    ((W11)_i, (W11)_k).
    """
    _check_coverage(w11)
    if w11.m != 2:
        raise ValueError("expected the two in-plane W11 components")
    thetas, _ = w11.lines()
    W = w11.values.reshape(-1, 2)
    pb = pb_from_w11(thetas, W, 0, 1).reshape(w11.J, w11.I)
    rec = invert_fbp(Sinogram(w11.J, w11.I, w11.Q, pb), L, resolution, window)
    rec.meta["pair"] = tuple(pair)
    return rec


def plane_lines(n: int, i: int, k: int, J: int, I: int, Q: float, offset):
    """The fan of lines in the (e_i, e_k) plane translated by ``offset`` (orthogonal to that plane)."""
    th2, x2 = sinogram_lines(J, I, Q)
    thetas = np.zeros((len(th2), n))
    xs = np.zeros((len(th2), n)) + np.asarray(offset, dtype=float)
    thetas[:, i], thetas[:, k] = th2[:, 0], th2[:, 1]
    xs[:, i] += x2[:, 0]
    xs[:, k] += x2[:, 1]
    if abs(xs[0, i]) > 0 and abs(np.asarray(offset)[[i, k]]).max() > 0:
        raise ValueError("offset must be orthogonal to the (e_i, e_k) plane")
    return thetas, xs


@dataclass
class PlaneStack:
    """Reconstructions of B_{i,k} on planes {x : x_m = z} for the remaining axis."""

    pair: tuple
    axis: int
    zs: np.ndarray
    slices: list


def recover_B3_from_W11(w11_fn: Callable, pair, zs, J: int, I: int, Q: float, L: float,
                        resolution: int, window: str = "hann") -> PlaneStack:
    """n = 3: B_{i,k} slice by slice from W11 on the plane families.

    ``w11_fn(thetas, xs)`` returns W11 (lines, 3) on arbitrary lines.
    """
    i, k = pair
    m = ({0, 1, 2} - {i, k}).pop()
    slices = []
    for z in zs:
        off = np.zeros(3)
        off[m] = z
        thetas, xs = plane_lines(3, i, k, J, I, Q, off)
        W = np.asarray(w11_fn(thetas, xs))
        sino = Sinogram(J, I, Q, np.stack([W[:, i], W[:, k]], axis=-1).reshape(J, I, 2))
        slices.append(recover_B_from_W11(sino, L, resolution, window, pair))
    return PlaneStack(tuple(pair), m, np.asarray(zs, dtype=float), slices)


def recover_V(minus_PV: Sinogram, L: float, resolution: int, window: str = "hann") -> Reconstruction:
    """V on the grid from samples of -P V."""
    _check_coverage(minus_PV)
    if minus_PV.m != 1:
        raise ValueError("expected scalar -PV data")
    return invert_fbp(minus_PV * -1.0, L, resolution, window)


def relative_l2(recon: np.ndarray, truth: np.ndarray) -> float:
    den = np.linalg.norm(truth)
    num = np.linalg.norm(np.asarray(recon) - np.asarray(truth))
    return float(num / den) if den > 0 else float(num)
