"""Static electromagnetic fields (V, B) with analytic derivatives.

A :class:`Field` couples an optional scalar potential term with an optional
magnetic term.  Magnetic terms return only the strictly upper triangular
components ``B_{i,k}, i < k``; the full matrix is assembled here, so
antisymmetry holds by construction.  All evaluators are vectorized over
leading axes of the point array ``x[..., n]``.

Index conventions
-----------------
``grad_magnetic(x)[..., i, k, l]`` is ``d B_{i,k} / d x_l``.
``hess_potential(x)[..., i, j]`` is ``d^2 V / dx_i dx_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from itertools import combinations
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq


class FieldError(ValueError):
    """Malformed field or non-finite evaluation point."""


@dataclass(frozen=True)
class Decay:
    """Decay envelope constants: alpha > 1 and beta_0, beta_1, beta_2 >= 0."""

    alpha: float = 2.0
    beta0: float = 0.0
    beta1: float = 0.0
    beta2: float = 0.0

    def __post_init__(self):
        if not self.alpha > 1.0:
            raise FieldError(f"decay exponent alpha must exceed 1, got {self.alpha}")
        if min(self.beta0, self.beta1, self.beta2) < 0:
            raise FieldError("decay constants must be nonnegative")

    def scaled(self, c: float) -> "Decay":
        c = abs(c)
        return Decay(self.alpha, c * self.beta0, c * self.beta1, c * self.beta2)

    def combined(self, other: "Decay") -> "Decay":
        if self.alpha != other.alpha:
            raise FieldError("cannot combine envelopes with different alpha")
        return Decay(self.alpha, self.beta0 + other.beta0,
                     self.beta1 + other.beta1, self.beta2 + other.beta2)


def pair_index(n: int) -> list[tuple[int, int]]:
    return list(combinations(range(n), 2))


# ---------------------------------------------------------------------------
# potential terms


class PotentialTerm:
    """Interface for scalar potentials. Subclasses implement the three evaluators."""

    n: int

    def value(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def grad(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hess(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def reach(self, eps: float) -> float:
        """Radius beyond which V and its first two derivatives are below ``eps``."""
        raise NotImplementedError

    def feature_scale(self) -> float:
        return 1.0

    def radial_envelope(self, r: np.ndarray, order: int) -> np.ndarray:
        """Upper bound of the ``order``-th derivatives at radius ``r``."""
        raise NotImplementedError


class RadialPotential(PotentialTerm):
    """V(x) = phi(|x - c|) from a radial profile with two derivatives.

    ``profile(r)`` must return ``(phi, phi', phi'')`` arrays.
    """

    def __init__(self, n: int, profile: Callable, reach: float, scale: float = 1.0,
                 center: Optional[Sequence[float]] = None):
        self.n = n
        self.profile = profile
        self._reach = float(reach)
        self._scale = float(scale)
        self.center = np.zeros(n) if center is None else np.asarray(center, float)

    def _radial(self, x):
        d = np.asarray(x, float) - self.center
        r = np.sqrt(np.sum(d * d, axis=-1))
        return d, r

    def value(self, x):
        _, r = self._radial(x)
        return self.profile(r)[0]

    def grad(self, x):
        d, r = self._radial(x)
        _, p1, _ = self.profile(r)
        safe = np.where(r > 0, r, 1.0)
        return (np.where(r > 0, p1 / safe, 0.0))[..., None] * d

    def hess(self, x):
        d, r = self._radial(x)
        _, p1, p2 = self.profile(r)
        safe = np.where(r > 0, r, 1.0)
        # phi'(r)/r -> phi''(0) at the center for a smooth even profile
        a = np.where(r > 0, p1 / safe, p2)
        b = np.where(r > 0, (p2 - a) / safe ** 2, 0.0)
        eye = np.eye(self.n)
        return a[..., None, None] * eye + b[..., None, None] * d[..., :, None] * d[..., None, :]

    def reach(self, eps):
        return self._reach + float(np.linalg.norm(self.center))

    def feature_scale(self):
        return self._scale


def gaussian_profile(amplitude: float = 1.0, width: float = 1.0):
    """phi(r) = A exp(-r^2 / w^2) with derivatives."""
    w2 = width * width

    def profile(r):
        e = amplitude * np.exp(-r * r / w2)
        return e, -2.0 * r / w2 * e, (4.0 * r * r / w2 - 2.0) / w2 * e

    return profile


def bump_profile(amplitude: float = 1.0, radius: float = 1.0):
    """phi(r) = A exp(-1/(1 - r^2/rho^2)) for r < rho, 0 outside (C-infinity)."""
    rho2 = radius * radius

    def profile(r):
        r = np.asarray(r, float)
        u = r * r / rho2
        inside = u < 1.0
        q = np.where(inside, 1.0 - u, 1.0)
        e = np.where(inside, amplitude * np.exp(-1.0 / q), 0.0)
        # d/dr exp(-1/q) = exp(-1/q) * (-1/q^2) * (2r/rho^2)
        g = -2.0 * r / (rho2 * q * q)
        dg = -2.0 / (rho2 * q * q) - 8.0 * r * r / (rho2 * rho2 * q ** 3)
        p1 = np.where(inside, e * g, 0.0)
        p2 = np.where(inside, e * (g * g + dg), 0.0)
        return e, p1, p2

    return profile


def _gaussian_reach(amplitude: float, width: float, eps: float) -> float:
    # max over derivatives up to order 2 of a Gaussian is below A(1 + 4 r^2/w^2)/w^2 exp(-r^2/w^2)
    if amplitude == 0:
        return 0.0
    a = abs(amplitude) * max(1.0, 1.0 / width ** 2)

    def g(r):
        return math.log(a * (1.0 + 4.0 * r * r / width ** 2) * 2.0) - r * r / width ** 2 - math.log(eps)

    if g(0.0) <= 0:
        return 0.0
    return brentq(g, 0.0, 100.0 * width + 10.0)


def gaussian_potential(n: int, amplitude: float = 1.0, width: float = 1.0, center=None) -> RadialPotential:
    return RadialPotential(n, gaussian_profile(amplitude, width),
                           reach=_gaussian_reach(amplitude, width, 1e-17), scale=width, center=center)


def bump_potential(n: int, amplitude: float = 1.0, radius: float = 1.0, center=None) -> RadialPotential:
    return RadialPotential(n, bump_profile(amplitude, radius), reach=radius, scale=radius / 4.0, center=center)


# ---------------------------------------------------------------------------
# magnetic terms


class MagneticTerm:
    """Interface: upper-triangular components and their gradients."""

    n: int

    def components(self, x: np.ndarray) -> np.ndarray:
        """Array ``[..., p]`` over ``pair_index(n)``."""
        raise NotImplementedError

    def component_grads(self, x: np.ndarray) -> np.ndarray:
        """Array ``[..., p, n]``."""
        raise NotImplementedError

    def reach(self, eps: float) -> float:
        raise NotImplementedError

    def feature_scale(self) -> float:
        return 1.0


class RadialMagnetic2D(MagneticTerm):
    """n = 2 field with B_{1,2}(x) = phi(|x - c|)."""

    n = 2

    def __init__(self, profile: Callable, reach: float, scale: float = 1.0, center=None):
        self.profile = profile
        self._reach = float(reach)
        self._scale = float(scale)
        self.center = np.zeros(2) if center is None else np.asarray(center, float)

    def components(self, x):
        d = np.asarray(x, float) - self.center
        r = np.sqrt(np.sum(d * d, axis=-1))
        return self.profile(r)[0][..., None]

    def component_grads(self, x):
        d = np.asarray(x, float) - self.center
        r = np.sqrt(np.sum(d * d, axis=-1))
        p1 = self.profile(r)[1]
        safe = np.where(r > 0, r, 1.0)
        return (np.where(r > 0, p1 / safe, 0.0)[..., None] * d)[..., None, :]

    def reach(self, eps):
        return self._reach + float(np.linalg.norm(self.center))

    def feature_scale(self):
        return self._scale


class VectorPotentialMagnetic(MagneticTerm):
    """B_{i,k} = d_i A_k - d_k A_i from a vector potential.

    ``jacobian(x)[..., i, k] = d_i A_k`` and
    ``second(x)[..., l, i, k] = d_l d_i A_k`` must be analytic.
    """

    def __init__(self, n: int, jacobian: Callable, second: Callable, reach: float, scale: float = 1.0):
        self.n = n
        self.jacobian = jacobian
        self.second = second
        self._reach = float(reach)
        self._scale = float(scale)
        self._pairs = pair_index(n)

    def components(self, x):
        j = self.jacobian(x)
        return np.stack([j[..., i, k] - j[..., k, i] for i, k in self._pairs], axis=-1)

    def component_grads(self, x):
        s = self.second(x)
        return np.stack([s[..., :, i, k] - s[..., :, k, i] for i, k in self._pairs], axis=-2)

    def reach(self, eps):
        return self._reach

    def feature_scale(self):
        return self._scale


def gaussian_vector_potential(n: int, terms: Sequence[tuple]) -> VectorPotentialMagnetic:
    """A(x) = sum_j a_j exp(-|x - c_j|^2) e_j for (a_j, c_j, e_j) in ``terms``."""
    amps = np.array([float(t[0]) for t in terms])
    centers = np.array([np.asarray(t[1], float) for t in terms])
    dirs = np.array([np.asarray(t[2], float) for t in terms])

    def phis(x):
        d = np.asarray(x, float)[..., None, :] - centers  # [..., m, n]
        e = amps * np.exp(-np.sum(d * d, axis=-1))
        return d, e

    def jacobian(x):
        d, e = phis(x)
        grad = -2.0 * d * e[..., None]  # [..., m, n]
        return np.einsum("...mi,mk->...ik", grad, dirs)

    def second(x):
        d, e = phis(x)
        eye = np.eye(n)
        h = (4.0 * d[..., :, None] * d[..., None, :] - 2.0 * eye) * e[..., None, None]
        return np.einsum("...mli,mk->...lik", h, dirs)

    reach = max(_gaussian_reach(abs(a) * np.linalg.norm(e), 1.0, 1e-17) + np.linalg.norm(c)
                for a, c, e in zip(amps, centers, dirs))
    return VectorPotentialMagnetic(n, jacobian, second, reach=reach, scale=1.0)


def gaussian_magnetic_2d(amplitude: float = 1.0, width: float = 1.0, center=None) -> RadialMagnetic2D:
    return RadialMagnetic2D(gaussian_profile(amplitude, width),
                            reach=_gaussian_reach(amplitude, width, 1e-17), scale=width, center=center)


def bump_magnetic_2d(amplitude: float = 1.0, radius: float = 1.0, center=None) -> RadialMagnetic2D:
    return RadialMagnetic2D(bump_profile(amplitude, radius), reach=radius, scale=radius / 4.0, center=center)


# ---------------------------------------------------------------------------
# the field


@dataclass(frozen=True)
class FieldSample:
    point: np.ndarray
    value: float
    grad: np.ndarray
    matrix: np.ndarray
    gradB: np.ndarray
    hess: np.ndarray = dc_field(default=None)


@dataclass(frozen=True)
class Field:
    """An electromagnetic field on R^n. Immutable; evaluators are pure."""

    n: int
    potential: Optional[PotentialTerm] = None
    magnetic: Optional[MagneticTerm] = None
    decay: Decay = Decay()
    name: str = "field"
    scale: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise FieldError("dimension must be at least 2")
        for term in (self.potential, self.magnetic):
            if term is not None and term.n != self.n:
                raise FieldError(f"term dimension {term.n} does not match field dimension {self.n}")

    # -- evaluators -------------------------------------------------------
    def _check(self, x):
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise FieldError(f"points must have trailing dimension {self.n}, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise FieldError("non-finite coordinates in evaluation point")
        return x

    def V(self, x):
        x = self._check(x)
        if self.potential is None:
            return np.zeros(x.shape[:-1])
        return self.scale * self.potential.value(x)

    def grad_V(self, x):
        x = self._check(x)
        if self.potential is None:
            return np.zeros(x.shape)
        return self.scale * self.potential.grad(x)

    def hess_V(self, x):
        x = self._check(x)
        if self.potential is None:
            return np.zeros(x.shape + (self.n,))
        return self.scale * self.potential.hess(x)

    def B(self, x):
        x = self._check(x)
        out = np.zeros(x.shape + (self.n,))
        if self.magnetic is None:
            return out
        comp = self.scale * self.magnetic.components(x)
        for p, (i, k) in enumerate(pair_index(self.n)):
            out[..., i, k] = comp[..., p]
            out[..., k, i] = -comp[..., p]
        return out

    def grad_B(self, x):
        x = self._check(x)
        out = np.zeros(x.shape + (self.n, self.n))
        if self.magnetic is None:
            return out
        g = self.scale * self.magnetic.component_grads(x)
        for p, (i, k) in enumerate(pair_index(self.n)):
            out[..., i, k, :] = g[..., p, :]
            out[..., k, i, :] = -g[..., p, :]
        return out

    def force(self, x, v):
        """-grad V(x) + B(x) v."""
        v = np.asarray(v, dtype=float)
        return -self.grad_V(x) + np.einsum("...ik,...k->...i", self.B(x), v)

    # -- metadata ---------------------------------------------------------
    def reach(self, eps: float = 1e-17) -> float:
        """Radius outside which the field and its derivatives are negligible."""
        r = 0.0
        for term in (self.potential, self.magnetic):
            if term is not None:
                r = max(r, term.reach(eps))
        return r

    def feature_scale(self) -> float:
        s = [t.feature_scale() for t in (self.potential, self.magnetic) if t is not None]
        return min(s) if s else 1.0

    @property
    def is_zero(self) -> bool:
        return (self.potential is None and self.magnetic is None) or self.scale == 0.0

    def scaled(self, c: float) -> "Field":
        """Field with both V and B multiplied by ``c``."""
        return Field(self.n, self.potential, self.magnetic, self.decay.scaled(c),
                     f"{self.name}*{c:g}", self.scale * c)

    def without_potential(self) -> "Field":
        return Field(self.n, None, self.magnetic, self.decay, f"{self.name}[B]", self.scale)

    def without_magnetic(self) -> "Field":
        return Field(self.n, self.potential, None, self.decay, f"{self.name}[V]", self.scale)

    def flipped_magnetic(self) -> "Field":
        """Same V, magnetic field -B."""
        if self.magnetic is None:
            return self
        return Field(self.n, self.potential, _Negated(self.magnetic), self.decay,
                     f"{self.name}[-B]", self.scale)


class _Negated(MagneticTerm):
    def __init__(self, term: MagneticTerm):
        self.term = term
        self.n = term.n

    def components(self, x):
        return -self.term.components(x)

    def component_grads(self, x):
        return -self.term.component_grads(x)

    def reach(self, eps):
        return self.term.reach(eps)

    def feature_scale(self):
        return self.term.feature_scale()


def eval_field(field: Field, x) -> FieldSample:
    """All field quantities at a single point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (field.n,):
        raise FieldError(f"expected a point of shape ({field.n},), got {x.shape}")
    return FieldSample(
        point=x.copy(),
        value=float(field.V(x)),
        grad=field.grad_V(x),
        matrix=field.B(x),
        gradB=field.grad_B(x),
        hess=field.hess_V(x),
    )


def force(field: Field, x, v) -> np.ndarray:
    return field.force(x, v)


# ---------------------------------------------------------------------------
# built-in families


def _radial_sup(fn, r_max: float = 20.0, pad: float = 1.0005) -> float:
    """Tight upper estimate of sup_r fn(r) from a fine scan plus local refinement."""
    r = np.linspace(0.0, r_max, 200001)
    vals = fn(r)
    i = int(np.argmax(vals))
    lo, hi = r[max(i - 1, 0)], r[min(i + 1, r.size - 1)]
    rr = np.linspace(lo, hi, 2001)
    return float(max(vals.max(), fn(rr).max()) * pad)


def gaussian_decay(alpha: float, v_amp: float, b_amp: float, n: int) -> Decay:
    """Envelope constants for V = a e^{-|x|^2} and Gaussian B components.

    Derived from closed-form radial bounds of the partial derivatives:
    |d_i V| <= 2a r e^{-r^2}; |d_i d_j V| <= a max(2, |4r^2 - 2|) e^{-r^2};
    |B_ik| <= b e^{-r^2}; |d_l B_ik| <= 2b r e^{-r^2}.
    """
    a, b = abs(v_amp), abs(b_amp)

    def env(k):
        return lambda r: (1.0 + r) ** (alpha + k)

    beta0 = _radial_sup(lambda r: a * np.exp(-r * r) * env(0)(r)) if a else 0.0
    beta1 = _radial_sup(lambda r: np.maximum(2 * a * r, b) * np.exp(-r * r) * env(1)(r)) if (a or b) else 0.0
    beta2 = _radial_sup(
        lambda r: np.maximum(a * np.maximum(2.0, np.abs(4 * r * r - 2)), 2 * b * r) * np.exp(-r * r) * env(2)(r)
    ) if (a or b) else 0.0
    return Decay(alpha, beta0, beta1, beta2)


def field_a(alpha: float = 2.0) -> Field:
    """Reference field: n = 2, V = e^{-|x|^2}, B_{1,2} = e^{-|x|^2}."""
    return Field(2, gaussian_potential(2), gaussian_magnetic_2d(), gaussian_decay(alpha, 1.0, 1.0, 2), "field-a")


def gaussian_field(n: int = 2, v_amp: float = 1.0, b_amp: float = 0.0, alpha: float = 2.0) -> Field:
    pot = gaussian_potential(n, v_amp) if v_amp else None
    mag = None
    if b_amp:
        if n != 2:
            raise FieldError("radial Gaussian B is only available for n = 2; use a vector potential")
        mag = gaussian_magnetic_2d(b_amp)
    return Field(n, pot, mag, gaussian_decay(alpha, v_amp, b_amp, n), f"gaussian{n}d")


def zero_field(n: int = 2, alpha: float = 2.0) -> Field:
    return Field(n, None, None, Decay(alpha), "zero")


def bump_field(n: int = 2, v_amp: float = 1.0, b_amp: float = 0.0, radius: float = 1.0,
               alpha: float = 2.0) -> Field:
    pot = bump_potential(n, v_amp, radius) if v_amp else None
    mag = None
    if b_amp:
        if n != 2:
            raise FieldError("radial bump B is only available for n = 2")
        mag = bump_magnetic_2d(b_amp, radius)
    f = Field(n, pot, mag, Decay(alpha), f"bump{n}d")
    return Field(n, pot, mag, observed_decay(f, alpha, radius * 1.05, 101 if n == 2 else 41, pad=1.01), f.name)


def vector_potential_field(terms: Sequence[tuple], v_amp: float = 0.0, alpha: float = 2.0) -> Field:
    """n = 3 field with B = curl-type 2-form of a Gaussian vector potential."""
    n = len(terms[0][1])
    mag = gaussian_vector_potential(n, terms)
    pot = gaussian_potential(n, v_amp) if v_amp else None
    f = Field(n, pot, mag, Decay(alpha), f"vecpot{n}d")
    reach = f.reach(1e-6)
    return Field(n, pot, mag, observed_decay(f, alpha, reach, 41, pad=1.05), f.name)


FAMILIES = {
    "field-a": lambda **kw: field_a(**kw),
    "gaussian": gaussian_field,
    "zero": zero_field,
    "bump": bump_field,
    "vector-potential": vector_potential_field,
}


def build_field(name: str, **params) -> Field:
    try:
        factory = FAMILIES[name]
    except KeyError:
        raise FieldError(f"unknown field family {name!r}; choose from {sorted(FAMILIES)}") from None
    return factory(**params)


# ---------------------------------------------------------------------------
# validators


@dataclass
class ClosureReport:
    residual: float
    worst_point: Optional[np.ndarray]
    worst_triple: Optional[tuple]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.tolerance


def check_closure(field: Field, sample_points, tol: float = 1e-10) -> ClosureReport:
    """Max over points and (l, i, k) of the cyclic derivative sum of B."""
    pts = np.atleast_2d(np.asarray(sample_points, dtype=float))
    if pts.shape[0] == 0:
        raise FieldError("empty sample set")
    g = field.grad_B(pts)  # [m, i, k, l]
    n = field.n
    worst, where, triple = 0.0, None, None
    for l in range(n):
        for i in range(n):
            for k in range(n):
                res = np.abs(g[:, i, k, l] + g[:, l, i, k] + g[:, k, l, i])
                j = int(np.argmax(res))
                if res[j] > worst:
                    worst, where, triple = float(res[j]), pts[j], (l, i, k)
    return ClosureReport(worst, where, triple, tol)


@dataclass
class DecayReport:
    observed: Decay
    declared: Decay
    passed: bool
    worst_point: Optional[np.ndarray]
    worst_order: Optional[int]
    worst_ratio: float


def _grid(n: int, radius: float, density: int) -> np.ndarray:
    axis = np.linspace(-radius, radius, density)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _envelope_terms(field: Field, pts: np.ndarray, alpha: float):
    r = np.linalg.norm(pts, axis=-1)
    w = 1.0 + r
    v0 = np.abs(field.V(pts)) * w ** alpha
    g1 = np.max(np.abs(field.grad_V(pts)), axis=-1)
    b1 = np.max(np.abs(field.B(pts)).reshape(len(pts), -1), axis=-1)
    v1 = np.maximum(g1, b1) * w ** (alpha + 1)
    h2 = np.max(np.abs(field.hess_V(pts)).reshape(len(pts), -1), axis=-1)
    gb = np.max(np.abs(field.grad_B(pts)).reshape(len(pts), -1), axis=-1)
    v2 = np.maximum(h2, gb) * w ** (alpha + 2)
    return v0, v1, v2


def observed_decay(field: Field, alpha: float, radius: float, grid_density: int, pad: float = 1.0) -> Decay:
    pts = _grid(field.n, radius, grid_density)
    v0, v1, v2 = _envelope_terms(field, pts, alpha)
    return Decay(alpha, pad * float(v0.max()), pad * float(v1.max()), pad * float(v2.max()))


def estimate_decay(field: Field, alpha: float, radius: float, grid_density: int) -> DecayReport:
    """Observed envelope constants on a grid, checked against the declared ones."""
    if not alpha > 1.0:
        raise FieldError("alpha must exceed 1")
    if not radius > 0:
        raise FieldError("radius must be positive")
    pts = _grid(field.n, radius, grid_density)
    terms = _envelope_terms(field, pts, alpha)
    observed = Decay(alpha, *(float(t.max()) for t in terms))
    declared = field.decay
    worst_ratio, worst_point, worst_order = 0.0, None, None
    # declared constants only certify the declared alpha
    if declared.alpha == alpha:
        for order, (t, beta) in enumerate(zip(terms, (declared.beta0, declared.beta1, declared.beta2))):
            ratio = t / beta if beta > 0 else np.where(t > 0, np.inf, 0.0)
            j = int(np.argmax(ratio))
            if ratio[j] > worst_ratio:
                worst_ratio, worst_point, worst_order = float(ratio[j]), pts[j], order
        passed = worst_ratio <= 1.0 + 1e-12
    else:
        passed = False
    return DecayReport(observed, declared, passed, worst_point if not passed else None,
                       worst_order if not passed else None, worst_ratio)
