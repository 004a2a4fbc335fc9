"""Closed-form estimate constants for the Picard map and their threshold speeds.

Notation: ``c = |v|/sqrt(2) - R``, ``X = 1 + |x|/sqrt(2)``, ``D_T = X + c|T|``
and ``K = 1 + sqrt(n)|v| + sqrt(n) R``.  Every constant is evaluated exactly
as its closed form; nothing here is fitted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, asdict

import numpy as np
from scipy.optimize import brentq

SQ2 = math.sqrt(2.0)


class DomainError(ValueError):
    """Parameters outside the region where the estimates are defined."""


@dataclass(frozen=True)
class BoundSet:
    n: int
    alpha: float
    beta1: float
    beta2: float
    speed: float
    offset: float
    R: float
    r: float
    T: float
    rho_T1: float
    rho_T2: float
    rho1: float
    rho2: float
    lam_T: tuple
    lam: tuple
    lambda_T: float
    lambda_: float
    delta11: float
    delta21: float
    delta12: float
    delta22: float

    @property
    def _c(self):
        return self.speed / SQ2 - self.R

    @property
    def _K(self):
        return 1.0 + math.sqrt(self.n) * (self.speed + self.R)

    @property
    def _X(self):
        return 1.0 + self.offset / SQ2

    def zeta(self, t):
        """Bound on |dH/dt| for t >= 0 (and on |dy_-/dt| at -t for t <= 0)."""
        t = np.abs(np.asarray(t, dtype=float))
        a = self.alpha
        return (2 ** (a + 1) * self.beta1 * math.sqrt(self.n) * self._K
                / (a * self._c * (self._X + self._c * t) ** a))

    def xi(self, t):
        """Bound on |H(t)| for t >= 0."""
        t = np.abs(np.asarray(t, dtype=float))
        a = self.alpha
        return (2 ** (a + 1) * self.beta1 * math.sqrt(self.n) * self._K
                / (a * (a - 1) * self._c ** 2 * (self._X + self._c * t) ** (a - 1)))

    @property
    def incoming_deflection(self) -> float:
        """Bound on sup |y_-(t)| over t <= 0."""
        return float(self.xi(0.0))

    @property
    def self_map(self) -> bool:
        return max(self.rho1 / self.r, self.rho2 / self.R) <= 1.0

    def as_row(self) -> dict:
        d = asdict(self)
        for i, v in enumerate(self.lam_T, 1):
            d[f"lambda_{i}_T"] = v
        for i, v in enumerate(self.lam, 1):
            d[f"lambda_{i}"] = v
        del d["lam_T"], d["lam"]
        return d


def _contraction(l1, l2, l3, l4):
    return max(l1 * l3 + l2 * l3 + l3 * l4 + l4 * l4,
               l1 * l1 + l1 * l2 + l2 * l4 + l2 * l3)


def _lambdas_at(n, a, b1, b2, c, K, D):
    l1 = 2 ** (a + 2) * n * b2 * K / (a * c ** 2 * D ** a)
    l2 = 2 ** (a + 1) * n * (b1 * c + 2 * b2 * K) / ((a - 1) * c ** 3 * D ** (a - 1))
    l3 = 2 ** (a + 2) * n * b2 * K / ((a + 1) * c * D ** (a + 1))
    l4 = 2 ** (a + 1) * n * (b1 * c + 2 * b2 * K) / (a * c ** 2 * D ** a)
    return l1, l2, l3, l4


def bounds(n: int, alpha: float, beta1: float, beta2: float, speed: float, offset: float,
           R: float, r: float = 1.0, T: float = 0.0) -> BoundSet:
    """All estimate constants at one (|v|, |x|, R, r).

    ``T`` (<= 0) selects the finite-horizon constants; the T >= 0 family
    does not depend on T.
    """
    if not alpha > 1:
        raise DomainError("alpha must exceed 1")
    if not 0 < r <= 1:
        raise DomainError("r must lie in (0, 1]")
    if not R > 0:
        raise DomainError("R must be positive")
    if not speed > SQ2 * R:
        raise DomainError(f"|v| = {speed:g} must exceed sqrt(2) R = {SQ2 * R:g}")
    if T > 0:
        raise DomainError("finite-horizon constants need T <= 0")
    a, sn = float(alpha), math.sqrt(n)
    c = speed / SQ2 - R
    X = 1.0 + offset / SQ2
    D = X + c * abs(T)
    K = 1.0 + sn * speed + sn * R
    pre = 2 ** (a + 1) * beta1 * sn * K
    rho_T2 = pre / (a * c * D ** a)
    rho_T1 = pre / ((a - 1) * c ** 2 * D ** (a - 1))
    rho2 = 2 * pre / (a * c * X ** a)
    rho1 = 2 * pre / (a * (a - 1) * c ** 2 * X ** (a - 1))
    lam_T = _lambdas_at(n, a, beta1, beta2, c, K, D)
    l10, l20, l30, l40 = _lambdas_at(n, a, beta1, beta2, c, K, X)
    lam = (2 * l10 / (a + 1), 2 * l20 / a, 2 * l30, 2 * l40)
    l1, l2, l3, l4 = lam
    delta11 = (l2 * l3 + l4 * l4) * rho2 + (l1 * l3 + l3 * l4) * rho1
    delta21 = (l1 * l2 + l2 * l4) * rho2 + (l1 * l1 + l2 * l3) * rho1
    bb = beta1 * (beta1 + 2 * beta2 + beta1 * beta2)
    w = 1.0 + sn * speed
    delta12 = (2 ** (a + 4) * SQ2 * n ** 3 * w * (2 * a * a + a - 2) * bb
               / ((a - 1) * a * (a + 1) * (speed / SQ2) * c ** 2 * X ** (2 * a)))
    delta22 = (2 ** (a + 5) * n ** 3 * (2 * a + 4) * bb * w
               / ((a - 1) * a ** 2 * (a + 1) * (speed / SQ2) * c ** 3 * X ** (2 * a - 1)))
    return BoundSet(n, a, beta1, beta2, speed, offset, R, r, T, rho_T1, rho_T2, rho1, rho2,
                    lam_T, lam, _contraction(*lam_T), _contraction(*lam),
                    delta11, delta21, delta12, delta22)


def rho2_limit(n: int, alpha: float, beta1: float, offset: float) -> float:
    """Large-speed limit of rho_2; R must exceed it for thresholds to exist."""
    return 2 ** (alpha + 2) * SQ2 * beta1 * n / (alpha * (1 + offset / SQ2) ** alpha)


def default_R(n: int, alpha: float, beta1: float, offset: float) -> float:
    """Twice the rho_2 limit (never zero, so the domain stays well defined)."""
    return max(2.0 * rho2_limit(n, alpha, beta1, offset), 1e-12)


@dataclass(frozen=True)
class Thresholds:
    z1: float
    z2: float
    z3: float

    @property
    def speed(self) -> float:
        """Smallest admissible speed bound: |v| >= max(z1, z2) and |v| > z3."""
        return max(self.z1, self.z2, self.z3)


def _root(fn, lo: float, rtol: float) -> float:
    """Unique root of a strictly decreasing fn on (lo, inf) with fn -> (< 0)."""
    if fn(lo * (1 + 1e-14)) <= 0:
        return lo
    hi = 2.0 * lo
    while fn(hi) > 0:
        hi *= 2.0
        if hi > 1e300:
            raise DomainError("no threshold root below 1e300")
    return brentq(fn, lo * (1 + 1e-14), hi, xtol=1e-300, rtol=max(rtol, 4 * np.finfo(float).eps), maxiter=500)


def thresholds(n: int, alpha: float, beta1: float, beta2: float, R: float, r: float, offset: float,
               rtol: float = 1e-13) -> Thresholds:
    """Speeds z1, z2, z3 at which rho_1/r, rho_2/R and lambda reach 1."""
    if not R > rho2_limit(n, alpha, beta1, offset):
        raise DomainError(
            f"R = {R:g} does not exceed the rho_2 limit {rho2_limit(n, alpha, beta1, offset):g}; no root exists")
    lo = SQ2 * R

    def b(z):
        return bounds(n, alpha, beta1, beta2, z, offset, R, r)

    z1 = _root(lambda z: b(z).rho1 / r - 1.0, lo, rtol)
    z2 = _root(lambda z: b(z).rho2 / R - 1.0, lo, rtol)
    z3 = _root(lambda z: b(z).lambda_ - 1.0, lo, rtol)
    return Thresholds(z1, z2, z3)
