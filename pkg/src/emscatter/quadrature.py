"""Composite Chebyshev panel quadrature on an interval.

Nodes are Chebyshev-Lobatto points on each panel, so every panel carries
its endpoints and cumulative integrals chain exactly across panels.  For
smooth integrands both the total and the running integral converge
spectrally in the panel order.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from numpy.polynomial import chebyshev as C


@lru_cache(maxsize=16)
def _reference_panel(order: int):
    """Nodes on [-1, 1], running-integral matrix and interpolation data."""
    j = np.arange(order)
    nodes = -np.cos(np.pi * j / (order - 1))
    vander = C.chebvander(nodes, order - 1)
    inv_vander = np.linalg.inv(vander)
    integ = np.empty((order, order))
    for k in range(order):
        e = np.zeros(order)
        e[k] = 1.0
        integ[:, k] = C.chebval(nodes, C.chebint(e, lbnd=-1.0))
    running = integ @ inv_vander
    # barycentric weights for Chebyshev-Lobatto points
    bary = (-1.0) ** j
    bary[0] *= 0.5
    bary[-1] *= 0.5
    return nodes, running, bary


class PanelGrid:
    """Uniform panels on ``[a, b]`` with ``order`` Lobatto nodes each.

    Values live on ``self.t`` (flattened, panel-major; interior panel
    endpoints appear twice).  All reductions act along ``axis``.
    """

    def __init__(self, a: float, b: float, n_panels: int, order: int = 16):
        if not b > a:
            raise ValueError(f"empty interval [{a}, {b}]")
        if n_panels < 1 or order < 3:
            raise ValueError("need at least one panel of order >= 3")
        self.a = float(a)
        self.b = float(b)
        self.n_panels = int(n_panels)
        self.order = int(order)
        self.edges = np.linspace(self.a, self.b, self.n_panels + 1)
        self.width = (self.b - self.a) / self.n_panels
        ref, running, bary = _reference_panel(self.order)
        self._running = running * (0.5 * self.width)
        self._bary = bary
        self._ref = ref
        mid = 0.5 * (self.edges[:-1] + self.edges[1:])
        self.t = (mid[:, None] + 0.5 * self.width * ref[None, :]).ravel()

    @classmethod
    def symmetric(cls, half_length: float, max_width: float, order: int = 16) -> "PanelGrid":
        """Grid on ``[-L, L]`` with an even panel count, so 0 is a panel edge."""
        n = max(2, int(np.ceil(2.0 * half_length / max_width)))
        n += n % 2
        return cls(-half_length, half_length, n, order)

    @property
    def size(self) -> int:
        return self.t.size

    @property
    def weights(self) -> np.ndarray:
        return np.tile(self._running[-1], self.n_panels)

    def _panels(self, values: np.ndarray, axis: int) -> np.ndarray:
        v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
        if v.shape[0] != self.size:
            raise ValueError(f"expected {self.size} nodes along axis, got {v.shape[0]}")
        return v.reshape((self.n_panels, self.order) + v.shape[1:])

    def cumulative(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """Running integral from ``a`` to each node."""
        v = self._panels(values, axis)
        rest = v.shape[2:]
        local = np.matmul(self._running, v.reshape(self.n_panels, self.order, -1))
        offsets = np.cumsum(local[:, -1], axis=0)
        local[1:] += offsets[:-1, None]
        out = local.reshape((self.size,) + rest)
        return np.moveaxis(out, 0, axis)

    def integral(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        v = np.moveaxis(np.asarray(values, dtype=float), axis, 0)
        return np.tensordot(self.weights, v, axes=(0, 0))

    def split(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """``int_a^0 G - int_0^b (G(b) - G)`` with ``G`` the running integral.

        This is the two-sided double integral used for position-type
        asymptotics; ``0`` must be a panel edge.
        """
        if not self.a < 0.0 < self.b:
            raise ValueError("split needs 0 inside the grid")
        k = int(round(-self.a / self.width))
        if abs(self.edges[k]) > 1e-12 * self.width:
            raise ValueError("0 is not a panel edge")
        g = self.cumulative(values, axis)
        gg = self.cumulative(g, axis)
        g = np.moveaxis(g, axis, 0)
        gg = np.moveaxis(gg, axis, 0)
        i0 = k * self.order  # first node of the panel starting at 0
        left = gg[i0]
        total = g[-1]
        right = total * self.b - (gg[-1] - gg[i0])
        return left - right

    def tail(self, values: np.ndarray, axis: int = 0) -> np.ndarray:
        """``int_t^b`` at each node."""
        c = self.cumulative(values, axis)
        c = np.moveaxis(c, axis, 0)
        return np.moveaxis(c[-1] - c, 0, axis)

    def interpolate(self, values: np.ndarray, t, axis: int = 0) -> np.ndarray:
        """Evaluate the panel polynomial interpolant at points ``t``.

        Points outside ``[a, b]`` are clamped to the nearest endpoint.
        """
        v = self._panels(values, axis)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        t = np.clip(t, self.a, self.b)
        p = np.minimum(((t - self.a) / self.width).astype(int), self.n_panels - 1)
        mid = 0.5 * (self.edges[p] + self.edges[p + 1])
        s = (t - mid) / (0.5 * self.width)
        diff = s[:, None] - self._ref[None, :]
        exact = np.abs(diff) < 1e-15
        diff[exact] = 1.0
        w = self._bary[None, :] / diff
        w[np.any(exact, axis=1)] = 0.0
        rows, cols = np.nonzero(exact)
        w[rows, cols] = 1.0
        w /= w.sum(axis=1, keepdims=True)
        vals = np.einsum("tj,tj...->t...", w, v[p])
        return np.moveaxis(vals, 0, axis) if vals.ndim > 1 and axis != 0 else vals
