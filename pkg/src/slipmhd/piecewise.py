"""Piecewise polynomials on [a_0, a_n] with exact integration and differentiation.

Each piece is stored in its local variable t = (z - a_i) / w_i, w_i the piece
width (1 for an unbounded last piece), which keeps coefficients O(1) for
pieces that are narrow or far from the origin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

__all__ = ["PiecewisePolynomial", "gauss_nodes"]


@dataclass(frozen=True)
class PiecewisePolynomial:
    breaks: tuple
    pieces: tuple

    def __post_init__(self):
        if len(self.pieces) != len(self.breaks) - 1:
            raise ValueError("need one piece per interval")
        if any(b <= a for a, b in zip(self.breaks[:-1], self.breaks[1:])):
            raise ValueError("breakpoints must increase")

    @classmethod
    def zero(cls, breaks):
        return cls(tuple(breaks), tuple(Polynomial([0.0]) for _ in range(len(breaks) - 1)))

    def width(self, i: int) -> float:
        w = self.breaks[i + 1] - self.breaks[i]
        return 1.0 if np.isinf(w) else w

    def local(self, i: int, z):
        return (np.asarray(z, dtype=float) - self.breaks[i]) / self.width(i)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = np.zeros_like(z)
        for i, q in enumerate(self.pieces):
            lo, hi = self.breaks[i], self.breaks[i + 1]
            last = i == len(self.pieces) - 1
            sel = (z >= lo) & ((z <= hi) if last else (z < hi))
            out[sel] = q(self.local(i, z[sel]))
        return out

    def integrate(self) -> "PiecewisePolynomial":
        """Antiderivative vanishing at the left end."""
        pieces = []
        const = 0.0
        for i, q in enumerate(self.pieces):
            w = self.width(i)
            Q = w * q.integ(lbnd=0)
            pieces.append(Q + const)
            if i < len(self.pieces) - 1:
                const = const + Q(1.0)
        return PiecewisePolynomial(self.breaks, tuple(pieces))

    def derivative(self, n: int = 1) -> "PiecewisePolynomial":
        if n == 0:
            return self
        return PiecewisePolynomial(
            self.breaks, tuple(q.deriv(n) / self.width(i) ** n for i, q in enumerate(self.pieces))
        )

    def __add__(self, other):
        self._same(other)
        return PiecewisePolynomial(self.breaks, tuple(a + b for a, b in zip(self.pieces, other.pieces)))

    def __sub__(self, other):
        self._same(other)
        return PiecewisePolynomial(self.breaks, tuple(a - b for a, b in zip(self.pieces, other.pieces)))

    def __mul__(self, c: float):
        return PiecewisePolynomial(self.breaks, tuple(c * q for q in self.pieces))

    __rmul__ = __mul__

    def _same(self, other):
        if tuple(other.breaks) != tuple(self.breaks):
            raise ValueError("piecewise polynomials have different breakpoints")

    def limit(self, z: float, side: str) -> float:
        """One-sided value at a breakpoint or interior point."""
        b = np.asarray(self.breaks)
        if side == "left":
            i = int(np.searchsorted(b, z, side="left")) - 1
        else:
            i = int(np.searchsorted(b, z, side="right")) - 1
        i = min(max(i, 0), len(self.pieces) - 1)
        return float(self.pieces[i](self.local(i, z)))

    def quadrature(self, n_sub: int = 16, n_gauss: int = 12, lo: float = 0.0, hi: float = 1.0):
        """Composite Gauss-Legendre nodes and weights on [lo, hi] honoring the breaks."""
        pts = [lo] + [b for b in self.breaks if lo < b < hi] + [hi]
        return gauss_nodes(pts, n_sub, n_gauss)


def gauss_nodes(breaks, n_sub: int, n_gauss: int):
    x, w = np.polynomial.legendre.leggauss(n_gauss)
    nodes, weights = [], []
    for a, b in zip(breaks[:-1], breaks[1:]):
        edges = np.linspace(a, b, n_sub + 1)
        for s0, s1 in zip(edges[:-1], edges[1:]):
            h = (s1 - s0) / 2
            nodes.append(s0 + h * (x + 1))
            weights.append(h * w)
    return np.concatenate(nodes), np.concatenate(weights)
