"""Shared fixtures and independent oracles.

The oracles avoid the package's transforms: fields are evaluated by summing
their basis functions directly, and profiles are solved in exact rational
arithmetic.
"""

from fractions import Fraction
from math import comb

import numpy as np
import pytest

from slipmhd.fields import Parity, make_grid


def basis_sum(field, x, y, z, dz_order=0):
    """Evaluate a scalar spectral field (or its z-derivative) at points by brute force.

    Exact for fields without Nyquist content.
    """
    g = field.grid
    x, y, z = (np.asarray(a, dtype=float).ravel() for a in (x, y, z))
    out = np.zeros(x.size)
    kxs = np.fft.fftfreq(g.nx, 1.0 / g.nx)
    for ix, iy, m in zip(*np.nonzero(field.coeffs)):
        c = field.coeffs[ix, iy, m]
        phase = np.exp(2j * np.pi * (kxs[ix] * x + iy * y))
        w = np.pi * m
        # d^j/dz^j of cos(w z) or sin(w z): shift the phase by j quarter turns
        shift = dz_order * np.pi / 2
        if field.parity is Parity.EVEN:
            zpart = w**dz_order * np.cos(w * z + shift)
        else:
            zpart = w**dz_order * np.sin(w * z + shift)
        mult = 1.0 if iy == 0 else 2.0
        out += mult * np.real(c * phase) * zpart
    return out


def exact_profile(k, extra=0):
    """Rational coefficients of the minimal-degree layer profile."""
    n_mom = 2 * k + extra
    deg = n_mom + 2
    rows = [[Fraction(int(i == 0)) for i in range(deg + 1)] + [Fraction(1)]]
    rows.append([Fraction(1)] * (deg + 1) + [Fraction(0)])
    rows.append([Fraction(i) for i in range(deg + 1)] + [Fraction(0)])
    for j in range(n_mom):
        # int_0^1 z^i (1 - z)^j dz expanded by the binomial theorem
        row = []
        for i in range(deg + 1):
            s = Fraction(0)
            for r in range(j + 1):
                s += Fraction(comb(j, r)) * (-1) ** r / (i + r + 1)
            row.append(s)
        rows.append(row + [Fraction(0)])
    return _solve(rows)


def _solve(aug):
    n = len(aug)
    a = [row[:] for row in aug]
    for col in range(n):
        piv = next(r for r in range(col, n) if a[r][col] != 0)
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [p - f * q for p, q in zip(a[r], a[col])]
    return [a[i][n] / a[i][i] for i in range(n)]


@pytest.fixture
def grid16():
    return make_grid(16, 16, 16)


@pytest.fixture
def grid8():
    return make_grid(8, 8, 8)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
