"""Boundary-layer corrector for the flat slab.

Given tangential wall data h on z = 0 and z = 1, build a divergence-free
field chi, confined to layers of width sqrt(eps) at the walls, whose
2k-th normal derivative matches h, and a potential v with curl v = chi:

    phi          polynomial profile, phi(0) = 1, phi = 0 for z >= 1,
                 int_0^1 phi(t) (1 - t)^j dt = 0 for j < 2k
    phi_eps(z)   = phi(z / sqrt(eps))
    psi_tau      = h(0) phi_eps(z) + h(1) phi_eps(1 - z)
    psi_3        = -int_0^z div_tau psi_tau
    chi          = F^{2k} psi,   F f(z) = int_0^z f
    -lap zeta    = chi,  zeta_tau = 0 and dz zeta_3 = 0 on the walls
    v            = curl zeta

The layer quantities are kept as Fourier(x, y) x piecewise polynomial(z),
with breakpoints 0, sqrt(eps), 1 - sqrt(eps), 1, so every trace and norm is
computed without projection error.  zeta and v come from a per-mode spectral
solve on an oversampled z-series.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.fft as sfft
from numpy.polynomial import Polynomial

from .fields import (
    Grid,
    Parity,
    SpectralScalarField,
    SpectralVectorField,
    VORTICITY,
    sobolev_norm,
)
from .fitting import RateFit, fit_rate
from .operators import curl, laplacian
from .piecewise import PiecewisePolynomial, gauss_nodes

__all__ = [
    "Profile",
    "LayerField",
    "CorrectorBundle",
    "ScalingResult",
    "build_profile",
    "iterated_integral",
    "build_boundary_layer",
    "project_layer",
    "solve_corrector_elliptic",
    "elliptic_residual",
    "solve_bundle",
    "bundle_checks",
    "layer_norm",
    "expected_exponent",
    "measure_scaling",
    "scaling_csv",
]


# -- profile ------------------------------------------------------------------


@dataclass(frozen=True)
class Profile:
    k: int
    poly_coeffs: tuple  # ascending powers of z on [0, 1]
    n_moments: int

    @property
    def poly(self) -> Polynomial:
        return Polynomial(np.array(self.poly_coeffs, dtype=float))

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return np.where(z < 1.0, self.poly(np.minimum(z, 1.0)), 0.0)

    def piecewise(self) -> PiecewisePolynomial:
        """phi on [0, inf) with breaks 0, 1."""
        return PiecewisePolynomial((0.0, 1.0, math.inf), (self.poly, Polynomial([0.0])))

    def constraint_residuals(self) -> dict[str, float]:
        """Each imposed condition, evaluated by exact polynomial integration."""
        p = self.poly
        out = {"phi(0)-1": abs(p(0.0) - 1.0), "phi(1)": abs(p(1.0)), "phi'(1)": abs(p.deriv()(1.0))}
        for j in range(self.n_moments):
            integrand = p * Polynomial([1.0, -1.0]) ** j
            F = integrand.integ(lbnd=0)
            out[f"moment_{j}"] = abs(F(1.0))
        return out


def _moment_matrix(degree: int, n_moments: int):
    """Rows: p(0), p(1), p'(1), then int_0^1 z^i (1-z)^j dz for each moment j."""
    rows, rhs = [], []
    rows.append([Fraction(int(i == 0)) for i in range(degree + 1)])
    rhs.append(Fraction(1))
    rows.append([Fraction(1)] * (degree + 1))
    rhs.append(Fraction(0))
    rows.append([Fraction(i) for i in range(degree + 1)])
    rhs.append(Fraction(0))
    for j in range(n_moments):
        # beta integral B(i+1, j+1) = i! j! / (i+j+1)!
        rows.append(
            [Fraction(math.factorial(i) * math.factorial(j), math.factorial(i + j + 1)) for i in range(degree + 1)]
        )
        rhs.append(Fraction(0))
    return rows, rhs


def _solve_exact(rows, rhs):
    """Gauss-Jordan elimination over the rationals."""
    n = len(rows)
    a = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(n):
        piv = next((r for r in range(col, n) if a[r][col] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("profile system is singular")
        a[col], a[piv] = a[piv], a[col]
        for r in range(n):
            if r != col and a[r][col] != 0:
                f = a[r][col] / a[col][col]
                a[r] = [x - f * y for x, y in zip(a[r], a[col])]
    return [a[i][n] / a[i][i] for i in range(n)]


def build_profile(k: int, extra_moments: int = 0) -> Profile:
    """Minimal-degree polynomial profile with 2k (+ extra) vanishing moments.

    The linear system is solved in rational arithmetic, so the coefficients
    are the exact solution rounded once.  ``extra_moments=1`` also kills the
    moment of order 2k, which makes the normal component of chi vanish
    between the layers.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    n_moments = 2 * k + extra_moments
    degree = n_moments + 2
    rows, rhs = _moment_matrix(degree, n_moments)
    coeffs = _solve_exact(rows, rhs)
    return Profile(k, tuple(float(c) for c in coeffs), n_moments)


def iterated_integral(f, j: int) -> PiecewisePolynomial:
    """F^j f with F f(z) = int_0^z f(s) ds; a Profile is taken on [0, inf)."""
    if j < 0:
        raise ValueError("j must be >= 0")
    pp = f.piecewise() if isinstance(f, Profile) else f
    for _ in range(j):
        pp = pp.integrate()
    return pp


def _layer_profiles(profile: Profile, eps: float, jmax: int):
    """A_j = F^j(phi_eps) and B_j = F^j(phi_eps(1 - .)) for j = 0..jmax on [0, 1]."""
    d = math.sqrt(eps)
    breaks = (0.0, d, 1.0 - d, 1.0)
    zero = Polynomial([0.0])
    p = profile.poly
    a0 = PiecewisePolynomial(breaks, (p, zero, zero))
    b0 = PiecewisePolynomial(breaks, (zero, zero, p(Polynomial([1.0, -1.0]))))
    A, B = [a0], [b0]
    for _ in range(jmax):
        A.append(A[-1].integrate())
        B.append(B[-1].integrate())
    return A, B


# -- layer fields -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LayerField:
    """sum_t g_t(x, y) f_t(z) per component; g_t as rfft2 coefficients."""

    grid: Grid
    terms: tuple  # three tuples of (xy_coeffs, PiecewisePolynomial)

    def dz(self, n: int = 1) -> "LayerField":
        return LayerField(
            self.grid, tuple(tuple((g, f.derivative(n)) for g, f in comp) for comp in self.terms)
        )

    def scaled(self, a: float) -> "LayerField":
        return LayerField(self.grid, tuple(tuple((a * g, f) for g, f in comp) for comp in self.terms))

    def _xy(self, g: np.ndarray) -> np.ndarray:
        return sfft.irfft2(g, s=(self.grid.nx, self.grid.ny), norm="forward")

    def evaluate(self, z, components=(0, 1, 2)) -> np.ndarray:
        """Physical values, shape (len(components), nx, ny, len(z))."""
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros((len(components), self.grid.nx, self.grid.ny, z.size))
        for n, c in enumerate(components):
            for g, f in self.terms[c]:
                out[n] += self._xy(g)[:, :, None] * f(z)[None, None, :]
        return out

    def trace(self, component: int, face: int, j: int = 0) -> np.ndarray:
        """d^j/dz^j of a component on z = face, using the one-sided limit from inside."""
        side = "right" if face == 0 else "left"
        out = np.zeros((self.grid.nx, self.grid.ny))
        for g, f in self.terms[component]:
            out += self._xy(g) * f.derivative(j).limit(float(face), side)
        return out

    def divergence(self, z) -> np.ndarray:
        g = self.grid
        z = np.atleast_1d(np.asarray(z, dtype=float))
        out = np.zeros((g.nx, g.ny, z.size))
        for c, k in ((0, g.kx[:, :, 0]), (1, g.ky[:, :, 0])):
            for coef, f in self.terms[c]:
                out += self._xy(1j * k * coef)[:, :, None] * f(z)[None, None, :]
        for coef, f in self.terms[2]:
            out += self._xy(coef)[:, :, None] * f.derivative(1)(z)[None, None, :]
        return out


# -- construction --------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CorrectorBundle:
    epsilon: float
    k: int
    profile: Profile
    h_tau: np.ndarray  # (face, component, nx, ny)
    psi: LayerField
    chi: LayerField
    zeta: SpectralVectorField | None = None
    v: SpectralVectorField | None = None
    solve_info: dict = field(default_factory=dict)

    @property
    def layer_width(self) -> float:
        return math.sqrt(self.epsilon)

    @property
    def breaks(self) -> tuple:
        d = self.layer_width
        return (0.0, d, 1.0 - d, 1.0)


def _wall_spectrum(h_tau: np.ndarray, grid: Grid) -> np.ndarray:
    h_tau = np.asarray(h_tau, dtype=float)
    if h_tau.shape != (2, 2, grid.nx, grid.ny):
        raise ValueError(f"h_tau must have shape (2, 2, {grid.nx}, {grid.ny}), got {h_tau.shape}")
    hh = sfft.rfft2(h_tau, axes=(-2, -1), norm="forward")
    nyq = max(np.max(np.abs(hh[..., grid.nx // 2, :])), np.max(np.abs(hh[..., grid.ny // 2])))
    if nyq > 1e-12 * max(1.0, np.max(np.abs(hh))):
        raise ValueError("h_tau carries Nyquist content; it must be band-limited to the grid")
    return hh


def build_boundary_layer(h_tau, epsilon: float, k: int, grid: Grid, profile: Profile | None = None) -> CorrectorBundle:
    """psi and chi for wall data ``h_tau`` (shape (2 faces, 2 components, nx, ny))."""
    if not 0 < epsilon < 0.25:
        raise ValueError("epsilon must lie in (0, 1/4) so the two wall layers stay apart")
    if math.sqrt(epsilon) > 0.5:
        raise ValueError("wall layers overlap")
    profile = profile or build_profile(k)
    if profile.k != k:
        raise ValueError("profile order does not match k")
    hh = _wall_spectrum(h_tau, grid)
    kx, ky = grid.kx[:, :, 0], grid.ky[:, :, 0]
    div_h = [1j * kx * hh[f, 0] + 1j * ky * hh[f, 1] for f in (0, 1)]
    A, B = _layer_profiles(profile, epsilon, 2 * k + 1)

    def layer(j):
        tang = tuple(((hh[0, c], A[j]), (hh[1, c], B[j])) for c in (0, 1))
        normal = ((-div_h[0], A[j + 1]), (-div_h[1], B[j + 1]))
        return LayerField(grid, tang + (normal,))

    return CorrectorBundle(epsilon, k, profile, np.array(h_tau, dtype=float), layer(0), layer(2 * k))


def _series_coefficients(f: PiecewisePolynomial, parity: Parity, M: int) -> np.ndarray:
    """Cosine or sine coefficients m = 0..M of f on (0, 1); slot M left empty."""
    m = np.arange(M + 1)
    coeffs = np.zeros(M + 1)
    pts = [0.0] + [b for b in f.breaks if 0 < b < 1] + [1.0]
    for a, b in zip(pts[:-1], pts[1:]):
        n_sub = max(1, int(math.ceil(M * (b - a) / 16)))
        z, w = gauss_nodes([a, b], n_sub, 24)
        fz = f(z) * w
        basis = np.cos if parity is Parity.EVEN else np.sin
        coeffs += basis(np.pi * np.outer(m, z)) @ fz
    coeffs *= 2.0
    if parity is Parity.EVEN:
        coeffs[0] *= 0.5
    else:
        coeffs[0] = 0.0
    coeffs[M] = 0.0
    return coeffs


def project_layer(layer: LayerField, nz: int, parities=VORTICITY) -> SpectralVectorField:
    """Cosine/sine-series projection of a layer field onto ``nz`` z-modes."""
    g = Grid(layer.grid.nx, layer.grid.ny, nz)
    comps = []
    for terms, p in zip(layer.terms, parities):
        c = np.zeros(g.spectral_shape, complex)
        for coef, f in terms:
            c += coef[:, :, None] * _series_coefficients(f, p, nz)[None, None, :]
        comps.append(SpectralScalarField(g, p, c))
    return SpectralVectorField(tuple(comps))


def solve_corrector_elliptic(chi: SpectralVectorField, grid: Grid | None = None):
    """Solve -lap zeta = chi with zeta_tau = 0, dz zeta_3 = 0; return (zeta, curl zeta).

    ``chi`` must be vorticity-type (tangential sine, normal cosine series) and
    satisfy the compatibility condition mean(chi_3) = 0.  The zero mode of
    zeta_3 is fixed to zero mean.
    """
    if chi.kind != "vorticity":
        raise ValueError("chi must be a vorticity-type field")
    if grid is not None and (grid.nx, grid.ny) != (chi.grid.nx, chi.grid.ny):
        raise ValueError("chi does not live on the requested grid")
    mean3 = abs(chi[2].coeffs[0, 0, 0])
    if mean3 > 1e-10:
        raise ValueError(f"compatibility violated: mean of chi_3 is {mean3:.3e}")
    g = chi.grid
    k2 = g.k2
    safe = np.where(k2 > 0, k2, 1.0)
    zeta = SpectralVectorField(
        tuple(SpectralScalarField(g, c.parity, np.where(k2 > 0, c.coeffs / safe, 0.0)) for c in chi)
    )
    return zeta, curl(zeta)


def elliptic_residual(zeta: SpectralVectorField, chi: SpectralVectorField) -> float:
    """||lap zeta + chi|| / ||chi|| in L2."""
    den = sobolev_norm(chi, 0)
    return sobolev_norm(laplacian(zeta) + chi, 0) / den if den > 0 else sobolev_norm(zeta, 0)


def _gram_norm2(layer: LayerField) -> float:
    """Exact squared L2(Q) norm of a layer field via Parseval in x, y."""
    g = layer.grid
    w_xy = g.xy_weight[:, :, 0]
    total = 0.0
    for terms in layer.terms:
        fs = [f for _, f in terms]
        pts = sorted({0.0, 1.0, *[b for f in fs for b in f.breaks if 0 < b < 1]})
        z, w = gauss_nodes(pts, 4, 24)
        vals = np.array([f(z) for f in fs])
        G = (vals * w) @ vals.T
        C = np.array([c for c, _ in terms])
        total += float(np.einsum("tab,sab,ts,ab->", C, np.conj(C), G, w_xy).real)
    return total


def solve_bundle(bundle: CorrectorBundle, nz: int | None = None) -> CorrectorBundle:
    """Project chi onto an oversampled z-series and solve for zeta and v.

    The default resolution is the smallest power of two with at least
    8 / sqrt(eps) modes (at least 64).
    """
    if nz is None:
        target = max(64, math.ceil(8 / math.sqrt(bundle.epsilon)))
        nz = 1 << (target - 1).bit_length()
    chi_s = project_layer(bundle.chi, nz)
    zeta, v = solve_corrector_elliptic(chi_s)
    exact2 = _gram_norm2(bundle.chi)
    proj2 = sobolev_norm(chi_s, 0) ** 2
    info = {
        "nz": nz,
        "residual": elliptic_residual(zeta, chi_s),
        "projection_error": math.sqrt(max(exact2 - proj2, 0.0) / exact2) if exact2 > 0 else 0.0,
    }
    return CorrectorBundle(
        bundle.epsilon, bundle.k, bundle.profile, bundle.h_tau, bundle.psi, bundle.chi, zeta, v, info
    )


def bundle_checks(bundle: CorrectorBundle, n_sample: int = 64) -> dict[str, float]:
    """Residual of every structural property of the construction.

    ``chi3_interior_offset`` is the (z-independent) value of chi_3 between the
    layers: zero only when the profile also kills the moment of order 2k.
    """
    from .fields import divergence_coeff_max, vk_membership_residual

    k = bundle.k
    d = bundle.layer_width
    z_all = np.linspace(0.0, 1.0, n_sub := max(n_sample, 8))
    z_mid = np.linspace(d, 1.0 - d, n_sub)
    h = bundle.h_tau
    chi = bundle.chi
    out = {
        "div_psi": float(np.max(np.abs(bundle.psi.divergence(z_all)))),
        "div_chi": float(np.max(np.abs(chi.divergence(z_all)))),
        "chi_tau_interior": float(np.max(np.abs(chi.evaluate(z_mid, (0, 1))))),
    }
    chi3_mid = chi.evaluate(z_mid, (2,))[0]
    out["chi3_interior_variation"] = float(np.max(np.abs(chi3_mid - chi3_mid[:, :, :1])))
    out["chi3_interior_offset"] = float(np.max(np.abs(chi3_mid)))
    top = 0.0
    top_n = 0.0
    low = 0.0
    for face in (0, 1):
        for c in (0, 1):
            top = max(top, float(np.max(np.abs(chi.trace(c, face, 2 * k) - h[face, c]))))
            for j in range(2 * k):
                low = max(low, float(np.max(np.abs(chi.trace(c, face, j)))))
        top_n = max(top_n, float(np.max(np.abs(chi.trace(2, face, 2 * k)))))
        for j in range(1, 2 * k + 1):
            low = max(low, float(np.max(np.abs(chi.trace(2, face, j)))))
    out["trace_2k_tangential"] = top
    out["trace_2k_normal"] = top_n
    out["trace_lower_orders"] = low
    out["psi_wall_data"] = max(
        float(np.max(np.abs(bundle.psi.trace(c, face, 0) - h[face, c]))) for face in (0, 1) for c in (0, 1)
    )
    if bundle.zeta is not None:
        out["div_zeta"] = divergence_coeff_max(bundle.zeta)
        out["div_v"] = divergence_coeff_max(bundle.v)
        out["v_membership"] = vk_membership_residual(bundle.v, 2 * k - 1)
        out["elliptic_residual"] = bundle.solve_info["residual"]
    return out


# -- scaling ---------------------------------------------------------------------------


def layer_norm(
    chi: LayerField, order: int, component: str, p: float, i: float, n_sub: int = 32, n_gauss: int = 10
) -> float:
    """|| z^i (1-z)^i d_z^order chi_sel ||_{L^p(Q)}.

    ``component`` selects the tangential pair, the normal component, or the
    full vector ("tangential", "normal", "full").  The z-integral uses Gauss
    rules on each polynomial piece, the x, y integral the periodic trapezoid
    rule on the grid.
    """
    sel = {"tangential": (0, 1), "normal": (2,), "full": (0, 1, 2)}[component]
    d = chi.dz(order)
    f0 = d.terms[0][0][1]
    z, w = gauss_nodes([0.0, *[b for b in f0.breaks if 0 < b < 1], 1.0], n_sub, n_gauss)
    vals = d.evaluate(z, sel)
    mag = np.sqrt(np.sum(vals**2, axis=0)) * (z * (1 - z)) ** i
    integral = float(np.sum(np.mean(mag**p, axis=(0, 1)) * w))
    return integral ** (1.0 / p)


def expected_exponent(component: str, p: float, i: float) -> float:
    """Exponent of eps in the layer estimates for the given norm."""
    if component == "tangential":  # d^{2k+1} chi_tau
        return 1 / (2 * p) + (i - 1) / 2
    if component == "normal":  # d^{2k} chi_n
        return 1 / (2 * p) + (i + 1) / 2
    if component == "full":  # d^{2k} chi, unweighted
        return 1 / (2 * p) + i / 2
    raise ValueError(f"unknown component {component!r}")


def default_order(component: str, k: int) -> int:
    return 2 * k + 1 if component == "tangential" else 2 * k


@dataclass(frozen=True)
class ScalingResult:
    component: str
    order: int
    p: float
    i: float
    epsilons: tuple
    norms: tuple
    fit: RateFit

    @property
    def slope(self) -> float:
        return self.fit.slope


def measure_scaling(
    h_tau,
    k: int,
    p: float,
    i: float,
    derivative_order: int | None,
    eps_sweep,
    grid: Grid,
    component: str = "tangential",
) -> ScalingResult:
    """Fit log ||.|| against log eps over a geometric sweep."""
    eps = np.asarray(sorted(eps_sweep), dtype=float)
    if eps.size < 5:
        raise ValueError("need at least five sweep points")
    ratios = eps[1:] / eps[:-1]
    if not np.allclose(ratios, ratios[0], rtol=1e-6):
        raise ValueError("sweep must be geometric")
    order = default_order(component, k) if derivative_order is None else derivative_order
    profile = build_profile(k)
    norms = []
    for e in eps:
        bundle = build_boundary_layer(h_tau, float(e), k, grid, profile)
        norms.append(layer_norm(bundle.chi, order, component, p, i))
    norms = np.array(norms)
    steps = np.diff(norms)
    if not (np.all(steps > 0) or np.all(steps < 0)):
        raise ValueError("norms are not monotone in eps; construction is inconsistent")
    fit = fit_rate(list(zip(eps, norms)))
    return ScalingResult(component, order, p, i, tuple(eps), tuple(norms), fit)


def scaling_csv(results) -> str:
    lines = ["epsilon,p,i,order,component,norm"]
    for r in results:
        for e, n in zip(r.epsilons, r.norms):
            lines.append(f"{e!r},{r.p!r},{r.i!r},{r.order},{r.component},{n!r}")
    return "\n".join(lines) + "\n"
