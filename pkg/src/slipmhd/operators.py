"""Differential and nonlinear operators on parity-typed spectral fields.

Derivatives are diagonal in the basis.  Products are formed pointwise on the
collocation grid and truncated with the two-thirds rule.  Parities are
propagated by the rules

    d/dz flips parity;   parity(f g) = EVEN iff parity(f) == parity(g)

and combining terms of different parity raises ``ParityError``.  No operator
forces a result into a parity class it does not already belong to, so wrong
parity on input shows up as nonzero traces on output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .fields import (
    Grid,
    Parity,
    ParityError,
    SpectralScalarField,
    SpectralVectorField,
    _z_derivative_factor,
    boundary_trace,
    to_physical,
    to_spectral,
)

__all__ = [
    "DealiasPolicy",
    "ResolutionWarning",
    "dealias_mask",
    "dealias",
    "dx",
    "dy",
    "dz",
    "gradient",
    "divergence",
    "curl",
    "laplacian",
    "leray_project",
    "pressure",
    "advect",
    "curl_commutator",
    "wall_alternation_residual",
]

TRUNCATION_WARN = 1e-6


class ResolutionWarning(UserWarning):
    """A product lost more than the allowed fraction of its energy to truncation."""


@dataclass(frozen=True)
class DealiasPolicy:
    x: bool = True
    y: bool = True
    z: bool = True
    warn_fraction: float | None = TRUNCATION_WARN

    @property
    def complete(self) -> bool:
        return self.x and self.y and self.z


DEFAULT_POLICY = DealiasPolicy()
NO_DEALIAS = DealiasPolicy(False, False, False, None)


_mask_cache: dict = {}


def dealias_mask(grid: Grid, policy: DealiasPolicy = DEFAULT_POLICY) -> np.ndarray:
    """Two-thirds rule: |kx| < nx/3, |ky| < ny/3, m < 2 nz/3 (mirror grid of 2 nz)."""
    key = (grid, policy.x, policy.y, policy.z)
    if key not in _mask_cache:
        mask = np.ones(grid.spectral_shape, dtype=bool)
        if policy.x:
            mask &= np.abs(grid.kx_int) < grid.nx / 3
        if policy.y:
            mask &= grid.ky_int < grid.ny / 3
        if policy.z:
            mask &= grid.m_int < 2 * grid.nz / 3
        mask.setflags(write=False)
        _mask_cache[key] = mask
    return _mask_cache[key]


def _scalar(f: SpectralScalarField, coeffs, parity=None) -> SpectralScalarField:
    return SpectralScalarField(f.grid, parity or f.parity, coeffs)


def dealias(field, policy: DealiasPolicy = DEFAULT_POLICY):
    if isinstance(field, SpectralVectorField):
        return SpectralVectorField(tuple(dealias(c, policy) for c in field))
    return _scalar(field, field.coeffs * dealias_mask(field.grid, policy))


def dx(f: SpectralScalarField) -> SpectralScalarField:
    return _scalar(f, 1j * f.grid.kx * f.coeffs)


def dy(f: SpectralScalarField) -> SpectralScalarField:
    return _scalar(f, 1j * f.grid.ky * f.coeffs)


def dz(f: SpectralScalarField, order: int = 1) -> SpectralScalarField:
    fac, p = _z_derivative_factor(f.grid, f.parity, order)
    return _scalar(f, fac * f.coeffs, p)


def _dz_vector(v: SpectralVectorField, order: int) -> SpectralVectorField:
    return SpectralVectorField(tuple(dz(c, order) for c in v))


def gradient(s: SpectralScalarField) -> SpectralVectorField:
    return SpectralVectorField((dx(s), dy(s), dz(s)))


def divergence(v: SpectralVectorField) -> SpectralScalarField:
    """Exact divergence.  EVEN for velocity-type input, ODD for vorticity-type."""
    return dx(v[0]) + dy(v[1]) + dz(v[2])


def curl(v: SpectralVectorField) -> SpectralVectorField:
    """Exact curl; maps velocity-type to vorticity-type and back."""
    a, b, c = v
    return SpectralVectorField((dy(c) - dz(b), dz(a) - dx(c), dx(b) - dy(a)))


def laplacian(v):
    if isinstance(v, SpectralVectorField):
        return SpectralVectorField(tuple(laplacian(c) for c in v))
    return _scalar(v, -v.grid.k2 * v.coeffs)


def _inverse_laplacian(s: SpectralScalarField) -> SpectralScalarField:
    k2 = s.grid.k2
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(k2 > 0, -s.coeffs / np.where(k2 > 0, k2, 1.0), 0.0)
    return _scalar(s, out)


def leray_project(v: SpectralVectorField) -> SpectralVectorField:
    """Orthogonal projection onto divergence-free fields of the same parity type.

    Per mode, v - grad(phi) with lap(phi) = div(v); phi is EVEN (Neumann) for
    velocity-type input, so the projected field keeps v_n = 0 on the walls.
    """
    phi = _inverse_laplacian(divergence(v))
    return v - gradient(phi)


def pressure(u: SpectralVectorField, H: SpectralVectorField, policy: DealiasPolicy = DEFAULT_POLICY):
    """Diagnostic pressure: grad p removes the gradient part of (H.grad)H - (u.grad)u."""
    forcing = advect(H, H, policy) - advect(u, u, policy)
    return _inverse_laplacian(divergence(forcing))


def _product_parity(u: SpectralVectorField, grad_parities) -> Parity:
    terms = {pu * pg for pu, pg in zip(u.parities, grad_parities)}
    if len(terms) != 1:
        raise ParityError(
            "advection term mixes z-parities; "
            f"u parities {[p.value for p in u.parities]} with gradient {[p.value for p in grad_parities]}"
        )
    return terms.pop()


def advect(
    u: SpectralVectorField,
    v: SpectralVectorField,
    policy: DealiasPolicy = DEFAULT_POLICY,
) -> SpectralVectorField:
    """(u . grad) v, formed pointwise and truncated by ``policy``."""
    g = u.grid
    if v.grid != g:
        raise ValueError("fields live on different grids")
    up = [to_physical(c) for c in u]
    mask = dealias_mask(g, policy) if (policy.x or policy.y or policy.z) else None
    out = []
    for vi in v:
        grads = (dx(vi), dy(vi), dz(vi))
        parity = _product_parity(u, [d.parity for d in grads])
        prod = up[0] * to_physical(grads[0])
        prod += up[1] * to_physical(grads[1])
        prod += up[2] * to_physical(grads[2])
        comp = to_spectral(prod, parity, g)
        if mask is not None:
            kept = comp.coeffs * mask
            if policy.warn_fraction is not None:
                _check_truncation(comp, kept, policy.warn_fraction)
            comp = _scalar(comp, kept)
        out.append(comp)
    return SpectralVectorField(tuple(out))


def _check_truncation(full: SpectralScalarField, kept: np.ndarray, limit: float):
    g = full.grid
    w = g.xy_weight * g.z_weight(full.parity)
    total = np.sum(w * np.abs(full.coeffs) ** 2)
    if total == 0:
        return
    lost = 1.0 - np.sum(w * np.abs(kept) ** 2) / total
    if lost > limit:
        warnings.warn(
            f"dealiasing removed a fraction {lost:.2e} of a product's energy",
            ResolutionWarning,
            stacklevel=3,
        )


def curl_commutator(u, v, policy: DealiasPolicy = DEFAULT_POLICY) -> SpectralVectorField:
    """F(Du, Dv) = curl((u.grad) v) - (u.grad)(curl v)."""
    return curl(advect(u, v, policy)) - advect(u, curl(v), policy)


def wall_alternation_residual(u, v, j: int, policy: DealiasPolicy = DEFAULT_POLICY) -> float:
    """Wall residual of d_n^j (u.grad)v: normal part for even j, tangential for odd j."""
    w = _dz_vector(advect(u, v, policy), j)
    comps = (2,) if j % 2 == 0 else (0, 1)
    return max(boundary_trace(w, c, face, 0).max_abs() for c in comps for face in (0, 1))
