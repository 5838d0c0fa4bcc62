"""Parity-typed spectral fields on the slab Q = [0,1]^2_per x (0,1).

A scalar field is stored as

    f(x, y, z) = sum_{kx, ky, m} c[kx, ky, m] exp(2 pi i (kx x + ky y)) B_m(z)

with B_m(z) = cos(m pi z) for an EVEN field and sin(m pi z) for an ODD one.
The (kx, ky) directions use the real-FFT half spectrum, array shape
``(nx, ny // 2 + 1, nz + 1)``; slot m = 0 (and m = nz) of an ODD field is
always zero.  Physical samples live on ``nx x ny x (nz + 1)`` points with
z_j = j / nz, the nodes of the type-I cosine/sine transforms (the even/odd
mirror extension of the data onto a periodic grid of 2 nz points).

Velocity-type vector fields have EVEN tangential and ODD normal components;
vorticity-type fields the opposite.  Under that typing every trace required
to vanish by the V^k conditions is a sum of sines evaluated at z = 0 or 1,
i.e. an exact zero.
"""

from __future__ import annotations

import enum
import itertools
import warnings
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft as sfft

__all__ = [
    "Grid",
    "Parity",
    "VELOCITY",
    "VORTICITY",
    "SpectralScalarField",
    "SpectralVectorField",
    "BoundaryTrace",
    "ParityError",
    "SobolevWarning",
    "make_grid",
    "to_spectral",
    "to_physical",
    "vector_to_spectral",
    "vector_to_physical",
    "from_function",
    "zeros",
    "evaluate_points",
    "inner",
    "sobolev_norm",
    "boundary_trace",
    "membership_report",
    "vk_membership_residual",
    "random_field",
    "S_MAX",
]

S_MAX = 4
EXACT_ZERO_TOL = 1e-12


class ParityError(ValueError):
    """Raised when fields of incompatible z-parity are combined."""


class SobolevWarning(UserWarning):
    pass


class Parity(enum.Enum):
    EVEN = "even"  # cosine series in z
    ODD = "odd"  # sine series in z

    def flip(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN

    def __mul__(self, other: "Parity") -> "Parity":
        return Parity.EVEN if self is other else Parity.ODD


VELOCITY = (Parity.EVEN, Parity.EVEN, Parity.ODD)
VORTICITY = (Parity.ODD, Parity.ODD, Parity.EVEN)


@dataclass(frozen=True)
class Grid:
    """Mode counts for the slab; the box has unit length in every direction."""

    nx: int
    ny: int
    nz: int

    @property
    def spectral_shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny // 2 + 1, self.nz + 1)

    @property
    def physical_shape(self) -> tuple[int, int, int]:
        return (self.nx, self.ny, self.nz + 1)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.nx) / self.nx

    @property
    def y(self) -> np.ndarray:
        return np.arange(self.ny) / self.ny

    @property
    def z(self) -> np.ndarray:
        return np.arange(self.nz + 1) / self.nz

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return np.meshgrid(self.x, self.y, self.z, indexing="ij")

    @cached_property
    def kx_int(self) -> np.ndarray:
        return np.fft.fftfreq(self.nx, 1.0 / self.nx)[:, None, None]

    @cached_property
    def ky_int(self) -> np.ndarray:
        return np.fft.rfftfreq(self.ny, 1.0 / self.ny)[None, :, None]

    @cached_property
    def m_int(self) -> np.ndarray:
        return np.arange(self.nz + 1, dtype=float)[None, None, :]

    # Derivative wavenumbers.  Nyquist slots are zeroed so that first
    # derivatives stay real and div(grad) coincides with the Laplacian.
    @cached_property
    def kx(self) -> np.ndarray:
        k = 2 * np.pi * self.kx_int.copy()
        k[self.nx // 2] = 0.0
        return k

    @cached_property
    def ky(self) -> np.ndarray:
        k = 2 * np.pi * self.ky_int.copy()
        k[:, self.ny // 2] = 0.0
        return k

    @cached_property
    def kz(self) -> np.ndarray:
        k = np.pi * self.m_int.copy()
        k[..., self.nz] = 0.0
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2 + self.kz**2

    @cached_property
    def xy_weight(self) -> np.ndarray:
        """Multiplicity of each stored (kx, ky) slot in the full spectrum."""
        w = np.full((1, self.ny // 2 + 1, 1), 2.0)
        w[:, 0] = 1.0
        if self.ny % 2 == 0:
            w[:, self.ny // 2] = 1.0
        return w

    def z_weight(self, parity: Parity) -> np.ndarray:
        """Integral over (0,1) of B_m(z)**2."""
        w = np.full((1, 1, self.nz + 1), 0.5)
        if parity is Parity.EVEN:
            w[..., 0] = 1.0
        else:
            w[..., 0] = 0.0
            w[..., self.nz] = 0.0
        return w


def make_grid(nx: int, ny: int, nz: int) -> Grid:
    """Validated grid constructor."""
    for name, n in (("nx", nx), ("ny", ny)):
        if int(n) != n or n < 4 or n % 2:
            raise ValueError(f"{name} must be an even integer >= 4, got {n}")
    if int(nz) != nz or nz < 2:
        raise ValueError(f"nz must be an integer >= 2, got {nz}")
    return Grid(int(nx), int(ny), int(nz))


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpectralScalarField:
    grid: Grid
    parity: Parity
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.spectral_shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} does not match grid "
                f"{self.grid.spectral_shape}"
            )
        if self.coeffs.flags.writeable:
            c = np.array(self.coeffs, dtype=complex)
            if self.parity is Parity.ODD:
                c[..., 0] = 0.0
                c[..., -1] = 0.0
            object.__setattr__(self, "coeffs", _freeze(c))

    def _check(self, other: "SpectralScalarField"):
        if other.grid != self.grid:
            raise ValueError("fields live on different grids")
        if other.parity is not self.parity:
            raise ParityError(
                f"cannot combine {self.parity.value} and {other.parity.value} fields"
            )

    def __add__(self, other):
        self._check(other)
        return SpectralScalarField(self.grid, self.parity, self.coeffs + other.coeffs)

    def __sub__(self, other):
        self._check(other)
        return SpectralScalarField(self.grid, self.parity, self.coeffs - other.coeffs)

    def __neg__(self):
        return SpectralScalarField(self.grid, self.parity, -self.coeffs)

    def __mul__(self, a: float):
        return SpectralScalarField(self.grid, self.parity, a * self.coeffs)

    __rmul__ = __mul__

    def coefficient(self, kx: int, ky: int, m: int) -> complex:
        """Coefficient of exp(2 pi i (kx x + ky y)) B_m(z), any sign of ky."""
        if ky < 0:
            return complex(np.conj(self.coeffs[(-kx) % self.grid.nx, -ky, m]))
        return complex(self.coeffs[kx % self.grid.nx, ky, m])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs), initial=0.0))


@dataclass(frozen=True, eq=False)
class SpectralVectorField:
    components: tuple

    def __post_init__(self):
        comps = tuple(self.components)
        if len(comps) != 3:
            raise ValueError("a vector field has three components")
        if len({c.grid for c in comps}) != 1:
            raise ValueError("vector components must share one grid")
        object.__setattr__(self, "components", comps)

    @property
    def grid(self) -> Grid:
        return self.components[0].grid

    @property
    def parities(self) -> tuple:
        return tuple(c.parity for c in self.components)

    @property
    def kind(self) -> str:
        if self.parities == VELOCITY:
            return "velocity"
        if self.parities == VORTICITY:
            return "vorticity"
        return "custom"

    def __getitem__(self, i: int) -> SpectralScalarField:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    def __add__(self, other):
        return SpectralVectorField(tuple(a + b for a, b in zip(self, other)))

    def __sub__(self, other):
        return SpectralVectorField(tuple(a - b for a, b in zip(self, other)))

    def __neg__(self):
        return SpectralVectorField(tuple(-a for a in self))

    def __mul__(self, a: float):
        return SpectralVectorField(tuple(a * c for c in self))

    __rmul__ = __mul__

    def max_abs(self) -> float:
        return max(c.max_abs() for c in self)

    def stacked(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self])

    @classmethod
    def from_stacked(cls, grid: Grid, parities, coeffs: np.ndarray):
        return cls(tuple(SpectralScalarField(grid, p, c) for p, c in zip(parities, coeffs)))


def zeros(grid: Grid, parities=VELOCITY) -> SpectralVectorField:
    return SpectralVectorField(
        tuple(SpectralScalarField(grid, p, np.zeros(grid.spectral_shape, complex)) for p in parities)
    )


# -- transforms --------------------------------------------------------------


def _z_forward(samples: np.ndarray, parity: Parity, nz: int) -> np.ndarray:
    if parity is Parity.EVEN:
        c = sfft.dct(samples, type=1, axis=-1, norm="forward")
        c[..., 1:nz] *= 2.0
        return c
    c = np.zeros_like(samples)
    c[..., 1:nz] = 2.0 * sfft.dst(samples[..., 1:nz], type=1, axis=-1, norm="forward")
    return c


def _z_backward(coeffs: np.ndarray, parity: Parity, nz: int) -> np.ndarray:
    if parity is Parity.EVEN:
        c = coeffs.copy()
        c[..., 1:nz] *= 0.5
        return sfft.idct(c, type=1, axis=-1, norm="forward")
    out = np.zeros_like(coeffs)
    out[..., 1:nz] = sfft.idst(0.5 * coeffs[..., 1:nz], type=1, axis=-1, norm="forward")
    return out


def to_spectral(samples: np.ndarray, parity: Parity, grid: Grid) -> SpectralScalarField:
    """Transform physical samples on the collocation grid to coefficients.

    ODD samples must vanish on both walls; anything else is not a sine series.
    """
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.physical_shape:
        raise ValueError(f"expected samples of shape {grid.physical_shape}, got {samples.shape}")
    if parity is Parity.ODD:
        wall = max(np.max(np.abs(samples[..., 0])), np.max(np.abs(samples[..., -1])))
        scale = max(1.0, float(np.max(np.abs(samples))))
        if wall > EXACT_ZERO_TOL * scale:
            raise ParityError(f"odd samples do not vanish on the walls (max {wall:.3e})")
    zc = _z_forward(samples, parity, grid.nz)
    c = sfft.rfft2(zc, axes=(0, 1), norm="forward")
    return SpectralScalarField(grid, parity, c)


def to_physical(field: SpectralScalarField) -> np.ndarray:
    g = field.grid
    zc = sfft.irfft2(field.coeffs, s=(g.nx, g.ny), axes=(0, 1), norm="forward")
    return _z_backward(zc, field.parity, g.nz)


def vector_to_spectral(samples: np.ndarray, parities, grid: Grid) -> SpectralVectorField:
    return SpectralVectorField(tuple(to_spectral(s, p, grid) for s, p in zip(samples, parities)))


def vector_to_physical(field: SpectralVectorField) -> np.ndarray:
    return np.stack([to_physical(c) for c in field])


def from_function(grid: Grid, func, parity: Parity) -> SpectralScalarField:
    """Sample ``func(x, y, z)`` on the collocation grid."""
    X, Y, Z = grid.mesh()
    return to_spectral(np.broadcast_to(func(X, Y, Z), grid.physical_shape), parity, grid)


def evaluate_points(field: SpectralScalarField, x, y, z) -> np.ndarray:
    """Brute-force synthesis of the series at arbitrary points.

    O(points x modes); meant for small grids and as an independent check
    of the FFT path.
    """
    g = field.grid
    x, y, z = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (x, y, z)))
    kx = np.fft.fftfreq(g.nx, 1.0 / g.nx)
    ky = np.fft.rfftfreq(g.ny, 1.0 / g.ny)
    m = np.arange(g.nz + 1)
    ex = np.exp(2j * np.pi * np.multiply.outer(x, kx))
    ey = np.exp(2j * np.pi * np.multiply.outer(y, ky)) * g.xy_weight[0, :, 0]
    basis = np.cos if field.parity is Parity.EVEN else np.sin
    bz = basis(np.pi * np.multiply.outer(z, m))
    # Off the grid, Nyquist content is ambiguous: exact only for band-limited fields.
    return np.einsum("...a,...b,...c,abc->...", ex, ey, bz, field.coeffs).real


# -- norms and traces -----------------------------------------------------------


def inner(a: SpectralVectorField, b: SpectralVectorField) -> float:
    """L2(Q) inner product of two vector fields, computed from coefficients."""
    g = a.grid
    total = 0.0
    for ca, cb in zip(a, b):
        if ca.parity is not cb.parity:
            continue  # cosines and sines of one index are orthogonal
        w = g.xy_weight * g.z_weight(ca.parity)
        total += float(np.sum(w * (ca.coeffs * np.conj(cb.coeffs)).real))
    return total


def _multi_index_weight(grid: Grid, s: int) -> np.ndarray:
    ax, ay, az = grid.kx**2, grid.ky**2, grid.kz**2
    w = np.zeros(grid.spectral_shape)
    for i, j, k in itertools.product(range(s + 1), repeat=3):
        if i + j + k <= s:
            w = w + ax**i * ay**j * az**k
    return w


def sobolev_norm(field, s: int, strict: bool = False) -> float:
    """H^s norm with all mixed derivatives of order <= s included."""
    if s < 0 or int(s) != s:
        raise ValueError("s must be a nonnegative integer")
    if s > S_MAX:
        msg = f"H^{s} exceeds the resolved order s_max={S_MAX}"
        if strict:
            raise ValueError(msg)
        warnings.warn(msg, SobolevWarning, stacklevel=2)
    comps = field.components if isinstance(field, SpectralVectorField) else (field,)
    g = comps[0].grid
    w = _multi_index_weight(g, s) * g.xy_weight
    total = 0.0
    for c in comps:
        total += float(np.sum(w * g.z_weight(c.parity) * np.abs(c.coeffs) ** 2))
    return float(np.sqrt(total))


@dataclass(frozen=True)
class BoundaryTrace:
    face: int  # 0 or 1, the wall z = face
    order: int
    values: np.ndarray

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values)))


def _z_derivative_factor(grid: Grid, parity: Parity, j: int) -> tuple[np.ndarray, Parity]:
    """Multiplier taking B_m coefficients to those of d^j/dz^j, and its parity."""
    kz = grid.kz
    fac = np.ones_like(kz)
    p = parity
    for _ in range(j):
        fac = fac * (-kz if p is Parity.EVEN else kz)
        p = p.flip()
    return fac, p


def boundary_trace(field, component: int | None, face: int, j: int) -> BoundaryTrace:
    """Samples of d^j/dz^j of one component on the wall z = face.

    ``field`` may be a vector (pick ``component``) or a scalar field.  The
    derivative is along +z; the outward normal derivative at z = 0 differs
    by (-1)^j, which is irrelevant for the vanishing tests.
    """
    if face not in (0, 1):
        raise ValueError("face must be 0 or 1")
    if j < 0:
        raise ValueError("derivative order must be >= 0")
    c = field[component] if isinstance(field, SpectralVectorField) else field
    g = c.grid
    if j > S_MAX and j > g.nz:
        raise ValueError("derivative order beyond grid resolution")
    fac, p = _z_derivative_factor(g, c.parity, j)
    if p is Parity.ODD:
        # sin(m pi z) at z in {0, 1}: the empty sum.
        return BoundaryTrace(face, j, np.zeros((g.nx, g.ny)))
    sign = (-1.0) ** np.arange(g.nz + 1) if face == 1 else np.ones(g.nz + 1)
    if j == 0:
        fac = np.ones_like(fac)  # keep the top cosine mode for plain evaluation
    face_coeffs = np.sum(c.coeffs * fac * sign, axis=-1)
    values = sfft.irfft2(face_coeffs, s=(g.nx, g.ny), norm="forward")
    return BoundaryTrace(face, j, values)


def divergence_coeff_max(field: SpectralVectorField) -> float:
    g = field.grid
    u, v, w = field
    if u.parity is not v.parity or w.parity is u.parity:
        # Terms of different parity never cancel; measure them separately.
        a = np.abs(1j * g.kx * u.coeffs + 1j * g.ky * v.coeffs)
        fac, _ = _z_derivative_factor(g, w.parity, 1)
        return float(max(np.max(a), np.max(np.abs(fac * w.coeffs))))
    fac, _ = _z_derivative_factor(g, w.parity, 1)
    d = 1j * g.kx * u.coeffs + 1j * g.ky * v.coeffs + fac * w.coeffs
    return float(np.max(np.abs(d)))


def _vk_trace_conditions(k: int) -> list[tuple[str, int]]:
    """(which components, derivative order) pairs whose wall traces vanish in V^k."""
    if k < -1:
        raise ValueError("V^k is defined for k >= -1")
    if k == -1:
        return [("normal", 0)]
    if k % 2 == 0:
        return [("tangential", 2 * j) for j in range(k // 2 + 1)]
    return [("normal", 0)] + [("tangential", 2 * j + 1) for j in range((k - 1) // 2 + 1)]


def membership_report(field: SpectralVectorField, k: int) -> dict[str, float]:
    """Largest violation of each condition defining V^k.

    Keys: ``divergence`` (max divergence coefficient) and one entry per
    trace condition, e.g. ``normal_d0`` or ``tangential_d3``.
    """
    report = {"divergence": divergence_coeff_max(field)}
    for which, j in _vk_trace_conditions(k):
        comps = (2,) if which == "normal" else (0, 1)
        worst = 0.0
        for face in (0, 1):
            for c in comps:
                worst = max(worst, boundary_trace(field, c, face, j).max_abs())
        report[f"{which}_d{j}"] = worst
    return report


def vk_membership_residual(field: SpectralVectorField, k: int) -> float:
    """Zero exactly when the field satisfies every V^k condition."""
    return max(membership_report(field, k).values())


# -- random sampler -----------------------------------------------------------------


def random_field(
    grid: Grid,
    parity_type: str = "velocity",
    decay_exponent: float = 4.0,
    seed: int = 0,
    kmax: int = 4,
    amplitude: float | None = 1.0,
) -> SpectralVectorField:
    """Random divergence-free parity field with algebraically decaying spectrum.

    Modes |kx|, |ky|, m <= kmax are drawn from a Gaussian with standard
    deviation (1 + kx^2 + ky^2 + m^2)^(-decay_exponent/2), independently of
    the grid, so the same seed gives the same function on every grid that
    resolves it.  ``amplitude`` rescales the L2 norm (None keeps the raw draw).
    """
    from .operators import dealias_mask, leray_project

    if decay_exponent <= 2:
        raise ValueError("decay_exponent must exceed 2")
    parities = {"velocity": VELOCITY, "vorticity": VORTICITY}[parity_type]
    keep = dealias_mask(grid)
    if kmax >= grid.nx / 3 or kmax >= grid.ny / 3 or kmax >= 2 * grid.nz / 3:
        raise ValueError(f"kmax={kmax} is outside the dealiased band of {grid}")

    rng = np.random.default_rng(seed)
    n = 2 * kmax + 1
    raw = rng.standard_normal((3, n, n, kmax + 1)) + 1j * rng.standard_normal((3, n, n, kmax + 1))
    kk = np.arange(-kmax, kmax + 1)
    mm = np.arange(kmax + 1)
    envelope = (1.0 + kk[:, None, None] ** 2 + kk[None, :, None] ** 2 + mm[None, None, :] ** 2) ** (
        -decay_exponent / 2
    )
    raw = raw * envelope
    raw = 0.5 * (raw + np.conj(raw[:, ::-1, ::-1, :]))  # Hermitian in (kx, ky)

    comps = []
    for c, p in enumerate(parities):
        coeffs = np.zeros(grid.spectral_shape, complex)
        block = raw[c][:, kmax:, :]  # ky >= 0
        coeffs[np.ix_(kk % grid.nx, np.arange(kmax + 1), mm)] = block
        comps.append(SpectralScalarField(grid, p, coeffs * keep))
    field = leray_project(SpectralVectorField(tuple(comps)))
    if amplitude is not None:
        norm = sobolev_norm(field, 0)
        if norm > 0:
            field = field * (amplitude / norm)
    return field
