import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import basis_sum
from slipmhd.fields import (
    VELOCITY,
    Parity,
    ParityError,
    SpectralScalarField,
    SpectralVectorField,
    boundary_trace,
    divergence_coeff_max,
    from_function,
    inner,
    make_grid,
    random_field,
    sobolev_norm,
    to_physical,
    vector_to_physical,
)
from slipmhd.operators import (
    NO_DEALIAS,
    DealiasPolicy,
    ResolutionWarning,
    advect,
    curl,
    curl_commutator,
    dealias_mask,
    divergence,
    gradient,
    laplacian,
    leray_project,
    pressure,
    wall_alternation_residual,
)


def vec(grid, funcs, parities=VELOCITY):
    return SpectralVectorField(tuple(from_function(grid, f, p) for f, p in zip(funcs, parities)))


def zero(x, y, z):
    return 0 * x


def shear(x, y, z):
    return np.cos(np.pi * z) + 0 * x


class TestCurlDivergence:
    def test_curl_of_shear(self, grid8):
        w = curl(vec(grid8, (shear, zero, zero)))
        assert w.kind == "vorticity"
        X, Y, Z = grid8.mesh()
        phys = vector_to_physical(w)
        assert np.max(np.abs(phys[1] + np.pi * np.sin(np.pi * Z))) < 1e-12
        assert np.max(np.abs(phys[0])) < 1e-12 and np.max(np.abs(phys[2])) < 1e-12

    def test_curl_of_constant(self, grid8):
        c = vec(grid8, (lambda x, y, z: 2.0 + 0 * x, lambda x, y, z: -1.0 + 0 * x, zero))
        assert curl(c).max_abs() < 1e-14

    def test_parity_closure(self, grid16):
        u = random_field(grid16, seed=1)
        assert curl(u).kind == "vorticity"
        assert curl(curl(u)).kind == "velocity"

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_div_curl_and_curl_grad(self, seed):
        g = make_grid(8, 8, 8)
        u = random_field(g, seed=seed, kmax=2)
        w = random_field(g, "vorticity", seed=seed + 1, kmax=2)
        assert divergence(curl(u)).max_abs() < 1e-12 * max(1, u.max_abs())
        assert divergence(curl(w)).max_abs() < 1e-12 * max(1, w.max_abs())
        s = SpectralScalarField(g, Parity.EVEN, u[0].coeffs)
        assert curl(gradient(s)).max_abs() < 1e-12 * max(1, s.max_abs())

    def test_divergence_examples(self, grid8):
        X, Y, Z = grid8.mesh()
        d = divergence(vec(grid8, (lambda x, y, z: np.sin(2 * np.pi * x) + 0 * z, zero, zero)))
        assert np.max(np.abs(to_physical(d) - 2 * np.pi * np.cos(2 * np.pi * X))) < 1e-12
        d = divergence(vec(grid8, (zero, zero, lambda x, y, z: np.sin(np.pi * z) + 0 * x)))
        assert d.parity is Parity.EVEN
        assert np.max(np.abs(to_physical(d) - np.pi * np.cos(np.pi * Z))) < 1e-12

    def test_divergence_of_vorticity_type_is_odd(self, grid8):
        w = random_field(grid8, "vorticity", seed=3, kmax=2)
        assert divergence(w).parity is Parity.ODD


class TestLaplacian:
    def test_eigenfunctions(self, grid8):
        f = from_function(grid8, shear, Parity.EVEN)
        lap = laplacian(f)
        assert np.max(np.abs(lap.coeffs + np.pi**2 * f.coeffs)) < 1e-12
        g = from_function(grid8, lambda x, y, z: np.sin(2 * np.pi * x) * np.sin(np.pi * z) + 0 * y, Parity.ODD)
        assert np.max(np.abs(laplacian(g).coeffs + 5 * np.pi**2 * g.coeffs)) < 1e-11

    def test_matches_finite_differences(self, grid8):
        u = random_field(grid8, seed=8, kmax=2)
        rng = np.random.default_rng(1)
        x, y, z = rng.uniform(0.1, 0.9, size=(3, 10))
        h = 1e-3
        for c in range(3):
            f = lambda a, b, cc: basis_sum(u[c], a, b, cc)
            fd = -6 * f(x, y, z)
            for d in np.eye(3):
                fd += f(x + h * d[0], y + h * d[1], z + h * d[2]) + f(x - h * d[0], y - h * d[1], z - h * d[2])
            fd /= h * h
            exact = basis_sum(laplacian(u)[c], x, y, z)
            assert np.max(np.abs(fd - exact)) < 1e-4 * np.max(np.abs(exact))


class TestLeray:
    def test_fixed_point_and_idempotent(self, grid16):
        u = random_field(grid16, seed=5)
        assert np.max(np.abs(leray_project(u).stacked() - u.stacked())) < 1e-12
        raw = SpectralVectorField.from_stacked(grid16, VELOCITY, u.stacked() + curl(curl(u)).stacked() * 0.1)
        p1 = leray_project(raw + gradient(SpectralScalarField(grid16, Parity.EVEN, u[0].coeffs)))
        p2 = leray_project(p1)
        assert np.max(np.abs(p1.stacked() - p2.stacked())) < 1e-12 * p1.max_abs()
        assert divergence_coeff_max(p1) < 1e-12 * p1.max_abs()

    def test_gradient_kernel(self, grid8):
        s = from_function(grid8, lambda x, y, z: np.sin(2 * np.pi * x) * np.cos(np.pi * z) + 0 * y, Parity.EVEN)
        assert leray_project(gradient(s)).max_abs() < 1e-12

    def test_matches_per_mode_projection(self, grid8):
        v = vec(grid8, (lambda x, y, z: np.sin(2 * np.pi * x) + 0 * z, zero, zero))
        v = v + vec(grid8, (zero, lambda x, y, z: np.cos(2 * np.pi * y) * np.cos(np.pi * z) + 0 * x,
                            lambda x, y, z: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * z) + 0 * y))
        p = leray_project(v)
        assert divergence_coeff_max(p) < 1e-12
        # oracle: orthogonal projection of each mode's coefficient vector onto
        # the null space of its divergence symbol (i kx, i ky, kz)
        g = grid8
        out = np.zeros((3, *g.spectral_shape), complex)
        c = v.stacked()
        kx, ky, kz = (np.broadcast_to(k, g.spectral_shape) for k in (g.kx, g.ky, g.kz))
        for idx in np.ndindex(g.spectral_shape):
            sym = np.array([1j * kx[idx], 1j * ky[idx], kz[idx]])
            a = c[(slice(None),) + idx]
            n2 = np.vdot(sym, sym).real
            out[(slice(None),) + idx] = a if n2 == 0 else a - np.conj(sym) * (sym @ a) / n2
        ref = SpectralVectorField.from_stacked(g, VELOCITY, out)
        assert np.max(np.abs(ref.stacked() - p.stacked())) < 1e-12
        assert abs(sobolev_norm(ref, 1) - sobolev_norm(p, 1)) < 1e-10

    def test_keeps_walls_impermeable(self, grid16):
        raw = vec(grid16, (lambda x, y, z: np.cos(2 * np.pi * x) * np.cos(np.pi * z) + 0 * y, zero, zero))
        p = leray_project(raw)
        assert max(boundary_trace(p, 2, f, 0).max_abs() for f in (0, 1)) == 0.0


class TestAdvect:
    def test_unidirectional_shear(self, grid8):
        u = vec(grid8, (shear, zero, zero))
        assert advect(u, u).max_abs() < 1e-13

    def test_matches_finite_difference_oracle(self, grid8):
        u = random_field(grid8, seed=2, kmax=2)
        v = random_field(grid8, seed=3, kmax=2)
        got = vector_to_physical(advect(u, v, NO_DEALIAS))
        X, Y, Z = grid8.mesh()
        x, y, z = X.ravel(), Y.ravel(), Z.ravel()
        h = 1e-5
        for i in range(3):
            acc = 0.0
            for j, d in enumerate(np.eye(3)):
                plus = basis_sum(v[i], x + h * d[0], y + h * d[1], z + h * d[2])
                minus = basis_sum(v[i], x - h * d[0], y - h * d[1], z - h * d[2])
                acc = acc + basis_sum(u[j], x, y, z) * (plus - minus) / (2 * h)
            assert np.max(np.abs(got[i].ravel() - acc)) < 1e-6

    def test_parity_closure(self, grid16):
        u = random_field(grid16, seed=1, kmax=2)
        v = random_field(grid16, seed=2, kmax=2)
        assert advect(u, v).kind == "velocity"
        assert advect(u, curl(v)).kind == "vorticity"

    def test_output_normal_for_velocity_and_vorticity(self, grid16):
        # u in V^{-1}, curl v in V^0: (u . grad) curl v is normal to the walls
        u = random_field(grid16, seed=1, kmax=2)
        w = curl(random_field(grid16, seed=2, kmax=2))
        out = advect(u, w)
        assert max(boundary_trace(out, c, f, 0).max_abs() for c in (0, 1) for f in (0, 1)) < 1e-10

    def test_velocity_pair_has_zero_normal_trace(self, grid16):
        u = random_field(grid16, seed=1, kmax=2)
        v = random_field(grid16, seed=2, kmax=2)
        out = advect(u, v)
        assert max(boundary_trace(out, 2, f, 0).max_abs() for f in (0, 1)) < 1e-10
        # the tangential part does not vanish: velocity pairs are not covered
        assert max(boundary_trace(out, c, f, 0).max_abs() for c in (0, 1) for f in (0, 1)) > 1e-2

    def test_mixed_parity_rejected(self, grid8):
        u = random_field(grid8, seed=1, kmax=2)
        bad = SpectralVectorField((u[0], u[2], u[2]))
        with pytest.raises(ParityError):
            advect(bad, u)

    def test_resolution_warning(self, grid8):
        u = random_field(grid8, seed=1, kmax=2)
        with pytest.warns(ResolutionWarning):
            advect(u, curl(curl(u)))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            advect(u, u, DealiasPolicy(warn_fraction=None))

    def test_dealias_mask(self):
        g = make_grid(12, 12, 12)
        m = dealias_mask(g)
        assert m[3, 3, 7] and not m[4, 0, 0] and not m[0, 4, 0] and not m[0, 0, 8]
        assert dealias_mask(g, NO_DEALIAS).all()

    def test_energy_skew_symmetry(self, grid16):
        u = random_field(grid16, seed=4, kmax=2)
        v = random_field(grid16, seed=5, kmax=2)
        val = inner(advect(u, v), v)
        assert abs(val) < 1e-10 * sobolev_norm(u, 0) * sobolev_norm(v, 0) ** 2

    def test_coupling_cancellation_quadrature(self, grid8):
        H = random_field(grid8, seed=6, kmax=1)
        a = random_field(grid8, seed=7, kmax=1)
        b = random_field(grid8, seed=8, kmax=1)
        # quadrature oracle on Gauss nodes in z, periodic trapezoid in x, y
        zq, wq = np.polynomial.legendre.leggauss(24)
        zq, wq = (zq + 1) / 2, wq / 2
        x = np.arange(8) / 8
        X, Y, Z = np.meshgrid(x, x, zq, indexing="ij")

        def adv_dot(h, f, g):
            total = np.zeros(X.shape)
            for i in range(3):
                grad = [basis_sum(d, X, Y, Z).reshape(X.shape) for d in gradient(f[i])]
                total += sum(basis_sum(h[j], X, Y, Z).reshape(X.shape) * grad[j] for j in range(3)) * \
                    basis_sum(g[i], X, Y, Z).reshape(X.shape)
            return np.sum(np.mean(total, axis=(0, 1)) * wq)

        q1, q2 = adv_dot(H, a, b), adv_dot(H, b, a)
        assert abs(q1 + q2) < 1e-10
        assert abs(q1 - inner(advect(H, a), b)) < 1e-12


class TestCommutator:
    def test_shear_pair(self, grid8):
        u = vec(grid8, (shear, zero, zero))
        assert curl_commutator(u, u).max_abs() < 1e-12

    def test_definition_two_ways(self, grid16):
        u = random_field(grid16, seed=1, kmax=2)
        v = random_field(grid16, seed=2, kmax=2)
        f = curl_commutator(u, v)
        assert f.kind == "vorticity"
        # expanded form: curl((u.grad)v) - (u.grad)curl v = sum_j grad(u_j) x d_j v
        uv = vector_to_physical(u)
        vv = vector_to_physical(v)
        du = [vector_to_physical(gradient(c)) for c in u]  # du[j][i] = d_i u_j
        dv = [vector_to_physical(gradient(c)) for c in v]
        expanded = np.zeros_like(uv)
        for j in range(3):
            gu = np.array([du[j][i] for i in range(3)])
            djv = np.array([dv[i][j] for i in range(3)])
            expanded += np.cross(gu, djv, axis=0)
        got = vector_to_physical(curl_commutator(u, v, NO_DEALIAS))
        assert np.max(np.abs(got - expanded)) < 1e-10 * np.max(np.abs(expanded))
        del uv, vv

    @pytest.mark.parametrize("j", [0, 2])
    def test_tangential_even_traces_vanish(self, grid16, j):
        u = random_field(grid16, seed=3, kmax=2)
        v = random_field(grid16, seed=4, kmax=2)
        f = curl_commutator(u, v)
        assert max(boundary_trace(f, c, face, j).max_abs() for c in (0, 1) for face in (0, 1)) < 1e-10


class TestWallAlternation:
    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_random_pairs(self, grid16, j):
        u = random_field(grid16, seed=10, kmax=2)
        v = random_field(grid16, seed=11, kmax=2)
        assert wall_alternation_residual(u, v, j) < 1e-10

    @pytest.mark.parametrize("j", [0, 1, 2, 3])
    def test_against_collocation_derivatives(self, j):
        # Independent evaluation: sum the basis of the advected field's z-derivative at the walls.
        g = make_grid(8, 8, 12)
        u = random_field(g, seed=1, kmax=2)
        v = random_field(g, seed=2, kmax=2)
        out = advect(u, v, DealiasPolicy(warn_fraction=None))
        comps = (2,) if j % 2 == 0 else (0, 1)
        x = np.arange(8) / 8
        X, Y = np.meshgrid(x, x, indexing="ij")
        for face in (0, 1):
            for c in comps:
                vals = basis_sum(out[c], X, Y, np.full(X.shape, float(face)), j)
                assert np.max(np.abs(vals)) < 1e-9

    def test_wrong_parity_control(self, grid16):
        u = random_field(grid16, seed=10, kmax=2)
        v = random_field(grid16, seed=11, kmax=2)
        bad = SpectralVectorField((v[0], v[1], SpectralScalarField(grid16, Parity.EVEN, v[0].coeffs)))
        assert wall_alternation_residual(u, bad, 0) > 1e-2


def test_pressure_removes_gradient_part(grid16):
    u = random_field(grid16, seed=1, kmax=2)
    H = random_field(grid16, seed=2, kmax=2)
    p = pressure(u, H)
    forcing = advect(H, H) - advect(u, u)
    rest = forcing - gradient(p)
    assert divergence(rest).max_abs() < 1e-10 * forcing.max_abs()
