import math

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy import integrate

from conftest import exact_profile
from slipmhd.corrector import (
    build_boundary_layer,
    build_profile,
    bundle_checks,
    expected_exponent,
    iterated_integral,
    layer_norm,
    measure_scaling,
    project_layer,
    scaling_csv,
    solve_bundle,
    solve_corrector_elliptic,
)
from slipmhd.fields import VORTICITY, SpectralVectorField, make_grid, random_field, vk_membership_residual
from slipmhd.harness import wall_data
from slipmhd.operators import curl, laplacian
from slipmhd.piecewise import PiecewisePolynomial


@pytest.fixture
def grid():
    return make_grid(8, 8, 16)


def constant_wall_data(n, a=(1.0, -0.5), b=(0.25, 2.0)):
    h = np.zeros((2, 2, n, n))
    for c in range(2):
        h[0, c] = a[c]
        h[1, c] = b[c]
    return h


class TestPiecewise:
    def test_integrate_and_differentiate(self):
        pp = PiecewisePolynomial((0.0, 0.3, 1.0), (Polynomial([1.0, 2.0]), Polynomial([0.0, 0.0, 1.0])))
        F = pp.integrate()
        for z in (0.1, 0.3, 0.7, 1.0):
            ref, _ = integrate.quad(pp, 0, z, points=[0.3])
            assert abs(F(np.array([z]))[0] - ref) < 1e-12
        assert np.allclose(F.derivative()(np.array([0.2, 0.8])), pp(np.array([0.2, 0.8])))

    def test_limit(self):
        pp = PiecewisePolynomial((0.0, 0.5, 1.0), (Polynomial([1.0]), Polynomial([2.0])))
        assert pp.limit(0.5, "left") == 1.0 and pp.limit(0.5, "right") == 2.0

    def test_bad_breaks(self):
        with pytest.raises(ValueError):
            PiecewisePolynomial((0.0, 0.0, 1.0), (Polynomial([1.0]), Polynomial([1.0])))


class TestProfile:
    @pytest.mark.parametrize("k", [1, 2, 3])
    def test_matches_exact_rational_solution(self, k):
        p = build_profile(k)
        exact = [float(c) for c in exact_profile(k)]
        assert np.allclose(p.poly_coeffs, exact, rtol=1e-10, atol=1e-9)

    @pytest.mark.parametrize("k", [1, 2])
    def test_constraints_exact(self, k):
        p = build_profile(k)
        assert max(p.constraint_residuals().values()) < 1e-12 * max(1, max(abs(c) for c in p.poly_coeffs))

    def test_k1_constraints_by_quadrature(self):
        p = build_profile(1)
        assert abs(p(0.0) - 1) < 1e-14
        assert p(1.0) == 0.0 and p(3.0) == 0.0
        for j in range(2):
            val, _ = integrate.quad(lambda t: float(p(t)) * (1 - t) ** j, 0, 1)
            assert abs(val) < 1e-12

    def test_moment_form_of_iterated_integrals(self):
        # int_0^1 F^j(phi) vanishes for j < 2k exactly when the weighted moments do
        p = build_profile(1)
        for j in range(2):
            Fj = iterated_integral(p, j + 1)
            assert abs(Fj.limit(1.0, "left")) < 1e-13

    def test_extra_moment(self):
        p = build_profile(1, extra_moments=1)
        exact = [float(c) for c in exact_profile(1, extra=1)]
        assert np.allclose(p.poly_coeffs, exact, rtol=1e-10, atol=1e-9)
        assert len(p.poly_coeffs) == 6

    def test_bad_order(self):
        with pytest.raises(ValueError):
            build_profile(0)

    def test_iterated_integral_of_constant(self):
        one = PiecewisePolynomial((0.0, 1.0), (Polynomial([1.0]),))
        F3 = iterated_integral(one, 3)
        z = np.linspace(0, 1, 7)
        assert np.allclose(F3(z), z**3 / 6, atol=1e-15)
        with pytest.raises(ValueError):
            iterated_integral(one, -1)


class TestConstruction:
    @pytest.mark.parametrize("k", [1, 2])
    def test_structure(self, grid, k):
        h = wall_data(8, seed=3)
        b = solve_bundle(build_boundary_layer(h, 1e-3, k, grid))
        c = bundle_checks(b)
        for key in ("div_psi", "div_chi", "chi_tau_interior", "chi3_interior_variation", "trace_2k_tangential",
                    "trace_2k_normal", "trace_lower_orders", "psi_wall_data", "div_zeta", "div_v", "v_membership"):
            assert c[key] < 1e-11, key
        assert c["elliptic_residual"] < 1e-8

    def test_interior_normal_offset_matches_prediction(self, grid):
        # chi_3 between the layers equals -eps^{k+1/2} * c * div_tau h(0), c the
        # 2k-th profile moment divided by (2k)!, independent of z
        k, eps = 1, 1e-3
        h = wall_data(8, seed=4)
        b = build_boundary_layer(h, eps, k, grid)
        p = build_profile(k)
        moment, _ = integrate.quad(lambda t: float(p(t)) * (1 - t) ** (2 * k), 0, 1)
        z_mid = np.array([0.3, 0.5, 0.7])
        chi3 = b.chi.evaluate(z_mid, (2,))[0]
        n = 8
        kx = np.fft.fftfreq(n, 1 / n) * 2 * np.pi
        hh = np.fft.fft2(h[0], axes=(-2, -1))
        div_h0 = np.real(np.fft.ifft2(1j * kx[:, None] * hh[0] + 1j * kx[None, :] * hh[1]))
        pred = -(eps ** (k + 0.5)) * moment / math.factorial(2 * k) * div_h0
        assert np.max(np.abs(chi3 - pred[:, :, None])) < 1e-12

    def test_extra_moment_profile_clears_interior(self, grid):
        h = wall_data(8, seed=4)
        prof = build_profile(1, extra_moments=1)
        b = build_boundary_layer(h, 1e-3, 1, grid, prof)
        assert bundle_checks(b)["chi3_interior_offset"] < 1e-14

    def test_chi_values_against_quadrature(self, grid):
        # z-only data: chi_tau = F^2 of the two layer profiles
        k, eps = 1, 4e-3
        h = constant_wall_data(8)
        b = build_boundary_layer(h, eps, k, grid)
        p = build_profile(k)
        d = math.sqrt(eps)

        def phi_eps(s):
            return float(p(s / d))

        for z in (0.01, 0.05, 0.5, 0.97, 0.999):
            a0, _ = integrate.quad(lambda s: (z - s) * phi_eps(s), 0, z, points=[d] if d < z else None)
            b0, _ = integrate.quad(lambda s: (z - s) * phi_eps(1 - s), 0, z, points=[1 - d] if 1 - d < z else None)
            got = b.chi.evaluate(np.array([z]), (0,))[0, 0, 0, 0]
            assert abs(got - (1.0 * a0 + 0.25 * b0)) < 1e-12

    @pytest.mark.parametrize("eps", [0.0, 0.25, 0.5, -1e-3])
    def test_rejects_overlapping_layers(self, grid, eps):
        with pytest.raises(ValueError):
            build_boundary_layer(constant_wall_data(8), eps, 1, grid)

    def test_rejects_wrong_shape(self, grid):
        with pytest.raises(ValueError):
            build_boundary_layer(np.zeros((2, 2, 4, 4)), 1e-3, 1, grid)


class TestElliptic:
    def test_solves_poisson(self, grid):
        chi = curl(random_field(grid, seed=3, kmax=2))
        zeta, v = solve_corrector_elliptic(chi)
        assert zeta.kind == "vorticity" and v.kind == "velocity"
        assert np.max(np.abs((laplacian(zeta) + chi).stacked())) < 1e-12 * chi.max_abs()
        assert vk_membership_residual(v, 1) < 1e-12

    def test_compatibility(self, grid):
        c = np.zeros((3, *grid.spectral_shape), complex)
        c[2, 0, 0, 0] = 1.0
        chi = SpectralVectorField.from_stacked(grid, VORTICITY, c)
        with pytest.raises(ValueError, match="compatibility"):
            solve_corrector_elliptic(chi)

    def test_requires_vorticity_type(self, grid):
        with pytest.raises(ValueError):
            solve_corrector_elliptic(random_field(grid, seed=1, kmax=2))

    def test_projection_converges(self, grid):
        b = build_boundary_layer(wall_data(8, seed=2), 1e-2, 1, grid)
        errs = [solve_bundle(b, nz).solve_info["projection_error"]
                for nz in (32, 64, 128)]
        assert errs[0] > errs[1] > errs[2]
        proj = project_layer(b.chi, 128)
        assert proj.kind == "vorticity"


class TestScaling:
    def test_layer_norm_against_quadrature(self, grid):
        k, eps = 1, 1e-3
        h = constant_wall_data(8)
        b = build_boundary_layer(h, eps, k, grid)
        d = b.chi.dz(3)
        br = [math.sqrt(eps), 1 - math.sqrt(eps)]

        def mag(z):
            v = d.evaluate(np.array([z]), (0, 1))[:, 0, 0, 0]
            return (z * (1 - z)) ** 1 * np.sqrt(np.sum(v**2))

        ref, _ = integrate.quad(lambda z: mag(z) ** 2, 0, 1, points=br, limit=200, epsabs=1e-14)
        assert abs(layer_norm(b.chi, 3, "tangential", 2, 1) - math.sqrt(ref)) < 1e-10 * math.sqrt(ref)

    @pytest.mark.parametrize(
        "component,p,i",
        [("tangential", 2, 1), ("tangential", 2, 2), ("normal", 2, 0), ("normal", 2, 1), ("normal", 1, 0),
         ("full", 1, 0), ("full", 2, 0)],
    )
    def test_exponents(self, component, p, i):
        g = make_grid(8, 8, 8)
        res = measure_scaling(wall_data(8, seed=1), 1, p, i, None, np.geomspace(1e-4, 1e-2, 5), g, component)
        assert abs(res.slope - expected_exponent(component, p, i)) < 0.05
        assert res.fit.r2 > 0.99

    def test_expected_exponents(self):
        assert expected_exponent("tangential", 2, 1) == 0.25
        assert expected_exponent("normal", 1, 0) == 1.0
        assert expected_exponent("full", 2, 0) == 0.25
        with pytest.raises(ValueError):
            expected_exponent("other", 1, 0)

    def test_sweep_preconditions(self, grid):
        h = wall_data(8, seed=1)
        with pytest.raises(ValueError):
            measure_scaling(h, 1, 2, 1, None, [1e-4, 1e-2], grid)
        with pytest.raises(ValueError):
            measure_scaling(h, 1, 2, 1, None, [1e-4, 2e-4, 1e-3, 5e-3, 1e-2], grid)

    def test_csv(self, grid):
        res = measure_scaling(wall_data(8, seed=1), 1, 2, 1, None, np.geomspace(1e-4, 1e-2, 5), grid)
        text = scaling_csv([res])
        lines = text.strip().splitlines()
        assert lines[0] == "epsilon,p,i,order,component,norm" and len(lines) == 6
