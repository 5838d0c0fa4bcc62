import math

import numpy as np
import pytest

from slipmhd.config import parse_config
from slipmhd.fitting import fit_rate
from slipmhd.harness import (
    convergence_study,
    corrector_scaling_study,
    h2kp1_convergence_probe,
    initial_state,
    run,
    verify_spaces,
)
from slipmhd.fields import vk_membership_residual
from slipmhd.snapshot import load_snapshot

SMALL = """
grid.nx = 8
grid.ny = 8
grid.nz = 8
time.dt = 5e-3
time.T = 0.05
output.record_interval = 1e-2
init.kmax = 2
init.amplitude = 0.5
study.nu = geom(1e-2, 1e-3, 4)
"""

SHEAR = """
grid.nx = 8
grid.ny = 8
grid.nz = 8
time.dt = 5e-3
time.T = 0.25
init.kind = shear
init.amplitude = 1.0
study.norms = 1, 2, 3
"""


class TestFitRate:
    def test_linear(self):
        nus = np.geomspace(1e-2, 1e-3, 5)
        f = fit_rate(zip(nus, 3 * nus))
        assert abs(f.slope - 1) < 1e-12 and abs(f.intercept - math.log(3)) < 1e-12 and f.r2 > 1 - 1e-12

    def test_constant(self):
        f = fit_rate([(1.0, 2.0), (2.0, 2.0), (4.0, 2.0)])
        assert abs(f.slope) < 1e-12

    def test_noisy_quarter_power(self):
        rng = np.random.default_rng(0)
        x = np.geomspace(1e-4, 1e-1, 12)
        y = x**0.25 * np.exp(0.01 * rng.normal(size=x.size))
        assert abs(fit_rate(zip(x, y)).slope - 0.25) < 0.02

    def test_scale_invariance(self):
        x = np.geomspace(1, 10, 6)
        y = x**1.7
        a, b = fit_rate(zip(x, y)), fit_rate(zip(x * 1e3, y * 1e-5))
        assert abs(a.slope - b.slope) < 1e-12
        assert np.allclose(a.predict(x), y)

    @pytest.mark.parametrize("pts", [[(1, 1), (2, 2)], [(1, 1), (2, 0), (3, 3)], [(1, 1), (2, np.inf), (3, 3)]])
    def test_rejects(self, pts):
        with pytest.raises(ValueError):
            fit_rate(pts)


class TestInitialState:
    @pytest.mark.parametrize("kind", ["shear", "random", "elsasser"])
    def test_kinds_are_admissible(self, kind):
        s = initial_state(parse_config(SMALL + f"init.kind = {kind}\n"))
        assert vk_membership_residual(s.u, 1) < 1e-12 and vk_membership_residual(s.H, 1) < 1e-12
        if kind == "elsasser":
            assert np.array_equal(s.u.stacked(), s.H.stacked())

    def test_seed_changes_data(self):
        a = initial_state(parse_config(SMALL))
        b = initial_state(parse_config(SMALL + "init.seed = 1\n"))
        assert not np.allclose(a.u.stacked(), b.u.stacked())


class TestRun:
    def test_writes_diagnostics_and_snapshots(self, tmp_path):
        cfg = parse_config(SMALL + "output.snapshots = 0.0, 0.025\nphys.nu = 0.01\nphys.mu = 0.01\n")
        res = run(cfg, str(tmp_path))
        assert len(res.snapshots) == 2
        snap = load_snapshot(res.snapshots[1])
        assert abs(snap.t - 0.025) < 1e-12
        text = (tmp_path / "diagnostics.csv").read_text()
        assert len(text.splitlines()) == 7

    def test_resume_from_snapshot(self, tmp_path):
        cfg = parse_config(SMALL + "output.snapshots = 0.025\n")
        full = run(cfg, str(tmp_path / "a"))
        resumed = run(
            cfg.replace(init__kind="snapshot", init__file=full.snapshots[0], output__snapshots=""),
            str(tmp_path / "b"),
        )
        assert resumed.final.t == pytest.approx(0.05)
        assert np.array_equal(resumed.final.u.stacked(), full.final.u.stacked())


class TestConvergenceStudy:
    def test_decaying_shear_slope_is_one(self):
        rep = convergence_study(parse_config(SHEAR))
        for s in (1, 2, 3):
            assert abs(rep.fits[s].slope - 1) < 0.02 and rep.monotone[s]
        # closed form: (1 - exp(-nu pi^2 T)) * ||cos(pi z) e_1||_{H^s}
        nu = rep.sweep[0][0]
        assert rep.sup_errors[1][0] == pytest.approx(
            (1 - math.exp(-nu * math.pi**2 * 0.25)) * math.sqrt(0.5 * (1 + math.pi**2)), rel=1e-8
        )

    def test_parallel_is_bit_identical(self):
        cfg = parse_config(SMALL)
        a, b = convergence_study(cfg, jobs=1), convergence_study(cfg, jobs=2)
        assert a.to_csv() == b.to_csv() and a.fits_csv() == b.fits_csv()
        assert [d.to_csv() for d in a.diagnostics] == [d.to_csv() for d in b.diagnostics]

    def test_small_study_reports(self):
        cfg = parse_config(SMALL)
        rep = convergence_study(cfg)
        assert rep.to_csv().splitlines()[0] == "nu,mu,s,sup_error"
        assert len(rep.to_csv().splitlines()) == 1 + 4 * 3
        assert all(rep.monotone.values())
        assert rep.hypothesis["trace_sup"] == 0.0
        probe = h2kp1_convergence_probe(cfg, rep)
        assert probe.s == 3 and probe.strictly_decreasing
        assert "no target" in probe.summary()

    def test_fit_window(self):
        rep = convergence_study(parse_config(SHEAR + "study.fit_window = 1, 3\n"), norms=(1,))
        assert rep.fits[1].n == 3


class TestCorrectorStudy:
    def test_default_cases_pass(self):
        rep = corrector_scaling_study(parse_config("corrector.nx = 8"))
        assert rep.constraints_ok and rep.passed
        assert len(rep.rows) == 6
        assert rep.to_csv().count("\n") == 7


class TestVerifySpaces:
    def test_passes_and_is_deterministic(self):
        cfg = parse_config("verify.samples = 10\nverify.nz = 8")
        a, b = verify_spaces(cfg), verify_spaces(cfg)
        assert a.passed and a.to_csv() == b.to_csv()
        assert len(a.negative) >= 3 and min(a.negative.values()) > 1e-2
