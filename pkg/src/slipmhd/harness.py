"""Experiment runner: single runs, vanishing-viscosity studies, corrector
scaling tables and the function-space identity suite.

Every study is a pure function of its Config.  Sweep members may run in
worker processes; each worker gets the same initial coefficients and the
reference run's recorded states, and results are assembled in sweep order,
so reports do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .config import Config
from .corrector import (
    build_boundary_layer,
    build_profile,
    bundle_checks,
    default_order,
    expected_exponent,
    measure_scaling,
    scaling_csv,
    solve_bundle,
)
from .fields import (
    VELOCITY,
    Grid,
    Parity,
    SpectralScalarField,
    SpectralVectorField,
    boundary_trace,
    inner,
    make_grid,
    random_field,
    sobolev_norm,
    to_physical,
    to_spectral,
    vk_membership_residual,
)
from .fitting import RateFit, fit_rate
from .operators import DealiasPolicy, advect, curl, curl_commutator, gradient, wall_alternation_residual
from .snapshot import load_snapshot, save_snapshot
from .solver import (
    BlowUpError,
    Diagnostics,
    FlowState,
    PhysParams,
    integrate,
    prepare_state,
)

__all__ = [
    "EXIT_OK",
    "EXIT_ERROR",
    "EXIT_CONFIG",
    "EXIT_CFL",
    "EXIT_BLOWUP",
    "EXIT_CHECK_FAILED",
    "params_from",
    "initial_state",
    "run",
    "RunResult",
    "RateReport",
    "convergence_study",
    "ProbeReport",
    "h2kp1_convergence_probe",
    "CorrectorReport",
    "corrector_scaling_study",
    "SpacesReport",
    "verify_spaces",
    "wall_data",
]

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_CONFIG = 2
EXIT_CFL = 3
EXIT_BLOWUP = 4
EXIT_CHECK_FAILED = 5


# -- single runs ----------------------------------------------------------------------


def grid_from(cfg: Config) -> Grid:
    return make_grid(cfg["grid.nx"], cfg["grid.ny"], cfg["grid.nz"])


def params_from(cfg: Config, nu: float | None = None, mu: float | None = None) -> PhysParams:
    return PhysParams(
        nu=cfg["phys.nu"] if nu is None else nu,
        mu=cfg["phys.mu"] if mu is None else mu,
        T=cfg["time.T"],
        dt=cfg["time.dt"],
        guard_factor=cfg["guard.threshold"],
    )


def record_every(cfg: Config) -> int:
    return max(1, int(round(cfg["output.record_interval"] / cfg["time.dt"])))


def initial_state(cfg: Config, params: PhysParams | None = None) -> FlowState:
    params = params or params_from(cfg)
    kind = cfg["init.kind"]
    if kind == "snapshot":
        s = load_snapshot(cfg["init.file"])
        prepared = prepare_state(s.t, s.u, s.H, params)
        # a snapshot written by this solver is already projected; keeping its
        # bits makes a restart reproduce the uninterrupted run exactly
        drift = max((prepared.u - s.u).max_abs(), (prepared.H - s.H).max_abs())
        scale = max(s.u.max_abs(), s.H.max_abs(), 1e-300)
        return s if drift <= 1e-13 * scale else prepared
    g = grid_from(cfg)
    if kind == "shear":
        coeffs = np.zeros((3, *g.spectral_shape), complex)
        coeffs[0, 0, 0, 1] = cfg["init.amplitude"]  # u = (A cos(pi z), 0, 0)
        u = SpectralVectorField.from_stacked(g, VELOCITY, coeffs)
        H = SpectralVectorField.from_stacked(g, VELOCITY, np.zeros_like(coeffs))
    else:
        opts = dict(decay_exponent=cfg["init.decay"], kmax=cfg["init.kmax"], amplitude=cfg["init.amplitude"])
        u = random_field(g, "velocity", seed=cfg["init.seed"], **opts)
        if kind == "elsasser":
            H = u
        else:
            H = random_field(g, "velocity", seed=cfg["init.seed"] + 1, **opts)
    return prepare_state(0.0, u, H, params)


@dataclass
class RunResult:
    final: FlowState
    diagnostics: Diagnostics
    snapshots: list = field(default_factory=list)
    blew_up: bool = False


def run(cfg: Config, out_dir: str | None = None) -> RunResult:
    """Integrate one configuration, writing diagnostics.csv and snapshots.

    A blow-up guard trip writes the diagnostics gathered so far and then
    re-raises ``BlowUpError``.
    """
    params = params_from(cfg)
    state = initial_state(cfg, params)
    out_dir = out_dir if out_dir is not None else cfg["output.dir"]
    snap_steps = {int(round(t / params.dt)): t for t in cfg["output.snapshots"]}
    written = []
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)

    def on_step(s, n):
        if out_dir and n in snap_steps:
            path = os.path.join(out_dir, f"snapshot_{n:08d}.npz")
            save_snapshot(path, s)
            written.append(path)

    try:
        final, diags, _ = integrate(state, params, record_every(cfg), keep_states=False, on_step=on_step)
    except BlowUpError as exc:
        if out_dir and exc.diagnostics is not None:
            _write(os.path.join(out_dir, "diagnostics.csv"), exc.diagnostics.to_csv())
        raise
    if out_dir:
        _write(os.path.join(out_dir, "diagnostics.csv"), diags.to_csv())
    return RunResult(final, diags, written)


def _write(path: str, text: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


# -- vanishing-viscosity studies ---------------------------------------------------------------

_REFERENCE: dict = {}


def _set_reference(payload):
    _REFERENCE.clear()
    _REFERENCE.update(payload)


def _h_norm(u: SpectralVectorField, H: SpectralVectorField, s: int) -> float:
    return sobolev_norm(u, s) + sobolev_norm(H, s)


def _member_run(job):
    """Viscous run for one sweep point, compared with the reference states."""
    cfg_items, nu, mu, norms = job
    cfg = Config(cfg_items)
    ref = _REFERENCE
    g = Grid(*ref["grid"])
    params = params_from(cfg, nu, mu)
    start = FlowState(
        ref["t0"],
        SpectralVectorField.from_stacked(g, VELOCITY, ref["u0"]),
        SpectralVectorField.from_stacked(g, VELOCITY, ref["H0"]),
    )
    errors = {s: [] for s in norms}
    dt_errors = []
    prev = {}

    def compare(state, n):
        idx = len(errors[norms[0]])
        ru = SpectralVectorField.from_stacked(g, VELOCITY, ref["u"][idx])
        rh = SpectralVectorField.from_stacked(g, VELOCITY, ref["H"][idx])
        du, dh = state.u - ru, state.H - rh
        for s in norms:
            errors[s].append(_h_norm(du, dh, s))
        if prev:
            tau = state.t - prev["t"]
            dd_u = (du - prev["du"]) * (1.0 / tau)
            dd_h = (dh - prev["dh"]) * (1.0 / tau)
            dt_errors.append(_h_norm(dd_u, dd_h, 1))
        prev.update(t=state.t, du=du, dh=dh)

    blew_up = False
    try:
        _, diags, _ = integrate(start, params, ref["record_every"], keep_states=False, on_record=compare)
    except BlowUpError as exc:
        blew_up = True
        diags = exc.diagnostics or Diagnostics()
    return {
        "nu": nu,
        "mu": mu,
        "errors": {s: np.array(v) for s, v in errors.items()},
        "dt_errors": np.array(dt_errors),
        "diagnostics": diags,
        "blew_up": blew_up,
    }


@dataclass
class RateReport:
    norms: tuple
    sweep: list  # (nu, mu)
    times: np.ndarray
    sup_errors: dict  # s -> array over sweep
    fits: dict  # s -> RateFit or None
    monotone: dict  # s -> bool (strictly decreasing as nu decreases)
    dt_sup_errors: np.ndarray
    resolution: list  # sqrt(nu) * nz per run
    diagnostics: list  # Diagnostics per sweep member
    reference: Diagnostics
    hypothesis: dict
    partial: bool = False
    fit_slice: slice = slice(None)

    def rows(self):
        for n, (nu, mu) in enumerate(self.sweep):
            for s in self.norms:
                yield nu, mu, s, float(self.sup_errors[s][n])

    def to_csv(self) -> str:
        lines = ["nu,mu,s,sup_error"]
        lines += [f"{nu!r},{mu!r},{s},{e!r}" for nu, mu, s, e in self.rows()]
        return "\n".join(lines) + "\n"

    def fits_csv(self) -> str:
        lines = ["s,slope,intercept,r2,monotone"]
        for s in self.norms:
            f = self.fits[s]
            if f is None:
                lines.append(f"{s},nan,nan,nan,{int(self.monotone[s])}")
            else:
                lines.append(f"{s},{f.slope!r},{f.intercept!r},{f.r2!r},{int(self.monotone[s])}")
        return "\n".join(lines) + "\n"

    def decrease_factor(self, s: int) -> float:
        """Largest-nu error divided by smallest-nu error."""
        e = self.sup_errors[s]
        return float(e[0] / e[-1]) if e[-1] > 0 else math.inf

    def summary(self) -> str:
        lines = ["vanishing-viscosity study"]
        lines.append(f"  sweep points: {len(self.sweep)}; recorded times: {len(self.times)}")
        lines.append("  sup over recorded times only: a lower bound on the true sup")
        for s in self.norms:
            f = self.fits[s]
            fit = "no fit" if f is None else f"slope {f.slope:.4f}, R^2 {f.r2:.5f}"
            lines.append(
                f"  H^{s}: {fit}; monotone={self.monotone[s]}; decrease x{self.decrease_factor(s):.3g}"
            )
        lines.append("  boundary-layer resolution sqrt(nu)*nz: " + ", ".join(f"{r:.3g}" for r in self.resolution))
        if self.partial:
            lines.append("  PARTIAL: a sweep member tripped the blow-up guard")
        return "\n".join(lines) + "\n"


def _hypothesis_norms(states, k: int, interval: float) -> dict:
    """Face norms of d_n^{2k} omega_tau for the reference run and their time differences."""
    traces = []
    for s in states:
        w = curl(s.u)
        traces.append(
            np.array([boundary_trace(w, c, face, 2 * k).values for face in (0, 1) for c in (0, 1)])
        )
    traces = np.array(traces)
    sup = float(np.max(np.abs(traces)))
    d1 = np.diff(traces, axis=0) / interval if len(traces) > 1 else np.zeros(1)
    d2 = np.diff(traces, 2, axis=0) / interval**2 if len(traces) > 2 else np.zeros(1)
    return {
        "trace_sup": sup,
        "C1_time": max(sup, float(np.max(np.abs(d1)))),
        "C2_time": max(sup, float(np.max(np.abs(d1))), float(np.max(np.abs(d2)))),
    }


def convergence_study(cfg: Config, jobs: int = 1, norms=None) -> RateReport:
    """Ideal reference run, then the viscous sweep, compared at recorded times."""
    norms = tuple(norms or cfg["study.norms"])
    ref_params = params_from(cfg, 0.0, 0.0)
    start = initial_state(cfg, ref_params)
    every = record_every(cfg)
    _, ref_diags, ref_states = integrate(start, ref_params, every)
    g = start.grid
    payload = {
        "grid": (g.nx, g.ny, g.nz),
        "t0": start.t,
        "u0": start.u.stacked(),
        "H0": start.H.stacked(),
        "u": [s.u.stacked() for s in ref_states],
        "H": [s.H.stacked() for s in ref_states],
        "record_every": every,
    }
    sweep = cfg.sweep()
    jobs_list = [(dict(cfg), nu, mu, norms) for nu, mu in sweep]
    if jobs <= 1:
        _set_reference(payload)
        results = [_member_run(j) for j in jobs_list]
    else:
        with ProcessPoolExecutor(max_workers=jobs, initializer=_set_reference, initargs=(payload,)) as pool:
            results = list(pool.map(_member_run, jobs_list))

    partial = any(r["blew_up"] for r in results)
    sup = {s: np.array([float(np.max(r["errors"][s])) for r in results]) for s in norms}
    nus = np.array([nu for nu, _ in sweep])
    window = cfg.fit_slice()
    fits, mono = {}, {}
    order = np.argsort(nus)[::-1]  # largest nu first
    for s in norms:
        e = sup[s]
        mono[s] = bool(np.all(np.diff(e[order]) < 0))
        xs, ys = nus[window], e[window]
        fits[s] = fit_rate(zip(xs, ys)) if len(xs) >= 3 and np.all(ys > 0) else None
    return RateReport(
        norms=norms,
        sweep=sweep,
        times=np.array([s.t for s in ref_states]),
        sup_errors=sup,
        fits=fits,
        monotone=mono,
        dt_sup_errors=np.array([float(np.max(r["dt_errors"], initial=0.0)) for r in results]),
        resolution=[math.sqrt(nu) * g.nz for nu, _ in sweep],
        diagnostics=[r["diagnostics"] for r in results],
        reference=ref_diags,
        hypothesis=_hypothesis_norms(ref_states, cfg["study.k"], every * cfg["time.dt"]),
        partial=partial,
        fit_slice=window,
    )


@dataclass
class ProbeReport:
    s: int
    nus: tuple
    errors: np.ndarray
    strictly_decreasing: bool
    fit: RateFit | None
    hypothesis: dict

    def summary(self) -> str:
        slope = "n/a" if self.fit is None else f"{self.fit.slope:.4f} (R^2 {self.fit.r2:.5f})"
        lines = [
            f"H^{self.s} probe: strictly decreasing={self.strictly_decreasing}; fitted slope {slope}",
            "  (the slope is reported only; no target is asserted)",
            "  hypothesis face norms of d_n^2k omega_tau of the reference run: "
            + ", ".join(f"{k}={v:.3e}" for k, v in self.hypothesis.items()),
        ]
        return "\n".join(lines) + "\n"

    def to_csv(self) -> str:
        lines = ["nu,s,sup_error"] + [f"{nu!r},{self.s},{e!r}" for nu, e in zip(self.nus, self.errors)]
        return "\n".join(lines) + "\n"


def h2kp1_convergence_probe(cfg: Config, report: RateReport | None = None, jobs: int = 1) -> ProbeReport:
    """H^{2k+1} sup errors over the sweep: monotonicity and a reported slope."""
    s = 2 * cfg["study.k"] + 1
    if report is None or s not in report.norms:
        report = convergence_study(cfg, jobs, norms=(s,))
    nus = tuple(nu for nu, _ in report.sweep)
    e = report.sup_errors[s]
    order = np.argsort(nus)[::-1]
    return ProbeReport(
        s=s,
        nus=nus,
        errors=e,
        strictly_decreasing=bool(np.all(np.diff(e[order]) < 0)),
        fit=report.fits.get(s),
        hypothesis=report.hypothesis,
    )


# -- corrector scaling -----------------------------------------------------------------------


def wall_data(n: int, seed: int, kmax: int = 2) -> np.ndarray:
    """Smooth random tangential data on both faces, shape (2, 2, n, n)."""
    rng = np.random.default_rng(seed)
    x = np.arange(n) / n
    X, Y = np.meshgrid(x, x, indexing="ij")
    out = np.zeros((2, 2, n, n))
    for face in range(2):
        for c in range(2):
            out[face, c] = rng.normal()
            for kx in range(kmax + 1):
                for ky in range(-kmax, kmax + 1):
                    if kx == 0 and ky <= 0:
                        continue
                    a, b = rng.normal(size=2) / (1 + kx * kx + ky * ky)
                    ph = 2 * np.pi * (kx * X + ky * Y)
                    out[face, c] += a * np.cos(ph) + b * np.sin(ph)
    return out


@dataclass
class CorrectorReport:
    k: int
    tolerance: float
    constraints: dict
    rows: list  # dicts: component, p, i, order, slope, expected, deviation, r2, passed
    results: list

    @property
    def passed(self) -> bool:
        return all(r["passed"] for r in self.rows) and self.constraints_ok

    @property
    def constraints_ok(self) -> bool:
        return all(v < 1e-12 for k, v in self.constraints.items() if k in EXACT_CONSTRAINTS)

    def to_csv(self) -> str:
        lines = ["component,p,i,order,slope,expected,deviation,r2,passed"]
        for r in self.rows:
            lines.append(
                f"{r['component']},{r['p']!r},{r['i']!r},{r['order']},{r['slope']!r},"
                f"{r['expected']!r},{r['deviation']!r},{r['r2']!r},{int(r['passed'])}"
            )
        return "\n".join(lines) + "\n"

    def norms_csv(self) -> str:
        return scaling_csv(self.results)

    def summary(self) -> str:
        lines = [f"boundary-layer corrector, k={self.k}, tolerance {self.tolerance}"]
        for r in self.rows:
            lines.append(
                f"  {r['component']:<10} d^{r['order']} p={r['p']:g} i={r['i']:g}: slope {r['slope']:.4f}"
                f" expected {r['expected']:.4f} -> {'pass' if r['passed'] else 'FAIL'}"
            )
        worst = max((v for k, v in self.constraints.items() if k in EXACT_CONSTRAINTS), default=0.0)
        lines.append(f"  exact constraints: worst residual {worst:.2e}")
        return "\n".join(lines) + "\n"


# structural properties that hold exactly; the rest of bundle_checks is informational
EXACT_CONSTRAINTS = (
    "profile",
    "div_psi",
    "div_chi",
    "chi_tau_interior",
    "chi3_interior_variation",
    "trace_2k_tangential",
    "trace_2k_normal",
    "trace_lower_orders",
    "psi_wall_data",
    "div_zeta",
    "div_v",
    "v_membership",
)


def corrector_scaling_study(cfg: Config) -> CorrectorReport:
    k = cfg["corrector.k"]
    eps = cfg["corrector.eps"]
    if len(eps) < 5:
        raise ValueError("corrector.eps needs at least five values")
    n = cfg["corrector.nx"]
    grid = make_grid(n, n, 16)
    h = wall_data(n, cfg["init.seed"])
    profile = build_profile(k)
    constraints = {"profile": max(profile.constraint_residuals().values())}
    mid = float(np.sqrt(eps[0] * eps[-1]))
    checks = bundle_checks(solve_bundle(build_boundary_layer(h, mid, k, grid, profile)))
    # relative to the size of the data
    scale = float(np.max(np.abs(h)))
    constraints.update({key: v / scale for key, v in checks.items()})

    rows, results = [], []
    for component, p, i, order in cfg["corrector.cases"]:
        order = default_order(component, k) if order is None else order
        res = measure_scaling(h, k, p, i, order, eps, grid, component)
        expected = expected_exponent(component, p, i)
        dev = abs(res.slope - expected)
        results.append(res)
        rows.append(
            dict(
                component=component,
                p=p,
                i=i,
                order=order,
                slope=res.slope,
                expected=expected,
                deviation=dev,
                r2=res.fit.r2,
                passed=dev <= cfg["corrector.tolerance"],
            )
        )
    return CorrectorReport(k, cfg["corrector.tolerance"], constraints, rows, results)


# -- function-space identity suite -------------------------------------------------------------


@dataclass
class SpacesReport:
    samples: int
    positive: dict  # check -> max residual over samples
    negative: dict  # control -> min residual over samples
    threshold: float = 1e-9
    control_floor: float = 1e-2

    @property
    def passed(self) -> bool:
        return all(v < self.threshold for v in self.positive.values()) and all(
            v > self.control_floor for v in self.negative.values()
        )

    def to_csv(self) -> str:
        lines = ["check,kind,residual,passed"]
        for name, v in self.positive.items():
            lines.append(f"{name},identity,{v!r},{int(v < self.threshold)}")
        for name, v in self.negative.items():
            lines.append(f"{name},control,{v!r},{int(v > self.control_floor)}")
        return "\n".join(lines) + "\n"

    def summary(self) -> str:
        lines = [f"function-space identities over {self.samples} random samples"]
        for name, v in self.positive.items():
            lines.append(f"  {name:<34} max {v:.3e}  {'ok' if v < self.threshold else 'FAIL'}")
        for name, v in self.negative.items():
            ok = v > self.control_floor
            lines.append(f"  {name:<34} min {v:.3e}  {'expected-fail' if ok else 'CONTROL DID NOT FIRE'}")
        return "\n".join(lines) + "\n"


def _trace_max(field: SpectralVectorField, comps, j: int) -> float:
    return max(boundary_trace(field, c, face, j).max_abs() for c in comps for face in (0, 1))


def _dn_dot(v: SpectralVectorField, w: SpectralVectorField) -> float:
    """max over the walls of |d_n v . w|."""
    worst = 0.0
    for face in (0, 1):
        acc = sum(boundary_trace(v, c, face, 1).values * boundary_trace(w, c, face, 0).values for c in range(3))
        worst = max(worst, float(np.max(np.abs(acc))))
    return worst


# the control field is not band-limited to the dealiased range by design
QUIET_POLICY = DealiasPolicy(warn_fraction=None)


def _divergence_defect(H: SpectralVectorField, a: SpectralVectorField) -> float:
    """Coupling defect after adding a gradient with divergence |a|^2 - mean.

    For such an H, 2 int (H.grad)a.a = -||q - mean q||^2 with q = |a|^2; the
    value returned is that defect over ||q - mean q|| ||q||, ideally 1.
    """
    g = a.grid
    q = to_spectral(sum(to_physical(c) ** 2 for c in a), Parity.EVEN, g)
    fluct = q.coeffs.copy()
    fluct[0, 0, 0] = 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(g.k2 > 0, -fluct / np.where(g.k2 > 0, g.k2, 1.0), 0.0)
    H_bad = H + gradient(SpectralScalarField(g, Parity.EVEN, phi))
    d = 2 * inner(advect(H_bad, a, QUIET_POLICY), a)
    return abs(d) / (sobolev_norm(SpectralScalarField(g, Parity.EVEN, fluct), 0) * sobolev_norm(q, 0))


def verify_spaces(cfg: Config) -> SpacesReport:
    """Batch every wall identity of the parity spaces over random samples."""
    n_samples = cfg["verify.samples"]
    if n_samples < 10:
        raise ValueError("need at least 10 samples")
    k = cfg["study.k"]
    n = cfg["verify.nz"]
    g = make_grid(n, n, n)
    seed = cfg["init.seed"]
    kmax = max(1, (n - 1) // 6)  # products of two samples stay inside the dealiased band
    pos: dict[str, float] = {}
    neg: dict[str, float] = {}

    def hi(d, key, v):
        d[key] = max(d.get(key, 0.0), v)

    def lo(d, key, v):
        d[key] = min(d.get(key, math.inf), v)

    for s in range(n_samples):
        base = seed + 10 * s
        u, v, H, a, b = (random_field(g, "velocity", seed=base + i, kmax=kmax) for i in range(5))
        w = random_field(g, "vorticity", seed=base + 5, kmax=kmax)
        hi(pos, f"membership_V{2 * k + 1}", max(vk_membership_residual(u, 2 * k + 1), vk_membership_residual(v, 2 * k + 1)))
        hi(pos, f"curl_membership_V{2 * k}", vk_membership_residual(curl(u), 2 * k))
        for j in range(2 * k + 2):
            hi(pos, f"advection_alternation_j{j}", wall_alternation_residual(u, v, j))
        adv_curl = advect(u, curl(v))
        comm = curl_commutator(u, v)
        for j in range(k + 1):
            hi(pos, f"advected_curl_tangential_d{2 * j}", _trace_max(adv_curl, (0, 1), 2 * j))
            hi(pos, f"commutator_tangential_d{2 * j}", _trace_max(comm, (0, 1), 2 * j))
        hi(pos, "dn_v_dot_v", _dn_dot(v, v))
        c1, c2 = inner(advect(H, a), b), inner(advect(H, b), a)
        hi(pos, "coupling_cancellation", abs(c1 + c2) / max(1.0, abs(c1) + abs(c2)))

        # negative controls: each breaks exactly one hypothesis
        lo(neg, "vorticity_type_as_V1", vk_membership_residual(w, 1))
        adv = advect(u, v)
        lo(neg, "alternation_swapped_components", _trace_max(adv, (0, 1), 0))
        lo(neg, "advected_curl_odd_order", _trace_max(adv_curl, (0, 1), 1))
        lo(neg, "dn_v_dot_vorticity_type", _dn_dot(v, w))
        lo(neg, "coupling_without_divergence_free", _divergence_defect(H, a))
    return SpacesReport(n_samples, pos, neg)
