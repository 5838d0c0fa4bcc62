"""Time integration of viscous and ideal MHD with slip walls.

The evolution is in velocity form,

    du/dt = P[-(u.grad)u + (H.grad)H] + nu lap u
    dH/dt = -(u.grad)H + (H.grad)u + mu lap H,

with P the Leray projector.  Diffusion is integrated exactly per mode
(integrating factor) and the nonlinear terms with classical RK4, so nu = mu = 0
reduces to plain RK4 on the ideal system along the same code path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .fields import (
    Grid,
    SpectralVectorField,
    VELOCITY,
    inner,
    sobolev_norm,
    to_physical,
    to_spectral,
    vk_membership_residual,
)
from .operators import (
    DEFAULT_POLICY,
    DealiasPolicy,
    advect,
    curl,
    curl_commutator,
    dealias,
    dealias_mask,
    dx,
    dy,
    dz,
    laplacian,
    leray_project,
)

__all__ = [
    "PhysParams",
    "FlowState",
    "Diagnostics",
    "SolverError",
    "CFLError",
    "BlowUpError",
    "rhs_viscous",
    "step_viscous",
    "step_ideal",
    "vorticity_residual",
    "vorticity_residual_fd",
    "energy_balance",
    "cfl_number",
    "record",
    "integrate",
    "prepare_state",
]


class SolverError(RuntimeError):
    pass


class CFLError(SolverError):
    pass


class BlowUpError(SolverError):
    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class PhysParams:
    nu: float = 0.0
    mu: float = 0.0
    T: float = 1.0
    dt: float = 1e-3
    dealias: DealiasPolicy = DEFAULT_POLICY
    norm_track: tuple = (1, 2, 3)
    cfl_safety: float = 0.5
    guard_factor: float = 1e3

    def __post_init__(self):
        if self.nu < 0 or self.mu < 0:
            raise ValueError("viscosity and magnetic diffusivity must be >= 0")
        if self.T <= 0 or self.dt <= 0:
            raise ValueError("T and dt must be positive")

    @property
    def ideal(self) -> bool:
        return self.nu == 0 and self.mu == 0


@dataclass(frozen=True)
class FlowState:
    t: float
    u: SpectralVectorField
    H: SpectralVectorField

    @property
    def grid(self) -> Grid:
        return self.u.grid

    @property
    def magnetic_field(self) -> SpectralVectorField:
        return self.H


def _nonlinear(u: SpectralVectorField, H: SpectralVectorField, policy: DealiasPolicy):
    """Unprojected nonlinear forcing of both equations, plus max |u| + |H|.

    One inverse transform per field and gradient component, one forward
    transform per output component.
    """
    g = u.grid
    up = [to_physical(c) for c in u]
    hp = [to_physical(c) for c in H]
    mask = dealias_mask(g, policy)
    fu, fh = [], []
    for i in range(3):
        ui, hi = u[i], H[i]
        gu = [to_physical(d) for d in (dx(ui), dy(ui), dz(ui))]
        gh = [to_physical(d) for d in (dx(hi), dy(hi), dz(hi))]
        # -(u.grad)u_i + (H.grad)H_i ;  -(u.grad)H_i + (H.grad)u_i
        a = sum(hp[j] * gh[j] - up[j] * gu[j] for j in range(3))
        b = sum(hp[j] * gu[j] - up[j] * gh[j] for j in range(3))
        fu.append(to_spectral(a, ui.parity, g).coeffs * mask)
        fh.append(to_spectral(b, hi.parity, g).coeffs * mask)
    speed = float(np.max(np.sqrt(sum(x * x for x in up)) + np.sqrt(sum(x * x for x in hp))))
    return np.stack(fu), np.stack(fh), speed


def _check_parity(state: FlowState):
    if state.u.parities != VELOCITY or state.H.parities != VELOCITY:
        raise ValueError("u and H must be velocity-type fields")


def _project_stacked(grid: Grid, a: np.ndarray) -> np.ndarray:
    return leray_project(SpectralVectorField.from_stacked(grid, VELOCITY, a)).stacked()


def rhs_viscous(state: FlowState, params: PhysParams):
    """Time derivatives (du/dt, dH/dt) at ``state``."""
    _check_parity(state)
    g = state.grid
    nu_u, nu_h, _ = _nonlinear(state.u, state.H, params.dealias)
    du = _project_stacked(g, nu_u) - params.nu * g.k2 * state.u.stacked()
    dh = nu_h - params.mu * g.k2 * state.H.stacked()
    return (
        SpectralVectorField.from_stacked(g, VELOCITY, du),
        SpectralVectorField.from_stacked(g, VELOCITY, dh),
    )


def cfl_number(state: FlowState, dt: float) -> float:
    """max(|u| + |H|) * N * dt on the collocation grid, N the largest mode count."""
    g = state.grid
    up = [to_physical(c) for c in state.u]
    hp = [to_physical(c) for c in state.H]
    speed = float(np.max(np.sqrt(sum(x * x for x in up)) + np.sqrt(sum(x * x for x in hp))))
    return speed * max(g.nx, g.ny, g.nz) * dt


def step_viscous(state: FlowState, params: PhysParams) -> FlowState:
    """One integrating-factor RK4 step of size params.dt."""
    _check_parity(state)
    g = state.grid
    dt = params.dt
    eu = np.exp(-params.nu * g.k2 * dt)
    eh = np.exp(-params.mu * g.k2 * dt)
    eu2 = np.exp(-params.nu * g.k2 * dt / 2)
    eh2 = np.exp(-params.mu * g.k2 * dt / 2)
    u0, h0 = state.u.stacked(), state.H.stacked()

    def N(u, h, first=False):
        fu, fh, speed = _nonlinear(
            SpectralVectorField.from_stacked(g, VELOCITY, u),
            SpectralVectorField.from_stacked(g, VELOCITY, h),
            params.dealias,
        )
        if first:
            cfl = speed * max(g.nx, g.ny, g.nz) * dt
            if not math.isfinite(cfl):
                raise BlowUpError(f"non-finite state at t={state.t:g}")
            if cfl > params.cfl_safety:
                raise CFLError(f"CFL number {cfl:.3g} exceeds {params.cfl_safety} at t={state.t:g}")
        return _project_stacked(g, fu), fh

    k1u, k1h = N(u0, h0, first=True)
    k2u, k2h = N(eu2 * (u0 + dt / 2 * k1u), eh2 * (h0 + dt / 2 * k1h))
    k3u, k3h = N(eu2 * u0 + dt / 2 * k2u, eh2 * h0 + dt / 2 * k2h)
    k4u, k4h = N(eu * u0 + dt * eu2 * k3u, eh * h0 + dt * eh2 * k3h)
    u1 = eu * u0 + dt / 6 * (eu * k1u + 2 * eu2 * (k2u + k3u) + k4u)
    h1 = eh * h0 + dt / 6 * (eh * k1h + 2 * eh2 * (k2h + k3h) + k4h)

    mask = dealias_mask(g, params.dealias)
    u1 = _project_stacked(g, u1 * mask)
    h1 = _project_stacked(g, h1 * mask)
    if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(h1))):
        raise BlowUpError(f"non-finite state after step at t={state.t:g}")
    return FlowState(
        state.t + dt,
        SpectralVectorField.from_stacked(g, VELOCITY, u1),
        SpectralVectorField.from_stacked(g, VELOCITY, h1),
    )


def step_ideal(state: FlowState, params: PhysParams | None = None) -> FlowState:
    params = params or PhysParams()
    return step_viscous(state, replace(params, nu=0.0, mu=0.0))


def energy_balance(state: FlowState, params: PhysParams, rhs=None) -> tuple[float, float]:
    """Residual of d/dt(|u|^2/2 + |H|^2/2) + nu|w|^2 + mu|z|^2 = 0 and its scale."""
    du, dh = rhs if rhs is not None else rhs_viscous(state, params)
    w, z = curl(state.u), curl(state.H)
    diss = params.nu * inner(w, w) + params.mu * inner(z, z)
    residual = inner(du, state.u) + inner(dh, state.H) + diss
    scale = diss + math.sqrt(inner(du, du) * inner(state.u, state.u)) + math.sqrt(
        inner(dh, dh) * inner(state.H, state.H)
    )
    return residual, scale


def _vorticity_equation_rest(state: FlowState, params: PhysParams):
    """Everything in the curl equations except the time derivative."""
    u, H = state.u, state.H
    # an identity check: truncation here is shared by both sides, so stay quiet
    pol = replace(params.dealias, warn_fraction=None)
    w, z = curl(u), curl(H)
    rest_w = (
        -params.nu * laplacian(w)
        + advect(u, w, pol)
        - advect(H, z, pol)
        + curl_commutator(u, u, pol)
        - curl_commutator(H, H, pol)
    )
    rest_z = (
        -params.mu * laplacian(z)
        + advect(u, z, pol)
        - advect(H, w, pol)
        + curl_commutator(u, H, pol)
        - curl_commutator(H, u, pol)
    )
    return rest_w, rest_z


def vorticity_residual(state: FlowState, params: PhysParams, rhs=None) -> tuple[float, float]:
    """Relative L2 residuals of the curl equations with dt(omega) = curl(du/dt)."""
    du, dh = rhs if rhs is not None else rhs_viscous(state, params)
    dw, dzeta = curl(du), curl(dh)
    rest_w, rest_z = _vorticity_equation_rest(state, params)
    out = []
    for d, r in ((dw, rest_w), (dzeta, rest_z)):
        scale = sobolev_norm(d, 0) + sobolev_norm(r, 0)
        out.append(sobolev_norm(d + r, 0) / scale if scale > 0 else 0.0)
    return out[0], out[1]


def vorticity_residual_fd(states: list[FlowState], params: PhysParams) -> tuple[float, float]:
    """Curl-equation residual at the middle of five equally spaced states.

    The time derivative comes from the fourth-order central stencil, so the
    residual measures the time integrator against the vorticity equations.
    """
    if len(states) != 5:
        raise ValueError("need five consecutive states")
    h = states[1].t - states[0].t
    coef = (1.0, -8.0, 0.0, 8.0, -1.0)
    dw, dzeta = None, None
    for c, s in zip(coef, states):
        if c:
            a, b = (c / (12 * h)) * curl(s.u), (c / (12 * h)) * curl(s.H)
            dw = a if dw is None else dw + a
            dzeta = b if dzeta is None else dzeta + b
    rest_w, rest_z = _vorticity_equation_rest(states[2], params)
    return sobolev_norm(dw + rest_w, 0), sobolev_norm(dzeta + rest_z, 0)


RECORD_COLUMNS = (
    "t",
    "E_kin",
    "E_mag",
    "enstrophy_u",
    "enstrophy_H",
    "H1",
    "H2",
    "H3",
    "energy_residual",
    "r_omega",
    "r_zeta",
    "membership",
    "cfl",
)


@dataclass
class Diagnostics:
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = RECORD_COLUMNS.index(name)
        return np.array([r[i] for r in self.rows])

    def to_csv(self) -> str:
        lines = [",".join(RECORD_COLUMNS)]
        lines += [",".join(repr(float(v)) for v in row) for row in self.rows]
        return "\n".join(lines) + "\n"


def record(state: FlowState, params: PhysParams, residuals: bool = True) -> tuple:
    """One diagnostics row (see ``RECORD_COLUMNS``)."""
    u, H = state.u, state.H
    w, z = curl(u), curl(H)
    norms = [
        math.sqrt(sobolev_norm(u, s) ** 2 + sobolev_norm(H, s) ** 2) for s in (1, 2, 3)
    ]
    if residuals:
        rhs = rhs_viscous(state, params)
        res, scale = energy_balance(state, params, rhs)
        e_res = abs(res) / scale if scale > 0 else abs(res)
        r_w, r_z = vorticity_residual(state, params, rhs)
    else:
        e_res = r_w = r_z = float("nan")
    member = max(
        vk_membership_residual(u, 3),
        vk_membership_residual(H, 3),
        vk_membership_residual(w, 2),
        vk_membership_residual(z, 2),
    )
    return (
        state.t,
        0.5 * inner(u, u),
        0.5 * inner(H, H),
        inner(w, w),
        inner(z, z),
        *norms,
        e_res,
        r_w,
        r_z,
        member,
        cfl_number(state, params.dt),
    )


def prepare_state(t: float, u: SpectralVectorField, H: SpectralVectorField, params: PhysParams) -> FlowState:
    """Truncate to the dealiased band and project: the form every state is kept in."""
    state = FlowState(t, leray_project(dealias(u, params.dealias)), leray_project(dealias(H, params.dealias)))
    _check_parity(state)
    return state


def integrate(
    state: FlowState,
    params: PhysParams,
    record_every: int | None = None,
    residuals: bool = True,
    keep_states: bool = True,
    on_record=None,
    on_step=None,
):
    """Step from state.t to params.T.

    Returns (final state, Diagnostics, recorded states).  A diagnostics row
    (and a state, if ``keep_states``) is taken every ``record_every`` steps
    and at the final time; ``on_step(state, n)`` sees every state.  The
    blow-up guard trips when the tracked H^3 norm exceeds ``guard_factor``
    times its initial value.
    """
    nsteps = int(round((params.T - state.t) / params.dt))
    if nsteps < 0 or abs(state.t + nsteps * params.dt - params.T) > 1e-9 * max(1.0, params.T):
        raise ValueError("T - t0 must be an integer multiple of dt")
    record_every = record_every or nsteps or 1
    diags = Diagnostics()
    states = []
    h3_0 = None

    def take(s, n):
        nonlocal h3_0
        row = record(s, params, residuals)
        if h3_0 is None:
            h3_0 = row[RECORD_COLUMNS.index("H3")]
        diags.rows.append(row)
        if keep_states:
            states.append(s)
        if on_record is not None:
            on_record(s, n)
        h3 = row[RECORD_COLUMNS.index("H3")]
        if not math.isfinite(h3) or (h3_0 > 0 and h3 > params.guard_factor * h3_0):
            raise BlowUpError(f"H^3 norm {h3:.3e} tripped the blow-up guard at t={s.t:g}", diags)

    t0 = state.t
    if on_step is not None:
        on_step(state, 0)
    take(state, 0)
    for n in range(1, nsteps + 1):
        state = step_viscous(state, params)
        # t0 + n dt rather than accumulated sums: record times match across runs.
        state = replace(state, t=t0 + n * params.dt)
        if on_step is not None:
            on_step(state, n)
        if n % record_every == 0 or n == nsteps:
            take(state, n)
    return state, diags, states
