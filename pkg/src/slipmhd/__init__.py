"""Spectral solver and verification harness for incompressible MHD between
two flat slip walls, with periodic side directions.

Fields are stored as Fourier series in x, y and cosine or sine series in z;
the cosine/sine choice per component encodes the wall conditions exactly.
"""

from .config import Config, ConfigError, emit_config, parse_config
from .corrector import build_boundary_layer, build_profile, measure_scaling, solve_bundle
from .fields import (
    VELOCITY,
    VORTICITY,
    Grid,
    Parity,
    ParityError,
    SpectralScalarField,
    SpectralVectorField,
    boundary_trace,
    make_grid,
    random_field,
    sobolev_norm,
    to_physical,
    to_spectral,
    vk_membership_residual,
)
from .fitting import fit_rate
from .operators import advect, curl, curl_commutator, divergence, gradient, laplacian, leray_project
from .snapshot import load_snapshot, save_snapshot
from .solver import FlowState, PhysParams, integrate, rhs_viscous, step_ideal, step_viscous

__all__ = [
    "Config",
    "ConfigError",
    "emit_config",
    "parse_config",
    "build_boundary_layer",
    "build_profile",
    "measure_scaling",
    "solve_bundle",
    "VELOCITY",
    "VORTICITY",
    "Grid",
    "Parity",
    "ParityError",
    "SpectralScalarField",
    "SpectralVectorField",
    "boundary_trace",
    "make_grid",
    "random_field",
    "sobolev_norm",
    "to_physical",
    "to_spectral",
    "vk_membership_residual",
    "fit_rate",
    "advect",
    "curl",
    "curl_commutator",
    "divergence",
    "gradient",
    "laplacian",
    "leray_project",
    "load_snapshot",
    "save_snapshot",
    "FlowState",
    "PhysParams",
    "integrate",
    "rhs_viscous",
    "step_ideal",
    "step_viscous",
]

__version__ = "0.1.0"
