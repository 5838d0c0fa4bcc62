"""Snapshot files: one FlowState per .npz archive.

Layout (numpy ``.npz``, no pickling):

    header   0-d unicode array holding a JSON object
             {"format": "slipmhd-snapshot", "version": 1, "nx", "ny", "nz",
              "t": float.hex(t), "u_parities": [...], "H_parities": [...],
              "index_order": "component, kx, ky, m"}
    u, H     complex128 arrays of shape (3, nx, ny // 2 + 1, nz + 1)

Index order: component (x, y, z); kx in FFT order 0, 1, ..., -1; ky = 0..ny/2
(the other half follows from conjugate symmetry); m = 0..nz, the cosine or
sine index in z.  The time is stored as a hex float so it round-trips exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .fields import Grid, Parity, SpectralVectorField
from .solver import FlowState

__all__ = ["save_snapshot", "load_snapshot", "SnapshotError"]

FORMAT = "slipmhd-snapshot"
VERSION = 1


class SnapshotError(ValueError):
    pass


def save_snapshot(path, state: FlowState) -> None:
    g = state.grid
    header = {
        "format": FORMAT,
        "version": VERSION,
        "nx": g.nx,
        "ny": g.ny,
        "nz": g.nz,
        "t": float(state.t).hex(),
        "u_parities": [p.value for p in state.u.parities],
        "H_parities": [p.value for p in state.H.parities],
        "index_order": "component, kx, ky, m",
    }
    tmp = os.fspath(path) + ".tmp.npz"
    np.savez(
        tmp,
        header=np.array(json.dumps(header, sort_keys=True)),
        u=np.ascontiguousarray(state.u.stacked(), dtype=np.complex128),
        H=np.ascontiguousarray(state.H.stacked(), dtype=np.complex128),
    )
    os.replace(tmp, path)


def load_snapshot(path) -> FlowState:
    with np.load(path, allow_pickle=False) as data:
        try:
            header = json.loads(str(data["header"]))
            u, H = data["u"], data["H"]
        except KeyError as exc:
            raise SnapshotError(f"{path}: missing entry {exc}") from None
    if header.get("format") != FORMAT or header.get("version") != VERSION:
        raise SnapshotError(f"{path}: not a version-{VERSION} snapshot")
    g = Grid(header["nx"], header["ny"], header["nz"])
    for name, arr in (("u", u), ("H", H)):
        if arr.shape != (3, *g.spectral_shape):
            raise SnapshotError(f"{path}: array {name} has shape {arr.shape}, expected {(3, *g.spectral_shape)}")
    pu = tuple(Parity(p) for p in header["u_parities"])
    ph = tuple(Parity(p) for p in header["H_parities"])
    return FlowState(
        float.fromhex(header["t"]),
        SpectralVectorField.from_stacked(g, pu, u),
        SpectralVectorField.from_stacked(g, ph, H),
    )
