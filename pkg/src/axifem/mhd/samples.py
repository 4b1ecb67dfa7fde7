"""Deterministic smooth plasma states for verification runs."""

from __future__ import annotations

import numpy as np

from ..mesh import Mesh
from .state import E_CHARGE, PlasmaState


def magnetized_state(
    mesh: Mesh,
    n0: float = 5e20,
    T_eV: float = 20.0,
    v0: float = 2e4,
    psi0: float = 5e-3,
    f0: float = 0.05,
    Z: float = 1.3,
    phase: float = 0.3,
) -> PlasmaState:
    """Smooth magnetized state with ψ = v_r = v_z = 0 on the boundary.

    Profiles are built from the normalized coordinates of the mesh bounding
    box.  Density, pressures, v_φ and f are non-zero on the wall so that
    natural boundary conditions are exercised.
    """
    r, z = mesh.r, mesh.z
    x = (r - r.min()) / np.ptp(r)
    y = (z - z.min()) / np.ptp(z)
    bump = np.sin(np.pi * x) * np.sin(np.pi * y)
    n = n0 * (1.0 + 0.3 * np.cos(np.pi * x + phase) * np.cos(2 * np.pi * y))
    T_i = T_eV * (1.0 + 0.2 * x + 0.1 * np.sin(2 * np.pi * y))
    T_e = 1.5 * T_eV * (1.0 + 0.3 * y * (1 - 0.5 * x))
    vr = v0 * bump * np.cos(np.pi * y + phase)
    vz = 1.5 * v0 * bump * (0.5 + x)
    vphi = 0.5 * v0 * np.sin(2 * np.pi * x + phase) * (1 + 0.5 * y)
    psi = psi0 * bump * (1.0 + 0.5 * x)
    f = f0 * (1.0 + 0.5 * np.cos(np.pi * x) * np.sin(np.pi * y + phase))
    k = mesh.boundary_nodes
    for u in (vr, vz, psi):
        u[k] = 0.0
    return PlasmaState(
        n=n, vr=vr, vphi=vphi, vz=vz,
        pi=n * T_i * E_CHARGE, pe=Z * n * T_e * E_CHARGE,
        psi=psi, f=f,
    )
