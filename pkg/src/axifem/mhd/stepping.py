"""Explicit time integration with stage-wise boundary conditions."""

from __future__ import annotations

from typing import Callable, Optional

import numpy as np

from .rhs import apply_boundary_conditions, compute_rhs
from .state import FIELDS, BoundaryConditions, PhysicsCoefficients, PlasmaState

SCHEMES = ("euler", "rk2", "rk4")

Derivative = Callable[[PlasmaState], PlasmaState]
Constrain = Callable[[PlasmaState], PlasmaState]


def _axpy(a: PlasmaState, b: PlasmaState, s: float, t: float) -> PlasmaState:
    return PlasmaState(*(getattr(a, k) + s * getattr(b, k) for k in FIELDS), t=t)


def _combine(base: PlasmaState, weighted: list[tuple[float, PlasmaState]], t: float) -> PlasmaState:
    out = {}
    for k in FIELDS:
        acc = getattr(base, k).copy()
        for w, st in weighted:
            acc = acc + w * getattr(st, k)
        out[k] = acc
    return PlasmaState(**out, t=t)


def integrate_step(
    state: PlasmaState,
    dt: float,
    scheme: str,
    derivative: Derivative,
    constrain: Optional[Constrain] = None,
) -> PlasmaState:
    """Advance ``state`` by ``dt`` with a generic derivative function.

    ``constrain`` is applied to every stage value (with its stage time set),
    so boundary conditions hold whenever ``derivative`` is evaluated.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt!r}")
    bc = constrain or (lambda s: s)
    t0 = state.t
    if scheme == "euler":
        return bc(_axpy(state, derivative(state), dt, t0 + dt))
    if scheme == "rk2":
        # Heun's method written in its strong-stability-preserving form
        s1 = bc(_axpy(state, derivative(state), dt, t0 + dt))
        k2 = derivative(s1)
        mid = {k: 0.5 * getattr(state, k) + 0.5 * (getattr(s1, k) + dt * getattr(k2, k)) for k in FIELDS}
        return bc(PlasmaState(**mid, t=t0 + dt))
    if scheme == "rk4":
        k1 = derivative(state)
        s2 = bc(_axpy(state, k1, 0.5 * dt, t0 + 0.5 * dt))
        k2 = derivative(s2)
        s3 = bc(_axpy(state, k2, 0.5 * dt, t0 + 0.5 * dt))
        k3 = derivative(s3)
        s4 = bc(_axpy(state, k3, dt, t0 + dt))
        k4 = derivative(s4)
        w = dt / 6.0
        return bc(_combine(state, [(w, k1), (2 * w, k2), (2 * w, k3), (w, k4)], t0 + dt))
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def step(
    ops,
    state: PlasmaState,
    dt: float,
    scheme: str,
    coeffs: PhysicsCoefficients,
    bc: Optional[BoundaryConditions] = None,
    f_source: Optional[np.ndarray] = None,
) -> PlasmaState:
    """One explicit step of the full MHD system."""

    def derivative(s: PlasmaState) -> PlasmaState:
        return compute_rhs(ops, s, coeffs, bc, f_source)

    constrain = None
    if bc is not None:
        def constrain(s: PlasmaState) -> PlasmaState:
            return apply_boundary_conditions(s, bc, s.t, Z=coeffs.Z)

    return integrate_step(state, dt, scheme, derivative, constrain)
