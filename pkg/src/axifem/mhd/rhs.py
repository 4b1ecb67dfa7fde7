"""Right-hand side of the discrete two-temperature MHD system.

The time derivative is assembled as a sum of named terms (:class:`RhsTerms`)
so that the energy, momentum and flux balances can be checked one exchange
at a time.  Every term is already constrained by the boundary conditions, so
summing them gives exactly the derivative the time stepper uses.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..errors import NegativePressure, NonPositiveDensity
from ..ops import OperatorSet
from .closures import (
    density_corrections,
    heat_exchange_Qie,
    heat_flux,
    poloidal_field,
    resistivity,
    viscous_force,
    viscous_heating_Qpi,
)
from .state import E_CHARGE, FIELDS, MU0, BoundaryConditions, PhysicsCoefficients, PlasmaState

NEGATIVE_PRESSURE_TOL = 1e-12

# names of the terms contributing to each field's derivative
TERM_LAYOUT: dict[str, tuple[str, ...]] = {
    "n": ("adv", "diff"),
    "vr": ("grad_ke", "vortex", "centrifugal", "pressure", "viscous", "lorentz_psi", "lorentz_f", "correction"),
    "vphi": ("adv", "viscous", "lorentz", "correction"),
    "vz": ("grad_ke", "vortex", "centrifugal", "pressure", "viscous", "lorentz_psi", "lorentz_f", "correction"),
    "pi": ("adv", "compression", "conduction", "exchange", "viscous", "correction"),
    "pe": ("adv", "compression", "conduction", "exchange", "ohmic_tor", "ohmic_pol"),
    "psi": ("adv", "resistive"),
    "f": ("adv", "dynamo", "resistive", "source"),
}


@dataclass
class RhsTerms:
    """Per-field dictionaries of nodal contributions to the time derivative."""

    terms: dict[str, dict[str, np.ndarray]]
    t: float = 0.0
    extras: dict[str, np.ndarray] = field(default_factory=dict)

    def total(self, name: str) -> np.ndarray:
        parts = self.terms[name]
        out = np.zeros_like(next(iter(parts.values())))
        for k in TERM_LAYOUT[name]:
            out = out + parts[k]
        return out

    def derivative(self) -> PlasmaState:
        return PlasmaState(*(self.total(k) for k in FIELDS), t=self.t)


def _check_state(state: PlasmaState) -> None:
    bad = np.flatnonzero(~(state.n > 0))
    if len(bad):
        raise NonPositiveDensity(int(bad[0]), float(state.n[bad[0]]))
    for name in ("pi", "pe"):
        p = getattr(state, name)
        scale = float(np.max(np.abs(p))) if len(p) else 0.0
        neg = np.flatnonzero(p < -NEGATIVE_PRESSURE_TOL * scale)
        if len(neg):
            raise NegativePressure(name, int(neg[0]), float(p[neg[0]]))


def compute_terms(
    ops: OperatorSet,
    state: PlasmaState,
    coeffs: PhysicsCoefficients,
    bc: Optional[BoundaryConditions] = None,
    f_source: Optional[np.ndarray] = None,
) -> RhsTerms:
    _check_state(state)
    g = ops.geom
    r, r_e = g.r_n, g.r_e
    r2 = r * r
    gm1 = coeffs.gamma - 1.0
    m_i = coeffs.m_i
    n, vr, vphi, vz = state.n, state.vr, state.vphi, state.vz
    pi, pe, psi, f = state.pi, state.pe, state.psi, state.f
    rho = m_i * n
    p = pi + pe
    bnd = ops.mesh.boundary_nodes

    def grad(u):
        return ops.dr(u), ops.dz(u)

    def v_dot_grad(u):
        ur, uz = grad(u)
        return vr * ur + vz * uz

    def div_nodal(Pr, Pz):
        return (ops.dr(r * Pr) + ops.dz(r * Pz)) / r

    def div_elem(Pr_e, Pz_e):
        return (ops.drn(r_e * Pr_e) + ops.dzn(r_e * Pz_e)) / r

    # shared quantities
    dr_vr, dz_vr = grad(vr)
    dr_vz = ops.dr(vz)
    curl = dz_vr - dr_vz
    dr_rvphi, dz_rvphi = grad(r * vphi)
    div_v = div_nodal(vr, vz)
    dr_psi, dz_psi = grad(psi)
    dstar = ops.delta_star(psi)
    if bc is not None and bc.psi_dirichlet:
        # ψ is prescribed on the wall, so its boundary rows carry no current
        dstar[bnd] = 0.0
    dr_f, dz_f = grad(f)
    B_r, B_z = poloidal_field(ops, psi)
    dre_f, dze_f = ops.dre(f), ops.dze(f)
    eta = resistivity(state, coeffs)
    eta_e = ops.avg(eta)
    omega_e = ops.avg(vphi / r)
    zeta = coeffs.zeta
    zeta_e = np.broadcast_to(np.asarray(zeta, dtype=float), (ops.mesh.n_elements,))

    # continuity
    T_n = {
        "adv": -div_nodal(n * vr, n * vz),
        "diff": div_elem(zeta_e * ops.dre(n), zeta_e * ops.dze(n)),
    }

    # momentum
    Pi_r, Pi_phi, Pi_z = viscous_force(ops, state, coeffs.mu_num)
    (fz_r, fz_phi, fz_z), Q_zeta = density_corrections(ops, state, zeta, coeffs.correction_model, m_i)
    grad_ke_r, grad_ke_z = grad(0.5 * (vr**2 + vphi**2 + vz**2))
    dr_p, dz_p = grad(p)
    mag = MU0 * r2 * rho
    T_vr = {
        "grad_ke": -grad_ke_r,
        "vortex": -vz * curl,
        "centrifugal": vphi * dr_rvphi / r,
        "pressure": -dr_p / rho,
        "viscous": -Pi_r / rho,
        "lorentz_psi": -dr_psi * dstar / mag,
        "lorentz_f": -f * dr_f / mag,
        "correction": fz_r / rho,
    }
    T_vz = {
        "grad_ke": -grad_ke_z,
        "vortex": vr * curl,
        "centrifugal": vphi * dz_rvphi / r,
        "pressure": -dz_p / rho,
        "viscous": -Pi_z / rho,
        "lorentz_psi": -dz_psi * dstar / mag,
        "lorentz_f": -f * dz_f / mag,
        "correction": fz_z / rho,
    }
    B_dot_grad_f = B_r * dre_f + B_z * dze_f
    T_vphi = {
        "adv": -(vr * dr_rvphi + vz * dz_rvphi) / r,
        "viscous": -Pi_phi / rho,
        "lorentz": ops.wn(B_dot_grad_f) / (MU0 * r * rho),
        "correction": fz_phi / rho,
    }

    # pressures
    T_i_eV = pi / n / E_CHARGE
    T_e_eV = pe / (coeffs.Z * n) / E_CHARGE
    if coeffs.heat_exchange:
        Q_ie = heat_exchange_Qie(n, T_e_eV, T_i_eV, coeffs.Z, coeffs.mu_i)
    else:
        Q_ie = np.zeros_like(n)
    Q_pi = viscous_heating_Qpi(ops, state, coeffs.mu_phys)
    qi = heat_flux(ops, state, "i", coeffs)
    qe = heat_flux(ops, state, "e", coeffs)
    T_pi = {
        "adv": -v_dot_grad(pi),
        "compression": -coeffs.gamma * pi * div_v,
        "conduction": -gm1 * div_elem(*qi),
        "exchange": gm1 * Q_ie,
        "viscous": gm1 * Q_pi,
        "correction": gm1 * Q_zeta,
    }
    T_pe = {
        "adv": -v_dot_grad(pe),
        "compression": -coeffs.gamma * pe * div_v,
        "conduction": -gm1 * div_elem(*qe),
        "exchange": -gm1 * Q_ie,
        "ohmic_tor": gm1 * (eta / MU0) * (dstar / r) ** 2,
        "ohmic_pol": gm1 * ops.wn((eta_e / MU0) * (dre_f**2 + dze_f**2) / r_e**2),
    }

    # induction
    T_psi = {
        "adv": -(vr * dr_psi + vz * dz_psi),
        "resistive": eta * dstar,
    }
    T_f = {
        "adv": -r2 * div_nodal(f * vr / r2, f * vz / r2),
        "dynamo": r2 * div_elem(B_r * omega_e, B_z * omega_e),
        "resistive": r2 * div_elem(eta_e * dre_f / r_e**2, eta_e * dze_f / r_e**2),
        "source": np.zeros_like(f) if f_source is None else np.asarray(f_source, dtype=float).copy(),
    }

    terms = {"n": T_n, "vr": T_vr, "vphi": T_vphi, "vz": T_vz, "pi": T_pi, "pe": T_pe, "psi": T_psi, "f": T_f}
    if bc is not None:
        _constrain_terms(terms, bc, T_wall_J=None if bc.T_wall_eV is None else bc.T_wall_eV * E_CHARGE, Z=coeffs.Z)
    extras = {"delta_star_psi": dstar, "eta": eta, "Q_ie": Q_ie, "Q_pi": Q_pi, "Q_zeta": Q_zeta}
    return RhsTerms(terms=terms, t=state.t, extras=extras)


def _constrain_terms(terms, bc: BoundaryConditions, T_wall_J, Z) -> None:
    """Make each term consistent with the explicit boundary conditions."""
    k = bc.boundary_nodes
    for name in TERM_LAYOUT["vr"]:
        bc.constrain_velocity(terms["vr"][name], terms["vz"][name])
    if bc.velocity_mode == "all-zero" and not bc.angular_momentum_mode:
        for name in TERM_LAYOUT["vphi"]:
            terms["vphi"][name][k] = 0.0
    if bc.psi_dirichlet:
        for name in TERM_LAYOUT["psi"]:
            terms["psi"][name][k] = 0.0
    if T_wall_J is not None:
        # p = n T_wall on the wall, so the pressures follow the density there
        ndot_b = sum(terms["n"][name][k] for name in TERM_LAYOUT["n"])
        for field_name, factor in (("pi", 1.0), ("pe", Z)):
            for j, name in enumerate(TERM_LAYOUT[field_name]):
                terms[field_name][name][k] = factor * T_wall_J * ndot_b if j == 0 else 0.0
    if bc.f_nodes is not None:
        for name in TERM_LAYOUT["f"]:
            terms["f"][name][bc.f_nodes] = 0.0


def compute_rhs(
    ops: OperatorSet,
    state: PlasmaState,
    coeffs: PhysicsCoefficients,
    bc: Optional[BoundaryConditions] = None,
    f_form_source: Optional[np.ndarray] = None,
) -> PlasmaState:
    """Time derivative of every evolved field; ``f_form_source`` is an external
    toroidal-flux source rate added to ḟ."""
    return compute_terms(ops, state, coeffs, bc, f_form_source).derivative()


def apply_boundary_conditions(
    state: PlasmaState, bc: BoundaryConditions, t: Optional[float] = None, Z: float = 1.0
) -> PlasmaState:
    """Return a copy of ``state`` with the explicit boundary conditions imposed."""
    t = state.t if t is None else t
    out = state.copy()
    out.t = t
    k = bc.boundary_nodes
    bc.constrain_velocity(out.vr, out.vz, out.vphi)
    psi_b = bc.psi_values(t)
    if psi_b is not None:
        out.psi[k] = psi_b
    if bc.T_wall_eV is not None:
        T = bc.T_wall_eV * E_CHARGE
        out.pi[k] = out.n[k] * T
        out.pe[k] = Z * out.n[k] * T
    if bc.f_nodes is not None:
        out.f[bc.f_nodes] = bc.f_values
    return out
