"""Transport closures: resistivity, collisional exchange, viscosity, heat flux,
density-diffusion momentum corrections and the explicit time-step bound."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..errors import NonPositiveTemperature
from ..ops import OperatorSet
from .state import E_CHARGE, MU0, PhysicsCoefficients, PlasmaState

SPITZER_COEFF = 418.0  # m²/s at 1 eV, Z = 1, Coulomb logarithm 10
QIE_COEFF = 7.6e-33


def spitzer_eta(T_e_eV: np.ndarray, Z: float, eta_max: float, eta_min: float = 0.0) -> np.ndarray:
    """Magnetic diffusivity 418 Z T_e^-3/2 (T_e in eV), clipped to [eta_min, eta_max]."""
    T = np.asarray(T_e_eV, dtype=float)
    bad = np.flatnonzero(~(T > 0))
    if len(bad):
        raise NonPositiveTemperature(int(bad[0]), float(T.flat[bad[0]]))
    return np.clip(SPITZER_COEFF * Z * T**-1.5, eta_min, eta_max)


def heat_exchange_Qie(n, T_e_eV, T_i_eV, Z: float, mu_i: float) -> np.ndarray:
    """Power density (W/m³) transferred from electrons to ions."""
    T_e = np.asarray(T_e_eV, dtype=float)
    bad = np.flatnonzero(~(T_e > 0))
    if len(bad):
        raise NonPositiveTemperature(int(bad[0]), float(T_e.flat[bad[0]]))
    n = np.asarray(n, dtype=float)
    return QIE_COEFF * Z**3 * (T_e - np.asarray(T_i_eV)) * T_e**-1.5 * n**2 / mu_i


@dataclass
class DerivedFields:
    rho: np.ndarray
    T_i: np.ndarray  # J
    T_e: np.ndarray  # J
    omega: np.ndarray
    B_r_e: np.ndarray
    B_z_e: np.ndarray
    B_phi: np.ndarray
    J_phi: np.ndarray
    eta: np.ndarray


def resistivity(state: PlasmaState, coeffs: PhysicsCoefficients) -> np.ndarray:
    if coeffs.resistivity is not None:
        return np.full(state.n_nodes, float(coeffs.resistivity))
    T_e_eV = state.pe / (coeffs.Z * state.n) / E_CHARGE
    return spitzer_eta(T_e_eV, coeffs.Z, coeffs.eta_max, coeffs.eta_min)


def poloidal_field(ops: OperatorSet, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Element-centred (B_r, B_z) = (-∂ψ/∂z, ∂ψ/∂r) / r_e."""
    r_e = ops.geom.r_e
    return -ops.dze(psi) / r_e, ops.dre(psi) / r_e


def derived_fields(ops: OperatorSet, state: PlasmaState, coeffs: PhysicsCoefficients) -> DerivedFields:
    r = ops.geom.r_n
    B_r, B_z = poloidal_field(ops, state.psi)
    return DerivedFields(
        rho=coeffs.m_i * state.n,
        T_i=state.pi / state.n,
        T_e=state.pe / (coeffs.Z * state.n),
        omega=state.vphi / r,
        B_r_e=B_r,
        B_z_e=B_z,
        B_phi=state.f / r,
        J_phi=-ops.delta_star(state.psi) / (MU0 * r),
        eta=resistivity(state, coeffs),
    )


def _mu_e(ops: OperatorSet, mu) -> tuple[np.ndarray, np.ndarray]:
    mu_n = np.broadcast_to(np.asarray(mu, dtype=float), (ops.mesh.n_nodes,))
    return mu_n, ops.avg(mu_n)


def viscous_force(ops: OperatorSet, state: PlasmaState, mu) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Nodal (Π_r, Π_φ, Π_z), the divergence of the viscous stress with sign such
    that the momentum equation carries -Π."""
    g = ops.geom
    r, r_e = g.r_n, g.r_e
    mu_n, mu_e = _mu_e(ops, mu)
    dre_vr, dze_vr = ops.dre(state.vr), ops.dze(state.vr)
    dre_vz, dze_vz = ops.dre(state.vz), ops.dze(state.vz)
    shear = mu_e * r_e * (dre_vz + dze_vr)
    div_e = (ops.dre(r * state.vr) + ops.dze(r * state.vz)) / r_e
    comp = mu_e * div_e
    Pi_r = (
        (-2.0 * ops.drn(mu_e * r_e * dre_vr) - ops.dzn(shear)) / r
        + (2.0 / 3.0) * ops.drn(comp)
        + 2.0 * mu_n * state.vr / r**2
    )
    Pi_z = (-2.0 * ops.dzn(mu_e * r_e * dze_vz) - ops.drn(shear)) / r + (2.0 / 3.0) * ops.dzn(comp)
    omega = state.vphi / r
    w = mu_e * r_e**3
    Pi_phi = -(ops.drn(w * ops.dre(omega)) + ops.dzn(w * ops.dze(omega))) / r**2
    return Pi_r, Pi_phi, Pi_z


def viscous_heating_Qpi(ops: OperatorSet, state: PlasmaState, mu) -> np.ndarray:
    g = ops.geom
    r, r_e = g.r_n, g.r_e
    mu_n, mu_e = _mu_e(ops, mu)
    dre_vr, dze_vr = ops.dre(state.vr), ops.dze(state.vr)
    dre_vz, dze_vz = ops.dre(state.vz), ops.dze(state.vz)
    omega = state.vphi / r
    div_e = (ops.dre(r * state.vr) + ops.dze(r * state.vz)) / r_e
    grad_w2 = ops.dre(omega) ** 2 + ops.dze(omega) ** 2
    elem = mu_e * (
        2.0 * dre_vr**2
        + 2.0 * dze_vz**2
        + r_e**2 * grad_w2
        + (dre_vz + dze_vr) ** 2
        - (2.0 / 3.0) * div_e**2
    )
    return ops.wn(elem) + 2.0 * mu_n * (state.vr / r) ** 2


def anisotropic_flux(
    ops: OperatorSet, T: np.ndarray, B_r_e: np.ndarray, B_z_e: np.ndarray, kpar: float, kperp: float
) -> tuple[np.ndarray, np.ndarray]:
    """Element heat flux -[(κ∥-κ⊥) B (B·∇T)/B² + κ⊥ ∇T]; the parallel part is
    dropped on elements where the poloidal field vanishes."""
    gr, gz = ops.dre(T), ops.dze(T)
    B2 = B_r_e**2 + B_z_e**2
    has_b = B2 > 0
    proj = np.zeros_like(B2)
    proj[has_b] = (kpar - kperp) * (B_r_e[has_b] * gr[has_b] + B_z_e[has_b] * gz[has_b]) / B2[has_b]
    return -(proj * B_r_e + kperp * gr), -(proj * B_z_e + kperp * gz)


def heat_flux(
    ops: OperatorSet, state: PlasmaState, species: str, coeffs: PhysicsCoefficients
) -> tuple[np.ndarray, np.ndarray]:
    kpar, kperp = coeffs.kappa(species)
    T = state.pi / state.n if species == "i" else state.pe / (coeffs.Z * state.n)
    B_r, B_z = poloidal_field(ops, state.psi)
    return anisotropic_flux(ops, T, B_r, B_z, kpar, kperp)


def density_corrections(
    ops: OperatorSet, state: PlasmaState, zeta, model, m_i: float
) -> tuple[tuple[np.ndarray, np.ndarray, np.ndarray], np.ndarray]:
    """Momentum sources (f_r, f_φ, f_z) and heating Q_ζ that compensate the
    artificial particle diffusion ∇·(ζ∇n).

    Model 1 treats the diffused particles as a source carrying the local
    velocity.  Model 2 redistributes momentum without a net source; it needs a
    spatially constant ζ and has no heating term.
    """
    nn = ops.mesh.n_nodes
    zero = np.zeros(nn)
    if model is None or not np.any(zeta):
        return (zero, zero.copy(), zero.copy()), zero.copy()
    g = ops.geom
    vels = (state.vr, state.vphi, state.vz)
    dre_n, dze_n = ops.dre(state.n), ops.dze(state.n)
    if model == 1:
        zeta_e = np.broadcast_to(np.asarray(zeta, dtype=float), (ops.mesh.n_elements,))
        zeta_n = (ops.drn(g.r_e * zeta_e * dre_n) + ops.dzn(g.r_e * zeta_e * dze_n)) / g.r_n
        forces = tuple(-m_i * v * zeta_n for v in vels)
        v2 = state.vr**2 + state.vphi**2 + state.vz**2
        return forces, 0.5 * m_i * v2 * zeta_n
    if model == 2:
        if np.ndim(zeta):
            raise ValueError("correction model 2 requires a spatially constant zeta")
        lap_n = ops.lap(state.n)
        forces = []
        for v in vels:
            v_e = ops.avg(v)
            dot = dre_n * ops.dre(v) + dze_n * ops.dze(v)
            div = (ops.drn(g.r_e * v_e * dre_n) + ops.dzn(g.r_e * v_e * dze_n)) / g.r_n
            forces.append(0.5 * m_i * zeta * (ops.wn(dot) + div - v * lap_n))
        return tuple(forces), zero
    raise ValueError(f"unknown correction model {model!r}")


def stability_bounds(v_max: float, D_min: float, D_max: float, h_e: float) -> tuple[float, float]:
    """(D_min / v_max², h_e² / D_max); either is infinite when undefined."""
    adv = math.inf if v_max <= 0 else D_min / v_max**2
    diff = math.inf if D_max <= 0 else h_e**2 / D_max
    return adv, diff


def stability_dt(
    coeffs: PhysicsCoefficients,
    state: PlasmaState,
    h_e: float,
    safety: float = 0.5,
    ops: OperatorSet | None = None,
) -> float:
    """Advisory explicit time step: ``safety * min(D_min/v_max², h_e²/D_max)``.

    ``v_max`` is the largest flow speed plus the local fast magnetosonic speed;
    the magnetic part is included when ``ops`` is given.  The diffusivities
    are the configured ones together with the current resistivity range.
    """
    rho = coeffs.m_i * state.n
    c2 = coeffs.gamma * np.maximum(state.pi + state.pe, 0.0) / rho
    if ops is not None:
        B_r, B_z = poloidal_field(ops, state.psi)
        B2 = ops.wn(B_r**2 + B_z**2) + (state.f / ops.geom.r_n) ** 2
        c2 = c2 + B2 / (MU0 * rho)
    speed = np.sqrt(state.vr**2 + state.vphi**2 + state.vz**2) + np.sqrt(c2)
    eta = resistivity(state, coeffs)
    diffs = [
        coeffs.nu_num, coeffs.chi_par_e, coeffs.chi_par_i, coeffs.chi_perp_e, coeffs.chi_perp_i,
        float(np.max(coeffs.zeta)), float(eta.min()), float(eta.max()),
    ]
    positive = [d for d in diffs if d > 0]
    D_min = min(positive) if positive else 0.0
    D_max = max(diffs)
    return safety * min(stability_bounds(float(speed.max()), D_min, D_max, h_e))
