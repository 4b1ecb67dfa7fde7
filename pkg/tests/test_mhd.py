import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from axifem.diagnostics import semi_discrete_balances
from axifem.errors import NegativePressure, NonPositiveDensity, NonPositiveTemperature
from axifem.mesh import boundary_frame
from axifem.mhd import (
    E_CHARGE,
    MU0,
    BoundaryConditions,
    PhysicsCoefficients,
    PlasmaState,
    anisotropic_flux,
    apply_boundary_conditions,
    compute_rhs,
    conservation_bcs,
    density_corrections,
    heat_exchange_Qie,
    heat_flux,
    integrate_step,
    spitzer_eta,
    stability_bounds,
    stability_dt,
    step,
    viscous_force,
    viscous_heating_Qpi,
)
from axifem.mhd.samples import magnetized_state
from axifem.ops import DeltaStar0Solver

seeds = st.integers(0, 2**32 - 1)
PROPS = settings(max_examples=20, deadline=None)

CONSERVATIVE = PhysicsCoefficients(zeta=0.0, correction_model=None, equal_viscosity=True)
MODEL2 = PhysicsCoefficients(zeta=50.0, correction_model=2, equal_viscosity=True)
MODEL1 = PhysicsCoefficients(zeta=50.0, correction_model=1, equal_viscosity=True)


def random_state(mesh, seed: int) -> PlasmaState:
    """Smooth state plus 10% nodal noise; ψ = v_r = v_z = 0 on the wall."""
    rng = np.random.default_rng(seed)
    s = magnetized_state(mesh, phase=rng.uniform(0, 2 * np.pi))
    for name in ("n", "vr", "vphi", "vz", "pi", "pe", "psi", "f"):
        u = getattr(s, name)
        u *= 1.0 + 0.1 * rng.uniform(-1, 1, len(u))
    k = mesh.boundary_nodes
    s.vr[k] = s.vz[k] = s.psi[k] = 0.0
    return s


# -- closures ---------------------------------------------------------------


def test_spitzer_examples():
    np.testing.assert_allclose(spitzer_eta(np.array([100.0]), 1.0, 5000.0), [0.418], rtol=1e-12)
    assert spitzer_eta(np.array([0.1]), 1.0, 5000.0)[0] == 5000.0
    ratio = spitzer_eta(np.array([40.0]), 1.3, 5000.0) / spitzer_eta(np.array([20.0]), 1.3, 5000.0)
    np.testing.assert_allclose(ratio, 2**-1.5, rtol=1e-14)


def test_spitzer_rejects_nonpositive_temperature():
    with pytest.raises(NonPositiveTemperature) as err:
        spitzer_eta(np.array([1.0, 0.0, 2.0]), 1.0, 5000.0)
    assert err.value.node == 1


def test_heat_exchange_examples():
    np.testing.assert_allclose(heat_exchange_Qie(1e20, 100.0, 50.0, 1.0, 4.0), 9.5e5, rtol=1e-12)
    assert heat_exchange_Qie(1e20, 30.0, 30.0, 1.3, 4.0) == 0.0
    assert heat_exchange_Qie(1e20, 30.0, 10.0, 1.3, 4.0) > 0.0


def test_viscosity_vanishes_for_rest_and_rigid_rotation(rect_ops):
    m = rect_ops.mesh
    s = PlasmaState.zeros(m.n_nodes)
    s.n[:] = 1e20
    for u in viscous_force(rect_ops, s, 1.0):
        assert np.all(u == 0.0)
    assert np.all(viscous_heating_Qpi(rect_ops, s, 1.0) == 0.0)
    s.vphi = 2.0 * m.r  # ω = 2 exactly
    Pi_r, Pi_phi, Pi_z = viscous_force(rect_ops, s, 1.0)
    assert np.all(Pi_phi == 0.0)
    assert np.all(viscous_heating_Qpi(rect_ops, s, 1.0) == 0.0)


def test_viscosity_uniform_axial_flow(any_ops):
    s = PlasmaState.zeros(any_ops.mesh.n_nodes)
    s.n[:] = 1e20
    s.vz[:] = 3.0
    Pi_r, _, Pi_z = viscous_force(any_ops, s, 1.0)
    # only rounding in the derivative of r·v_z survives
    scale = 3.0 / any_ops.geom.r_n.min() / np.sqrt(any_ops.geom.s_e.min())
    assert np.abs(Pi_r).max() <= 1e-12 * scale
    assert np.abs(Pi_z).max() <= 1e-12 * scale


def test_heat_flux_cases(rect_ops):
    ops = rect_ops
    E = ops.mesh.n_elements
    T = np.full(ops.mesh.n_nodes, 7.0)
    B = np.ones(E)
    qr, qz = anisotropic_flux(ops, T, B, 0.5 * B, 3.0, 1.0)
    assert np.all(qr == 0.0) and np.all(qz == 0.0)
    T = 1.0 + 2.0 * ops.mesh.r + 5.0 * ops.mesh.z
    qr, qz = anisotropic_flux(ops, T, B, -B, 4.0, 4.0)
    np.testing.assert_allclose(qr, -4.0 * ops.dre(T))
    np.testing.assert_allclose(qz, -4.0 * ops.dze(T))
    # field along z: parallel conduction acts on ∂T/∂z only
    qr, qz = anisotropic_flux(ops, T, np.zeros(E), 0.3 * B, 10.0, 2.0)
    np.testing.assert_allclose(qz, -10.0 * 5.0, rtol=1e-12)
    np.testing.assert_allclose(qr, -2.0 * 2.0, rtol=1e-12)


def test_heat_flux_uses_species_conductivities(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    c = PhysicsCoefficients(chi_par_i=1.0, chi_perp_i=1.0)
    qr, qz = heat_flux(rect_ops, s, "i", c)
    T = s.pi / s.n
    np.testing.assert_allclose(qr, -c.n0 * rect_ops.dre(T))
    np.testing.assert_allclose(qz, -c.n0 * rect_ops.dze(T))


@pytest.mark.parametrize("model", [1, 2])
def test_density_corrections_trivial_cases(rect_ops, model):
    m = rect_ops.mesh
    s = magnetized_state(m)
    s.vr[:] = s.vz[:] = s.vphi[:] = 0.0
    (fr, fphi, fz), Q = density_corrections(rect_ops, s, 50.0, model, 6.6e-27)
    for u in (fr, fphi, fz, Q):
        assert np.all(u == 0.0)
    if model == 2:
        s = magnetized_state(m)
        s.n[:] = 1e20
        forces, Q = density_corrections(rect_ops, s, 50.0, 2, 6.6e-27)
        assert all(np.all(u == 0.0) for u in forces)


def test_density_corrections_model1_local(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    m_i = 6.6e-27
    (fr, fphi, fz), Q = density_corrections(rect_ops, s, 50.0, 1, m_i)
    zeta_n = 50.0 * rect_ops.lap(s.n)
    np.testing.assert_allclose(fr, -m_i * s.vr * zeta_n, rtol=1e-12, atol=1e-12 * np.abs(fr).max())
    v2 = s.vr**2 + s.vphi**2 + s.vz**2
    np.testing.assert_allclose(Q, 0.5 * m_i * v2 * zeta_n, rtol=1e-12, atol=1e-12 * np.abs(Q).max())


def test_model2_rejects_variable_zeta():
    with pytest.raises(ValueError):
        PhysicsCoefficients(zeta=np.array([1.0, 2.0]), correction_model=2)
    PhysicsCoefficients(zeta=np.array([1.0, 2.0]), correction_model=None)


def test_stability_bounds():
    adv, diff = stability_bounds(1e5, 50.0, 5000.0, 2e-3)
    assert math.isclose(adv, 5e-9, rel_tol=1e-12)
    assert math.isclose(diff, 8e-10, rel_tol=1e-12)
    adv, diff = stability_bounds(0.0, 50.0, 5000.0, 2e-3)
    assert adv == math.inf and math.isclose(diff, 8e-10, rel_tol=1e-12)


def test_stability_dt_is_positive_and_scales_with_safety(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    c = PhysicsCoefficients()
    dt = stability_dt(c, s, 0.05, ops=rect_ops)
    assert 0 < dt < math.inf
    assert math.isclose(stability_dt(c, s, 0.05, safety=0.25, ops=rect_ops), dt / 2)


# -- boundary conditions ----------------------------------------------------


def test_wall_pressure_example(rect_ops):
    m = rect_ops.mesh
    s = magnetized_state(m)
    s.n[m.boundary_nodes] = 1e19
    bc = BoundaryConditions(m.boundary_nodes, psi=np.zeros(len(m.boundary_nodes)), T_wall_eV=0.02)
    out = apply_boundary_conditions(s, bc, 0.0, Z=1.3)
    k = m.boundary_nodes
    np.testing.assert_allclose(out.pi[k], 1e19 * 0.02 * E_CHARGE, rtol=1e-14)
    np.testing.assert_allclose(out.pi[k], 0.032, rtol=2e-3)
    np.testing.assert_allclose(out.pe[k], 1.3 * 1e19 * 0.02 * E_CHARGE, rtol=1e-14)
    for name in ("vr", "vphi", "vz"):
        assert np.all(getattr(out, name)[k] == 0.0)
    assert np.all(out.psi[k] == 0.0)
    # interior untouched, input unmodified
    inner = ~m.boundary_mask()
    np.testing.assert_array_equal(out.vr[inner], s.vr[inner])
    assert np.any(s.vphi[k] != 0.0)


def test_time_dependent_psi_and_f_interface(rect_ops):
    m = rect_ops.mesh
    k = m.boundary_nodes
    f_nodes = k[:3]
    bc = BoundaryConditions(
        k, psi=lambda t: np.full(len(k), 2.0 * t), velocity_mode="none", T_wall_eV=None,
        f_nodes=f_nodes, f_values=np.array([1.0, 2.0, 3.0]),
    )
    s = magnetized_state(m)
    out = apply_boundary_conditions(s, bc, 0.25)
    assert out.t == 0.25
    np.testing.assert_array_equal(out.psi[k], 0.5)
    np.testing.assert_array_equal(out.f[f_nodes], [1.0, 2.0, 3.0])
    np.testing.assert_array_equal(out.f[k[3:]], s.f[k[3:]])
    np.testing.assert_array_equal(out.vphi, s.vphi)


def test_normal_zero_keeps_tangential_flow(rect_ops):
    m = rect_ops.mesh
    frame = boundary_frame(m)
    bc = BoundaryConditions(m.boundary_nodes, velocity_mode="normal-zero", frame=frame, T_wall_eV=None)
    s = magnetized_state(m)
    s.vr[:] = 1.0
    s.vz[:] = 2.0
    out = apply_boundary_conditions(s, bc)
    k = m.boundary_nodes
    idx = [frame.index_of(j) for j in k]
    normal = frame.normal[idx]
    vn = out.vr[k] * normal[:, 0] + out.vz[k] * normal[:, 1]
    np.testing.assert_allclose(vn, 0.0, atol=1e-15)
    edge = ~frame.corner[idx]
    assert np.all(np.abs(out.vr[k][edge]) + np.abs(out.vz[k][edge]) > 0.5)


def test_angular_momentum_mode_requires_zero_psi(rect_ops):
    k = rect_ops.mesh.boundary_nodes
    with pytest.raises(ValueError):
        BoundaryConditions(k, psi=np.ones(len(k)), angular_momentum_mode=True)
    bc = BoundaryConditions(k, angular_momentum_mode=True)
    assert np.all(bc.psi_values(0.0) == 0.0)


# -- right-hand side --------------------------------------------------------


def test_static_vacuum_state(perturbed_ops):
    ops = perturbed_ops
    m = ops.mesh
    k = m.boundary_nodes
    psi_b = np.zeros(m.n_nodes)
    psi_b[k] = 0.5 * m.r[k] ** 2 + 0.1 * m.z[k]
    rhs = -(ops.DeltaStar @ psi_b)
    rhs[k] = psi_b[k]
    psi = DeltaStar0Solver(ops.DeltaStar0).solve(rhs)
    n0, T = 3e20, 0.02
    s = PlasmaState.zeros(m.n_nodes)
    s.n[:] = n0
    s.pi[:] = n0 * T * E_CHARGE
    s.pe[:] = 1.3 * n0 * T * E_CHARGE
    s.psi = psi
    bc = BoundaryConditions(k, psi=psi[k], T_wall_eV=T)
    c = PhysicsCoefficients(resistivity=10.0)
    d = compute_rhs(ops, s, c, bc)
    inner = ~m.boundary_mask()
    # magnitude of Δ*ψ before cancellation
    S = abs(ops.DeltaStar) @ np.abs(psi)
    rho = c.m_i * n0
    grad = np.abs(ops.dr(psi)) + np.abs(ops.dz(psi))
    assert np.all(np.abs(d.psi[inner]) <= 1e-11 * 10.0 * S[inner])
    vscale = grad * S / (MU0 * m.r**2 * rho)
    for name in ("vr", "vz"):
        assert np.all(np.abs(getattr(d, name)[inner]) <= 1e-11 * vscale[inner])
    assert np.all(d.n == 0.0) and np.all(d.vphi == 0.0) and np.all(d.f == 0.0)
    assert np.abs(d.pi).max() <= 1e-11 * s.pi.max() and np.abs(d.pe).max() <= 1e-11 * s.pe.max()
    assert np.all(d.psi[k] == 0.0)


def test_nonpositive_density_aborts(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    s.n[17] = -1.0
    with pytest.raises(NonPositiveDensity) as err:
        compute_rhs(rect_ops, s, PhysicsCoefficients())
    assert err.value.node == 17


def test_negative_pressure_aborts(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    s.pe[5] = -1e-6 * s.pe.max()
    with pytest.raises(NegativePressure) as err:
        compute_rhs(rect_ops, s, PhysicsCoefficients())
    assert err.value.field == "pe" and err.value.node == 5


@PROPS
@given(seed=seeds, mode=st.sampled_from(["all-zero", "normal-zero"]))
def test_particle_and_flux_conservation(perturbed_ops, seed, mode):
    m = perturbed_ops.mesh
    s = random_state(m, seed)
    bc = BoundaryConditions(m.boundary_nodes, velocity_mode=mode, frame=boundary_frame(m), T_wall_eV=None)
    s = apply_boundary_conditions(s, bc)
    src = np.random.default_rng(seed).uniform(0, 1e3, m.n_nodes)
    R = semi_discrete_balances(perturbed_ops, s, MODEL2, bc, f_source=src)
    assert R.particles.relative <= 1e-12
    assert R.toroidal_flux.relative <= 1e-12
    g = perturbed_ops.geom
    assert R.flux_input_rate == pytest.approx(math.fsum(g.dV_n * src / g.r_n**2) / (2 * math.pi), rel=1e-14)


@PROPS
@given(seed=seeds, coeffs=st.sampled_from([CONSERVATIVE, MODEL1]))
def test_angular_momentum_conservation(perturbed_ops, seed, coeffs):
    m = perturbed_ops.mesh
    s = random_state(m, seed)
    R = semi_discrete_balances(perturbed_ops, s, coeffs, conservation_bcs(m))
    assert R.angular_momentum.relative <= 1e-11
    assert R.angular_momentum.scale > 0


@PROPS
@given(seed=seeds, coeffs=st.sampled_from([CONSERVATIVE, MODEL2]))
def test_energy_brackets(perturbed_ops, seed, coeffs):
    m = perturbed_ops.mesh
    s = random_state(m, seed)
    R = semi_discrete_balances(perturbed_ops, s, coeffs, conservation_bcs(m))
    assert R.energy.relative <= 1e-11
    for name, b in R.brackets.items():
        assert b.relative <= 1e-11, name
    assert all(R.brackets[k].scale > 0 for k in ("psi_ohmic", "f_ohmic", "conduction", "viscous", "phi_lorentz"))


@PROPS
@given(seed=seeds)
def test_model2_density_corrections_cancel(perturbed_ops, seed):
    m = perturbed_ops.mesh
    s = random_state(m, seed)
    R = semi_discrete_balances(perturbed_ops, s, MODEL2, conservation_bcs(m))
    for comp in ("vr", "vz"):
        assert R.momentum_corrections[comp].relative <= 1e-11
    for comp in ("vr", "vphi", "vz"):
        assert R.energy_corrections[comp].relative <= 1e-11
    assert R.brackets["density_diffusion"].relative <= 1e-11


def test_unequal_viscosity_is_an_energy_sink(perturbed_ops):
    m = perturbed_ops.mesh
    s = random_state(m, 3)
    c = PhysicsCoefficients(zeta=0.0, correction_model=None, nu_num=700.0, nu_phys=410.0)
    R = semi_discrete_balances(perturbed_ops, s, c, conservation_bcs(m))
    assert R.brackets["viscous"].value < 0
    # the deficit is the viscous heating that μ_num would have produced
    g = perturbed_ops.geom
    Q_num = viscous_heating_Qpi(perturbed_ops, s, c.mu_num)
    Q_phys = viscous_heating_Qpi(perturbed_ops, s, c.mu_phys)
    np.testing.assert_allclose(R.brackets["viscous"].value, -math.fsum(g.dV_n * (Q_num - Q_phys)), rtol=1e-10)


def test_zero_zeta_gives_no_corrections(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    R = semi_discrete_balances(rect_ops, s, PhysicsCoefficients(zeta=0.0), conservation_bcs(rect_ops.mesh))
    for comp in ("vr", "vphi", "vz"):
        assert np.all(R.terms.terms[comp]["correction"] == 0.0)
    assert np.all(R.terms.terms["pi"]["correction"] == 0.0)


# -- time stepping ----------------------------------------------------------


def test_euler_diffusion_toy(rect_ops):
    m = rect_ops.mesh
    s = PlasmaState.zeros(m.n_nodes)
    s.n = 1e20 * (1.0 + 0.5 * np.exp(-((m.r - 0.7) ** 2 + (m.z - 0.3) ** 2) / 0.01))
    s.pi[:] = s.pe[:] = 1.0
    s.psi[:] = 0.0
    c = PhysicsCoefficients(zeta=50.0, correction_model=None, heat_exchange=False)
    dt = 1e-6
    out = step(rect_ops, s, dt, "euler", c)
    np.testing.assert_allclose(out.n, s.n + dt * 50.0 * rect_ops.lap(s.n), rtol=1e-14)
    assert out.t == dt


def _psi_diffusion(ops, eta):
    def derivative(s):
        d = PlasmaState.zeros(s.n_nodes, s.t)
        d.psi = eta * ops.delta_star(s.psi)
        d.psi[ops.mesh.boundary_nodes] = 0.0
        return d

    return derivative


def _run(ops, s, dt, n_steps, scheme, derivative):
    for _ in range(n_steps):
        s = integrate_step(s, dt, scheme, derivative)
    return s


def _psi_problem(rect_ops):
    m = rect_ops.mesh
    s = PlasmaState.zeros(m.n_nodes)
    s.psi = np.sin(np.pi * (m.r - 0.2)) * np.sin(np.pi * m.z / 0.6)
    return s, _psi_diffusion(rect_ops, 1.0)


def test_rk2_second_order(rect_ops):
    s, deriv = _psi_problem(rect_ops)
    T, dt = 2e-4, 2e-5
    runs = [_run(rect_ops, s, dt / 2**k, 10 * 2**k, "rk2", deriv).psi for k in range(3)]
    e1 = np.abs(runs[0] - runs[1]).max()
    e2 = np.abs(runs[1] - runs[2]).max()
    order = math.log2(e1 / e2)
    assert 1.8 <= order <= 2.2, order


def test_rk4_matches_rk2_to_third_order(rect_ops):
    s, deriv = _psi_problem(rect_ops)
    diffs = []
    for dt in (2e-5, 1e-5):
        n = int(round(2e-4 / dt))
        a = _run(rect_ops, s, dt, n, "rk2", deriv).psi
        b = _run(rect_ops, s, dt, n, "rk4", deriv).psi
        diffs.append(np.abs(a - b).max())
    # the difference is rk2's error, which is O(dt²) globally and O(dt³) per step
    assert diffs[0] / diffs[1] >= 3.5
    fine = _run(rect_ops, s, 2.5e-6, 80, "rk4", deriv).psi
    assert np.abs(_run(rect_ops, s, 1e-5, 20, "rk4", deriv).psi - fine).max() < 0.01 * diffs[1]


def test_step_reapplies_boundary_conditions(rect_ops):
    m = rect_ops.mesh
    k = m.boundary_nodes
    bc = BoundaryConditions(k, psi=lambda t: np.full(len(k), 1e-3 * (1 + t)), T_wall_eV=0.02)
    s = apply_boundary_conditions(magnetized_state(m), bc, 0.0, Z=1.3)
    c = PhysicsCoefficients()
    for scheme in ("euler", "rk2", "rk4"):
        out = step(rect_ops, s, 1e-9, scheme, c, bc)
        np.testing.assert_array_equal(out.psi[k], 1e-3 * (1 + 1e-9))
        np.testing.assert_array_equal(out.vr[k], 0.0)
        np.testing.assert_allclose(out.pi[k], out.n[k] * 0.02 * E_CHARGE, rtol=1e-15)


def test_step_rejects_bad_arguments(rect_ops):
    s = magnetized_state(rect_ops.mesh)
    with pytest.raises(ValueError):
        step(rect_ops, s, 0.0, "rk2", PhysicsCoefficients())
    with pytest.raises(ValueError):
        step(rect_ops, s, 1e-9, "leapfrog", PhysicsCoefficients())
