import math

import numpy as np
import pytest

from axifem.mesh import WallGeometry, generate_rect_mesh, split_domain
from axifem.vacuum import (
    CoupledDomain,
    VacuumSolver,
    WallFluxGeometry,
    couple_step,
    flux_constant_fI,
    plasma_wall_flux,
    solve_vacuum_psi,
)


@pytest.fixture(scope="module")
def domain():
    m = generate_rect_mesh((1.0, 2.0), (0.0, 1.0), 0.1)
    return CoupledDomain(m, split_domain(m, 1.7, WallGeometry(1.0, 1.7, 2.0)))


def test_constant_and_zero_boundary():
    solver = VacuumSolver(generate_rect_mesh((0.5, 1.0), (0.0, 0.4), 0.05))
    nb = len(solver.boundary_nodes)
    np.testing.assert_allclose(solve_vacuum_psi(solver, np.full(nb, 0.3)), 0.3, rtol=1e-10)
    assert np.all(solve_vacuum_psi(solver, np.zeros(nb)) == 0.0)
    with pytest.raises(ValueError):
        solver.solve(np.zeros(nb + 1))


def test_r_squared_converges():
    errs = []
    for h in (0.1, 0.05, 0.025):
        m = generate_rect_mesh((0.5, 1.5), (0.0, 1.0), h)
        m = _warp(m)
        solver = VacuumSolver(m)
        exact = m.r**2
        psi = solver.solve(exact[m.boundary_nodes])
        errs.append(np.abs(psi - exact).max())
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 0.9, (errs, orders)


def _warp(m):
    from axifem.mesh import Mesh

    x = m.nodes.copy()
    s, t = x[:, 0] - 0.5, x[:, 1]
    x[:, 0] = 0.5 + s + 0.15 * s * (1 - s) * np.sin(np.pi * t)
    x[:, 1] = t + 0.1 * t * (1 - t) * np.cos(np.pi * s)
    return Mesh.from_arrays(x, m.elements)


def test_couple_step_zero(domain):
    coil = np.zeros(len(domain.combined.boundary_nodes))
    psi_p, psi_v = couple_step(np.zeros(domain.split.plasma_mesh.n_nodes), domain, coil)
    assert np.all(psi_p == 0.0) and np.all(psi_v == 0.0)


def test_couple_step_fixed_point_on_uniform_field(domain):
    c = domain.combined
    coil = 0.5 * c.r[c.boundary_nodes] ** 2
    psi_p, psi_v = domain.initial_vacuum(coil)
    p2, v2 = couple_step(psi_p, domain, coil)
    np.testing.assert_allclose(p2, psi_p, rtol=0, atol=1e-10 * np.abs(psi_p).max())
    np.testing.assert_allclose(v2, psi_v, rtol=0, atol=1e-10 * np.abs(psi_v).max())
    # and idempotent when repeated
    p3, v3 = couple_step(p2, domain, coil)
    np.testing.assert_allclose(p3, p2, rtol=0, atol=1e-10 * np.abs(psi_p).max())


def test_couple_step_sequence(domain):
    """Plasma outer column receives the vacuum solution driven by the plasma's
    own values on the insulator's inner column."""
    sp_ = domain.split
    c = domain.combined
    coil = 0.1 + 0.0 * c.r[c.boundary_nodes]
    psi_p = np.full(sp_.plasma_mesh.n_nodes, 0.1)
    psi_p[domain.inner_from_plasma] = 0.3
    p2, v2 = couple_step(psi_p, domain, coil)
    # the column's end nodes lie on the outer boundary and keep the coil value
    np.testing.assert_array_equal(v2[domain.inner_insulator][1:-1], 0.3)
    np.testing.assert_array_equal(v2[domain.inner_insulator][[0, -1]], 0.1)
    np.testing.assert_array_equal(p2[domain.outer_plasma], v2[domain.outer_from_insulator])
    mid = ~np.isin(np.arange(len(domain.outer_plasma)), [0, len(domain.outer_plasma) - 1])
    assert np.all((p2[domain.outer_plasma][mid] > 0.1) & (p2[domain.outer_plasma][mid] < 0.3))


def test_plasma_boundary_values(domain):
    c = domain.combined
    coil = c.z[c.boundary_nodes] + 2.0
    psi_p, psi_v = domain.initial_vacuum(coil)
    vals = domain.plasma_boundary_values(coil, psi_v)
    np.testing.assert_allclose(vals, psi_p[domain.split.plasma_mesh.boundary_nodes], rtol=1e-12)


def test_fI_examples():
    wall = WallFluxGeometry(L_ins=0.07, L_int=0.03, interface_nodes=np.array([1]), weights=np.array([0.01, 0.5]))
    assert flux_constant_fI(np.array([1.0, 0.0]), wall) == pytest.approx(-0.1, rel=1e-14)
    assert flux_constant_fI(np.zeros(2), wall) == 0.0
    assert flux_constant_fI(np.array([0.0, 5.0]), wall) == 0.0


def test_flux_closure(domain):
    ops = domain.plasma_ops
    wall = WallFluxGeometry.from_ops(ops, domain.interface_nodes, domain.split.wall)
    assert wall.L_ins == pytest.approx(math.log(2.0 / 1.7))
    rng = np.random.default_rng(0)
    f = rng.uniform(-1, 1, ops.mesh.n_nodes)
    fI = flux_constant_fI(f, wall)
    f[domain.interface_nodes] = fI
    total = plasma_wall_flux(f, fI, wall)
    scale = math.fsum(np.abs(f) * wall.weights)
    assert abs(total) <= 1e-12 * scale
