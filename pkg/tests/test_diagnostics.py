import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from axifem.diagnostics import (
    RECORD_COLUMNS,
    Chord,
    Probe,
    TimeSeriesWriter,
    chord_average,
    closed_flux_extrema,
    conserved_quantities,
    line_average,
    probe_signal,
    read_timeseries,
    toroidal_flux,
    write_snapshot,
)
from axifem.errors import ChordOutsideMesh
from axifem.mesh import BoundaryFrame, boundary_frame, generate_rect_mesh
from axifem.mhd import PhysicsCoefficients, PlasmaState
from axifem.mhd.state import E_CHARGE
from axifem.ops import operators_for

from conftest import hand_mesh, mapped_mesh


COEFFS = PhysicsCoefficients()


def test_zero_state_gives_zero_record():
    ops = operators_for(hand_mesh())
    rec = conserved_quantities(ops, PlasmaState.zeros(4), COEFFS)
    assert rec.as_row()[1:] == [0.0] * 7


def test_hand_mesh_particle_count_and_flux():
    ops = operators_for(hand_mesh())
    s = PlasmaState.zeros(4)
    s.n[:] = 9e20
    rec = conserved_quantities(ops, s, COEFFS)
    assert rec.N == pytest.approx(9e20 * (2 * math.pi / 3) * 4.5, rel=1e-14)
    volume = math.pi * (2**2 - 1**2) * 1.0
    assert toroidal_flux(ops, ops.mesh.r**2) == pytest.approx(volume / (2 * math.pi), rel=1e-14)


def test_energy_partition_sums():
    ops = operators_for(generate_rect_mesh((0.2, 0.6), (0.0, 0.4), 0.1))
    rng = np.random.default_rng(3)
    s = PlasmaState(*(rng.uniform(0.5, 1.5, ops.mesh.n_nodes) for _ in range(8)))
    rec = conserved_quantities(ops, s, COEFFS)
    assert rec.U_total == rec.U_K + rec.U_Th + rec.U_M
    assert min(rec.U_K, rec.U_Th, rec.U_M) > 0


@settings(max_examples=25, deadline=None)
@given(st.floats(-1e3, 1e3).filter(lambda a: abs(a) > 1e-3), st.integers(0, 2**31))
def test_linear_in_n_and_f(a, seed):
    ops = operators_for(hand_mesh())
    rng = np.random.default_rng(seed)
    s = PlasmaState.zeros(4)
    s.n[:] = rng.uniform(1, 2, 4)
    s.f[:] = rng.uniform(-1, 1, 4)
    rec = conserved_quantities(ops, s, COEFFS)
    s2 = s.copy()
    s2.n *= a
    s2.f *= a
    rec2 = conserved_quantities(ops, s2, COEFFS)
    assert rec2.N == pytest.approx(a * rec.N, rel=1e-14)
    assert rec2.Phi == pytest.approx(a * rec.Phi, rel=1e-13, abs=1e-300)


# probes


@pytest.fixture(scope="module")
def box_ops():
    return operators_for(generate_rect_mesh((0.2, 1.2), (0.0, 0.6), 0.05))


def test_probe_uniform_axial_field(box_ops):
    m = box_ops.mesh
    s = PlasmaState.zeros(m.n_nodes)
    s.psi[:] = 0.5 * m.r**2
    frame = boundary_frame(m)
    p = Probe.snapped(m, "right", (1.21, 0.31))
    assert p.snap_distance <= 0.05
    assert m.r[p.node] == pytest.approx(1.2)
    np.testing.assert_allclose(frame.tangent[frame.index_of(p.node)], [0.0, 1.0], atol=1e-14)
    assert probe_signal(box_ops, s, p, frame) == pytest.approx(1.0, abs=0.05)
    flipped = BoundaryFrame(frame.nodes, -frame.tangent, -frame.normal, frame.corner)
    assert probe_signal(box_ops, s, p, flipped) == -probe_signal(box_ops, s, p, frame)


def test_probe_toroidal_channel(box_ops):
    m = box_ops.mesh
    s = PlasmaState.zeros(m.n_nodes)
    p = Probe.snapped(m, "tor", (0.5, 0.0), channel="toroidal")
    frame = boundary_frame(m)
    assert probe_signal(box_ops, s, p, frame) == 0.0
    s.f[:] = 0.3
    assert probe_signal(box_ops, s, p, frame) == pytest.approx(0.3 / m.r[p.node], rel=1e-15)
    with pytest.raises(ValueError):
        Probe.snapped(m, "x", (0.5, 0.0), channel="radial")


def test_probe_error_shrinks_with_h():
    errs = []
    for h in (0.1, 0.05, 0.025):
        m = generate_rect_mesh((0.2, 1.2), (0.0, 0.6), h)
        ops = operators_for(m)
        s = PlasmaState.zeros(m.n_nodes)
        s.psi[:] = 0.5 * m.r**2
        p = Probe.snapped(m, "right", (1.2, 0.3))
        errs.append(abs(probe_signal(ops, s, p, boundary_frame(m)) - 1.0))
    assert errs[0] > errs[1] > errs[2]


# chords


def test_chord_uniform_and_linear():
    m = generate_rect_mesh((0.5, 1.0), (0.0, 1.0), 0.1)
    s = PlasmaState.zeros(m.n_nodes)
    s.n[:] = 2.0
    s.pi[:] = 2.0 * 30.0 * E_CHARGE
    chord = Chord("c", (0.73, 0.0), (0.73, 1.0))
    assert chord_average(m, s, chord, Z=1.3) == pytest.approx(2.6, rel=1e-14)
    assert chord_average(m, s, Chord("t", (0.5, 0.2), (1.0, 0.9), "T_i")) == pytest.approx(30.0, rel=1e-13)
    assert line_average(m, m.z, (0.61, 0.0), (0.61, 1.0)) == pytest.approx(0.5, rel=1e-14)


def test_chord_converges_to_line_integral():
    def field(r, z):
        return np.sin(2 * r) * np.exp(z)

    a, b = np.array([0.55, 0.05]), np.array([1.4, 0.93])
    exact = quad(lambda t: field(*(a + t * (b - a))), 0, 1, epsabs=1e-14)[0]
    errs = []
    for h in (0.1, 0.05, 0.025):
        m = mapped_mesh(h)
        errs.append(abs(line_average(m, field(m.r, m.z), a, b) - exact))
    orders = [math.log2(errs[i] / errs[i + 1]) for i in range(2)]
    assert min(orders) >= 0.9, (errs, orders)


def test_chord_outside_mesh():
    m = generate_rect_mesh((0.5, 1.0), (0.0, 1.0), 0.1)
    with pytest.raises(ChordOutsideMesh):
        line_average(m, m.z, (0.4, 0.5), (0.9, 0.5))
    with pytest.raises(ChordOutsideMesh):
        line_average(m, m.z, (2.0, 0.5), (3.0, 0.5))


def test_chord_spans_concave_gap():
    from axifem.mesh import submesh

    full = generate_rect_mesh((0.5, 1.0), (0.0, 1.0), 0.1)
    rc = full.r[full.elements].mean(axis=1)
    zc = full.z[full.elements].mean(axis=1)
    u_shape, _ = submesh(full, ~((rc > 0.6) & (rc < 0.9) & (zc > 0.5)))
    with pytest.raises(ChordOutsideMesh):
        line_average(u_shape, u_shape.z, (0.55, 0.8), (0.95, 0.8))
    assert line_average(u_shape, u_shape.z, (0.55, 0.3), (0.95, 0.3)) == pytest.approx(0.3)


# closed flux


def test_closed_flux_detector():
    m = generate_rect_mesh((0.2, 1.0), (0.0, 0.8), 0.025)
    r, z = m.r, m.z
    o_point = np.exp(-((r - 0.6) ** 2 + (z - 0.4) ** 2) / 0.04)
    assert len(closed_flux_extrema(m, o_point)) == 1
    assert len(closed_flux_extrema(m, -o_point)) == 1
    assert closed_flux_extrema(m, o_point, region=z > 0.5) == []
    # monotone field: no interior extremum
    assert closed_flux_extrema(m, r**2) == []
    # ridge that runs into the wall is open
    ridge = np.exp(-((r - 0.6) ** 2) / 0.01)
    assert closed_flux_extrema(m, ridge + 1e-3 * z) == []


def test_closed_flux_ignores_single_node_noise():
    m = generate_rect_mesh((0.2, 1.0), (0.0, 0.8), 0.025)
    psi = m.r**2
    k = int(np.argmin((m.r - 0.6) ** 2 + (m.z - 0.4) ** 2))
    psi[k] += 0.5
    assert closed_flux_extrema(m, psi) == []
    assert closed_flux_extrema(m, psi, min_nodes=1) == [k]


# output files


def _write_series(path):
    ops = operators_for(hand_mesh())
    s = PlasmaState.zeros(4)
    s.n[:] = [1.0, 2.0, 3.0, 4.0]
    with TimeSeriesWriter(path, ["p1"], ["c1"]) as w:
        for k in range(3):
            s.t = k * 1e-7
            w.write(conserved_quantities(ops, s, COEFFS), [0.1 * k], [1.0 / 3.0])


def test_timeseries_is_reproducible(tmp_path):
    _write_series(tmp_path / "a.csv")
    _write_series(tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    data = read_timeseries(tmp_path / "a.csv")
    assert list(data) == list(RECORD_COLUMNS) + ["p1", "c1"]
    np.testing.assert_array_equal(data["t"], [0.0, 1e-7, 2e-7])
    assert data["c1"][0] == 1.0 / 3.0


def test_snapshot_layout(tmp_path):
    s = PlasmaState.zeros(3)
    s.psi[:] = [0.1, 0.2, 0.3]
    s.t = 2.5e-6
    d = write_snapshot(tmp_path, s, 4)
    assert d.name == "snapshot_00004"
    lines = (d / "psi.csv").read_text().splitlines()
    assert lines == ["node_index,value", "0,0.1", "1,0.2", "2,0.3"]
    import json

    manifest = json.loads((d / "manifest.json").read_text())
    assert manifest["t"] == 2.5e-6 and "f" in manifest["fields"]
