"""Conserved quantities, semi-discrete balance residuals and synthetic
diagnostics (boundary probes, line-of-sight chord averages)."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import ChordOutsideMesh
from .mesh import BoundaryFrame, Mesh
from .mhd.closures import density_corrections, poloidal_field
from .mhd.rhs import RhsTerms, compute_terms
from .mhd.state import E_CHARGE, MU0, FIELDS, BoundaryConditions, PhysicsCoefficients, PlasmaState
from .ops import OperatorSet


def _fsum(x: np.ndarray) -> float:
    return math.fsum(np.asarray(x, dtype=float).ravel())


# ---------------------------------------------------------------------------
# conserved quantities


@dataclass(frozen=True)
class ConservedRecord:
    t: float
    N: float
    Phi: float
    P_phi: float
    U_K: float
    U_Th: float
    U_M: float
    U_total: float

    def as_row(self) -> list[float]:
        return [self.t, self.N, self.Phi, self.P_phi, self.U_K, self.U_Th, self.U_M, self.U_total]


RECORD_COLUMNS = ("t", "N", "Phi", "P_phi", "U_K", "U_Th", "U_M", "U_total")


def toroidal_flux(ops: OperatorSet, f: np.ndarray) -> float:
    """Φ = (1/2π) dVᵀ(f/r²), i.e. Σ f s/(3r)."""
    g = ops.geom
    return _fsum(g.dV_n * f / g.r_n**2) / (2 * math.pi)


def magnetic_energy(ops: OperatorSet, psi: np.ndarray, f: np.ndarray) -> float:
    g = ops.geom
    tor = _fsum(g.dV_n * f**2 / g.r_n**2)
    pol = _fsum(g.dV_e * (ops.dre(psi) ** 2 + ops.dze(psi) ** 2) / g.r_e**2)
    return (tor + pol) / (2 * MU0)


def conserved_quantities(ops: OperatorSet, state: PlasmaState, coeffs: PhysicsCoefficients) -> ConservedRecord:
    g = ops.geom
    dV = g.dV_n
    m_i = coeffs.m_i
    N = _fsum(dV * state.n)
    P_phi = m_i * _fsum(dV * state.n * g.r_n * state.vphi)
    v2 = state.vr**2 + state.vphi**2 + state.vz**2
    U_K = 0.5 * m_i * _fsum(dV * state.n * v2)
    U_Th = _fsum(dV * (state.pi + state.pe)) / (coeffs.gamma - 1.0)
    U_M = magnetic_energy(ops, state.psi, state.f)
    return ConservedRecord(
        t=state.t, N=N, Phi=toroidal_flux(ops, state.f), P_phi=P_phi,
        U_K=U_K, U_Th=U_Th, U_M=U_M, U_total=U_K + U_Th + U_M,
    )


# ---------------------------------------------------------------------------
# semi-discrete balances

# pairs of RHS terms whose energy contributions cancel under the conservation
# boundary conditions; each entry lists (field, term) contributions
ENERGY_BRACKETS: dict[str, tuple[tuple[str, str], ...]] = {
    "kinetic_advection": (
        ("n", "adv"), ("vr", "grad_ke"), ("vz", "grad_ke"), ("vr", "vortex"), ("vz", "vortex"),
        ("vr", "centrifugal"), ("vz", "centrifugal"), ("vphi", "adv"),
    ),
    "compression": (
        ("vr", "pressure"), ("vz", "pressure"),
        ("pi", "adv"), ("pi", "compression"), ("pe", "adv"), ("pe", "compression"),
    ),
    "psi_lorentz": (("vr", "lorentz_psi"), ("vz", "lorentz_psi"), ("psi", "adv")),
    "f_lorentz": (("vr", "lorentz_f"), ("vz", "lorentz_f"), ("f", "adv")),
    "phi_lorentz": (("vphi", "lorentz"), ("f", "dynamo")),
    "psi_ohmic": (("pe", "ohmic_tor"), ("psi", "resistive")),
    "f_ohmic": (("pe", "ohmic_pol"), ("f", "resistive")),
    "conduction": (("pi", "conduction"), ("pe", "conduction")),
    "viscous": (("vr", "viscous"), ("vz", "viscous"), ("vphi", "viscous"), ("pi", "viscous")),
    "exchange": (("pi", "exchange"), ("pe", "exchange")),
    "density_diffusion": (
        ("n", "diff"), ("vr", "correction"), ("vz", "correction"), ("vphi", "correction"), ("pi", "correction"),
    ),
}


def energy_density_rate(
    ops: OperatorSet, state: PlasmaState, coeffs: PhysicsCoefficients, name: str, rate: np.ndarray
) -> np.ndarray:
    """Per-node (or per-element for ψ) contributions to dU_total/dt from a
    time derivative ``rate`` of field ``name``; their sum is the power."""
    g = ops.geom
    dV = g.dV_n
    if name == "n":
        v2 = state.vr**2 + state.vphi**2 + state.vz**2
        return dV * 0.5 * coeffs.m_i * v2 * rate
    if name in ("vr", "vphi", "vz"):
        return dV * coeffs.m_i * state.n * getattr(state, name) * rate
    if name in ("pi", "pe"):
        return dV * rate / (coeffs.gamma - 1.0)
    if name == "f":
        return dV * state.f * rate / (MU0 * g.r_n**2)
    if name == "psi":
        grad = ops.dre(state.psi) * ops.dre(rate) + ops.dze(state.psi) * ops.dze(rate)
        return g.dV_e * grad / (MU0 * g.r_e**2)
    raise KeyError(name)


@dataclass(frozen=True)
class Balance:
    """A rate that should vanish, with a magnitude to measure it against.

    ``scale`` is the largest L1 norm among the local contributions of the
    parts, so a part that is itself a full divergence still sets the scale.
    """

    value: float
    scale: float

    @property
    def relative(self) -> float:
        return abs(self.value) / self.scale if self.scale > 0 else abs(self.value)


def _balance(parts: Iterable[np.ndarray]) -> Balance:
    parts = [np.asarray(p, dtype=float) for p in parts]
    value = math.fsum(_fsum(p) for p in parts)
    return Balance(value, max((_fsum(np.abs(p)) for p in parts), default=0.0))


@dataclass
class BalanceReport:
    particles: Balance
    toroidal_flux: Balance
    angular_momentum: Balance
    energy: Balance
    brackets: dict[str, Balance]
    momentum_corrections: dict[str, Balance]
    energy_corrections: dict[str, Balance]
    flux_input_rate: float
    energy_input_rate: float
    terms: RhsTerms = field(repr=False)


def semi_discrete_balances(
    ops: OperatorSet,
    state: PlasmaState,
    coeffs: PhysicsCoefficients,
    bc: Optional[BoundaryConditions] = None,
    f_source: Optional[np.ndarray] = None,
) -> BalanceReport:
    """Integrated rates of change of N, Φ, P_φ and U_total, each split into the
    contributing terms, plus the energy brackets individually.

    The toroidal-flux and energy balances have the external source's input
    rate subtracted, so every returned value should vanish.
    """
    T = compute_terms(ops, state, coeffs, bc, f_source)
    g = ops.geom
    dV, r = g.dV_n, g.r_n
    m_i = coeffs.m_i

    particles = _balance(dV * u for u in T.terms["n"].values())
    flux_parts = {k: dV * u / r**2 / (2 * math.pi) for k, u in T.terms["f"].items()}
    flux_input = _fsum(flux_parts.pop("source"))
    toroidal = _balance(list(flux_parts.values()))

    ang = [m_i * dV * r * state.vphi * u for u in T.terms["n"].values()]
    ang += [m_i * dV * state.n * r * u for u in T.terms["vphi"].values()]
    angular = _balance(ang)

    contrib = {
        (name, k): energy_density_rate(ops, state, coeffs, name, u)
        for name in FIELDS
        for k, u in T.terms[name].items()
    }
    energy_input = _fsum(contrib.pop(("f", "source")))
    energy = _balance(contrib.values())
    brackets = {b: _balance(contrib[key] for key in keys) for b, keys in ENERGY_BRACKETS.items()}

    # density diffusion together with its momentum/energy corrections
    # (raw forces: the wall velocity condition is a separate momentum exchange)
    forces, _ = density_corrections(ops, state, coeffs.zeta, coeffs.correction_model, m_i)
    zeta_n = compute_terms(ops, state, coeffs, None).terms["n"]["diff"] if bc is not None else T.terms["n"]["diff"]
    mom, en = {}, {}
    for comp, force in zip(("vr", "vphi", "vz"), forces):
        v = getattr(state, comp)
        mom[comp] = _balance([m_i * dV * v * zeta_n, dV * force])
        en[comp] = _balance([0.5 * m_i * dV * v**2 * zeta_n, dV * v * force])
    return BalanceReport(
        particles=particles, toroidal_flux=toroidal, angular_momentum=angular, energy=energy,
        brackets=brackets, momentum_corrections=mom, energy_corrections=en,
        flux_input_rate=flux_input, energy_input_rate=energy_input, terms=T,
    )


# ---------------------------------------------------------------------------
# synthetic diagnostics


@dataclass(frozen=True)
class Probe:
    """Magnetic probe snapped to the nearest boundary node."""

    name: str
    location: tuple[float, float]
    node: int
    snap_distance: float
    channel: str = "poloidal"

    @classmethod
    def snapped(cls, mesh: Mesh, name: str, location, channel: str = "poloidal") -> "Probe":
        if channel not in ("poloidal", "toroidal"):
            raise ValueError(f"unknown probe channel {channel!r}")
        k = mesh.boundary_nodes
        d = np.hypot(mesh.r[k] - location[0], mesh.z[k] - location[1])
        i = int(np.argmin(d))
        return cls(name, (float(location[0]), float(location[1])), int(k[i]), float(d[i]), channel)


def nodal_poloidal_field(ops: OperatorSet, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    B_r, B_z = poloidal_field(ops, psi)
    return ops.wn(B_r), ops.wn(B_z)


def probe_signal(ops: OperatorSet, state: PlasmaState, probe: Probe, frame: BoundaryFrame) -> float:
    """Tangential poloidal field or B_φ = f/r at the probe node (T)."""
    k = probe.node
    if probe.channel == "toroidal":
        return float(state.f[k] / ops.geom.r_n[k])
    B_r, B_z = nodal_poloidal_field(ops, state.psi)
    t = frame.tangent[frame.index_of(k)]
    return float(t[0] * B_r[k] + t[1] * B_z[k])


@dataclass(frozen=True)
class Chord:
    """Straight line of sight between two points in the (r, z) plane."""

    name: str
    start: tuple[float, float]
    end: tuple[float, float]
    quantity: str = "n_e"

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])


def _segment_intervals(mesh: Mesh, p0: np.ndarray, p1: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Parameter interval [lo, hi] ⊂ [0, 1] of the segment inside each element
    (empty intervals have lo > hi)."""
    X = mesh.nodes[mesh.elements]  # (E, 3, 2)
    d = p1 - p0
    lo = np.zeros(len(X))
    hi = np.ones(len(X))
    scale = np.abs(X).max() + np.abs(d).max()
    eps = 1e-12 * scale
    for a in range(3):
        A, B = X[:, a], X[:, (a + 1) % 3]
        e = B - A
        # inside of a CCW triangle: cross(e, p - A) >= 0
        c0 = e[:, 0] * (p0[1] - A[:, 1]) - e[:, 1] * (p0[0] - A[:, 0]) + eps * np.hypot(e[:, 0], e[:, 1])
        c1 = e[:, 0] * d[1] - e[:, 1] * d[0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tcut = -c0 / c1
        inc = c1 > 0
        dec = c1 < 0
        lo = np.where(inc, np.maximum(lo, tcut), lo)
        hi = np.where(dec, np.minimum(hi, tcut), hi)
        lo = np.where((c1 == 0) & (c0 < 0), 2.0, lo)
    return lo, hi, np.flatnonzero(lo <= hi)


def _interpolate(mesh: Mesh, element: int, point: np.ndarray, u: np.ndarray) -> float:
    tri = mesh.elements[element]
    X = mesh.nodes[tri]
    T = np.column_stack([X[1] - X[0], X[2] - X[0]])
    l1, l2 = np.linalg.solve(T, point - X[0])
    w = np.array([1.0 - l1 - l2, l1, l2])
    return float(w @ u[tri])


def line_average(mesh: Mesh, u: np.ndarray, start, end) -> float:
    """(1/L)∫ u dl along a segment, exact for the piecewise-linear field."""
    p0, p1 = np.asarray(start, dtype=float), np.asarray(end, dtype=float)
    lo, hi, hit = _segment_intervals(mesh, p0, p1)
    if not len(hit):
        raise ChordOutsideMesh(f"chord {tuple(start)} -> {tuple(end)} is not covered by the mesh")
    ivals = sorted(zip(lo[hit], hi[hit], hit))
    reach = 0.0
    tol = 1e-9
    for a, b, _ in ivals:
        if a > reach + tol:
            break
        reach = max(reach, b)
    if ivals[0][0] > tol or reach < 1.0 - tol:
        raise ChordOutsideMesh(f"chord {tuple(start)} -> {tuple(end)} is not covered by the mesh")
    ts = np.unique(np.clip(np.concatenate([[0.0, 1.0], lo[hit], hi[hit]]), 0.0, 1.0))
    vals = np.empty(len(ts))
    for i, t in enumerate(ts):
        # element whose interval contains t (any will do; the field is continuous)
        j = next(e for a, b, e in ivals if a - tol <= t <= b + tol)
        vals[i] = _interpolate(mesh, j, p0 + t * (p1 - p0), u)
    # trapezoid on the breakpoints, which is exact within each element
    return float(math.fsum(0.5 * (vals[1:] + vals[:-1]) * np.diff(ts)))


def chord_field(state: PlasmaState, quantity: str, Z: float) -> np.ndarray:
    if quantity == "n_e":
        return Z * state.n
    if quantity == "T_i":
        return state.pi / state.n / E_CHARGE
    if quantity == "n":
        return state.n
    raise ValueError(f"unknown chord quantity {quantity!r}")


def chord_average(mesh: Mesh, state: PlasmaState, chord: Chord, Z: float = 1.0) -> float:
    return line_average(mesh, chord_field(state, chord.quantity, Z), chord.start, chord.end)


# ---------------------------------------------------------------------------
# flux-surface topology


def closed_flux_extrema(
    mesh: Mesh,
    psi: np.ndarray,
    depth: float = 0.05,
    min_nodes: int = 4,
    region: Optional[np.ndarray] = None,
) -> list[int]:
    """Interior nodes at which ψ (or -ψ) has a strict local extremum whose
    neighbourhood {ψ within depth·max|ψ| of the extremum} stays clear of the
    boundary.  Such an extremum is the magnetic axis of closed flux surfaces.

    The neighbourhood must hold at least ``min_nodes`` nodes so that single
    node grid noise is not reported.  ``region`` optionally restricts the
    candidate extrema to a boolean node mask.
    """
    scale = float(np.max(np.abs(psi)))
    if scale == 0.0:
        return []
    edges = mesh.edges()
    n = mesh.n_nodes
    on_boundary = mesh.boundary_mask()
    allowed = ~on_boundary if region is None else ~on_boundary & np.asarray(region, bool)
    found = []
    for sign in (1.0, -1.0):
        u = sign * psi
        nb_max = np.full(n, -np.inf)
        np.maximum.at(nb_max, edges[:, 0], u[edges[:, 1]])
        np.maximum.at(nb_max, edges[:, 1], u[edges[:, 0]])
        for k in np.flatnonzero((u > nb_max) & allowed & (u > 0)):
            level = u[k] - depth * scale
            inside = u >= level
            keep = inside[edges[:, 0]] & inside[edges[:, 1]]
            e = edges[keep]
            A = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
            _, labels = connected_components(A, directed=False)
            hood = (labels == labels[k]) & inside
            if hood.sum() >= min_nodes and not np.any(hood & on_boundary):
                found.append(int(k))
    return found


# ---------------------------------------------------------------------------
# output


class TimeSeriesWriter:
    """CSV with one row per output time: conserved record, probes, chords."""

    def __init__(self, path: str | Path, probe_names: Sequence[str] = (), chord_names: Sequence[str] = ()):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._fh = open(self.path, "w", newline="")
        self._w = csv.writer(self._fh, lineterminator="\n")
        self._w.writerow(list(RECORD_COLUMNS) + list(probe_names) + list(chord_names))

    def write(self, record: ConservedRecord, probes: Sequence[float] = (), chords: Sequence[float] = ()) -> None:
        self._w.writerow([repr(float(x)) for x in record.as_row() + list(probes) + list(chords)])
        self._fh.flush()

    def close(self) -> None:
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_snapshot(directory: str | Path, state: PlasmaState, index: int, extra: Optional[dict] = None) -> Path:
    """Write each field as ``node_index,value`` CSV plus a JSON manifest."""
    d = Path(directory) / f"snapshot_{index:05d}"
    d.mkdir(parents=True, exist_ok=True)
    for name in FIELDS:
        u = getattr(state, name)
        with open(d / f"{name}.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["node_index", "value"])
            w.writerows((i, repr(float(x))) for i, x in enumerate(u))
    manifest = {"t": state.t, "fields": list(FIELDS), **(extra or {})}
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return d


def read_timeseries(path: str | Path) -> dict[str, np.ndarray]:
    data = np.genfromtxt(path, delimiter=",", names=True)
    return {k: np.atleast_1d(data[k]) for k in data.dtype.names}


def record_dict(record: ConservedRecord) -> dict[str, float]:
    return asdict(record)
