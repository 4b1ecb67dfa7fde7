"""Time-dependent drives and initial conditions for compact-torus formation,
levitation and magnetic compression.

The gun drive injects toroidal flux through ``f``; the external coils enter
only through the boundary values of ψ.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.special import ellipe, ellipk, expit

from .errors import ConfigError, MissingWaveformSample, NonPositiveFloor
from .mesh import Mesh
from .mhd.state import MU0
from .ops import OperatorSet

# relative slack when checking that a time lies inside a waveform's support
SUPPORT_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class Waveform:
    """Piecewise-linear signal through ``(t, values)`` samples."""

    t: np.ndarray
    values: np.ndarray
    name: str = "waveform"

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or len(t) < 2:
            raise ValueError(f"{self.name}: need matching 1-d sample arrays with at least two samples")
        if not np.all(np.diff(t) > 0):
            raise ValueError(f"{self.name}: sample times must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    @property
    def support(self) -> tuple[float, float]:
        return float(self.t[0]), float(self.t[-1])

    def _check(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        lo, hi = self.support
        slack = SUPPORT_TOL * max(abs(lo), abs(hi), hi - lo)
        bad = (t < lo - slack) | (t > hi + slack) | ~np.isfinite(t)
        if np.any(bad):
            raise MissingWaveformSample(float(np.ravel(t)[np.argmax(np.ravel(bad))]), lo, hi, self.name)
        return np.clip(t, lo, hi)

    def __call__(self, t):
        t = self._check(t)
        out = np.interp(t, self.t, self.values)
        return float(out) if out.ndim == 0 else out

    def scaled(self, factor: float) -> "Waveform":
        return Waveform(self.t, self.values * factor, self.name)

    @classmethod
    def constant(cls, value: float, t_end: float, t_start: float = 0.0, name: str = "constant") -> "Waveform":
        return cls(np.array([t_start, t_end]), np.array([value, value], dtype=float), name)

    @classmethod
    def damped_sinusoid(
        cls,
        amplitude: float,
        period: float,
        decay: float,
        t_end: float,
        n_samples: int = 401,
        name: str = "damped_sinusoid",
    ) -> "Waveform":
        """``amplitude * sin(2πt/period) * exp(-t/decay)`` sampled on [0, t_end].

        Stand-in for measured bank discharges.
        """
        t = np.linspace(0.0, t_end, n_samples)
        return cls(t, amplitude * np.sin(2 * np.pi * t / period) * np.exp(-t / decay), name)

    @classmethod
    def load(cls, path: str | Path, name: Optional[str] = None) -> "Waveform":
        """Read a two-column ``t_seconds,value`` CSV with a header line."""
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["t_seconds", "value"]:
            raise ConfigError(f"{path}: waveform CSV must start with the header 't_seconds,value'")
        try:
            data = np.array([[float(a), float(b)] for a, b in (r for r in rows[1:] if r)])
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if data.ndim != 2 or len(data) < 2:
            raise ConfigError(f"{path}: need at least two samples")
        return cls(data[:, 0], data[:, 1], name or path.stem)

    def save(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_seconds", "value"])
            for a, b in zip(self.t, self.values):
                w.writerow([repr(float(a)), repr(float(b))])


def formation_profile_g(z, m_slope: float = 40.0, z_gp: float = -0.43):
    """Logistic profile e^{m z_gp}/(e^{m z_gp} + e^{m z}), written as expit(-m(z - z_gp))."""
    with np.errstate(over="ignore"):
        return expit(-m_slope * (np.asarray(z, dtype=float) - z_gp))


def _h(x: float) -> float:
    """1 - e^{-x}(1 + x), accurate for small x."""
    if x < 0.1:
        # alternating series Σ_{n≥2} (-1)^n (n-1) x^n / n!
        total, term, n = 0.0, x, 1
        while True:
            n += 1
            term *= -x / n
            add = -(n - 1) * term
            total += add
            if abs(add) <= 1e-17 * abs(total):
                return total
    return 1.0 - math.exp(-x) * (1.0 + x)


def _segment_flux(phi_a: float, va: float, vb: float, L: float, tau: float) -> float:
    """Advance Φ across an interval of length L on which V is linear from va to vb.

    Φ(b) = e^{-L/τ} Φ(a) - ∫_a^b V(t') e^{-(b-t')/τ} dt', integrated exactly.
    """
    if L == 0.0:
        return phi_a
    k = (vb - va) / L
    if math.isinf(tau):
        return phi_a - (vb * L - 0.5 * k * L * L)
    x = L / tau
    integral = vb * tau * -math.expm1(-x) - k * tau * tau * _h(x)
    return math.exp(-x) * phi_a - integral


class FormationFlux:
    """Incremental evaluation of Φ_form(t) = -e^{-t/τ} ∫₀ᵗ V_gun(t') e^{t'/τ} dt'.

    Calls must be made with non-decreasing t; the integral is carried from
    the previous call, splitting at every waveform sample so that the linear
    interpolant is integrated exactly.
    """

    def __init__(self, V_gun: Waveform, tau_LR: float, t0: float = 0.0):
        if not tau_LR > 0:
            raise ValueError("tau_LR must be positive")
        V_gun._check(t0)
        self.V_gun = V_gun
        self.tau = float(tau_LR)
        self.t = float(t0)
        self.value = 0.0

    def __call__(self, t: float) -> float:
        t = float(t)
        if t < self.t:
            raise ValueError(f"formation flux must be advanced forward (t = {t!r} < {self.t!r})")
        self.V_gun._check(t)
        ts = self.V_gun.t
        inner = ts[(ts > self.t) & (ts < t)]
        knots = np.concatenate([[self.t], inner, [t]])
        vals = np.interp(knots, ts, self.V_gun.values)
        phi = self.value
        for i in range(len(knots) - 1):
            phi = _segment_flux(phi, vals[i], vals[i + 1], knots[i + 1] - knots[i], self.tau)
        self.t, self.value = t, phi
        return phi


def formation_flux_Phi(V_gun: Waveform, tau_LR: float, t: float) -> float:
    """Φ_form(t) in Wb, integrating the gun voltage from t = 0."""
    return FormationFlux(V_gun, tau_LR)(t)


@dataclass(eq=False)
class FormationDrive:
    """Gun flux source on the plasma mesh.

    ``weights`` are the nodal flux weights s_n/(3 r_n) and ``z`` the nodal
    heights; ``Q_g = Σ g(z_n) weights_n`` normalises the profile so that the
    added field carries exactly Φ_form of toroidal flux.
    """

    V_gun: Waveform
    tau_LR: float
    z: np.ndarray
    weights: np.ndarray
    m_slope: float = 40.0
    z_gp: float = -0.43
    g: np.ndarray = field(init=False, repr=False)
    Q_g: float = field(init=False)

    def __post_init__(self):
        if not self.tau_LR > 0:
            raise ValueError("tau_LR must be positive")
        self.g = formation_profile_g(self.z, self.m_slope, self.z_gp)
        self.Q_g = math.fsum(self.g * np.asarray(self.weights))
        if not self.Q_g > 0:
            raise ValueError("formation profile has no weight on this mesh")

    @classmethod
    def on(cls, ops: OperatorSet, V_gun: Waveform, tau_LR: float = 90e-6, **kw) -> "FormationDrive":
        g = ops.geom
        return cls(V_gun, tau_LR, ops.mesh.z.copy(), g.s_n / (3.0 * g.r_n), **kw)

    def field_for(self, Phi: float) -> np.ndarray:
        return Phi * self.g / self.Q_g

    def flux(self) -> FormationFlux:
        return FormationFlux(self.V_gun, self.tau_LR)


def formation_field_f(drive: FormationDrive, t: float) -> np.ndarray:
    """f_form(z, t) = Φ_form(t) g(z) / Q_g on the drive's nodes."""
    return drive.field_for(formation_flux_Phi(drive.V_gun, drive.tau_LR, t))


@dataclass(eq=False)
class CoilDrive:
    """Coil contributions to ψ on the boundary nodes.

    Tables hold the peak ψ of each coil set per boundary node (Wb/rad), in
    the order of ``boundary_nodes``.
    """

    psi_main: np.ndarray
    psi_lev: np.ndarray
    psi_comp: np.ndarray
    I_lev_tilde: Waveform
    I_comp_tilde: Waveform
    t_comp: float = 45e-6
    boundary_nodes: Optional[np.ndarray] = None

    def __post_init__(self):
        self.psi_main = np.asarray(self.psi_main, dtype=float)
        self.psi_lev = np.asarray(self.psi_lev, dtype=float)
        self.psi_comp = np.asarray(self.psi_comp, dtype=float)
        if not (self.psi_main.shape == self.psi_lev.shape == self.psi_comp.shape):
            raise ValueError("coil tables must cover the same boundary nodes")

    def boundary_psi(self, t: float) -> np.ndarray:
        out = self.psi_main + self.I_lev_tilde(t) * self.psi_lev
        if t >= self.t_comp:
            out = out + self.I_comp_tilde(t - self.t_comp) * self.psi_comp
        return out


def boundary_psi(coils: CoilDrive, t: float) -> np.ndarray:
    """ψ_main + Ĩ_lev(t) ψ_lev + Ĩ_comp(t - t_comp) ψ_comp, the last only once t ≥ t_comp."""
    return coils.boundary_psi(t)


def load_psi_table(path: str | Path, boundary_nodes: np.ndarray) -> np.ndarray:
    """Read a ``node_index,psi_value`` table and order it along ``boundary_nodes``."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["node_index", "psi_value"]:
        raise ConfigError(f"{path}: psi table must start with the header 'node_index,psi_value'")
    values: dict[int, float] = {}
    for line, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            values[int(row[0])] = float(row[1])
        except (ValueError, IndexError) as exc:
            raise ConfigError(f"{path}:{line}: {exc}") from exc
    bnodes = [int(k) for k in boundary_nodes]
    missing = [k for k in bnodes if k not in values]
    if missing:
        raise ConfigError(f"{path}: no value for boundary node {missing[0]} ({len(missing)} missing)")
    extra = sorted(set(values) - set(bnodes))
    if extra:
        raise ConfigError(f"{path}: node {extra[0]} is not a boundary node")
    return np.array([values[k] for k in bnodes])


def save_psi_table(path: str | Path, boundary_nodes: Sequence[int], values: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_index", "psi_value"])
        for k, v in zip(boundary_nodes, values):
            w.writerow([int(k), repr(float(v))])


def initial_density(
    mesh_or_z: Mesh | np.ndarray,
    n0: float = 9e20,
    sigma_n2: float = 0.005,
    n_high: float = 10.0,
    n_low: float = 0.1,
    z_gp: float = -0.43,
) -> np.ndarray:
    """n0 ((n_high - n_low) g̃(z) + n_low), g̃ a unit-peak Gaussian in z about z_gp."""
    if not n_low > 0:
        raise NonPositiveFloor(f"n_low must be positive, got {n_low!r}")
    if not sigma_n2 > 0:
        raise ValueError("sigma_n2 must be positive")
    z = mesh_or_z.z if isinstance(mesh_or_z, Mesh) else np.asarray(mesh_or_z, dtype=float)
    g = np.exp(-((z - z_gp) ** 2) / (2.0 * sigma_n2))
    return n0 * ((n_high - n_low) * g + n_low)


def loop_coil_psi(r, z, a: float, z0: float, current: float) -> np.ndarray:
    """Poloidal flux per radian r A_φ of a circular filament of radius ``a`` at
    height ``z0`` carrying ``current`` ampere-turns."""
    r = np.asarray(r, dtype=float)
    z = np.asarray(z, dtype=float)
    d2 = (a + r) ** 2 + (z - z0) ** 2
    m = 4.0 * a * r / d2
    k = np.sqrt(m)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = MU0 * current / (np.pi * k) * np.sqrt(a / r) * ((1.0 - 0.5 * m) * ellipk(m) - ellipe(m))
    # small-k limit of the bracket is π m²/32, so A_φ → μ0 I a² r / (4 d³)
    small = m < 1e-6
    if np.any(small):
        A = np.where(small, MU0 * current * a * a * r / (4.0 * d2**1.5), A)
    return r * A


@dataclass(frozen=True)
class Rect:
    r0: float
    r1: float
    z0: float
    z1: float

    def contains(self, r, z) -> np.ndarray:
        return (r > self.r0) & (r < self.r1) & (z > self.z0) & (z < self.z1)


@dataclass(frozen=True)
class LoopCoil:
    r: float
    z: float
    ampere_turns: float

    def psi(self, r, z) -> np.ndarray:
        return loop_coil_psi(r, z, self.r, self.z, self.ampere_turns)


@dataclass(frozen=True)
class MachineGeometry:
    """Simplified gun, containment region and insulating wall on one grid.

    The gun annulus sits below z = 0 and opens into the containment region;
    the insulator is a strip outboard of the containment region, between
    ``interface_r`` and the coil radius.  All edges must be multiples of the
    mesh spacing away from ``(r_min, z_min)``.
    """

    gun: Rect = Rect(0.075, 0.15, -0.5, 0.0)
    containment: Rect = Rect(0.05, 0.2, 0.0, 0.3)
    insulator: Rect = Rect(0.2, 0.3, 0.0, 0.3)
    main_coils: tuple[LoopCoil, ...] = (LoopCoil(0.2, -0.3, 2.0e4),)
    lev_coils: tuple[LoopCoil, ...] = (LoopCoil(0.33, 0.1, -1.5e4),)
    comp_coils: tuple[LoopCoil, ...] = (LoopCoil(0.33, 0.2, -1.5e4), LoopCoil(0.33, 0.25, -1.5e4))

    @property
    def interface_r(self) -> float:
        return self.insulator.r0

    @property
    def wall(self):
        from .mesh import WallGeometry

        return WallGeometry(self.insulator.z1 - self.insulator.z0, self.insulator.r0, self.insulator.r1)

    def mesh(self, h_e: float) -> Mesh:
        """Combined plasma-plus-insulator mesh with spacing ``h_e``."""
        from .mesh import generate_rect_mesh, submesh

        parts = (self.gun, self.containment, self.insulator)
        r0 = min(p.r0 for p in parts)
        r1 = max(p.r1 for p in parts)
        z0 = min(p.z0 for p in parts)
        z1 = max(p.z1 for p in parts)
        for v in [x for p in parts for x in (p.r0 - r0, p.r1 - r0, p.z0 - z0, p.z1 - z0)]:
            if abs(v / h_e - round(v / h_e)) > 1e-6:
                raise ValueError(f"machine edges are not on the h_e = {h_e} grid")
        box = generate_rect_mesh((r0, r1), (z0, z1), h_e)
        rc = box.r[box.elements].mean(axis=1)
        zc = box.z[box.elements].mean(axis=1)
        keep = np.zeros(box.n_elements, dtype=bool)
        for p in parts:
            keep |= p.contains(rc, zc)
        return submesh(box, keep)[0]

    def coil_tables(self, r, z) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Peak ψ of the main, levitation and compression coil sets at (r, z)."""

        def total(coils):
            return sum((c.psi(r, z) for c in coils), np.zeros(np.shape(r)))

        return total(self.main_coils), total(self.lev_coils), total(self.comp_coils)


def synthetic_gun_voltage(V_form: float = 16e3, t_end: float = 200e-6) -> Waveform:
    """Stand-in for a measured gun voltage: a damped half-period discharge."""
    t = np.linspace(0.0, t_end, 801)
    v = V_form * np.sin(np.pi * t / 40e-6) * np.exp(-t / 60e-6)
    v[t > 40e-6] = 0.0
    return Waveform(t, v, "V_gun")


def synthetic_coil_current(rise: float, decay: float, t_end: float = 400e-6, name: str = "I") -> Waveform:
    """Normalised coil current: rises to 1 over ``rise`` seconds, then decays."""
    t = np.linspace(0.0, t_end, 801)
    i = np.where(t < rise, np.sin(0.5 * np.pi * t / rise), np.exp(-(t - rise) / decay))
    return Waveform(t, i, name)
