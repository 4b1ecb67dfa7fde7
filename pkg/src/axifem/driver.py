"""Configuration-driven orchestration of coupled formation runs.

A run configuration is a flat ``key = value`` file (``#`` starts a comment).
Relative paths are resolved against the directory of the file.  See
:data:`DEFAULTS` for every key and its default.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .diagnostics import (
    Chord,
    ConservedRecord,
    Probe,
    TimeSeriesWriter,
    chord_average,
    closed_flux_extrema,
    conserved_quantities,
    probe_signal,
    toroidal_flux,
    write_snapshot,
)
from .errors import AxifemError, ConfigError, NegativePressure, NonPositiveDensity, NonPositiveTemperature
from .mesh import Mesh, WallGeometry, boundary_frame, load_mesh, split_domain
from .mhd.rhs import apply_boundary_conditions
from .mhd.state import E_CHARGE, BoundaryConditions, PhysicsCoefficients, PlasmaState, FIELDS
from .mhd.closures import stability_dt
from .mhd.stepping import SCHEMES, step
from .scenario import (
    CoilDrive,
    FormationDrive,
    MachineGeometry,
    Waveform,
    initial_density,
    load_psi_table,
    synthetic_coil_current,
    synthetic_gun_voltage,
)
from .vacuum import CoupledDomain, WallFluxGeometry, couple_step, flux_constant_fI

log = logging.getLogger(__name__)

# every recognised key with its default; None means "required" or "unset"
DEFAULTS: dict[str, Any] = {
    "mode": "simulate",
    # geometry
    "mesh": "builtin:machine",
    "h_e": 0.025,
    "interface_r": None,
    "wall_h": None,
    "wall_r_in": None,
    "wall_r_out": None,
    # physics (names follow the usual input list)
    "m_0": 4.0,
    "Z": 1.3,
    "n0": 9e20,
    "sigma_n2": 0.005,
    "n_high": 10.0,
    "n_low": 0.1,
    "z_gp": -0.43,
    "T_init_eV": 5.0,
    "T_wall_eV": 0.02,
    "zeta": 50.0,
    "nu_num": 700.0,
    "nu_phys": 410.0,
    "chi_par_e": 16000.0,
    "chi_par_i": 5000.0,
    "chi_perp_e": 240.0,
    "chi_perp_i": 120.0,
    "eta_max": 5000.0,
    "eta_min": 0.0,
    "correction_model": 2,
    "equal_viscosity": False,
    "heat_exchange": True,
    # drives
    "tau_LR": 90e-6,
    "m_slope": 40.0,
    "V_gun": "synthetic",
    "V_form": 16e3,
    "V_form_ref": 16e3,
    "psi_main": "synthetic",
    "psi_lev": "synthetic",
    "psi_comp": "synthetic",
    "I_main": 70.0,
    "I_main_ref": 70.0,
    "I_lev": "synthetic",
    "I_comp": "synthetic",
    "t_comp": 45e-6,
    # time stepping and output
    "dt": 1e-8,
    "t_end": 20e-6,
    "scheme": "rk2",
    "output_dt": 1e-6,
    "snapshot_dt": 0.0,
    "output_dir": "run_output",
    "strict_stability": False,
    "probes": "",
    "chords": "",
    # closed-flux detection: relative depth, minimum size, lowest z of candidates
    "closed_flux_depth": 0.05,
    "closed_flux_min_nodes": 4,
    "closed_flux_z_min": None,
}

_INT_KEYS = {"correction_model", "closed_flux_min_nodes"}
_NULLABLE_KEYS = {"interface_r", "wall_h", "wall_r_in", "wall_r_out", "closed_flux_z_min"}
_BOOL_KEYS = {"equal_viscosity", "heat_exchange", "strict_stability"}
_STR_KEYS = {"mode", "mesh", "V_gun", "psi_main", "psi_lev", "psi_comp", "I_lev", "I_comp", "scheme",
             "output_dir", "probes", "chords"}
MODES = ("simulate", "verify-operators", "verify-conservation")


def _parse_value(key: str, raw: str):
    raw = raw.strip()
    if key in _STR_KEYS:
        return raw
    if key in _BOOL_KEYS:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if key in _INT_KEYS:
        if raw.lower() in ("none", "off"):
            return None
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
    if key in _NULLABLE_KEYS and raw.lower() == "none":
        return None
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc


@dataclass
class RunConfig:
    values: dict[str, Any]
    base_dir: Path = field(default_factory=Path.cwd)

    def __post_init__(self):
        unknown = sorted(set(self.values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(f"unknown configuration key {unknown[0]!r}")
        merged = dict(DEFAULTS)
        merged.update(self.values)
        self.values = merged
        self.validate()

    def __getitem__(self, key: str):
        return self.values[key]

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"configuration file {path} does not exist")
        values: dict[str, Any] = {}
        for lineno, line in enumerate(path.read_text().splitlines(), start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in line.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = _parse_value(key, raw)
        return cls(values, path.parent.resolve())

    @classmethod
    def from_dict(cls, values: dict[str, Any], base_dir: str | Path | None = None) -> "RunConfig":
        return cls(dict(values), Path(base_dir) if base_dir else Path.cwd())

    def path(self, key: str) -> Path:
        p = Path(self.values[key])
        return p if p.is_absolute() else self.base_dir / p

    def validate(self) -> None:
        v = self.values
        if v["mode"] not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, not {v['mode']!r}")
        if v["scheme"] not in SCHEMES:
            raise ConfigError(f"scheme must be one of {SCHEMES}, not {v['scheme']!r}")
        if not v["dt"] > 0:
            raise ConfigError(f"dt must be positive, got {v['dt']!r}")
        if v["mode"] == "simulate" and not v["t_end"] > v["dt"]:
            raise ConfigError(f"t_end ({v['t_end']!r}) must exceed dt ({v['dt']!r})")
        if not v["output_dt"] > 0:
            raise ConfigError("output_dt must be positive")
        if not v["h_e"] > 0:
            raise ConfigError("h_e must be positive")
        for key in ("mesh", "V_gun", "psi_main", "psi_lev", "psi_comp", "I_lev", "I_comp"):
            val = v[key]
            if val.startswith("builtin:") or val == "synthetic":
                continue
            if not self.path(key).is_file():
                raise ConfigError(f"{key}: file {self.path(key)} does not exist")
        wall = [v[k] for k in ("interface_r", "wall_h", "wall_r_in", "wall_r_out")]
        if any(w is None for w in wall) and any(w is not None for w in wall):
            raise ConfigError("interface_r, wall_h, wall_r_in and wall_r_out must be given together")
        if v["mesh"].startswith("builtin:") and v["mesh"] != "builtin:machine":
            raise ConfigError(f"unknown built-in mesh {v['mesh']!r}")

    def coefficients(self) -> PhysicsCoefficients:
        v = self.values
        return PhysicsCoefficients(
            mu_i=v["m_0"], Z=v["Z"], zeta=v["zeta"], nu_num=v["nu_num"], nu_phys=v["nu_phys"], n0=v["n0"],
            chi_par_e=v["chi_par_e"], chi_par_i=v["chi_par_i"], chi_perp_e=v["chi_perp_e"],
            chi_perp_i=v["chi_perp_i"], eta_max=v["eta_max"], eta_min=v["eta_min"],
            correction_model=v["correction_model"], heat_exchange=v["heat_exchange"],
            equal_viscosity=v["equal_viscosity"],
        )


class RunAborted(AxifemError):
    """A module error during stepping, annotated with the step and field."""

    def __init__(self, step: int, t: float, field_name: str, node: Optional[int], cause: str):
        self.step, self.t, self.field, self.node = step, t, field_name, node
        where = f"node {node}" if node is not None else "no node"
        super().__init__(f"aborted at step {step} (t = {t:.6e} s): field {field_name}, {where}: {cause}")


def _abort_from(exc: Exception, k: int, t: float) -> RunAborted:
    if isinstance(exc, NonPositiveDensity):
        return RunAborted(k, t, "n", exc.node, str(exc))
    if isinstance(exc, NegativePressure):
        return RunAborted(k, t, exc.field, exc.node, str(exc))
    if isinstance(exc, NonPositiveTemperature):
        return RunAborted(k, t, "pe", exc.node, str(exc))
    return RunAborted(k, t, "-", None, f"{type(exc).__name__}: {exc}")


def _check_finite(state: PlasmaState, k: int) -> None:
    for name in FIELDS:
        bad = np.flatnonzero(~np.isfinite(getattr(state, name)))
        if len(bad):
            raise RunAborted(k, state.t, name, int(bad[0]), "non-finite value")


def _parse_points(text: str, kind: str) -> list[tuple]:
    """``name:r,z;...`` for probes, ``name:r1,z1,r2,z2[,quantity];...`` for chords."""
    out = []
    for item in filter(None, (s.strip() for s in text.split(";"))):
        if ":" not in item:
            raise ConfigError(f"{kind} entry {item!r} needs a name followed by ':'")
        name, rest = item.split(":", 1)
        parts = [p.strip() for p in rest.split(",")]
        out.append((name.strip(), parts))
    return out


@dataclass
class RunResult:
    records: list[ConservedRecord]
    Phi_form: list[float]
    Phi_total: list[float]
    chords: dict[str, list[float]]
    probes: dict[str, list[float]]
    closed_flux: list[list[int]]
    state: PlasmaState
    steps: int

    def flux_error(self) -> float:
        """max |Φ_tot - Φ_form| relative to max |Φ_form| over the output steps."""
        err = max(abs(a - b) for a, b in zip(self.Phi_total, self.Phi_form))
        return err / max(max(abs(p) for p in self.Phi_form), 1e-300)


class Simulation:
    """Coupled plasma/insulator formation run built from a configuration."""

    def __init__(self, config: RunConfig):
        self.config = c = config
        self.coeffs = c.coefficients()
        self.machine: Optional[MachineGeometry] = None
        if c["mesh"] == "builtin:machine":
            self.machine = MachineGeometry()
            combined = self.machine.mesh(c["h_e"])
            interface_r, wall = self.machine.interface_r, self.machine.wall
        else:
            combined = load_mesh(c.path("mesh"))
            interface_r = c["interface_r"]
            wall = None if interface_r is None else WallGeometry(c["wall_h"], c["wall_r_in"], c["wall_r_out"])
        self.combined = combined
        self.domain: Optional[CoupledDomain] = None
        if interface_r is not None:
            self.domain = CoupledDomain(combined, split_domain(combined, interface_r, wall))
            self.ops = self.domain.plasma_ops
            self.wall_flux = WallFluxGeometry.from_ops(self.ops, self.domain.interface_nodes, wall)
        else:
            from .ops import operators_for

            self.ops = operators_for(combined)
            self.wall_flux = None
        self.mesh: Mesh = self.ops.mesh
        self.frame = boundary_frame(self.mesh)
        self._build_drives()
        self.probes = [
            Probe.snapped(self.mesh, name, (float(p[0]), float(p[1])), p[2] if len(p) > 2 else "poloidal")
            for name, p in _parse_points(c["probes"], "probe")
        ]
        self.chords = [
            Chord(name, (float(p[0]), float(p[1])), (float(p[2]), float(p[3])), p[4] if len(p) > 4 else "n_e")
            for name, p in _parse_points(c["chords"], "chord")
        ]

    # -- drives -------------------------------------------------------------
    def _waveform(self, key: str, synthetic: Waveform) -> Waveform:
        if self.config[key] == "synthetic":
            return synthetic
        return Waveform.load(self.config.path(key), key)

    def _build_drives(self) -> None:
        c = self.config
        V_gun = self._waveform("V_gun", synthetic_gun_voltage(16e3)).scaled(c["V_form"] / c["V_form_ref"])
        self.formation = FormationDrive.on(self.ops, V_gun, c["tau_LR"], m_slope=c["m_slope"], z_gp=c["z_gp"])
        I_lev = self._waveform("I_lev", synthetic_coil_current(20e-6, 150e-6, name="I_lev"))
        I_comp = self._waveform("I_comp", synthetic_coil_current(10e-6, 40e-6, name="I_comp"))
        cb = self.combined.boundary_nodes
        tables = []
        synth = None
        for key in ("psi_main", "psi_lev", "psi_comp"):
            if c[key] == "synthetic":
                if self.machine is None:
                    raise ConfigError(f"{key} = synthetic needs mesh = builtin:machine")
                if synth is None:
                    synth = self.machine.coil_tables(self.combined.r[cb], self.combined.z[cb])
                tables.append(synth[("psi_main", "psi_lev", "psi_comp").index(key)])
            else:
                tables.append(load_psi_table(c.path(key), cb))
        tables[0] = tables[0] * (c["I_main"] / c["I_main_ref"])
        self.coils = CoilDrive(*tables, I_lev_tilde=I_lev, I_comp_tilde=I_comp, t_comp=c["t_comp"])

    # -- setup ----------------------------------------------------------------
    def initial_state(self) -> tuple[PlasmaState, Optional[np.ndarray]]:
        c = self.config
        n = initial_density(self.mesh, c["n0"], c["sigma_n2"], c["n_high"], c["n_low"], c["z_gp"])
        T = c["T_init_eV"] * E_CHARGE
        s = PlasmaState.zeros(self.mesh.n_nodes)
        s.n[:] = n
        s.pi[:] = n * T
        s.pe[:] = c["Z"] * n * T
        coil0 = self.coils.boundary_psi(0.0)
        psi_v = None
        if self.domain is not None:
            s.psi[:], psi_v = self.domain.initial_vacuum(coil0)
        else:
            from .vacuum import VacuumSolver

            s.psi[:] = VacuumSolver(self.ops).solve(coil0)
        return s, psi_v

    def _plasma_psi_source(self, psi_v: Optional[np.ndarray]):
        if self.domain is None:
            return self.coils.boundary_psi
        return lambda t: self.domain.plasma_boundary_values(self.coils.boundary_psi(t), psi_v)

    def boundary_conditions(self, psi_v, f_values) -> BoundaryConditions:
        f_nodes = None if self.domain is None else self.domain.interface_nodes
        return BoundaryConditions(
            boundary_nodes=self.mesh.boundary_nodes,
            psi=self._plasma_psi_source(psi_v),
            velocity_mode="all-zero",
            T_wall_eV=self.config["T_wall_eV"],
            f_nodes=f_nodes,
            f_values=None if f_nodes is None else f_values,
        )

    # -- main loop ------------------------------------------------------------
    def run(self, write_output: bool = True, max_steps: Optional[int] = None) -> RunResult:
        c = self.config
        dt, t_end = c["dt"], c["t_end"]
        n_steps = int(math.ceil(t_end / dt - 1e-9))
        if max_steps is not None:
            n_steps = min(n_steps, max_steps)
        state, psi_v = self.initial_state()
        flux_acc = self.formation.flux()
        F_prev = np.zeros(self.mesh.n_nodes)
        f_I = 0.0
        iface = None if self.domain is None else self.domain.interface_nodes
        h_e = float(np.sqrt(2.0 * np.median(self.ops.geom.s_e)))
        region = None if c["closed_flux_z_min"] is None else self.mesh.z >= c["closed_flux_z_min"]

        out_dir = c.path("output_dir")
        writer = None
        if write_output:
            writer = TimeSeriesWriter(out_dir / "timeseries.csv", [p.name for p in self.probes],
                                      [ch.name for ch in self.chords])
        result = RunResult([], [], [], {ch.name: [] for ch in self.chords}, {p.name: [] for p in self.probes},
                           [], state, 0)
        # kept so that records written before an abort remain available
        self.result = result
        next_out = 0.0
        next_snap = 0.0
        snap_index = 0

        def emit(s: PlasmaState, Phi_form: float):
            nonlocal next_out, next_snap, snap_index
            rec = conserved_quantities(self.ops, s, self.coeffs)
            probes = [probe_signal(self.ops, s, p, self.frame) for p in self.probes]
            chords = [chord_average(self.mesh, s, ch, self.coeffs.Z) for ch in self.chords]
            total = toroidal_flux(self.ops, s.f) + (0.0 if self.wall_flux is None else f_I * self.wall_flux.L_ins)
            result.records.append(rec)
            result.Phi_form.append(Phi_form)
            result.Phi_total.append(total)
            for p, v in zip(self.probes, probes):
                result.probes[p.name].append(v)
            for ch, v in zip(self.chords, chords):
                result.chords[ch.name].append(v)
            result.closed_flux.append(
                closed_flux_extrema(self.mesh, s.psi, c["closed_flux_depth"], c["closed_flux_min_nodes"], region)
            )
            if writer is not None:
                writer.write(rec, probes, chords)
                if c["snapshot_dt"] > 0 and s.t >= next_snap - 1e-9 * dt:
                    write_snapshot(out_dir, s, snap_index, {"f_I": f_I, "Phi_form": Phi_form})
                    snap_index += 1
                    next_snap += c["snapshot_dt"]
            next_out += c["output_dt"]

        try:
            emit(state, 0.0)
            for k in range(1, n_steps + 1):
                t0 = state.t
                t1 = t0 + dt
                try:
                    # formation flux for this step goes in before the plasma update
                    Phi_form = flux_acc(t1)
                    F = self.formation.field_for(Phi_form)
                    state.f += F - F_prev
                    F_prev = F
                    f_vals = None if iface is None else f_I + F[iface]
                    bc = self.boundary_conditions(psi_v, f_vals)
                    if k == 1:
                        state = apply_boundary_conditions(state, bc, t0, Z=self.coeffs.Z)
                    dt_max = stability_dt(self.coeffs, state, h_e, ops=self.ops)
                    if dt > dt_max:
                        msg = f"step {k}: dt = {dt:.3e} s exceeds the advisory limit {dt_max:.3e} s"
                        if c["strict_stability"]:
                            raise RunAborted(k, t0, "-", None, msg)
                        if k == 1:
                            log.warning(msg)
                    state = step(self.ops, state, dt, c["scheme"], self.coeffs, bc)
                    state.t = t1
                    if self.domain is not None:
                        state.psi, psi_v = couple_step(state.psi, self.domain, self.coils.boundary_psi(t1))
                        f_I = flux_constant_fI(state.f - F, self.wall_flux)
                        state.f[iface] = f_I + F[iface]
                    _check_finite(state, k)
                except RunAborted:
                    raise
                except AxifemError as exc:
                    raise _abort_from(exc, k, t0) from exc
                result.steps = k
                if t1 >= next_out - 1e-9 * dt or k == n_steps:
                    emit(state, Phi_form)
        finally:
            if writer is not None:
                writer.close()
        result.state = state
        return result


def run(config: RunConfig) -> RunResult:
    return Simulation(config).run()
