"""Operator-identity and conservation suites run from the command line and
the acceptance tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np
import scipy.sparse as sp

from .diagnostics import semi_discrete_balances
from .mhd.samples import magnetized_state
from .mhd.state import PhysicsCoefficients, PlasmaState, conservation_bcs
from .ops import OperatorSet, divergence


@dataclass(frozen=True)
class Check:
    name: str
    residual: float
    tol: float
    note: str = ""
    informational: bool = False

    @property
    def passed(self) -> bool:
        return self.informational or self.residual <= self.tol

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        if self.informational:
            status = "INFO"
        tail = f"  {self.note}" if self.note else ""
        return f"{status}  {self.name:<44s} residual {self.residual:10.3e}  tol {self.tol:8.1e}{tail}"


def format_table(checks: Iterable[Check]) -> str:
    return "\n".join(c.line() for c in checks)


def _rel(a: float, b: float) -> float:
    """|a + b| relative to the larger of two quantities that should cancel."""
    return abs(a + b) / max(abs(a), abs(b), 1e-300)


def _dot(w, x) -> float:
    return math.fsum(np.asarray(w) * np.asarray(x))


def _interior_block_max(A: sp.spmatrix, interior: np.ndarray) -> float:
    if not interior.any():
        return 0.0
    A = sp.csr_matrix(A)
    return float(max(abs(A[interior]).max(), abs(A[:, interior]).max()))


def operator_checks(ops: OperatorSet, n_fields: int = 100, seed: int = 0, label: str = "") -> list[Check]:
    """Boundary-only antisymmetry, adjointness, annihilation and exactness on
    linear fields for one mesh."""
    g = ops.geom
    pre = f"{label}: " if label else ""
    S, S_hat = sp.diags(g.s_n), sp.diags(g.s_e)
    I = ops.interior_mask
    checks = []
    for name, A, ref in (
        ("S Dr + Drᵀ S interior", S @ ops.Dr + ops.Dr.T @ S, S @ ops.Dr),
        ("S Dz + Dzᵀ S interior", S @ ops.Dz + ops.Dz.T @ S, S @ ops.Dz),
        ("Dzeᵀ Ŝ Dre - Dreᵀ Ŝ Dze interior", ops.Dze.T @ S_hat @ ops.Dre - ops.Dre.T @ S_hat @ ops.Dze,
         ops.Dze.T @ S_hat @ ops.Dre),
    ):
        checks.append(Check(pre + name, _interior_block_max(A, I) / abs(ref).max(), 1e-13))

    rng = np.random.default_rng(seed)
    nn, ne = ops.mesh.n_nodes, ops.mesh.n_elements
    worst = dict.fromkeys(("adjoint grad", "adjoint div", "annihilate div", "annihilate Lap", "annihilate Δ*"), 0.0)
    for _ in range(n_fields):
        Pr, Pz, U = rng.standard_normal((3, nn))
        Ue, Per, Pez = rng.standard_normal((3, ne))
        a = _dot(g.dV_n, Pr * ops.drn(Ue) + Pz * ops.dzn(Ue))
        b = _dot(g.dV_e, Ue * divergence(ops, (Pr, Pz), "node-to-element"))
        worst["adjoint grad"] = max(worst["adjoint grad"], _rel(a, b))
        a = _dot(g.dV_n, U * divergence(ops, (Per, Pez), "element-to-node"))
        b = _dot(g.dV_e, Per * ops.dre(U) + Pez * ops.dze(U))
        worst["adjoint div"] = max(worst["adjoint div"], _rel(a, b))
        for key, terms in (
            ("annihilate div", g.dV_n * divergence(ops, (Per, Pez), "element-to-node")),
            ("annihilate Lap", g.dV_n * ops.lap(U)),
            ("annihilate Δ*", g.dV_n * ops.delta_star(U) / g.r_n**2),
        ):
            worst[key] = max(worst[key], abs(math.fsum(terms)) / math.fsum(np.abs(terms)))
    checks += [Check(f"{pre}{k} ({n_fields} fields)", v, 1e-12) for k, v in worst.items()]

    a0, br, cz = 0.7, -1.3, 2.1
    lin = a0 + br * ops.mesh.r + cz * ops.mesh.z
    for name, fn, coef in (("Dre", ops.dre, br), ("Dze", ops.dze, cz), ("Dr", ops.dr, br), ("Dz", ops.dz, cz)):
        checks.append(Check(f"{pre}{name} exact on linears", float(np.max(np.abs(fn(lin) - coef))) / abs(coef), 1e-13))
    const = np.full(nn, 3.7)
    checks.append(Check(f"{pre}Lap, Δ* of a constant", float(max(np.abs(ops.lap(const)).max(),
                                                                np.abs(ops.delta_star(const)).max())), 0.0))
    return checks


def random_conservation_state(mesh, seed: int) -> PlasmaState:
    """Smooth magnetized state plus 10% nodal noise with ψ = v_r = v_z = 0 on the wall."""
    rng = np.random.default_rng(seed)
    s = magnetized_state(mesh, phase=rng.uniform(0, 2 * np.pi))
    for name in ("n", "vr", "vphi", "vz", "pi", "pe", "psi", "f"):
        u = getattr(s, name)
        u *= 1.0 + 0.1 * rng.uniform(-1, 1, len(u))
    k = mesh.boundary_nodes
    s.vr[k] = s.vz[k] = s.psi[k] = 0.0
    return s


def conservation_checks(
    ops: OperatorSet, coeffs: PhysicsCoefficients, seeds: Iterable[int] = range(3), tol: float = 1e-11
) -> list[Check]:
    """Semi-discrete balance residuals under the conservation boundary conditions.

    The energy balance is taken with equal numerical and physical viscosity,
    since unequal values are a deliberate sink.  Angular momentum is only
    reported when correction model 2 is active with ζ > 0, which does not
    conserve it.
    """
    bc = conservation_bcs(ops.mesh)
    energy_coeffs = coeffs.with_(equal_viscosity=True)
    worst: dict[str, float] = {}

    def keep(name, value):
        worst[name] = max(worst.get(name, 0.0), value)

    for seed in seeds:
        state = random_conservation_state(ops.mesh, seed)
        rep = semi_discrete_balances(ops, state, coeffs, bc)
        keep("particles dN/dt", rep.particles.relative)
        keep("toroidal flux dΦ/dt", rep.toroidal_flux.relative)
        keep("angular momentum dP_φ/dt", rep.angular_momentum.relative)
        for k, b in rep.momentum_corrections.items():
            keep(f"density-correction momentum ({k})", b.relative)
        erep = semi_discrete_balances(ops, state, energy_coeffs, bc)
        keep("energy dU/dt (ν_phys = ν_num)", erep.energy.relative)
        for k, b in erep.brackets.items():
            keep(f"energy bracket {k}", b.relative)
        for k, b in erep.energy_corrections.items():
            keep(f"density-correction energy ({k})", b.relative)

    not_conserving = coeffs.correction_model == 2 and float(np.max(coeffs.zeta)) > 0
    out = []
    for name, value in worst.items():
        if name.startswith("angular") and not_conserving:
            out.append(Check(name, value, tol, "not conserved (model 2)", informational=True))
        else:
            out.append(Check(name, value, tol))
    return out


def all_passed(checks: Iterable[Check]) -> bool:
    return all(c.passed for c in checks)


def summarize(checks: list[Check], title: Optional[str] = None) -> str:
    head = [title] if title else []
    n_fail = sum(not c.passed for c in checks)
    return "\n".join(head + [format_table(checks), f"{len(checks) - n_fail}/{len(checks)} checks passed"])
