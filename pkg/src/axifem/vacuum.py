"""Vacuum poloidal field in the insulating region, its coupling to the plasma
domain, and the toroidal-flux constant on the insulating wall."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import DomainSplit, Mesh, WallGeometry
from .ops import DeltaStar0Solver, OperatorSet, operators_for


class VacuumSolver:
    """Solves Δ*ψ = 0 on a mesh for given boundary values, reusing one
    factorization of DeltaStar0."""

    def __init__(self, mesh_or_ops: Mesh | OperatorSet, rtol: float = 1e-10):
        ops = mesh_or_ops if isinstance(mesh_or_ops, OperatorSet) else operators_for(mesh_or_ops)
        self.ops = ops
        self.mesh = ops.mesh
        self.boundary_nodes = ops.mesh.boundary_nodes
        self._solver = DeltaStar0Solver(ops.DeltaStar0, rtol=rtol)

    def solve(self, boundary_values: np.ndarray) -> np.ndarray:
        """ψ on every node; ``boundary_values`` follows ``boundary_nodes``."""
        b = np.asarray(boundary_values, dtype=float)
        if b.shape != self.boundary_nodes.shape:
            raise ValueError(f"need {len(self.boundary_nodes)} boundary values, got {b.shape}")
        psi_gamma = np.zeros(self.mesh.n_nodes)
        psi_gamma[self.boundary_nodes] = b
        rhs = -(self.ops.DeltaStar @ psi_gamma)
        rhs[self.boundary_nodes] = b
        psi = self._solver.solve(rhs)
        psi[self.boundary_nodes] = b
        return psi


def solve_vacuum_psi(solver: VacuumSolver, boundary_values: np.ndarray) -> np.ndarray:
    return solver.solve(boundary_values)


@dataclass(frozen=True)
class WallFluxGeometry:
    """Flux bookkeeping for the insulating wall.

    ``weights`` are the nodal areas over radius, s_n/(3 r_n), of the plasma
    mesh; the discrete toroidal flux of a field f is ``weights @ f``.
    """

    L_ins: float
    L_int: float
    interface_nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        if not (self.L_ins > 0 and self.L_int > 0):
            raise ValueError("wall inductance factors must be positive")

    @classmethod
    def build(cls, weights: np.ndarray, interface_nodes: np.ndarray, wall: WallGeometry) -> "WallFluxGeometry":
        weights = np.asarray(weights, dtype=float)
        nodes = np.asarray(interface_nodes, dtype=np.int64)
        return cls(wall.L_ins, math.fsum(weights[nodes]), nodes, weights)

    @classmethod
    def from_ops(cls, ops: OperatorSet, interface_nodes: np.ndarray, wall: WallGeometry) -> "WallFluxGeometry":
        g = ops.geom
        return cls.build(g.s_n / (3.0 * g.r_n), interface_nodes, wall)


def flux_constant_fI(f: np.ndarray, wall: WallFluxGeometry) -> float:
    """Wall value f_I that makes the plasma-plus-wall toroidal flux of ``f`` vanish
    once f_I is written onto the interface nodes."""
    f0 = np.array(f, dtype=float)
    f0[wall.interface_nodes] = 0.0
    return -math.fsum(f0 * wall.weights) / (wall.L_ins + wall.L_int)


def plasma_wall_flux(f: np.ndarray, f_I: float, wall: WallFluxGeometry) -> float:
    """Σ f s/(3r) over the plasma mesh plus f_I·L_ins for the wall."""
    return math.fsum(np.append(np.asarray(f) * wall.weights, f_I * wall.L_ins))


class CoupledDomain:
    """Plasma and insulator meshes with the index maps needed for coupling.

    Coil boundary values are given on the boundary nodes of the combined
    mesh (``combined.boundary_nodes`` order).
    """

    def __init__(self, combined: Mesh, split: DomainSplit, plasma_ops: Optional[OperatorSet] = None):
        self.combined = combined
        self.split = split
        self.plasma_ops = plasma_ops or operators_for(split.plasma_mesh)
        self.vacuum = VacuumSolver(split.insulator_mesh)
        self._combined_solver: Optional[VacuumSolver] = None
        pos = np.full(combined.n_nodes, -1, dtype=np.int64)
        pos[combined.boundary_nodes] = np.arange(len(combined.boundary_nodes))

        pb = split.plasma_mesh.boundary_nodes
        self.plasma_coil_mask = pos[split.plasma_nodes[pb]] >= 0
        self.plasma_coil_src = pos[split.plasma_nodes[pb]][self.plasma_coil_mask]
        ib = split.insulator_mesh.boundary_nodes
        self.insulator_coil_mask = pos[split.insulator_nodes[ib]] >= 0
        self.insulator_coil_src = pos[split.insulator_nodes[ib]][self.insulator_coil_mask]

        # insulator inner column <- plasma values at the same combined node
        p_of = np.full(combined.n_nodes, -1, dtype=np.int64)
        p_of[split.plasma_nodes] = np.arange(len(split.plasma_nodes))
        i_of = np.full(combined.n_nodes, -1, dtype=np.int64)
        i_of[split.insulator_nodes] = np.arange(len(split.insulator_nodes))
        inner_comb = split.insulator_nodes[split.insulator_inner_column]
        self.inner_insulator = split.insulator_inner_column
        self.inner_from_plasma = p_of[inner_comb]
        outer_comb = split.plasma_nodes[split.plasma_outer_column]
        self.outer_plasma = split.plasma_outer_column
        self.outer_from_insulator = i_of[outer_comb]
        if np.any(self.inner_from_plasma < 0) or np.any(self.outer_from_insulator < 0):
            raise ValueError("interface columns are not shared by both meshes")
        ib_pos = np.full(split.insulator_mesh.n_nodes, -1, dtype=np.int64)
        ib_pos[ib] = np.arange(len(ib))
        self.inner_boundary_pos = ib_pos[self.inner_insulator]

    @property
    def interface_nodes(self) -> np.ndarray:
        """Plasma-mesh nodes on the insulator interface (outer column)."""
        return self.outer_plasma

    def combined_solver(self) -> VacuumSolver:
        if self._combined_solver is None:
            self._combined_solver = VacuumSolver(self.combined)
        return self._combined_solver

    def initial_vacuum(self, coil_values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Vacuum ψ on the combined mesh, restricted to (plasma, insulator)."""
        psi = self.combined_solver().solve(coil_values)
        return psi[self.split.plasma_nodes].copy(), psi[self.split.insulator_nodes].copy()

    def plasma_boundary_values(self, coil_values: np.ndarray, psi_v: np.ndarray) -> np.ndarray:
        """ψ on the plasma boundary loop: coil values where the plasma boundary
        is the outer boundary, vacuum values on the interface column."""
        pb = self.split.plasma_mesh.boundary_nodes
        out = np.empty(len(pb))
        out[self.plasma_coil_mask] = np.asarray(coil_values)[self.plasma_coil_src]
        pos = np.full(self.split.plasma_mesh.n_nodes, -1, dtype=np.int64)
        pos[pb] = np.arange(len(pb))
        iface = pos[self.outer_plasma]
        out[iface] = psi_v[self.outer_from_insulator]
        if np.any(~self.plasma_coil_mask & ~np.isin(np.arange(len(pb)), iface)):
            raise ValueError("plasma boundary nodes with no coil or vacuum value")
        return out


def couple_step(
    plasma_psi: np.ndarray, domain: CoupledDomain, coil_values: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Exchange ψ between the plasma and insulator meshes after a plasma step.

    1. coil boundary values go onto the outer boundary of both meshes;
    2. the insulator's inner column takes the plasma values;
    3. the vacuum field is solved on the insulator mesh;
    4. the plasma's outer column takes the vacuum values.
    """
    coil_values = np.asarray(coil_values, dtype=float)
    psi_p = np.array(plasma_psi, dtype=float)
    pb = domain.split.plasma_mesh.boundary_nodes
    psi_p[pb[domain.plasma_coil_mask]] = coil_values[domain.plasma_coil_src]

    ib = domain.split.insulator_mesh.boundary_nodes
    bvals = np.empty(len(ib))
    bvals[domain.insulator_coil_mask] = coil_values[domain.insulator_coil_src]
    bvals[domain.inner_boundary_pos] = psi_p[domain.inner_from_plasma]
    psi_v = domain.vacuum.solve(bvals)

    psi_p[domain.outer_plasma] = psi_v[domain.outer_from_insulator]
    return psi_p, psi_v
