"""Sparse mimetic operators on a triangular (r, z) mesh.

Notation follows the usual support-operator conventions: ``S`` and ``R``
are diagonal matrices of nodal support areas and radii, ``Ŝ`` and ``R̂`` their
element counterparts.  Derivatives come in three flavours:

* node-to-element ``Dre, Dze`` (exact on nodal fields linear in r, z),
* element-to-node ``Drn = -3 S⁻¹ Dreᵀ Ŝ`` and ``Dzn``,
* node-to-node ``Dr = S⁻¹ M_eᵀ Ŝ Dre`` and ``Dz``.

All matrices are materialised as CSR.  The ``dre``/``dr``/``lap`` style
methods apply the same operators but evaluate node-to-element derivatives in
difference form, ``b_i (u_i - u_k) + b_j (u_j - u_k)``, so constants map to
exactly zero in floating point.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SingularElement, SolverDiverged
from .mesh import GeometryTables, Mesh

log = logging.getLogger(__name__)

SINGULAR_TOL = 1e-14
DIRECT_SOLVE_LIMIT = 20000


def _diag(v: np.ndarray) -> sp.dia_matrix:
    return sp.diags(np.asarray(v, dtype=float))


@dataclass(frozen=True, eq=False)
class OperatorSet:
    mesh: Mesh
    geom: GeometryTables
    b: np.ndarray  # (N_e, 3) r-derivative coefficients
    c: np.ndarray  # (N_e, 3) z-derivative coefficients
    Dre: sp.csr_matrix
    Dze: sp.csr_matrix
    Drn: sp.csr_matrix
    Dzn: sp.csr_matrix
    Dr: sp.csr_matrix
    Dz: sp.csr_matrix
    Wn: sp.csr_matrix
    Lap: sp.csr_matrix
    DeltaStar: sp.csr_matrix
    DeltaStar0: sp.csr_matrix
    interior_mask: np.ndarray
    MT: sp.csr_matrix  # M_eᵀ, used for scatter-adds to nodes

    # -- node-to-element ----------------------------------------------------
    def _diff(self, coef: np.ndarray, u: np.ndarray) -> np.ndarray:
        e = self.mesh.elements
        uk = u[e[:, 2]]
        return coef[:, 0] * (u[e[:, 0]] - uk) + coef[:, 1] * (u[e[:, 1]] - uk)

    def dre(self, u: np.ndarray) -> np.ndarray:
        return self._diff(self.b, u)

    def dze(self, u: np.ndarray) -> np.ndarray:
        return self._diff(self.c, u)

    def avg(self, u: np.ndarray) -> np.ndarray:
        """Node-to-element average."""
        e = self.mesh.elements
        return (u[e[:, 0]] + u[e[:, 1]] + u[e[:, 2]]) / 3.0

    # -- element-to-node ----------------------------------------------------
    def drn(self, x: np.ndarray) -> np.ndarray:
        return self.Drn @ x

    def dzn(self, x: np.ndarray) -> np.ndarray:
        return self.Dzn @ x

    def wn(self, x: np.ndarray) -> np.ndarray:
        return self.Wn @ x

    # -- node-to-node -------------------------------------------------------
    def dr(self, u: np.ndarray) -> np.ndarray:
        return (self.MT @ (self.geom.s_e * self.dre(u))) / self.geom.s_n

    def dz(self, u: np.ndarray) -> np.ndarray:
        return (self.MT @ (self.geom.s_e * self.dze(u))) / self.geom.s_n

    def lap(self, u: np.ndarray) -> np.ndarray:
        g = self.geom
        return (self.drn(g.r_e * self.dre(u)) + self.dzn(g.r_e * self.dze(u))) / g.r_n

    def delta_star(self, u: np.ndarray) -> np.ndarray:
        g = self.geom
        return g.r_n * (self.drn(self.dre(u) / g.r_e) + self.dzn(self.dze(u) / g.r_e))

    @property
    def boundary_nodes(self) -> np.ndarray:
        return self.mesh.boundary_nodes

    def matrices(self) -> dict[str, sp.csr_matrix]:
        names = ("Dre", "Dze", "Drn", "Dzn", "Dr", "Dz", "Wn", "Lap", "DeltaStar", "DeltaStar0")
        return {k: getattr(self, k) for k in names}


def element_coefficients(mesh: Mesh, geom: GeometryTables) -> tuple[np.ndarray, np.ndarray]:
    """Rows of C^e = (R^e)⁻¹ giving ∂/∂r and ∂/∂z of the linear interpolant."""
    tw = geom.twice_area
    bad = np.flatnonzero(np.abs(tw) < SINGULAR_TOL)
    if len(bad):
        raise SingularElement(int(bad[0]), float(tw[bad[0]]))
    r = mesh.r[mesh.elements]
    z = mesh.z[mesh.elements]
    b = np.empty_like(r)
    c = np.empty_like(r)
    b[:, 0] = (z[:, 1] - z[:, 2]) / tw
    b[:, 1] = (z[:, 2] - z[:, 0]) / tw
    b[:, 2] = -(b[:, 0] + b[:, 1])
    c[:, 0] = (r[:, 2] - r[:, 1]) / tw
    c[:, 1] = (r[:, 0] - r[:, 2]) / tw
    c[:, 2] = -(c[:, 0] + c[:, 1])
    return b, c


def build_delta_star0(delta_star: sp.spmatrix, boundary: np.ndarray) -> sp.csr_matrix:
    """Zero boundary rows and columns of Δ*, then put ones on the boundary diagonal.

    Entries are masked in place so interior rows keep their storage order and
    reproduce ``DeltaStar`` bit-for-bit on fields with zero boundary values.
    """
    A = sp.csr_matrix(delta_star, copy=True)
    A.sort_indices()
    n = A.shape[0]
    is_b = np.zeros(n, dtype=bool)
    is_b[boundary] = True
    rows = np.repeat(np.arange(n), np.diff(A.indptr))
    A.data[is_b[rows] | is_b[A.indices]] = 0.0
    A.eliminate_zeros()
    A = A + sp.csr_matrix((np.ones(len(boundary)), (boundary, boundary)), shape=(n, n))
    A.sort_indices()
    return sp.csr_matrix(A)


def _row_scale(A: sp.csr_matrix, d: np.ndarray) -> sp.csr_matrix:
    A = A.copy()
    A.data *= np.repeat(d, np.diff(A.indptr))
    return A


def _node_to_node(mesh: Mesh, geom: GeometryTables, coef: np.ndarray) -> sp.csr_matrix:
    # S⁻¹ M_eᵀ Ŝ D by triplets, so every 1-ring pair is stored even if it cancels
    e = mesh.elements
    rows = np.repeat(e, 3, axis=1).ravel()
    cols = np.tile(e, (1, 3)).ravel()
    data = (geom.s_e[:, None, None] * np.broadcast_to(coef[:, None, :], (len(e), 3, 3))).ravel()
    A = sp.coo_matrix((data, (rows, cols)), shape=(mesh.n_nodes,) * 2).tocsr()
    A.sum_duplicates()
    return _row_scale(A, 1.0 / geom.s_n)


def build_operators(mesh: Mesh, geom: GeometryTables) -> OperatorSet:
    ne, nn = mesh.n_elements, mesh.n_nodes
    b, c = element_coefficients(mesh, geom)
    rows = np.repeat(np.arange(ne), 3)
    cols = mesh.elements.ravel()
    Dre = sp.csr_matrix((b.ravel(), (rows, cols)), shape=(ne, nn))
    Dze = sp.csr_matrix((c.ravel(), (rows, cols)), shape=(ne, nn))

    S_inv = _diag(1.0 / geom.s_n)
    S_hat = _diag(geom.s_e)
    MT = sp.csr_matrix(geom.M_e.T)
    Drn = sp.csr_matrix(-3.0 * (S_inv @ Dre.T @ S_hat))
    Dzn = sp.csr_matrix(-3.0 * (S_inv @ Dze.T @ S_hat))
    Dr = _node_to_node(mesh, geom, b)
    Dz = _node_to_node(mesh, geom, c)
    Wn = sp.csr_matrix(_diag(1.0 / (geom.r_n * geom.s_n)) @ MT @ _diag(geom.s_e * geom.r_e))
    Re = _diag(geom.r_e)
    Re_inv = _diag(1.0 / geom.r_e)
    Lap = sp.csr_matrix(_diag(1.0 / geom.r_n) @ (Drn @ Re @ Dre + Dzn @ Re @ Dze))
    DeltaStar = sp.csr_matrix(_diag(geom.r_n) @ (Drn @ Re_inv @ Dre + Dzn @ Re_inv @ Dze))
    for A in (Dre, Dze, Drn, Dzn, Dr, Dz, Wn, Lap, DeltaStar):
        A.sort_indices()
    DeltaStar0 = build_delta_star0(DeltaStar, mesh.boundary_nodes)
    interior = ~mesh.boundary_mask()
    interior.setflags(write=False)
    return OperatorSet(
        mesh=mesh, geom=geom, b=b, c=c,
        Dre=Dre, Dze=Dze, Drn=Drn, Dzn=Dzn, Dr=Dr, Dz=Dz, Wn=Wn,
        Lap=Lap, DeltaStar=DeltaStar, DeltaStar0=DeltaStar0,
        interior_mask=interior, MT=MT,
    )


def operators_for(mesh: Mesh) -> OperatorSet:
    from .mesh import compute_geometry

    return build_operators(mesh, compute_geometry(mesh))


# -- field-level helpers ------------------------------------------------------

def node_to_element_average(ops: OperatorSet, u: np.ndarray) -> np.ndarray:
    return ops.avg(np.asarray(u, dtype=float))


def volume_average_to_nodes(ops: OperatorSet, u_e: np.ndarray) -> np.ndarray:
    return ops.wn(np.asarray(u_e, dtype=float))


def gradient(ops: OperatorSet, u: np.ndarray, flavor: str = "node-to-node") -> tuple[np.ndarray, np.ndarray]:
    """(∂u/∂r, ∂u/∂z) in the requested flavour."""
    if flavor == "node-to-element":
        return ops.dre(u), ops.dze(u)
    if flavor == "element-to-node":
        return ops.drn(u), ops.dzn(u)
    if flavor == "node-to-node":
        return ops.dr(u), ops.dz(u)
    raise ValueError(f"unknown flavor {flavor!r}")


def divergence(ops: OperatorSet, P: tuple[np.ndarray, np.ndarray], flavor: str = "node-to-node") -> np.ndarray:
    """Cylindrical divergence (1/r)∂(r P_r)/∂r + ∂P_z/∂z of the (r, z) components."""
    g = ops.geom
    Pr, Pz = P
    if flavor == "node-to-element":
        return (ops.dre(g.r_n * Pr) + ops.dze(g.r_n * Pz)) / g.r_e
    if flavor == "element-to-node":
        return (ops.drn(g.r_e * Pr) + ops.dzn(g.r_e * Pz)) / g.r_n
    if flavor == "node-to-node":
        return (ops.dr(g.r_n * Pr) + ops.dz(g.r_n * Pz)) / g.r_n
    raise ValueError(f"unknown flavor {flavor!r}")


def apply_laplacian(ops: OperatorSet, u: np.ndarray) -> np.ndarray:
    return ops.lap(np.asarray(u, dtype=float))


def apply_delta_star(ops: OperatorSet, psi: np.ndarray) -> np.ndarray:
    return ops.delta_star(np.asarray(psi, dtype=float))


class DeltaStar0Solver:
    """Cached solver for ``DeltaStar0 x = rhs``.

    Small systems are factorised once with SuperLU.  Large ones use
    ILU-preconditioned GMRES and fall back to the direct factorisation if the
    residual target is missed.
    """

    def __init__(self, A: sp.spmatrix, rtol: float = 1e-10):
        self.A = sp.csc_matrix(A)
        self.rtol = rtol
        self._lu = None
        self._ilu = None
        if self.A.shape[0] <= DIRECT_SOLVE_LIMIT:
            self._lu = spla.splu(self.A)
        else:
            self._ilu = spla.spilu(self.A, drop_tol=1e-5, fill_factor=20)

    def _residual(self, x: np.ndarray, rhs: np.ndarray) -> float:
        scale = max(float(np.linalg.norm(rhs)), np.finfo(float).tiny)
        return float(np.linalg.norm(self.A @ x - rhs)) / scale

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        rhs = np.asarray(rhs, dtype=float)
        if not np.any(rhs):
            return np.zeros_like(rhs)
        if self._lu is None:
            M = spla.LinearOperator(self.A.shape, self._ilu.solve)
            x, info = spla.gmres(self.A, rhs, M=M, rtol=self.rtol * 0.1, restart=100, maxiter=50)
            if info == 0 and self._residual(x, rhs) <= self.rtol:
                return x
            log.warning("GMRES missed rtol %.1e (info=%d); factorising directly", self.rtol, info)
            self._lu = spla.splu(self.A)
        x = self._lu.solve(rhs)
        res = self._residual(x, rhs)
        if res > self.rtol:
            x = x + self._lu.solve(rhs - self.A @ x)
            res = self._residual(x, rhs)
        if res > self.rtol:
            raise SolverDiverged(f"DeltaStar0 solve residual {res:.3e} exceeds {self.rtol:.1e}")
        return x


def dump_operators(ops: OperatorSet, directory: str | Path) -> list[Path]:
    """Write every operator as a Matrix Market file; returns the paths."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, mat in ops.matrices().items():
        p = out / f"{name}.mtx"
        scipy.io.mmwrite(str(p), mat, precision=17)
        paths.append(p)
    return paths


def volume_integral(weights: np.ndarray, values: np.ndarray) -> float:
    """Deterministic dot product used for every conservation reduction."""
    return math.fsum(np.asarray(weights) * np.asarray(values))
