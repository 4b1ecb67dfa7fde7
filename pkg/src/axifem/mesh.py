"""Triangular meshes of the (r, z) half-plane and their geometry tables.

A mesh is stored with 0-based indices.  Files on disk use 1-based element
indices (see :func:`load_mesh`).  The boundary loop is always rebuilt from
edge incidence; node tags are carried along but never trusted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, TextIO

import numpy as np
import scipy.sparse as sp

from .errors import (
    DanglingNode,
    DegenerateRange,
    InterfaceNotFound,
    NonCCWElement,
    NonManifoldBoundary,
    NonPositiveRadius,
    UnpairedInterfaceNode,
)

R_MIN = 1e-6
COLUMN_TOL = 1e-9


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


def twice_areas(nodes: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """2s^e = (r_i - r_k)(z_j - z_k) - (r_j - r_k)(z_i - z_k) for every element."""
    r = nodes[:, 0]
    z = nodes[:, 1]
    i, j, k = elements.T
    return (r[i] - r[k]) * (z[j] - z[k]) - (r[j] - r[k]) * (z[i] - z[k])


def _boundary_loop(elements: np.ndarray, n_nodes: int) -> np.ndarray:
    # directed edges of CCW triangles; a boundary edge is one whose reverse is absent
    e = elements
    directed = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
    key = directed[:, 0].astype(np.int64) * n_nodes + directed[:, 1]
    rkey = directed[:, 1].astype(np.int64) * n_nodes + directed[:, 0]
    uniq, counts = np.unique(key, return_counts=True)
    if np.any(counts > 1):
        bad = directed[np.flatnonzero(key == uniq[counts > 1][0])[0]]
        raise NonManifoldBoundary(f"edge {tuple(bad)} is used twice with the same orientation")
    bmask = ~np.isin(key, rkey)
    bedges = directed[bmask]
    if len(bedges) == 0:
        raise NonManifoldBoundary("mesh has no boundary edges")
    nxt: dict[int, int] = {}
    for a, b in bedges:
        if a in nxt:
            raise NonManifoldBoundary(f"boundary node {a} has two outgoing boundary edges")
        nxt[int(a)] = int(b)
    start = min(nxt)
    loop = [start]
    cur = nxt[start]
    while cur != start:
        loop.append(cur)
        if cur not in nxt or len(loop) > len(nxt):
            raise NonManifoldBoundary("boundary edges do not form a closed loop")
        cur = nxt[cur]
    if len(loop) != len(nxt):
        raise NonManifoldBoundary(
            f"boundary splits into several loops ({len(loop)} of {len(nxt)} boundary nodes reached)"
        )
    return np.asarray(loop, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Validated triangular mesh.

    Attributes:
        nodes: (N_n, 2) array of (r, z) in metres.
        elements: (N_e, 3) array of 0-based node indices, counter-clockwise.
        boundary_nodes: boundary loop traced counter-clockwise.
        node_tags: optional per-node labels, advisory only.
    """

    nodes: np.ndarray
    elements: np.ndarray
    boundary_nodes: np.ndarray
    node_tags: tuple[str, ...] | None = None

    @classmethod
    def from_arrays(
        cls,
        nodes: np.ndarray | Sequence,
        elements: np.ndarray | Sequence,
        node_tags: Sequence[str] | None = None,
    ) -> "Mesh":
        nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        elements = np.array(elements, dtype=np.int64).reshape(-1, 3)
        n_nodes = len(nodes)
        if elements.size and (elements.min() < 0 or elements.max() >= n_nodes):
            raise IndexError("element node index out of range")
        bad_r = np.flatnonzero(~(nodes[:, 0] >= R_MIN))
        if len(bad_r):
            raise NonPositiveRadius(int(bad_r[0]), float(nodes[bad_r[0], 0]))
        tw = twice_areas(nodes, elements)
        bad = np.flatnonzero(~(tw > 0))
        if len(bad):
            raise NonCCWElement(int(bad[0]), float(tw[bad[0]]))
        used = np.zeros(n_nodes, dtype=bool)
        used[elements.ravel()] = True
        if not used.all():
            raise DanglingNode(int(np.flatnonzero(~used)[0]))
        loop = _boundary_loop(elements, n_nodes)
        tags = None if node_tags is None else tuple(str(t) for t in node_tags)
        if tags is not None and len(tags) != n_nodes:
            raise ValueError("node_tags length does not match node count")
        return cls(_readonly(nodes), _readonly(elements), _readonly(loop), tags)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def r(self) -> np.ndarray:
        return self.nodes[:, 0]

    @property
    def z(self) -> np.ndarray:
        return self.nodes[:, 1]

    def boundary_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_nodes, dtype=bool)
        mask[self.boundary_nodes] = True
        return mask

    def edges(self) -> np.ndarray:
        """Unique undirected edges as an (N_edges, 2) array with i < j."""
        e = self.elements
        pairs = np.concatenate([e[:, [0, 1]], e[:, [1, 2]], e[:, [2, 0]]])
        pairs.sort(axis=1)
        return np.unique(pairs, axis=0)

    def hull_area(self) -> float:
        """Shoelace area of the boundary polygon."""
        r, z = self.nodes[self.boundary_nodes].T
        return 0.5 * float(np.sum(r * np.roll(z, -1) - np.roll(r, -1) * z))


@dataclass(frozen=True, eq=False)
class GeometryTables:
    s_e: np.ndarray
    r_e: np.ndarray
    z_e: np.ndarray
    s_n: np.ndarray
    r_n: np.ndarray
    z_n: np.ndarray
    dV_n: np.ndarray
    dV_e: np.ndarray
    M_e: sp.csr_matrix
    twice_area: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.s_n)

    @property
    def n_elements(self) -> int:
        return len(self.s_e)


def connectivity_matrix(mesh: Mesh) -> sp.csr_matrix:
    ne = mesh.n_elements
    rows = np.repeat(np.arange(ne), 3)
    return sp.csr_matrix(
        (np.ones(3 * ne), (rows, mesh.elements.ravel())), shape=(ne, mesh.n_nodes)
    )


def compute_geometry(mesh: Mesh) -> GeometryTables:
    M_e = connectivity_matrix(mesh)
    tw = twice_areas(mesh.nodes, mesh.elements)
    s_e = 0.5 * tw
    r_n = mesh.r.copy()
    z_n = mesh.z.copy()
    r_e = mesh.r[mesh.elements].sum(axis=1) / 3.0
    z_e = mesh.z[mesh.elements].sum(axis=1) / 3.0
    s_n = M_e.T @ s_e
    dV_n = (2.0 * math.pi / 3.0) * s_n * r_n
    dV_e = 2.0 * math.pi * s_e * r_e
    arrays = [_readonly(a) for a in (s_e, r_e, z_e, s_n, r_n, z_n, dV_n, dV_e)]
    return GeometryTables(*arrays, M_e=M_e, twice_area=_readonly(tw))


@dataclass(frozen=True, eq=False)
class BoundaryFrame:
    """Unit tangent and outward normal at each boundary-loop node."""

    nodes: np.ndarray
    tangent: np.ndarray
    normal: np.ndarray
    corner: np.ndarray

    def index_of(self, node: int) -> int:
        hits = np.flatnonzero(self.nodes == node)
        if not len(hits):
            raise KeyError(f"node {node} is not on the boundary")
        return int(hits[0])


def boundary_frame(mesh: Mesh, corner_tol: float = 1e-9) -> BoundaryFrame:
    """Tangents along the counter-clockwise loop and normals rotated by -90 degrees.

    The tangent at a node is the normalised sum of its two adjacent edge
    vectors, i.e. the direction of the chord from the previous to the next
    node.  With equal edge lengths this is the edge-direction average; in
    general it is the direction orthogonal to the discrete boundary normal
    integral, which is what makes projected vector fields satisfy the
    discrete no-flux condition.
    """
    loop = mesh.boundary_nodes
    x = mesh.nodes[loop]
    fwd = np.roll(x, -1, axis=0) - x
    back = x - np.roll(x, 1, axis=0)
    t = fwd + back
    t /= np.linalg.norm(t, axis=1)[:, None]
    nrm = np.column_stack([t[:, 1], -t[:, 0]])
    cross = back[:, 0] * fwd[:, 1] - back[:, 1] * fwd[:, 0]
    scale = np.linalg.norm(back, axis=1) * np.linalg.norm(fwd, axis=1)
    corner = np.abs(cross) > corner_tol * scale
    return BoundaryFrame(_readonly(loop.copy()), _readonly(t), _readonly(nrm), _readonly(corner))


def generate_rect_mesh(
    r_range: tuple[float, float], z_range: tuple[float, float], h_e: float
) -> Mesh:
    """Structured rectangle mesh, two CCW triangles per cell.

    Nodes are numbered row by row (r fastest).  Each cell (a, b, c, d), with
    a at the lower left and the rest following counter-clockwise, is split
    along the a-c diagonal into (a, b, c) and (a, c, d).
    """
    r0, r1 = map(float, r_range)
    z0, z1 = map(float, z_range)
    if not (r0 >= R_MIN and r1 > r0 and z1 > z0 and h_e > 0):
        raise DegenerateRange(f"need 0 < r0 < r1, z0 < z1, h_e > 0; got r={r_range}, z={z_range}, h_e={h_e}")
    nr = max(1, math.ceil((r1 - r0) / h_e - 1e-9))
    nz = max(1, math.ceil((z1 - z0) / h_e - 1e-9))
    rr = np.linspace(r0, r1, nr + 1)
    zz = np.linspace(z0, z1, nz + 1)
    R, Z = np.meshgrid(rr, zz)
    nodes = np.column_stack([R.ravel(), Z.ravel()])
    i, j = np.meshgrid(np.arange(nr), np.arange(nz))
    a = (j * (nr + 1) + i).ravel()
    b = a + 1
    c = a + nr + 2
    d = a + nr + 1
    elements = np.empty((2 * len(a), 3), dtype=np.int64)
    elements[0::2] = np.column_stack([a, b, c])
    elements[1::2] = np.column_stack([a, c, d])
    return Mesh.from_arrays(nodes, elements)


def submesh(mesh: Mesh, element_mask: np.ndarray) -> tuple[Mesh, np.ndarray]:
    """Mesh made of the selected elements, plus the new-to-old node map."""
    elems = mesh.elements[np.asarray(element_mask, dtype=bool)]
    keep = np.unique(elems)
    old_to_new = np.full(mesh.n_nodes, -1, dtype=np.int64)
    old_to_new[keep] = np.arange(len(keep))
    tags = None if mesh.node_tags is None else [mesh.node_tags[k] for k in keep]
    return Mesh.from_arrays(mesh.nodes[keep], old_to_new[elems], tags), keep


def perturb_mesh(mesh: Mesh, amplitude: float, rng: np.random.Generator) -> Mesh:
    """Randomly move interior nodes by up to ``amplitude`` in each coordinate."""
    nodes = mesh.nodes.copy()
    interior = ~mesh.boundary_mask()
    nodes[interior] += rng.uniform(-amplitude, amplitude, size=(int(interior.sum()), 2))
    return Mesh.from_arrays(nodes, mesh.elements, mesh.node_tags)


def load_mesh(source: str | Path) -> Mesh:
    """Read the plain-text mesh format.

    Line 1 holds ``N_n N_e``; then ``N_n`` lines ``r z [tag]``; then ``N_e``
    lines ``i j k`` with 1-based indices.  ``#`` starts a comment.
    """
    rows: list[list[str]] = []
    with open(source) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                rows.append(line.split())
    if not rows:
        raise ValueError(f"{source}: empty mesh file")
    n_nodes, n_elem = int(rows[0][0]), int(rows[0][1])
    if len(rows) != 1 + n_nodes + n_elem:
        raise ValueError(
            f"{source}: expected {n_nodes} node and {n_elem} element lines, found {len(rows) - 1} data lines"
        )
    node_rows = rows[1 : 1 + n_nodes]
    nodes = np.array([[float(t[0]), float(t[1])] for t in node_rows])
    tags = [t[2] if len(t) > 2 else "-" for t in node_rows]
    elements = np.array([[int(x) for x in t[:3]] for t in rows[1 + n_nodes :]], dtype=np.int64) - 1
    return Mesh.from_arrays(nodes, elements, tags if any(t != "-" for t in tags) else None)


def save_mesh(mesh: Mesh, dest: str | Path | TextIO) -> None:
    """Write ``mesh`` in the format read by :func:`load_mesh` to a path or open text stream."""
    if hasattr(dest, "write"):
        _write_mesh(mesh, dest)
        return
    with open(dest, "w") as fh:
        _write_mesh(mesh, fh)


def _write_mesh(mesh: Mesh, fh: TextIO) -> None:
    tags = mesh.node_tags or ("-",) * mesh.n_nodes
    fh.write(f"{mesh.n_nodes} {mesh.n_elements}\n")
    for (r, z), tag in zip(mesh.nodes, tags):
        fh.write(f"{float(r)!r} {float(z)!r} {tag}\n")
    for i, j, k in mesh.elements + 1:
        fh.write(f"{i} {j} {k}\n")


@dataclass(frozen=True)
class WallGeometry:
    """Insulating wall of height h_I between radii r_in and r_out (metres)."""

    h_I: float
    r_in: float
    r_out: float

    def __post_init__(self):
        if not (0 < self.r_in < self.r_out and self.h_I > 0):
            raise DegenerateRange(f"invalid wall geometry {self}")

    @property
    def L_ins(self) -> float:
        return self.h_I * math.log(self.r_out / self.r_in)


@dataclass(frozen=True, eq=False)
class DomainSplit:
    """Plasma and insulator meshes overlapping by one layer of elements.

    The plasma mesh ends on the outer column (``r = interface_r``), which is
    interior to the insulator mesh.  The insulator mesh starts on the inner
    column, which is interior to the plasma mesh.  ``interface_map`` pairs
    the plasma and insulator indices of every node on either column.
    """

    plasma_mesh: Mesh
    insulator_mesh: Mesh
    plasma_nodes: np.ndarray
    insulator_nodes: np.ndarray
    interface_map: np.ndarray
    plasma_outer_column: np.ndarray
    insulator_inner_column: np.ndarray
    wall: WallGeometry
    interface_r: float
    inner_r: float


def split_domain(combined: Mesh, interface_r: float, wall_geom: WallGeometry) -> DomainSplit:
    r = combined.r
    z = combined.z
    outer = np.flatnonzero(np.abs(r - interface_r) <= COLUMN_TOL)
    if len(outer) < 2:
        raise InterfaceNotFound(f"no vertical node column at r = {interface_r!r}")

    # nodes sharing an element with the outer column and lying to its left
    touches = np.isin(combined.elements, outer).any(axis=1)
    left = np.unique(combined.elements[touches])
    left = left[r[left] < interface_r - COLUMN_TOL]
    if not len(left):
        raise InterfaceNotFound(f"column at r = {interface_r!r} has no plasma side")
    inner_r = float(r[left].max())
    if np.any(np.abs(r[left] - inner_r) > COLUMN_TOL):
        raise UnpairedInterfaceNode(
            "the element layer left of the interface column is not bounded by a vertical column"
        )

    r_e = r[combined.elements].mean(axis=1)
    plasma, p_nodes = submesh(combined, r_e < interface_r)
    insulator, i_nodes = submesh(combined, r_e > inner_r)

    shared = np.intersect1d(p_nodes, i_nodes)
    p_idx = np.searchsorted(p_nodes, shared)
    i_idx = np.searchsorted(i_nodes, shared)
    on_outer = np.abs(r[shared] - interface_r) <= COLUMN_TOL
    on_inner = np.abs(r[shared] - inner_r) <= COLUMN_TOL
    if not np.all(on_outer | on_inner):
        raise UnpairedInterfaceNode("plasma and insulator meshes overlap beyond the two interface columns")
    z_out = np.sort(z[shared[on_outer]])
    z_in = np.sort(z[shared[on_inner]])
    if len(z_out) != len(z_in) or np.any(np.abs(z_out - z_in) > COLUMN_TOL):
        raise UnpairedInterfaceNode("outer and inner interface columns do not pair up by height")

    outer_p = p_idx[on_outer][np.argsort(z[shared[on_outer]])]
    inner_i = i_idx[on_inner][np.argsort(z[shared[on_inner]])]
    return DomainSplit(
        plasma_mesh=plasma,
        insulator_mesh=insulator,
        plasma_nodes=_readonly(p_nodes),
        insulator_nodes=_readonly(i_nodes),
        interface_map=_readonly(np.column_stack([p_idx, i_idx])),
        plasma_outer_column=_readonly(outer_p),
        insulator_inner_column=_readonly(inner_i),
        wall=wall_geom,
        interface_r=float(interface_r),
        inner_r=inner_r,
    )
