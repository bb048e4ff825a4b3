"""Local virtual element spaces on one face or one cell.

Degrees of freedom of an order-k space, per entity:

* vertex: the value
* edge: (1/|e|) int_e v tau^m, m <= k-2, tau in [-1/2, 1/2] from the smaller
  to the larger vertex index
* face: (1/|F|) int_F v m_b, m_b the face monomials of degree <= k-2
* cell: (1/|K|) int_K v m_b, m_b the cell monomials of degree <= k-2

Projector matrices map a local DOF vector to monomial coefficients. The
energy projector Pi solves (grad Pi v, grad q) = (grad v, grad q) for all
q in P_k, with the constant fixed by the boundary mean (k = 1) or the
domain mean (k >= 2). The L2 projector is Q v = Pi v + w with w in P_{k-2}
matched to the interior moments.
"""

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from vem.geometry import GeometryError, PolygonGeometry, PolyhedronGeometry, solve_gram
from vem.mesh import PolyMesh
from vem.models import StabilizationVariant
from vem.monomials import (
    basis_size, edge_basis, interval_mass, interval_moments, mass_matrix,
    restriction_matrix, stiffness_matrix,
)
from vem.quadrature import quadrature_cell

logger = logging.getLogger(__name__)


class LocalSpaceError(Exception):
    """Raised when a local space or its projectors cannot be built."""
    pass


@dataclass
class CellDofLayout:
    """Local numbering of the DOFs of one cell and its global counterpart."""
    cell: int
    vertices: List[int]
    edges: List[int]
    faces: List[int]
    global_dofs: np.ndarray
    vertex_pos: Dict[int, int]
    edge_pos: Dict[int, int]
    face_pos: Dict[int, int]
    cell_pos: int

    @property
    def size(self) -> int:
        return len(self.global_dofs)

    def local_index(self) -> Dict[int, int]:
        return {int(g): i for i, g in enumerate(self.global_dofs)}


class DofMap:
    """
    Global DOF numbering: all vertices, then edge blocks, face blocks and
    cell blocks, each in mesh index order.
    """

    def __init__(self, mesh: PolyMesh, k: int):
        if k < 1:
            raise LocalSpaceError(f"Order must be at least 1, got {k}")
        self.mesh = mesh
        self.k = k
        self.edge_block = k - 1
        self.face_block = basis_size(2, k - 2)
        self.cell_block = basis_size(3, k - 2)
        self.edge_offset = mesh.num_vertices
        self.face_offset = self.edge_offset + mesh.num_edges * self.edge_block
        self.cell_offset = self.face_offset + mesh.num_faces * self.face_block
        self.ndof = self.cell_offset + mesh.num_cells * self.cell_block

    def vertex_dof(self, vertex: int) -> int:
        return vertex

    def edge_dofs(self, edge: int) -> np.ndarray:
        start = self.edge_offset + edge * self.edge_block
        return np.arange(start, start + self.edge_block)

    def face_dofs(self, face: int) -> np.ndarray:
        start = self.face_offset + face * self.face_block
        return np.arange(start, start + self.face_block)

    def cell_dofs(self, cell: int) -> np.ndarray:
        start = self.cell_offset + cell * self.cell_block
        return np.arange(start, start + self.cell_block)

    def face_size(self, face: int) -> int:
        n = len(self.mesh.faces[face])
        return n + n * self.edge_block + self.face_block

    def cell_layout(self, cell: int) -> CellDofLayout:
        """Sorted vertices, sorted edges, faces in cell order, then the cell block."""
        vertices = self.mesh.cell_vertices(cell)
        edges = self.mesh.cell_edges(cell)
        faces = [f for f, _ in self.mesh.cells[cell]]
        dofs: List[int] = []
        vertex_pos = {}
        for v in vertices:
            vertex_pos[v] = len(dofs)
            dofs.append(self.vertex_dof(v))
        edge_pos = {}
        for e in edges:
            edge_pos[e] = len(dofs)
            dofs.extend(self.edge_dofs(e).tolist())
        face_pos = {}
        for f in faces:
            face_pos[f] = len(dofs)
            dofs.extend(self.face_dofs(f).tolist())
        cell_pos = len(dofs)
        dofs.extend(self.cell_dofs(cell).tolist())
        return CellDofLayout(cell=cell, vertices=vertices, edges=edges, faces=faces,
                             global_dofs=np.array(dofs, dtype=int), vertex_pos=vertex_pos,
                             edge_pos=edge_pos, face_pos=face_pos, cell_pos=cell_pos)

    def boundary_dofs(self) -> np.ndarray:
        """DOFs attached to boundary vertices, edges and faces."""
        mesh = self.mesh
        dofs = [np.array(mesh.boundary_vertices, dtype=int)]
        dofs.extend(self.edge_dofs(e) for e in mesh.boundary_edges)
        dofs.extend(self.face_dofs(f) for f in mesh.boundary_faces)
        return np.unique(np.concatenate(dofs)) if dofs else np.zeros(0, dtype=int)


@dataclass
class DofVector:
    """Values indexed by global DOF."""
    values: np.ndarray
    dofmap: DofMap

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.dofmap.ndof,):
            raise ValueError(f"DOF vector has shape {self.values.shape}, expected ({self.dofmap.ndof},)")

    @property
    def k(self) -> int:
        return self.dofmap.k

    @property
    def mesh(self) -> PolyMesh:
        return self.dofmap.mesh

    def cell_values(self, layout: CellDofLayout) -> np.ndarray:
        return self.values[layout.global_dofs]


@lru_cache(maxsize=None)
def edge_trace_operator(k: int) -> np.ndarray:
    """
    Coefficients in tau**j of the degree-k trace on an edge from
    [value at start, value at end, moments m = 0..k-2].
    """
    rows = [[(-0.5) ** j for j in range(k + 1)], [0.5 ** j for j in range(k + 1)]]
    moments = interval_moments(2 * k)
    for m in range(k - 1):
        rows.append([moments[m + j] for j in range(k + 1)])
    op = np.linalg.inv(np.array(rows))
    op.setflags(write=False)
    return op


@dataclass
class EdgeTrace:
    """Trace of the face space on one edge of the face."""
    edge: int
    length: float
    normal: np.ndarray
    trace: np.ndarray
    restriction: np.ndarray


class FaceSpace:
    """
    Order-k face space with its projectors, in face-local DOF order:
    loop vertices, loop edges (k-1 each), then face moments.
    """

    def __init__(self, mesh: PolyMesh, face: int, k: int, dofmap: DofMap):
        self.face = face
        self.k = k
        self.geometry: PolygonGeometry = mesh.face_geometry(face)
        self.basis = self.geometry.basis(k)
        self.nk = self.basis.size
        self.pf = basis_size(2, k - 2)
        moments = self.geometry.moments(2 * k)
        self.moments = moments[:self.nk]
        self.mass = mass_matrix(moments, 2, k)
        self.stiffness = stiffness_matrix(moments, 2, k, self.geometry.diameter)
        self.area = self.geometry.area

        loop = mesh.faces[face]
        nv = len(loop)
        self.nv = nv
        self.size = nv + nv * (k - 1) + self.pf
        self.moment_start = nv + nv * (k - 1)

        global_dofs = [dofmap.vertex_dof(v) for v in loop]
        for e in mesh.face_edges[face]:
            global_dofs.extend(dofmap.edge_dofs(e).tolist())
        global_dofs.extend(dofmap.face_dofs(face).tolist())
        self.global_dofs = np.array(global_dofs, dtype=int)

        position = {v: i for i, v in enumerate(loop)}
        trace_op = edge_trace_operator(k)
        target = edge_basis(k)
        self.edges: List[EdgeTrace] = []
        for i, e in enumerate(mesh.face_edges[face]):
            a, b = mesh.edges[e]
            select = np.zeros((k + 1, self.size))
            select[0, position[a]] = 1.0
            select[1, position[b]] = 1.0
            for m in range(k - 1):
                select[2 + m, nv + i * (k - 1) + m] = 1.0
            pa = self.geometry.local[position[a]]
            pb = self.geometry.local[position[b]]
            length = float(self.geometry.edge_lengths[i])
            if length <= 0.0:
                raise GeometryError(f"Edge {e} of face {face} has zero length")
            restriction = restriction_matrix(self.basis, 0.5 * (pa + pb), (pb - pa).reshape(2, 1), target)
            self.edges.append(EdgeTrace(edge=e, length=length,
                                        normal=self.geometry.outward_normals_local[i],
                                        trace=trace_op @ select, restriction=restriction))

        self.pi, self.gram, self.rhs = face_pi_projector(self)
        self.q = face_l2_projector(self, self.pi)

    @property
    def moment_slice(self) -> slice:
        return slice(self.moment_start, self.size)

    def dof_matrix(self) -> np.ndarray:
        """DOFs of every face monomial; shape (size, nk)."""
        d = np.zeros((self.size, self.nk))
        d[:self.nv] = self.basis.evaluate(self.geometry.local)
        edge_moments = interval_mass(self.k - 2, self.k)
        for i, edge in enumerate(self.edges):
            start = self.nv + i * (self.k - 1)
            d[start:start + self.k - 1] = edge_moments @ edge.restriction
        d[self.moment_slice] = self.mass[:self.pf] / self.area
        return d

    def edge_stabilization(self, edge_weight: str = "face") -> np.ndarray:
        """Sum over edges of w_e (v - Q_F v, v - Q_F v)_e with w_e = h_F or |e|."""
        emass = interval_mass(self.k, self.k)
        s = np.zeros((self.size, self.size))
        for edge in self.edges:
            err = edge.trace - edge.restriction @ self.q
            weight = self.geometry.diameter if edge_weight == "face" else edge.length
            s += weight * edge.length * (err.T @ emass @ err)
        return s


def face_pi_projector(space: FaceSpace):
    """Energy projector of a face space; returns (Pi, constrained Gram, right-hand side)."""
    k, nk = space.k, space.nk
    gram = space.stiffness.copy()
    rhs = np.zeros((nk, space.size))
    lap = space.basis.laplacian_matrix()
    if space.pf:
        rhs[:, space.moment_slice] -= space.area * lap[:space.pf, :].T
    emass = interval_mass(k, k)
    for edge in space.edges:
        flux = edge.restriction @ space.basis.directional_derivative_matrix(edge.normal)
        rhs += edge.length * (flux.T @ emass @ edge.trace)
    if k == 1:
        weights = interval_moments(k)
        gram[0] = sum(edge.length * (weights @ edge.restriction) for edge in space.edges)
        rhs[0] = sum(edge.length * (weights @ edge.trace) for edge in space.edges)
    else:
        gram[0] = space.moments
        rhs[0] = 0.0
        rhs[0, space.moment_start] = space.area
    try:
        pi = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as e:
        raise LocalSpaceError(f"Singular projector system on face {space.face}") from e
    return pi, gram, rhs


def face_l2_projector(space: FaceSpace, pi: np.ndarray) -> np.ndarray:
    """Q_F = Pi_F + w, w in P_{k-2} matching the face moments; equals Pi_F at k = 1."""
    return _l2_correction(pi, space.mass, space.pf, space.area, space.moment_slice)


def _l2_correction(pi: np.ndarray, mass: np.ndarray, low: int, measure: float, moments: slice) -> np.ndarray:
    q = pi.copy()
    if low == 0:
        return q
    rhs = -mass[:low, :] @ pi
    rhs[:, moments] += measure * np.eye(low)
    q[:low] += solve_gram(mass[:low, :low], rhs)
    return q


@dataclass
class FaceBlock:
    """A face space seen from one of its cells."""
    space: FaceSpace
    sign: int
    columns: np.ndarray
    restriction: np.ndarray
    q: np.ndarray
    normal: np.ndarray


class CellSpace:
    """
    Order-k cell space with Pi_K, Q_K and the face projectors scattered to
    cell-local DOFs.
    """

    def __init__(self, mesh: PolyMesh, cell: int, k: int, dofmap: DofMap,
                 face_spaces: Sequence[FaceSpace]):
        self.cell = cell
        self.k = k
        self.mesh = mesh
        self.layout = dofmap.cell_layout(cell)
        self.geometry: PolyhedronGeometry = mesh.cell_geometry(cell)
        self.basis = self.geometry.basis(k)
        self.nk = self.basis.size
        self.pc = basis_size(3, k - 2)
        moments = self.geometry.moments(2 * k)
        self.moments = moments[:self.nk]
        self.mass = mass_matrix(moments, 3, k)
        self.stiffness = stiffness_matrix(moments, 3, k, self.geometry.diameter)
        self.volume = self.geometry.volume
        self.size = self.layout.size

        local = self.layout.local_index()
        self.blocks: List[FaceBlock] = []
        for index, (f, s) in enumerate(mesh.cells[cell]):
            fs = face_spaces[f]
            if fs.face != f or fs.k != k:
                raise LocalSpaceError(f"Face space mismatch for face {f} of cell {cell}")
            columns = np.array([local[int(g)] for g in fs.global_dofs], dtype=int)
            q = np.zeros((fs.nk, self.size))
            q[:, columns] = fs.q
            self.blocks.append(FaceBlock(space=fs, sign=s, columns=columns,
                                         restriction=self.geometry.face_restriction(index, k),
                                         q=q, normal=s * fs.geometry.frame.normal))

        self.pi, self.gram, self.rhs = elem_pi_projector(self)
        self.q = elem_l2_projector(self, self.pi)

    @property
    def moment_slice(self) -> slice:
        return slice(self.layout.cell_pos, self.size)

    def dof_matrix(self) -> np.ndarray:
        """DOFs of every cell monomial; shape (size, nk)."""
        k = self.k
        d = np.zeros((self.size, self.nk))
        vertices = self.mesh.vertices
        d[[self.layout.vertex_pos[v] for v in self.layout.vertices]] = self.basis.evaluate(
            vertices[self.layout.vertices])
        if k >= 2:
            edge_moments = interval_mass(k - 2, k)
            target = edge_basis(k)
            for e in self.layout.edges:
                a, b = self.mesh.edges[e]
                va, vb = vertices[a], vertices[b]
                restriction = restriction_matrix(self.basis, 0.5 * (va + vb), (vb - va).reshape(3, 1), target)
                start = self.layout.edge_pos[e]
                d[start:start + k - 1] = edge_moments @ restriction
            for blk in self.blocks:
                fs = blk.space
                start = self.layout.face_pos[fs.face]
                d[start:start + fs.pf] = fs.mass[:fs.pf] @ blk.restriction / fs.area
            d[self.moment_slice] = self.mass[:self.pc] / self.volume
        return d


def elem_pi_projector(space: CellSpace):
    """Energy projector of a cell space; returns (Pi, constrained Gram, right-hand side)."""
    k, nk = space.k, space.nk
    gram = space.stiffness.copy()
    rhs = np.zeros((nk, space.size))
    lap = space.basis.laplacian_matrix()
    if space.pc:
        rhs[:, space.moment_slice] -= space.volume * lap[:space.pc, :].T
    for blk in space.blocks:
        flux = blk.restriction @ space.basis.directional_derivative_matrix(blk.normal)
        rhs += flux.T @ blk.space.mass @ blk.q
    if k == 1:
        gram[0] = sum(blk.space.mass[0] @ blk.restriction for blk in space.blocks)
        rhs[0] = sum(blk.space.mass[0] @ blk.q for blk in space.blocks)
    else:
        gram[0] = space.moments
        rhs[0] = 0.0
        rhs[0, space.layout.cell_pos] = space.volume
    try:
        pi = np.linalg.solve(gram, rhs)
    except np.linalg.LinAlgError as e:
        raise LocalSpaceError(f"Singular projector system on cell {space.cell}") from e
    return pi, gram, rhs


def elem_l2_projector(space: CellSpace, pi: np.ndarray) -> np.ndarray:
    """Q_K = Pi_K + w, w in P_{k-2} matching the cell moments; equals Pi_K at k = 1."""
    return _l2_correction(pi, space.mass, space.pc, space.volume, space.moment_slice)


# Projector bundle of one cell
LocalProjectors = CellSpace


def stab_new(space: CellSpace, face_eps: Sequence[float], edge_weight: str = "face") -> np.ndarray:
    """
    Boundary stabilization

        h_K^-1 sum_F [ (Q_K u - Q_F u, Q_K v - Q_F v)_F
                       + eps_F w sum_e (u - Q_F u, v - Q_F v)_e ]

    with w = h_F, or w = |e| per edge when ``edge_weight`` is ``edge``.
    Each edge is counted once per face containing it.
    """
    if len(face_eps) != len(space.blocks):
        raise LocalSpaceError(f"Expected {len(space.blocks)} face weights, got {len(face_eps)}")
    s = np.zeros((space.size, space.size))
    for blk, eps in zip(space.blocks, face_eps):
        diff = blk.restriction @ space.q - blk.q
        s += diff.T @ blk.space.mass @ diff
        edge_term = blk.space.edge_stabilization(edge_weight)
        s[np.ix_(blk.columns, blk.columns)] += eps * edge_term
    s /= space.geometry.diameter
    return 0.5 * (s + s.T)


def stab_original(space: CellSpace, scaling: str = "h") -> np.ndarray:
    """DOF-wise stabilization (I - D Pi)^T (I - D Pi), times h_K when ``scaling`` is ``h``."""
    residual = np.eye(space.size) - space.dof_matrix() @ space.pi
    s = residual.T @ residual
    if scaling == "h":
        s *= space.geometry.diameter
    return 0.5 * (s + s.T)


@dataclass
class LocalStiffness:
    """Consistency and stabilization matrices of one cell."""
    consistency: np.ndarray
    stabilization: np.ndarray
    variant: StabilizationVariant
    pi: np.ndarray
    q: np.ndarray
    load: Optional[np.ndarray] = field(default=None)

    @property
    def matrix(self) -> np.ndarray:
        return self.consistency + self.stabilization


def local_stiffness(space: CellSpace, variant: StabilizationVariant,
                    face_eps: Optional[Sequence[float]] = None, edge_weight: str = "face",
                    original_scaling: str = "h") -> LocalStiffness:
    """A_K = Pi^T G Pi + S_K for the chosen stabilization variant."""
    consistency = space.pi.T @ space.stiffness @ space.pi
    consistency = 0.5 * (consistency + consistency.T)
    variant = StabilizationVariant(variant)
    if variant == StabilizationVariant.NEW:
        if face_eps is None:
            raise LocalSpaceError("The boundary stabilization needs per-face eps_F weights")
        stabilization = stab_new(space, face_eps, edge_weight)
    else:
        stabilization = stab_original(space, original_scaling)
    return LocalStiffness(consistency=consistency, stabilization=stabilization,
                          variant=variant, pi=space.pi, q=space.q)


def local_load(space: CellSpace, f: Callable[[np.ndarray], np.ndarray], order: int) -> np.ndarray:
    """b_j = int_K f Q_K phi_j by cell quadrature of the given order."""
    points, weights = quadrature_cell(space.geometry, order)
    values = np.asarray(f(points), dtype=float)
    return space.q.T @ (space.basis.evaluate(points).T @ (weights * values))
