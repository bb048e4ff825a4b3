"""Global assembly of the discrete bilinear form, Dirichlet elimination and solve."""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Union

import numpy as np
from scipy import io as scipy_io
from scipy import sparse

from vem.config import get_settings
from vem.geometry import GeometryError
from vem.interpolation import interpolate_entities
from vem.local import (
    CellSpace, DofMap, DofVector, FaceSpace, LocalSpaceError, LocalStiffness,
    local_load, local_stiffness,
)
from vem.mesh import PolyMesh
from vem.models import StabilizationVariant
from vem.solver import SolveStats, nullity, pcg

logger = logging.getLogger(__name__)

Field = Callable[[np.ndarray], np.ndarray]

__all__ = [
    "AssemblyError", "DofVector", "GlobalSystem", "ReducedSystem",
    "assemble", "apply_dirichlet", "solve", "dump_matrix", "kernel_dimension",
]


class AssemblyError(Exception):
    """Raised when a local build fails during assembly."""

    def __init__(self, message: str, cell: Optional[int] = None):
        self.cell = cell
        super().__init__(f"cell {cell}: {message}" if cell is not None else message)


@dataclass
class GlobalSystem:
    """Assembled stiffness matrix and load with the local data that produced them."""
    mesh: PolyMesh
    dofmap: DofMap
    variant: StabilizationVariant
    matrix: sparse.csr_matrix
    load: np.ndarray
    cells: List[CellSpace]
    local: List[LocalStiffness]
    face_eps: Optional[List[float]]
    quad_order: int
    stats: Optional[SolveStats] = None

    @property
    def k(self) -> int:
        return self.dofmap.k

    @property
    def ndof(self) -> int:
        return self.dofmap.ndof

    def energy(self, values: np.ndarray) -> float:
        """v^T A v with the full assembled matrix."""
        return float(values @ (self.matrix @ values))


@dataclass
class ReducedSystem:
    """Free-DOF system A_ff x_f = b_f - A_fc x_c."""
    matrix: sparse.csr_matrix
    rhs: np.ndarray
    free: np.ndarray
    constrained: np.ndarray
    constrained_values: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _mapper(threads: int):
    if threads <= 1:
        return map, None
    executor = ThreadPoolExecutor(max_workers=threads)
    return executor.map, executor


def assemble(mesh: PolyMesh, k: int, variant: StabilizationVariant = StabilizationVariant.NEW,
             f: Optional[Field] = None, c_eps: Optional[float] = None,
             quad_order: Optional[int] = None, threads: Optional[int] = None,
             edge_weight: Optional[str] = None, original_scaling: Optional[str] = None) -> GlobalSystem:
    """
    Assemble A = sum_K A_K and b = sum_K (f, Q_K phi) over the mesh.

    Local builds run on a thread pool; results are gathered in cell order so
    the assembled matrix does not depend on scheduling.
    """
    settings = get_settings()
    variant = StabilizationVariant(variant)
    c_eps = settings.c_eps if c_eps is None else c_eps
    quad_order = 2 * k + settings.quad_extra if quad_order is None else quad_order
    threads = settings.threads if threads is None else threads
    edge_weight = edge_weight or settings.edge_weight
    original_scaling = original_scaling or settings.original_scaling

    dofmap = DofMap(mesh, k)
    try:
        mesh.face_geometries
        mesh.cell_geometries
        face_eps = ([m.eps_weight for m in mesh.face_metrics(c_eps)]
                    if variant == StabilizationVariant.NEW else None)
    except GeometryError as e:
        logger.error(f"Mesh geometry is invalid: {e}")
        raise AssemblyError(f"invalid geometry: {e}") from e

    def build_face(face: int) -> FaceSpace:
        try:
            return FaceSpace(mesh, face, k, dofmap)
        except (GeometryError, LocalSpaceError, np.linalg.LinAlgError) as e:
            cell = mesh.face_cells[face][0][0] if mesh.face_cells[face] else None
            logger.error(f"Face space {face} failed: {e}")
            raise AssemblyError(f"face {face}: {e}", cell=cell) from e

    mapper, executor = _mapper(threads)
    try:
        face_spaces = list(mapper(build_face, range(mesh.num_faces)))

        def build_cell(cell: int):
            try:
                space = CellSpace(mesh, cell, k, dofmap, face_spaces)
                eps = [face_eps[fid] for fid, _ in mesh.cells[cell]] if face_eps is not None else None
                stiffness = local_stiffness(space, variant, eps, edge_weight, original_scaling)
                if f is not None:
                    stiffness.load = local_load(space, f, quad_order)
                logger.debug(f"Cell {cell}: {space.size} local DOFs")
                return space, stiffness
            except (GeometryError, LocalSpaceError, np.linalg.LinAlgError) as e:
                logger.error(f"Local build failed on cell {cell}: {e}")
                raise AssemblyError(str(e), cell=cell) from e

        built = list(mapper(build_cell, range(mesh.num_cells)))
    finally:
        if executor is not None:
            executor.shutdown()

    cells = [space for space, _ in built]
    local = [stiffness for _, stiffness in built]
    n = dofmap.ndof
    rows, cols, data, load_rows, load_data = [], [], [], [], []
    for space, stiffness in built:
        g = space.layout.global_dofs
        rows.append(np.repeat(g, len(g)))
        cols.append(np.tile(g, len(g)))
        data.append(stiffness.matrix.ravel())
        if stiffness.load is not None:
            load_rows.append(g)
            load_data.append(stiffness.load)
    matrix = sparse.coo_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
                               shape=(n, n)).tocsr()
    matrix = ((matrix + matrix.T) * 0.5).tocsr()
    load = (np.bincount(np.concatenate(load_rows), weights=np.concatenate(load_data), minlength=n)
            if load_rows else np.zeros(n))
    logger.info(f"Assembled {n} DOFs, {matrix.nnz} nonzeros, k={k}, {variant.value} stabilization")
    return GlobalSystem(mesh=mesh, dofmap=dofmap, variant=variant, matrix=matrix, load=load,
                        cells=cells, local=local, face_eps=face_eps, quad_order=quad_order)


def apply_dirichlet(system: GlobalSystem, g: Optional[Field] = None,
                    order: Optional[int] = None) -> ReducedSystem:
    """
    Eliminate the boundary DOFs, fixed to the DOFs of g (zero when g is None).
    """
    dofmap, mesh = system.dofmap, system.mesh
    constrained = dofmap.boundary_dofs()
    free = np.setdiff1d(np.arange(dofmap.ndof), constrained)
    if g is None:
        values = np.zeros(len(constrained))
    else:
        order = system.quad_order if order is None else order
        full = interpolate_entities(dofmap, g, order, mesh.boundary_vertices, mesh.boundary_edges,
                                    mesh.boundary_faces, [])
        values = full[constrained]
    rows = system.matrix[free]
    reduced = rows[:, free].tocsr()
    rhs = system.load[free] - rows[:, constrained] @ values
    logger.info(f"Dirichlet elimination: {len(free)} free, {len(constrained)} constrained DOFs")
    return ReducedSystem(matrix=reduced, rhs=rhs, free=free, constrained=constrained,
                         constrained_values=values)


def solve(system: GlobalSystem, reduced: ReducedSystem, tol: Optional[float] = None,
          max_iter: Optional[int] = None) -> DofVector:
    """Solve the reduced system by Jacobi PCG; statistics land in ``system.stats``."""
    settings = get_settings()
    tol = settings.solver_tol if tol is None else tol
    max_iter = settings.max_iter if max_iter is None else max_iter
    x_free, stats = pcg(reduced.matrix, reduced.rhs, tol=tol, max_iter=max_iter)
    values = np.zeros(system.ndof)
    values[reduced.free] = x_free
    values[reduced.constrained] = reduced.constrained_values
    system.stats = stats
    logger.info(f"Solve converged in {stats.iterations} iterations (residual {stats.residual:.3e})")
    return DofVector(values=values, dofmap=system.dofmap)


def kernel_dimension(system: GlobalSystem, max_dofs: int = 500) -> int:
    """Nullity of the assembled matrix by SVD; only for small systems."""
    if system.ndof > max_dofs:
        raise AssemblyError(f"Kernel check limited to {max_dofs} DOFs, system has {system.ndof}")
    return nullity(system.matrix.toarray())


def dump_matrix(system: GlobalSystem, path: Union[str, Path]) -> Path:
    """Write the assembled matrix in Matrix Market symmetric coordinate format."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    scipy_io.mmwrite(str(path), system.matrix.tocoo(), comment="assembled VEM stiffness",
                     symmetry="symmetric")
    logger.info(f"Wrote matrix to {path}")
    return path
